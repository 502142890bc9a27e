"""Reverse-mode autodiff on a per-step tape, float32 throughout.

A ``Graph`` is opened around each training step; every op executed while it
is active appends the produced tensor to the tape. ``backward`` walks the
tape in reverse creation order with a local adjoint dict, so calling it
twice accumulates into ``.grad`` rather than overwriting. With no graph
active, ops run forward-only and keep nothing, which is what inference and
probing use.

Shape rules are deliberately strict: elementwise ops demand equal shapes,
the only broadcast allowed is a 1-d bias added over the last axis, and
matmul accepts either plain 2-d operands or stacks with identical leading
dims. Anything else raises ShapeError.

Row-wise nonlinearities (softmax, layer_norm, gelu) dispatch through
``ssattn.kernels`` so the compiled backend is picked up when built.
"""

from __future__ import annotations

import threading

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Raised when operand shapes cannot combine under the op's contract."""


class NonFiniteError(FloatingPointError):
    """Raised when a value that must stay finite contains nan or inf."""


class Graph:
    """Tape of tensors in creation order. Use as a context manager.

    The active-graph stack is thread-local, so forwards running on worker
    threads (probing, sweeps) never record onto another thread's tape."""

    _local = threading.local()

    def __init__(self):
        self._nodes: list[Tensor] = []

    @staticmethod
    def _stack() -> list:
        stack = getattr(Graph._local, "stack", None)
        if stack is None:
            stack = Graph._local.stack = []
        return stack

    def __enter__(self) -> "Graph":
        Graph._stack().append(self)
        return self

    def __exit__(self, *exc):
        popped = Graph._stack().pop()
        assert popped is self
        return False

    @staticmethod
    def current() -> "Graph | None":
        stack = Graph._stack()
        return stack[-1] if stack else None


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node_id", "_backward", "_graph")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float32)
        self.grad = None
        self.requires_grad = requires_grad
        self.node_id = None
        self._backward = None
        self._graph = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return _getitem(self, key)


def _record(out: Tensor, parents, backward_fn):
    """Attach tape bookkeeping to ``out`` if a graph is active."""
    g = Graph.current()
    if g is None:
        return out
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._backward = backward_fn
    out._graph = g
    out.node_id = len(g._nodes)
    g._nodes.append(out)
    return out


def backward(loss: Tensor):
    """Accumulate d(loss)/d(tensor) into ``.grad`` of everything reachable.

    ``loss`` must be a 0-d tensor produced under an active Graph. Adjoints
    live in a dict local to this call, so running backward again over the
    same tape adds another full gradient into each ``.grad``.
    """
    if loss.data.shape != ():
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    graph = loss._graph
    if graph is None:
        raise RuntimeError("loss was not computed under an active Graph")
    adjoint = {id(loss): np.ones((), dtype=np.float32)}
    leaves: dict[int, Tensor] = {}
    for t in reversed(graph._nodes):
        gout = adjoint.pop(id(t), None)
        if gout is None:
            continue
        if t.requires_grad:
            t.grad = np.array(gout, copy=True) if t.grad is None else t.grad + gout
        if t._backward is None:
            continue
        for parent, pgrad in t._backward(gout):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in adjoint:
                adjoint[key] = adjoint[key] + pgrad
            else:
                adjoint[key] = pgrad
            if parent._graph is not graph:
                leaves[key] = parent
    for key, leaf in leaves.items():
        g = adjoint.get(key)
        if g is None:
            continue
        if leaf.grad is None:
            leaf.grad = np.array(g, dtype=np.float32, copy=True)
        else:
            leaf.grad += g


def assert_finite(x, context: str = "value"):
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{context} contains nan or inf")
    return x


# ---------------------------------------------------------------- arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; the one allowed broadcast is a 1-d bias over the
    last axis of ``a``."""
    bias = b.data.ndim == 1 and a.data.ndim > 1 and b.data.shape[0] == a.data.shape[-1]
    if not bias and a.data.shape != b.data.shape:
        raise ShapeError(f"add: shapes {a.data.shape} and {b.data.shape} differ")
    out = Tensor(a.data + b.data)

    def bwd(gout):
        gb = gout.reshape(-1, b.data.shape[0]).sum(axis=0) if bias else gout
        return [(a, gout), (b, gb)]

    return _record(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: shapes {a.data.shape} and {b.data.shape} differ")
    out = Tensor(a.data * b.data)

    def bwd(gout):
        return [(a, gout * b.data), (b, gout * a.data)]

    return _record(out, (a, b), bwd)


def scale(a: Tensor, s: float) -> Tensor:
    s = np.float32(s)
    out = Tensor(a.data * s)

    def bwd(gout):
        return [(a, gout * s)]

    return _record(out, (a,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product. Either both 2-d, or equal-rank stacks whose leading
    dims match (used for per-head attention)."""
    sa, sb = a.data.shape, b.data.shape
    ok = len(sa) >= 2 and len(sa) == len(sb) and sa[:-2] == sb[:-2] and sa[-1] == sb[-2]
    if not ok:
        raise ShapeError(f"matmul: incompatible shapes {sa} @ {sb}")
    out = Tensor(np.matmul(a.data, b.data))

    def bwd(gout):
        ga = np.matmul(gout, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), gout)
        return [(a, ga), (b, gb)]

    return _record(out, (a, b), bwd)


# ------------------------------------------------------------ nonlinearities


def gelu(x: Tensor) -> Tensor:
    out = Tensor(kernels.gelu_fwd(x.data))

    def bwd(gout):
        return [(x, kernels.gelu_bwd(x.data, gout))]

    return _record(out, (x,), bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    moved = axis not in (-1, x.data.ndim - 1)
    xd = np.ascontiguousarray(np.moveaxis(x.data, axis, -1)) if moved else x.data
    probs = kernels.softmax_fwd(xd)
    out = Tensor(np.moveaxis(probs, -1, axis) if moved else probs)

    def bwd(gout):
        gd = np.ascontiguousarray(np.moveaxis(gout, axis, -1)) if moved else gout
        gin = kernels.softmax_bwd(probs, gd)
        return [(x, np.moveaxis(gin, -1, axis) if moved else gin)]

    return _record(out, (x,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(
            f"layer_norm affine params must be shape ({d},), got {gain.data.shape} and {bias.data.shape}"
        )
    outd, xhat, rstd = kernels.layer_norm_fwd(x.data, gain.data, bias.data, eps)
    out = Tensor(outd)

    def bwd(gout):
        gx, ggain, gbias = kernels.layer_norm_bwd(xhat, rstd, gain.data, gout)
        return [(x, gx), (gain, ggain), (bias, gbias)]

    return _record(out, (x, gain, bias), bwd)


# ------------------------------------------------------------------- losses


def cross_entropy(logits: Tensor, targets, ignore_index: int | None = None) -> Tensor:
    """Mean negative log-likelihood over rows whose target is not ignored.

    ``logits`` is (N, C); ``targets`` is an int array of shape (N,). Rows
    equal to ``ignore_index`` contribute neither loss nor gradient. If every
    row is ignored the result is 0 with zero gradient.
    """
    t = np.asarray(targets)
    if logits.data.ndim != 2 or t.shape != (logits.data.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.data.shape} vs targets {t.shape}")
    keep = np.ones(t.shape, dtype=bool) if ignore_index is None else (t != ignore_index)
    kept_in_range = (t[keep] >= 0).all() and (t[keep] < logits.data.shape[1]).all()
    if not kept_in_range:
        raise ShapeError(f"cross_entropy: label outside [0, {logits.data.shape[1]})")
    n_kept = int(keep.sum())
    ld = logits.data
    if n_kept:
        m = ld.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(ld - m).sum(axis=1))
        safe_t = np.where(keep, t, 0)
        nll = lse - ld[np.arange(ld.shape[0]), safe_t]
        out = Tensor(np.float32(nll[keep].mean()))
    else:
        out = Tensor(np.float32(0.0))

    def bwd(gout):
        if n_kept == 0:
            return [(logits, np.zeros_like(ld))]
        g = kernels.softmax_fwd(ld)
        g[np.arange(ld.shape[0]), safe_t] -= 1.0
        g[~keep] = 0.0
        g *= np.float32(gout / n_kept)
        return [(logits, g)]

    return _record(out, (logits,), bwd)


def mse(pred: Tensor, target) -> Tensor:
    """Mean squared error over all elements, as a 0-d tensor."""
    td = np.asarray(target, dtype=np.float32)
    if td.shape != pred.data.shape:
        raise ShapeError(f"mse: prediction {pred.data.shape} vs target {td.shape}")
    diff = pred.data - td
    out = Tensor(np.float32(np.mean(diff * diff)))

    def bwd(gout):
        return [(pred, diff * np.float32(2.0 * gout / diff.size))]

    return _record(out, (pred,), bwd)


# ------------------------------------------------------------- structure ops


def embedding(table: Tensor, ids) -> Tensor:
    """Row gather: out[..., :] = table[ids[...], :]. Gradients scatter-add
    back, so repeated ids accumulate."""
    idx = np.asarray(ids)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError("embedding ids must be integers")
    if table.data.ndim != 2:
        raise ShapeError(f"embedding table must be 2-d, got {table.data.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ShapeError(f"embedding id out of range for table with {table.data.shape[0]} rows")
    out = Tensor(table.data[idx])

    def bwd(gout):
        g = np.zeros_like(table.data)
        np.add.at(g, idx.ravel(), gout.reshape(-1, table.data.shape[1]))
        return [(table, g)]

    return _record(out, (table,), bwd)


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))

    def bwd(gout):
        return [(x, np.ascontiguousarray(gout).reshape(x.data.shape))]

    return _record(out, (x,), bwd)


def transpose(x: Tensor, axes=None) -> Tensor:
    perm = tuple(axes) if axes is not None else tuple(reversed(range(x.data.ndim)))
    inv = np.argsort(perm)
    out = Tensor(np.ascontiguousarray(x.data.transpose(perm)))

    def bwd(gout):
        return [(x, np.ascontiguousarray(gout.transpose(inv)))]

    return _record(out, (x,), bwd)


def _getitem(x: Tensor, key) -> Tensor:
    out = Tensor(np.ascontiguousarray(x.data[key]))

    def bwd(gout):
        g = np.zeros_like(x.data)
        g[key] = gout
        return [(x, g)]

    return _record(out, (x,), bwd)


def masked_fill(x: Tensor, mask, value: float = -1e9) -> Tensor:
    """Replace positions where ``mask`` is true with ``value`` (default large
    negative, used before softmax instead of a literal -inf so gradients
    stay NaN-free). ``mask`` is a constant, not a Tensor."""
    m = np.broadcast_to(np.asarray(mask, dtype=bool), x.data.shape)
    out = Tensor(np.where(m, np.float32(value), x.data))

    def bwd(gout):
        return [(x, np.where(m, np.float32(0.0), gout))]

    return _record(out, (x,), bwd)


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout. Draws one uniform per element from ``rng``; p=0 is
    the identity and consumes no randomness."""
    if p <= 0.0:
        return x
    if p >= 1.0:
        raise ShapeError("dropout probability must be < 1")
    keep = (rng.random(x.data.shape) >= p).astype(np.float32) / np.float32(1.0 - p)
    out = Tensor(x.data * keep)

    def bwd(gout):
        return [(x, gout * keep)]

    return _record(out, (x,), bwd)


def tsum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def bwd(gout):
        g = gout
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return [(x, np.broadcast_to(g, x.data.shape).astype(np.float32, copy=True))]

    return _record(out, (x,), bwd)


def tmean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else x.data.shape[axis]
    out = Tensor(x.data.mean(axis=axis, keepdims=keepdims, dtype=np.float32))

    def bwd(gout):
        g = gout
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        g = np.broadcast_to(g, x.data.shape).astype(np.float32, copy=True)
        g /= np.float32(n)
        return [(x, g)]

    return _record(out, (x,), bwd)
