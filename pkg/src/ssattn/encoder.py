"""Transformer encoder with a sentence classifier, a per-token importance
head, and an importance-weighted pooling layer, all in one parameter set.

Architecture: learned token/position/segment embeddings, post-layer-norm
residual blocks, GELU feed-forward, multi-head attention with additive key
masking. Dropout hits the embedding sum and the attention/FFN outputs, and
only when train_mode is on; inference is fully deterministic.

The importance head maps each token representation to 2 logits ("keep" /
"important"). Pooling takes a softmax over the important-class logits of
non-special positions and mixes the weighted token sum with the position-0
representation: out = beta * cls + (1 - beta) * weighted_sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import seeding
from . import tensor as T

PAD_ID = 0
CLS_ID = 1
SEP_ID = 2
SPECIAL_IDS = (PAD_ID, CLS_ID, SEP_ID)

INIT_STD = 0.02


@dataclass
class EncoderConfig:
    vocab_size: int
    d_model: int = 32
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 64
    max_len: int = 64
    n_classes: int = 2
    dropout_rate: float = 0.1
    ssa_beta: float = 0.5

    def __post_init__(self):
        counts = (self.vocab_size, self.d_model, self.n_layers,
                  self.n_heads, self.d_ff, self.max_len, self.n_classes)
        if any(c < 1 for c in counts):
            raise ValueError("all size fields must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 0.0 <= self.ssa_beta <= 1.0:
            raise ValueError(f"ssa_beta must lie in [0, 1], got {self.ssa_beta}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")


@dataclass
class EncoderOutput:
    cls_repr: T.Tensor
    token_reprs: T.Tensor
    attention_maps: list = field(default_factory=list)


def special_token_mask(token_ids: np.ndarray) -> np.ndarray:
    """True at [PAD]/[CLS]/[SEP] positions; these never get importance
    labels or pooling weight."""
    return np.isin(token_ids, SPECIAL_IDS)


class EncoderModel:
    def __init__(self, config: EncoderConfig, seed: int = 0):
        self.config = config
        rng = seeding.make_rng(seed, seeding.INIT)
        c = config
        p: dict[str, T.Tensor] = {}

        def weight(name, shape):
            p[name] = T.Tensor(rng.normal(0.0, INIT_STD, size=shape), requires_grad=True)

        def zeros(name, shape):
            p[name] = T.Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)

        def ln(name):
            p[name + "_g"] = T.Tensor(np.ones(c.d_model, dtype=np.float32), requires_grad=True)
            zeros(name + "_b", c.d_model)

        weight("tok_emb", (c.vocab_size, c.d_model))
        weight("pos_emb", (c.max_len, c.d_model))
        weight("seg_emb", (2, c.d_model))
        ln("emb_ln")
        for i in range(c.n_layers):
            for proj in ("wq", "wk", "wv", "wo"):
                weight(f"l{i}_{proj}", (c.d_model, c.d_model))
                zeros(f"l{i}_{proj[1]}b", c.d_model)
            ln(f"l{i}_ln1")
            weight(f"l{i}_ff1_w", (c.d_model, c.d_ff))
            zeros(f"l{i}_ff1_b", c.d_ff)
            weight(f"l{i}_ff2_w", (c.d_ff, c.d_model))
            zeros(f"l{i}_ff2_b", c.d_model)
            ln(f"l{i}_ln2")
        weight("cls_w", (c.d_model, c.n_classes))
        zeros("cls_b", c.n_classes)
        weight("ssa_w", (c.d_model, 2))
        zeros("ssa_b", 2)
        self.params = p

    # ------------------------------------------------------------- plumbing

    def snapshot(self) -> "EncoderModel":
        """Frozen copy for probing: same config, copied parameter values."""
        twin = object.__new__(EncoderModel)
        twin.config = self.config
        twin.params = {
            k: T.Tensor(v.data.copy(), requires_grad=False) for k, v in self.params.items()
        }
        return twin

    def load_param_arrays(self, arrays: dict[str, np.ndarray]):
        if set(arrays) != set(self.params):
            missing = set(self.params) ^ set(arrays)
            raise ValueError(f"parameter name mismatch: {sorted(missing)}")
        for k, v in arrays.items():
            if v.shape != self.params[k].data.shape:
                raise ValueError(f"parameter {k}: shape {v.shape} != {self.params[k].data.shape}")
            self.params[k].data = v.astype(np.float32, copy=True)

    # -------------------------------------------------------------- forward

    def encode_batch(self, token_ids, segment_ids, pad_mask, train_mode: bool = False,
                     rng: np.random.Generator | None = None, want_attention: bool = False):
        """Returns (cls (B,d), token_reprs (B,n,d), attention list).

        ``pad_mask`` is 1 at real positions. Pad positions are never attended
        to and their returned representations are exactly zero, so pad
        content cannot leak into any output.
        """
        ids = np.asarray(token_ids)
        segs = np.asarray(segment_ids)
        mask = np.asarray(pad_mask).astype(bool)
        b, n = ids.shape
        c = self.config
        if n > c.max_len:
            raise ValueError(f"sequence length {n} exceeds max_len {c.max_len}")
        if (ids[:, 0] != CLS_ID).any():
            raise ValueError("position 0 must be the [CLS] token")
        p = self.params
        drop = c.dropout_rate if train_mode else 0.0
        if drop > 0.0 and rng is None:
            raise ValueError("train_mode forward needs an rng for dropout")

        pos_ids = np.broadcast_to(np.arange(n), (b, n))
        x = T.add(T.embedding(p["tok_emb"], ids), T.embedding(p["pos_emb"], pos_ids))
        x = T.add(x, T.embedding(p["seg_emb"], segs))
        x = T.layer_norm(x, p["emb_ln_g"], p["emb_ln_b"])
        x = T.dropout(x, drop, rng)
        x = T.reshape(x, (b * n, c.d_model))

        h = c.n_heads
        dh = c.d_model // h
        # pad keys blocked for every query; shape groomed to the (b*h, n, n) scores
        key_block = np.broadcast_to(~mask[:, None, None, :], (b, h, n, n)).reshape(b * h, n, n)
        inv_sqrt_dh = 1.0 / np.sqrt(dh)
        attention = []

        def heads(t):
            t = T.reshape(t, (b, n, h, dh))
            t = T.transpose(t, (0, 2, 1, 3))
            return T.reshape(t, (b * h, n, dh))

        for i in range(c.n_layers):
            q = heads(T.add(T.matmul(x, p[f"l{i}_wq"]), p[f"l{i}_qb"]))
            k = heads(T.add(T.matmul(x, p[f"l{i}_wk"]), p[f"l{i}_kb"]))
            v = heads(T.add(T.matmul(x, p[f"l{i}_wv"]), p[f"l{i}_vb"]))
            scores = T.scale(T.matmul(q, T.transpose(k, (0, 2, 1))), inv_sqrt_dh)
            probs = T.softmax(T.masked_fill(scores, key_block))
            if want_attention:
                attention.append(probs.data.reshape(b, h, n, n).copy())
            ctx = T.matmul(probs, v)
            ctx = T.reshape(T.transpose(T.reshape(ctx, (b, h, n, dh)), (0, 2, 1, 3)), (b * n, c.d_model))
            attn_out = T.dropout(T.add(T.matmul(ctx, p[f"l{i}_wo"]), p[f"l{i}_ob"]), drop, rng)
            x = T.layer_norm(T.add(x, attn_out), p[f"l{i}_ln1_g"], p[f"l{i}_ln1_b"])
            ff = T.gelu(T.add(T.matmul(x, p[f"l{i}_ff1_w"]), p[f"l{i}_ff1_b"]))
            ff = T.dropout(T.add(T.matmul(ff, p[f"l{i}_ff2_w"]), p[f"l{i}_ff2_b"]), drop, rng)
            x = T.layer_norm(T.add(x, ff), p[f"l{i}_ln2_g"], p[f"l{i}_ln2_b"])

        tokens = T.reshape(x, (b, n, c.d_model))
        keep = np.ascontiguousarray(
            np.broadcast_to(mask[:, :, None], (b, n, c.d_model))
        ).astype(np.float32)
        tokens = T.mul(tokens, T.Tensor(keep))
        cls = tokens[:, 0, :]
        return cls, tokens, attention

    def encode(self, token_ids, segment_ids, pad_mask, train_mode: bool = False,
               rng: np.random.Generator | None = None) -> EncoderOutput:
        """Single-sequence forward; see encode_batch."""
        cls, tokens, attention = self.encode_batch(
            np.asarray(token_ids)[None, :], np.asarray(segment_ids)[None, :],
            np.asarray(pad_mask)[None, :], train_mode, rng, want_attention=True,
        )
        return EncoderOutput(
            cls_repr=T.reshape(cls, (self.config.d_model,)),
            token_reprs=tokens[0],
            attention_maps=[a[0] for a in attention],
        )

    # ----------------------------------------------------------------- heads

    def ssa_logits(self, token_reprs: T.Tensor) -> T.Tensor:
        """Per-token 2-class logits from (..., n, d) representations."""
        shape = token_reprs.data.shape
        flat = T.reshape(token_reprs, (-1, self.config.d_model))
        logits = T.add(T.matmul(flat, self.params["ssa_w"]), self.params["ssa_b"])
        return T.reshape(logits, shape[:-1] + (2,))

    def ssa_scores(self, token_reprs: T.Tensor) -> T.Tensor:
        """Per-token importance distribution (n, 2); column 1 is the
        probability the token matters."""
        return T.softmax(self.ssa_logits(token_reprs))

    def pooling_weights(self, importance: T.Tensor, special_mask) -> T.Tensor:
        """Softmax of important-class logits over non-special positions;
        special positions get exactly zero weight."""
        sm = np.asarray(special_mask, dtype=bool)
        return T.softmax(T.masked_fill(importance, sm))

    def hybrid_pool(self, cls_repr: T.Tensor, token_reprs: T.Tensor,
                    importance: T.Tensor, special_mask) -> T.Tensor:
        """Mix of the position-0 vector and the importance-weighted token sum
        (single sequence). All-special input degenerates to cls_repr alone."""
        sm = np.asarray(special_mask, dtype=bool)
        if sm.all():
            return cls_repr
        n = token_reprs.data.shape[0]
        w = self.pooling_weights(T.reshape(importance, (1, n)), sm[None, :])
        pooled = T.reshape(T.matmul(w, token_reprs), (self.config.d_model,))
        beta = self.config.ssa_beta
        return T.add(T.scale(cls_repr, beta), T.scale(pooled, 1.0 - beta))

    def hybrid_pool_batch(self, cls: T.Tensor, tokens: T.Tensor,
                          importance: T.Tensor, special_mask) -> T.Tensor:
        """Batched pooling mix; rows whose positions are all special fall
        back to their cls row regardless of beta."""
        sm = np.asarray(special_mask, dtype=bool)
        b, n, d = tokens.data.shape
        w = self.pooling_weights(importance, sm)
        pooled = T.reshape(T.matmul(T.reshape(w, (b, 1, n)), tokens), (b, d))
        beta = self.config.ssa_beta
        blend = T.add(T.scale(cls, beta), T.scale(pooled, 1.0 - beta))
        has_token = ~sm.all(axis=1)
        if has_token.all():
            return blend
        keep = np.ascontiguousarray(np.broadcast_to(has_token[:, None], (b, d))).astype(np.float32)
        return T.add(T.mul(blend, T.Tensor(keep)), T.mul(cls, T.Tensor(1.0 - keep)))

    def classify(self, pooled: T.Tensor) -> T.Tensor:
        """Class logits from a pooled sentence vector (d,) or batch (b, d)."""
        single = pooled.data.ndim == 1
        x = T.reshape(pooled, (1, -1)) if single else pooled
        logits = T.add(T.matmul(x, self.params["cls_w"]), self.params["cls_b"])
        return T.reshape(logits, (self.config.n_classes,)) if single else logits

    def predict_label(self, example, mode: str = "cls") -> int:
        """Deterministic argmax prediction; ties go to the lowest class.

        ``mode`` picks the pooling path: "cls" plain, "hybrid" importance-
        weighted. Works on anything with token_ids/segment_ids fields.
        """
        ids = np.asarray(example.token_ids)
        out = self.encode(ids, np.asarray(example.segment_ids), ids != PAD_ID)
        if mode == "hybrid":
            importance = self.ssa_logits(out.token_reprs)[:, 1]
            pooled = self.hybrid_pool(out.cls_repr, out.token_reprs,
                                      importance, special_token_mask(ids))
        elif mode == "cls":
            pooled = out.cls_repr
        else:
            raise ValueError(f"unknown pooling mode {mode!r}")
        return int(np.argmax(self.classify(pooled).data))
