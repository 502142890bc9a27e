"""Numpy reference implementations of the hot row-wise kernels.

These are the fallback path when the compiled extension is unavailable and
the ground truth the extension is tested against. All kernels take float32
arrays; 2-D kernels expect C-contiguous (rows, cols) views, callers reshape.
"""

import numpy as np
from scipy.special import erf

INV_SQRT2 = np.float32(0.7071067811865476)
INV_SQRT_2PI = np.float32(0.3989422804014327)


def softmax_fwd(x):
    """Row-wise softmax with max-subtraction, (rows, cols) -> probs."""
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_bwd(probs, gout):
    """Gradient of softmax_fwd given its output and the upstream gradient."""
    dot = (gout * probs).sum(axis=-1, keepdims=True)
    return probs * (gout - dot)


def layer_norm_fwd(x, gain, bias, eps):
    """Row-wise layer norm. Returns (out, xhat, rstd); xhat/rstd feed backward."""
    mean = x.mean(axis=-1, keepdims=True)
    var = np.square(x - mean).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + np.float32(eps))
    xhat = (x - mean) * rstd
    return xhat * gain + bias, xhat, rstd


def layer_norm_bwd(xhat, rstd, gain, gout):
    """Gradients of layer_norm_fwd. Returns (gx, ggain, gbias)."""
    ghat = gout * gain
    m1 = ghat.mean(axis=-1, keepdims=True)
    m2 = (ghat * xhat).mean(axis=-1, keepdims=True)
    gx = rstd * (ghat - m1 - xhat * m2)
    ggain = (gout * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    gbias = gout.reshape(-1, xhat.shape[-1]).sum(axis=0)
    return gx, ggain, gbias


def gelu_fwd(x):
    """Exact (erf-based) GELU."""
    return np.float32(0.5) * x * (1.0 + erf(x * INV_SQRT2)).astype(np.float32)


def gelu_bwd(x, gout):
    """Gradient of gelu_fwd at x."""
    cdf = np.float32(0.5) * (1.0 + erf(x * INV_SQRT2)).astype(np.float32)
    pdf = np.exp(np.float32(-0.5) * x * x) * INV_SQRT_2PI
    return gout * (cdf + x * pdf)


def adam_step(param, grad, m, v, t, lr, beta1, beta2, eps):
    """One fused Adam update with bias correction, in place on param/m/v.

    t is the 1-based step count; all arrays are flat float32.
    """
    b1 = np.float32(beta1)
    b2 = np.float32(beta2)
    m *= b1
    m += (np.float32(1.0) - b1) * grad
    v *= b2
    v += (np.float32(1.0) - b2) * grad * grad
    mhat = m / np.float32(1.0 - beta1**t)
    vhat = v / np.float32(1.0 - beta2**t)
    param -= np.float32(lr) * mhat / (np.sqrt(vhat) + np.float32(eps))
