# cython: boundscheck=False, cdivision=True
"""Compiled row-wise kernels. Mirrors ssattn.kernels.ref semantics in float32.

Fuses the per-row passes (max/exp/sum, mean/var/affine) that cost numpy a
temporary array each, which dominates step time at the small row sizes this
package trains at.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport erff, expf, sqrtf

cnp.import_array()

cdef float INV_SQRT2 = 0.7071067811865476
cdef float INV_SQRT_2PI = 0.3989422804014327


cdef inline _rows_view(object x):
    cdef object a = np.ascontiguousarray(x, dtype=np.float32)
    return a.reshape(-1, a.shape[a.ndim - 1] if a.ndim else 1)


def softmax_fwd(x):
    cdef cnp.ndarray[cnp.float32_t, ndim=2] x2 = _rows_view(x)
    cdef cnp.ndarray[cnp.float32_t, ndim=2] out = np.empty_like(x2)
    cdef Py_ssize_t r, c, i, j
    cdef float m, s
    r = x2.shape[0]
    c = x2.shape[1]
    for i in range(r):
        m = x2[i, 0]
        for j in range(1, c):
            if x2[i, j] > m:
                m = x2[i, j]
        s = 0.0
        for j in range(c):
            out[i, j] = expf(x2[i, j] - m)
            s += out[i, j]
        for j in range(c):
            out[i, j] /= s
    return out.reshape(np.shape(x))


def softmax_bwd(probs, gout):
    cdef cnp.ndarray[cnp.float32_t, ndim=2] p2 = _rows_view(probs)
    cdef cnp.ndarray[cnp.float32_t, ndim=2] g2 = _rows_view(gout)
    cdef cnp.ndarray[cnp.float32_t, ndim=2] gin = np.empty_like(p2)
    cdef Py_ssize_t r, c, i, j
    cdef float dot
    r = p2.shape[0]
    c = p2.shape[1]
    for i in range(r):
        dot = 0.0
        for j in range(c):
            dot += g2[i, j] * p2[i, j]
        for j in range(c):
            gin[i, j] = p2[i, j] * (g2[i, j] - dot)
    return gin.reshape(np.shape(probs))


def layer_norm_fwd(x, gain, bias, eps):
    cdef cnp.ndarray[cnp.float32_t, ndim=2] x2 = _rows_view(x)
    cdef cnp.ndarray[cnp.float32_t, ndim=1] g1 = np.ascontiguousarray(gain, dtype=np.float32)
    cdef cnp.ndarray[cnp.float32_t, ndim=1] b1 = np.ascontiguousarray(bias, dtype=np.float32)
    cdef cnp.ndarray[cnp.float32_t, ndim=2] out = np.empty_like(x2)
    cdef cnp.ndarray[cnp.float32_t, ndim=2] xhat = np.empty_like(x2)
    cdef cnp.ndarray[cnp.float32_t, ndim=2] rstd = np.empty((x2.shape[0], 1), dtype=np.float32)
    cdef Py_ssize_t r, c, i, j
    cdef float mean, var, rs, d, feps = eps
    r = x2.shape[0]
    c = x2.shape[1]
    for i in range(r):
        mean = 0.0
        for j in range(c):
            mean += x2[i, j]
        mean /= c
        var = 0.0
        for j in range(c):
            d = x2[i, j] - mean
            var += d * d
        var /= c
        rs = 1.0 / sqrtf(var + feps)
        rstd[i, 0] = rs
        for j in range(c):
            xhat[i, j] = (x2[i, j] - mean) * rs
            out[i, j] = xhat[i, j] * g1[j] + b1[j]
    shape = np.shape(x)
    return out.reshape(shape), xhat.reshape(shape), rstd.reshape(shape[:-1] + (1,))


def layer_norm_bwd(xhat, rstd, gain, gout):
    cdef cnp.ndarray[cnp.float32_t, ndim=2] xh = _rows_view(xhat)
    cdef cnp.ndarray[cnp.float32_t, ndim=1] rs = np.ascontiguousarray(rstd, dtype=np.float32).reshape(-1)
    cdef cnp.ndarray[cnp.float32_t, ndim=1] g1 = np.ascontiguousarray(gain, dtype=np.float32)
    cdef cnp.ndarray[cnp.float32_t, ndim=2] go = _rows_view(gout)
    cdef cnp.ndarray[cnp.float32_t, ndim=2] gx = np.empty_like(xh)
    cdef cnp.ndarray[cnp.float32_t, ndim=1] ggain = np.zeros(xh.shape[1], dtype=np.float32)
    cdef cnp.ndarray[cnp.float32_t, ndim=1] gbias = np.zeros(xh.shape[1], dtype=np.float32)
    cdef Py_ssize_t r, c, i, j
    cdef float m1, m2, gh
    r = xh.shape[0]
    c = xh.shape[1]
    for i in range(r):
        m1 = 0.0
        m2 = 0.0
        for j in range(c):
            gh = go[i, j] * g1[j]
            m1 += gh
            m2 += gh * xh[i, j]
        m1 /= c
        m2 /= c
        for j in range(c):
            gh = go[i, j] * g1[j]
            gx[i, j] = rs[i] * (gh - m1 - xh[i, j] * m2)
            ggain[j] += go[i, j] * xh[i, j]
            gbias[j] += go[i, j]
    return gx.reshape(np.shape(xhat)), ggain, gbias


def gelu_fwd(x):
    cdef cnp.ndarray[cnp.float32_t, ndim=1] x1 = np.ascontiguousarray(x, dtype=np.float32).reshape(-1)
    cdef cnp.ndarray[cnp.float32_t, ndim=1] out = np.empty_like(x1)
    cdef Py_ssize_t i, n = x1.shape[0]
    for i in range(n):
        out[i] = 0.5 * x1[i] * (1.0 + erff(x1[i] * INV_SQRT2))
    return out.reshape(np.shape(x))


def gelu_bwd(x, gout):
    cdef cnp.ndarray[cnp.float32_t, ndim=1] x1 = np.ascontiguousarray(x, dtype=np.float32).reshape(-1)
    cdef cnp.ndarray[cnp.float32_t, ndim=1] g1 = np.ascontiguousarray(gout, dtype=np.float32).reshape(-1)
    cdef cnp.ndarray[cnp.float32_t, ndim=1] gin = np.empty_like(x1)
    cdef Py_ssize_t i, n = x1.shape[0]
    cdef float cdf, pdf
    for i in range(n):
        cdf = 0.5 * (1.0 + erff(x1[i] * INV_SQRT2))
        pdf = expf(-0.5 * x1[i] * x1[i]) * INV_SQRT_2PI
        gin[i] = g1[i] * (cdf + x1[i] * pdf)
    return gin.reshape(np.shape(x))


def adam_step(param, grad, m, v, t, lr, beta1, beta2, eps):
    cdef cnp.ndarray[cnp.float32_t, ndim=1] p1 = param
    cdef cnp.ndarray[cnp.float32_t, ndim=1] g1 = grad
    cdef cnp.ndarray[cnp.float32_t, ndim=1] m1 = m
    cdef cnp.ndarray[cnp.float32_t, ndim=1] v1 = v
    cdef float b1 = beta1, b2 = beta2, flr = lr, feps = eps
    cdef float c1 = 1.0 - beta1 ** t
    cdef float c2 = 1.0 - beta2 ** t
    cdef Py_ssize_t i, n = p1.shape[0]
    cdef float mhat, vhat
    for i in range(n):
        m1[i] = b1 * m1[i] + (1.0 - b1) * g1[i]
        v1[i] = b2 * v1[i] + (1.0 - b2) * g1[i] * g1[i]
        mhat = m1[i] / c1
        vhat = v1[i] / c2
        p1[i] -= flr * mhat / (sqrtf(vhat) + feps)
