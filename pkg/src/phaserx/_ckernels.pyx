# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the receiver's hot operations.

Every function here has a numpy twin in :mod:`phaserx._fallback` with the
same signature; :mod:`phaserx.kernels` picks one at import time.

All arrays are channels-last and C-contiguous.
"""

import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport erfc, exp, sqrt

cdef extern from "_fastmath.h" nogil:
    float phx_ncdff(float x)
    float phx_expf(float x)

cnp.import_array()

cdef double INV_SQRT2 = 0.70710678118654752440
cdef double INV_SQRT2PI = 0.39894228040143267794


def dwconv_forward(floating[:, :, :, ::1] x, floating[:, :, ::1] w, int df, int dt):
    """Depthwise 2D correlation over (F, T), zero padded to "same" size.

    x: (N, F, T, C); w: (KF, KT, C).
    """
    cdef Py_ssize_t N = x.shape[0], F = x.shape[1], T = x.shape[2], C = x.shape[3]
    cdef Py_ssize_t KF = w.shape[0], KT = w.shape[1]
    cdef Py_ssize_t hf = KF // 2, ht = KT // 2
    cdef Py_ssize_t n, f, t, a, b, c, ff, tt
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((N, F, T, C), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef floating *op
    cdef floating *xp
    cdef floating *wp
    with nogil:
        for n in range(N):
            for f in range(F):
                for t in range(T):
                    op = &out[n, f, t, 0]
                    for a in range(KF):
                        ff = f + (a - hf) * df
                        if ff < 0 or ff >= F:
                            continue
                        for b in range(KT):
                            tt = t + (b - ht) * dt
                            if tt < 0 or tt >= T:
                                continue
                            xp = &x[n, ff, tt, 0]
                            wp = &w[a, b, 0]
                            for c in range(C):
                                op[c] += xp[c] * wp[c]
    return out_arr


def dwconv_backward(floating[:, :, :, ::1] gout, floating[:, :, :, ::1] x,
                    floating[:, :, ::1] w, int df, int dt):
    """Gradients of :func:`dwconv_forward` with respect to x and w."""
    cdef Py_ssize_t N = x.shape[0], F = x.shape[1], T = x.shape[2], C = x.shape[3]
    cdef Py_ssize_t KF = w.shape[0], KT = w.shape[1]
    cdef Py_ssize_t hf = KF // 2, ht = KT // 2
    cdef Py_ssize_t n, f, t, a, b, c, ff, tt
    dtype = np.float32 if floating is float else np.float64
    gx_arr = np.zeros((N, F, T, C), dtype=dtype)
    # gw accumulates in double regardless of input precision
    gw_acc = np.zeros((KF, KT, C), dtype=np.float64)
    cdef floating[:, :, :, ::1] gx = gx_arr
    cdef double[:, :, ::1] gw = gw_acc
    cdef floating *gp
    cdef floating *xp
    cdef floating *gxp
    cdef floating *wp
    cdef double *gwp
    with nogil:
        for n in range(N):
            for f in range(F):
                for t in range(T):
                    gp = &gout[n, f, t, 0]
                    for a in range(KF):
                        ff = f + (a - hf) * df
                        if ff < 0 or ff >= F:
                            continue
                        for b in range(KT):
                            tt = t + (b - ht) * dt
                            if tt < 0 or tt >= T:
                                continue
                            xp = &x[n, ff, tt, 0]
                            gxp = &gx[n, ff, tt, 0]
                            wp = &w[a, b, 0]
                            gwp = &gw[a, b, 0]
                            for c in range(C):
                                gxp[c] += gp[c] * wp[c]
                                gwp[c] += gp[c] * xp[c]
    return gx_arr, gw_acc.astype(dtype, copy=False)


def gconv_forward(floating[:, :, :, ::1] x, floating[:, ::1] w):
    """Circular convolution along the group axis.

    x: (B, G, M, C); w: (C, KG).  out[b, g] = sum_j w[:, j] * x[b, (g - j) mod G].
    """
    cdef Py_ssize_t B = x.shape[0], G = x.shape[1], M = x.shape[2], C = x.shape[3]
    cdef Py_ssize_t KG = w.shape[1]
    cdef Py_ssize_t bi, g, j, m, c, src
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((B, G, M, C), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef floating[:, ::1] wt = np.ascontiguousarray(np.asarray(w).T)
    cdef floating *op
    cdef floating *xp
    cdef floating *wp
    with nogil:
        for bi in range(B):
            for g in range(G):
                for j in range(KG):
                    src = (g - j + G) % G
                    wp = &wt[j, 0]
                    for m in range(M):
                        op = &out[bi, g, m, 0]
                        xp = &x[bi, src, m, 0]
                        for c in range(C):
                            op[c] += wp[c] * xp[c]
    return out_arr


def gconv_backward(floating[:, :, :, ::1] gout, floating[:, :, :, ::1] x, floating[:, ::1] w):
    """Gradients of :func:`gconv_forward` with respect to x and w."""
    cdef Py_ssize_t B = x.shape[0], G = x.shape[1], M = x.shape[2], C = x.shape[3]
    cdef Py_ssize_t KG = w.shape[1]
    cdef Py_ssize_t bi, g, j, m, c, src
    dtype = np.float32 if floating is float else np.float64
    gx_arr = np.zeros((B, G, M, C), dtype=dtype)
    gwt_acc = np.zeros((KG, C), dtype=np.float64)
    cdef floating[:, :, :, ::1] gx = gx_arr
    cdef double[:, ::1] gwt = gwt_acc
    cdef floating[:, ::1] wt = np.ascontiguousarray(np.asarray(w).T)
    cdef floating *gp
    cdef floating *xp
    cdef floating *gxp
    cdef floating *wp
    cdef double *gwp
    with nogil:
        for bi in range(B):
            for g in range(G):
                for j in range(KG):
                    src = (g - j + G) % G
                    wp = &wt[j, 0]
                    gwp = &gwt[j, 0]
                    for m in range(M):
                        gp = &gout[bi, g, m, 0]
                        xp = &x[bi, src, m, 0]
                        gxp = &gx[bi, src, m, 0]
                        for c in range(C):
                            gxp[c] += wp[c] * gp[c]
                            gwp[c] += gp[c] * xp[c]
    return gx_arr, np.ascontiguousarray(gwt_acc.T).astype(dtype, copy=False)


def layernorm_forward(floating[:, ::1] x, floating[::1] gamma, floating[::1] beta, double eps):
    """Normalize each row of x (M, C); returns (out, xhat, rstd)."""
    cdef Py_ssize_t M = x.shape[0], C = x.shape[1]
    cdef Py_ssize_t i, c
    cdef double mean, var, d, r
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((M, C), dtype=dtype)
    xhat_arr = np.empty((M, C), dtype=dtype)
    rstd_arr = np.empty(M, dtype=dtype)
    cdef floating[:, ::1] out = out_arr
    cdef floating[:, ::1] xhat = xhat_arr
    cdef floating[::1] rstd = rstd_arr
    with nogil:
        for i in range(M):
            mean = 0.0
            for c in range(C):
                mean += x[i, c]
            mean /= C
            var = 0.0
            for c in range(C):
                d = x[i, c] - mean
                var += d * d
            var /= C
            r = 1.0 / sqrt(var + eps)
            rstd[i] = <floating>r
            for c in range(C):
                d = (x[i, c] - mean) * r
                xhat[i, c] = <floating>d
                out[i, c] = <floating>(d * gamma[c] + beta[c])
    return out_arr, xhat_arr, rstd_arr


def layernorm_backward(floating[:, ::1] gout, floating[:, ::1] xhat, floating[::1] rstd,
                       floating[::1] gamma):
    """Gradients of :func:`layernorm_forward`; returns (gx, ggamma, gbeta)."""
    cdef Py_ssize_t M = xhat.shape[0], C = xhat.shape[1]
    cdef Py_ssize_t i, c
    cdef double s1, s2, gh
    dtype = np.float32 if floating is float else np.float64
    gx_arr = np.empty((M, C), dtype=dtype)
    gg_acc = np.zeros(C, dtype=np.float64)
    gb_acc = np.zeros(C, dtype=np.float64)
    cdef floating[:, ::1] gx = gx_arr
    cdef double[::1] gg = gg_acc
    cdef double[::1] gb = gb_acc
    with nogil:
        for i in range(M):
            s1 = 0.0
            s2 = 0.0
            for c in range(C):
                gh = gout[i, c] * gamma[c]
                s1 += gh
                s2 += gh * xhat[i, c]
                gg[c] += gout[i, c] * xhat[i, c]
                gb[c] += gout[i, c]
            s1 /= C
            s2 /= C
            for c in range(C):
                gh = gout[i, c] * gamma[c]
                gx[i, c] = <floating>(rstd[i] * (gh - s1 - xhat[i, c] * s2))
    return gx_arr, gg_acc.astype(dtype, copy=False), gb_acc.astype(dtype, copy=False)


def gelu_forward(floating[::1] x):
    """Exact (erf-based) GELU on a flat array.

    float32 uses the vectorizable normal CDF from ``_fastmath.h``; float64
    uses libm erfc.  Both go through erfc so the negative tail stays accurate.
    """
    cdef Py_ssize_t n = x.shape[0], i
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty(n, dtype=dtype)
    cdef floating[::1] out = out_arr
    with nogil:
        if floating is float:
            for i in range(n):
                out[i] = x[i] * phx_ncdff(x[i])
        else:
            for i in range(n):
                out[i] = 0.5 * x[i] * erfc(-x[i] * INV_SQRT2)
    return out_arr


def gelu_backward(floating[::1] gout, floating[::1] x):
    """d/dx of x * Phi(x) is Phi(x) + x * phi(x)."""
    cdef Py_ssize_t n = x.shape[0], i
    cdef floating v
    cdef float half = 0.5, s2pi = INV_SQRT2PI
    dtype = np.float32 if floating is float else np.float64
    gx_arr = np.empty(n, dtype=dtype)
    cdef floating[::1] gx = gx_arr
    with nogil:
        if floating is float:
            for i in range(n):
                v = x[i]
                gx[i] = gout[i] * (phx_ncdff(v) + v * s2pi * phx_expf(-half * v * v))
        else:
            for i in range(n):
                v = x[i]
                gx[i] = gout[i] * (0.5 * erfc(-v * INV_SQRT2)
                                   + v * INV_SQRT2PI * exp(-0.5 * v * v))
    return gx_arr
