"""Pure-numpy versions of the compiled kernels in ``_ckernels.pyx``.

Signatures and return conventions match the compiled module exactly so the
two are interchangeable behind :mod:`phaserx.kernels`.
"""

import numpy as np
from scipy.special import erfc

_INV_SQRT2 = 0.70710678118654752440
_INV_SQRT2PI = 0.39894228040143267794


def _tap_ranges(size, offset):
    # destination/source slices for a shift of `offset` with zero fill
    lo = max(0, -offset)
    hi = min(size, size - offset)
    return slice(lo, hi), slice(lo + offset, hi + offset)


def dwconv_forward(x, w, df, dt):
    N, F, T, C = x.shape
    KF, KT, _ = w.shape
    out = np.zeros_like(x)
    for a in range(KF):
        dst_f, src_f = _tap_ranges(F, (a - KF // 2) * df)
        if dst_f.start >= dst_f.stop:
            continue
        for b in range(KT):
            dst_t, src_t = _tap_ranges(T, (b - KT // 2) * dt)
            if dst_t.start >= dst_t.stop:
                continue
            out[:, dst_f, dst_t, :] += x[:, src_f, src_t, :] * w[a, b]
    return out


def dwconv_backward(gout, x, w, df, dt):
    N, F, T, C = x.shape
    KF, KT, _ = w.shape
    gx = np.zeros_like(x)
    gw = np.zeros(w.shape, dtype=np.float64)
    for a in range(KF):
        dst_f, src_f = _tap_ranges(F, (a - KF // 2) * df)
        if dst_f.start >= dst_f.stop:
            continue
        for b in range(KT):
            dst_t, src_t = _tap_ranges(T, (b - KT // 2) * dt)
            if dst_t.start >= dst_t.stop:
                continue
            g = gout[:, dst_f, dst_t, :]
            gx[:, src_f, src_t, :] += g * w[a, b]
            gw[a, b] = np.einsum("nftc,nftc->c", g, x[:, src_f, src_t, :], dtype=np.float64)
    return gx, gw.astype(x.dtype, copy=False)


def gconv_forward(x, w):
    out = np.zeros_like(x)
    for j in range(w.shape[1]):
        out += np.roll(x, j, axis=1) * w[:, j]
    return out


def gconv_backward(gout, x, w):
    gx = np.zeros_like(x)
    gw = np.zeros(w.shape, dtype=np.float64)
    for j in range(w.shape[1]):
        gx += np.roll(gout, -j, axis=1) * w[:, j]
        gw[:, j] = np.einsum("bgmc,bgmc->c", gout, np.roll(x, j, axis=1), dtype=np.float64)
    return gx, gw.astype(x.dtype, copy=False)


def layernorm_forward(x, gamma, beta, eps):
    x64 = x.astype(np.float64, copy=False)
    mean = x64.mean(axis=1, keepdims=True)
    var = ((x64 - mean) ** 2).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x64 - mean) * rstd
    out = xhat * gamma + beta
    dtype = x.dtype
    return out.astype(dtype), xhat.astype(dtype), rstd[:, 0].astype(dtype)


def layernorm_backward(gout, xhat, rstd, gamma):
    gh = gout * gamma
    s1 = gh.mean(axis=1, keepdims=True)
    s2 = (gh * xhat).mean(axis=1, keepdims=True)
    gx = rstd[:, None] * (gh - s1 - xhat * s2)
    ggamma = np.einsum("mc,mc->c", gout, xhat, dtype=np.float64)
    gbeta = gout.sum(axis=0, dtype=np.float64)
    dtype = xhat.dtype
    return gx.astype(dtype, copy=False), ggamma.astype(dtype), gbeta.astype(dtype)


def gelu_forward(x):
    return 0.5 * x * erfc(-x * _INV_SQRT2)


def gelu_backward(gout, x):
    cdf = 0.5 * erfc(-x * _INV_SQRT2)
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return gout * (cdf + x * pdf)
