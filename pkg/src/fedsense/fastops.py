"""Fused single-pass kernels for the training hot path.

Pure-numpy training spends most of its time streaming (batch, channels,
length) arrays through one elementwise pass per operation; these numba
kernels fuse whole chains into one or two passes.  Reductions accumulate
in float64, every path is serial, and results are therefore reproducible
and independent of worker count.  When numba is unavailable the training
path falls back to the equivalent numpy composition in neuralnet.py.
"""
from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba ships with the environment
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(f):
            return f

        return deco


@njit(cache=True)
def relu_stats(z, out_a):
    """ReLU into ``out_a`` plus per-channel mean/variance, one pass."""
    n, c, l = z.shape
    m = n * l
    s = np.zeros(c, dtype=np.float64)
    s2 = np.zeros(c, dtype=np.float64)
    for ni in range(n):
        for ci in range(c):
            acc = 0.0
            acc2 = 0.0
            for li in range(l):
                v = z[ni, ci, li]
                a = v if v > 0.0 else 0.0
                out_a[ni, ci, li] = a
                acc += a
                acc2 += a * a
            s[ci] += acc
            s2[ci] += acc2
    mu = s / m
    var = s2 / m - mu * mu
    for ci in range(c):
        if var[ci] < 0.0:
            var[ci] = 0.0
    return mu, var


@njit(cache=True)
def bn_pool_drop(a, gamma, beta, mu, inv_std, mask, out_d):
    """batchnorm -> maxpool/2 -> dropout in one pass over ``a``.

    ``mask`` carries the inverted-scaling dropout multipliers.  Returns the
    left/right pool choices needed by the backward sweep.
    """
    n, c, l = a.shape
    l2 = l // 2
    take_left = np.empty((n, c, l2), dtype=np.bool_)
    for ni in range(n):
        for ci in range(c):
            g = gamma[ci]
            b = beta[ci]
            mm = mu[ci]
            iv = inv_std[ci]
            for pi in range(l2):
                y0 = g * ((a[ni, ci, 2 * pi] - mm) * iv) + b
                y1 = g * ((a[ni, ci, 2 * pi + 1] - mm) * iv) + b
                left = y0 >= y1
                take_left[ni, ci, pi] = left
                y = y0 if left else y1
                out_d[ni, ci, pi] = y * mask[ni, ci, pi]
    return take_left


@njit(cache=True)
def block_backward(dd, mask, take_left, a, mu, inv_std, gamma, z):
    """Adjoint of relu -> batchnorm -> maxpool -> dropout for one block.

    ``dd`` is the gradient at the dropped-pooled output; batch statistics
    are differentiated exactly.  Returns (dz, dgamma, dbeta).
    """
    n, c, l2 = dd.shape
    l = a.shape[2]
    m = n * l
    dgamma = np.zeros(c, dtype=np.float64)
    dbeta = np.zeros(c, dtype=np.float64)
    s1 = np.zeros(c, dtype=np.float64)
    s2 = np.zeros(c, dtype=np.float64)
    dy = np.zeros((n, c, l), dtype=dd.dtype)
    for ni in range(n):
        for ci in range(c):
            g = gamma[ci]
            mm = mu[ci]
            iv = inv_std[ci]
            acc_dg = 0.0
            acc_db = 0.0
            acc1 = 0.0
            acc2 = 0.0
            for pi in range(l2):
                grad = dd[ni, ci, pi] * mask[ni, ci, pi]
                li = 2 * pi if take_left[ni, ci, pi] else 2 * pi + 1
                dy[ni, ci, li] = grad
                xh = (a[ni, ci, li] - mm) * iv
                acc_dg += grad * xh
                acc_db += grad
                dxh = grad * g
                acc1 += dxh
                acc2 += dxh * xh
            dgamma[ci] += acc_dg
            dbeta[ci] += acc_db
            s1[ci] += acc1
            s2[ci] += acc2
    dz = np.zeros((n, c, l), dtype=dd.dtype)
    for ni in range(n):
        for ci in range(c):
            g = gamma[ci]
            mm = mu[ci]
            iv = inv_std[ci]
            t1 = s1[ci] / m
            t2 = s2[ci] / m
            for li in range(l):
                if z[ni, ci, li] > 0.0:
                    xh = (a[ni, ci, li] - mm) * iv
                    dz[ni, ci, li] = iv * (dy[ni, ci, li] * g - t1 - xh * t2)
    return dz, dgamma, dbeta


@njit(cache=True)
def fold_columns(dcols, pad_l, length, out):
    """Scatter-add the (n, l, c, k) column gradient into (n, c, l)."""
    n, l, c, k = dcols.shape
    lp = length + k - 1
    buf = np.zeros((c, lp), dtype=dcols.dtype)
    for ni in range(n):
        for ci in range(c):
            for li in range(lp):
                buf[ci, li] = 0.0
        for li in range(l):
            for ci in range(c):
                for ki in range(k):
                    buf[ci, li + ki] += dcols[ni, li, ci, ki]
        for ci in range(c):
            for li in range(length):
                out[ni, ci, li] = buf[ci, li + pad_l]


@njit(cache=True)
def im2col(xp, k, out):
    """(n, c, padded length) -> (n*length, c*k) column matrix."""
    n, c, lp = xp.shape
    length = lp - k + 1
    for ni in range(n):
        for li in range(length):
            row = ni * length + li
            for ci in range(c):
                base = ci * k
                for ki in range(k):
                    out[row, base + ki] = xp[ni, ci, li + ki]


@njit(cache=True)
def ncl_to_nlc(src, out):
    """(n, c, l) -> (n*l, c) rows."""
    n, c, l = src.shape
    for ni in range(n):
        for ci in range(c):
            for li in range(l):
                out[ni * l + li, ci] = src[ni, ci, li]
