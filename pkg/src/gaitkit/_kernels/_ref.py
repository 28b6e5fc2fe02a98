"""Pure NumPy implementations of the hot kernels.

Semantics here are the contract; the compiled core in ``_core.pyx`` must
match them (bit-for-bit on the integer kernels, to the last ulp is not
required on the float ones).
"""

import numpy as np

NAME = "numpy"


def conv1d_fwd(x, w):
    """Same-padded stride-1 correlation. x: (B,C,L), w: (O,C,K) -> (B,O,L)."""
    B, C, L = x.shape
    O, _, K = w.shape
    p = K // 2
    xp = np.zeros((B, C, L + K - 1), dtype=x.dtype)
    xp[:, :, p : p + L] = x
    y = np.zeros((B, O, L), dtype=x.dtype)
    for k in range(K):
        y += np.einsum("oc,bcl->bol", w[:, :, k], xp[:, :, k : k + L])
    return y


def conv1d_bwd(x, w, gy):
    """Gradients of conv1d_fwd w.r.t. (x, w, bias)."""
    B, C, L = x.shape
    O, _, K = w.shape
    p = K // 2
    xp = np.zeros((B, C, L + K - 1), dtype=x.dtype)
    xp[:, :, p : p + L] = x
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for k in range(K):
        gxp[:, :, k : k + L] += np.einsum("oc,bol->bcl", w[:, :, k], gy)
        gw[:, :, k] = np.einsum("bol,bcl->oc", gy, xp[:, :, k : k + L])
    gx = gxp[:, :, p : p + L]
    gb = gy.sum(axis=(0, 2))
    return gx, gw, gb


def depthwise_fwd(x, w):
    """Per-channel same-padded correlation. x: (B,C,L), w: (C,K) -> (B,C,L)."""
    B, C, L = x.shape
    _, K = w.shape
    p = K // 2
    xp = np.zeros((B, C, L + K - 1), dtype=x.dtype)
    xp[:, :, p : p + L] = x
    y = np.zeros_like(x)
    for k in range(K):
        y += w[None, :, k, None] * xp[:, :, k : k + L]
    return y


def depthwise_bwd(x, w, gy):
    B, C, L = x.shape
    _, K = w.shape
    p = K // 2
    xp = np.zeros((B, C, L + K - 1), dtype=x.dtype)
    xp[:, :, p : p + L] = x
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for k in range(K):
        gxp[:, :, k : k + L] += w[None, :, k, None] * gy
        gw[:, k] = (gy * xp[:, :, k : k + L]).sum(axis=(0, 2))
    gx = gxp[:, :, p : p + L]
    gb = gy.sum(axis=(0, 2))
    return gx, gw, gb


def round_away(x):
    """Round to nearest with ties away from zero, elementwise on floats."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def rounddiv_pow2(p, n):
    """Integer round(p / 2**n), ties away from zero. p: int64 array, n >= 0."""
    if n == 0:
        return p.copy() if isinstance(p, np.ndarray) else p
    half = np.int64(1) << np.int64(n - 1)
    ap = np.abs(p)
    q = (ap + half) >> np.int64(n)
    return np.where(p < 0, -q, q)


def int_conv1d(qx, qw):
    """Integer accumulator conv. qx: (B,C,L) int64, qw: (O,C,K) int64."""
    B, C, L = qx.shape
    O, _, K = qw.shape
    p = K // 2
    xp = np.zeros((B, C, L + K - 1), dtype=np.int64)
    xp[:, :, p : p + L] = qx
    acc = np.zeros((B, O, L), dtype=np.int64)
    for k in range(K):
        acc += np.einsum("oc,bcl->bol", qw[:, :, k], xp[:, :, k : k + L])
    return acc


def int_depthwise(qx, qw):
    B, C, L = qx.shape
    _, K = qw.shape
    p = K // 2
    xp = np.zeros((B, C, L + K - 1), dtype=np.int64)
    xp[:, :, p : p + L] = qx
    acc = np.zeros_like(qx)
    for k in range(K):
        acc += qw[None, :, k, None] * xp[:, :, k : k + L]
    return acc


def int_dense(qx, qw):
    """qx: (..., N) int64, qw: (M, N) int64 -> (..., M) int64 accumulators."""
    return qx @ qw.T
