# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the NumPy reference kernels.

Integer kernels are bit-for-bit identical to the reference; float kernels
may differ in the last ulp (different summation order), which the
requantization sites tolerate by construction.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "compiled"


cdef void _conv_fwd(const double[:, :, ::1] x, const double[:, :, ::1] w,
                    double[:, :, ::1] y) noexcept nogil:
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t O = w.shape[0], K = w.shape[2], p = K // 2
    cdef Py_ssize_t b, o, c, l, k, idx
    cdef double acc
    for b in range(B):
        for o in range(O):
            for l in range(L):
                acc = 0.0
                for c in range(C):
                    for k in range(K):
                        idx = l + k - p
                        if 0 <= idx < L:
                            acc += w[o, c, k] * x[b, c, idx]
                y[b, o, l] = acc


def conv1d_fwd(x, w):
    """Same-padded stride-1 correlation. x: (B,C,L), w: (O,C,K) -> (B,O,L)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    y = np.zeros((x.shape[0], w.shape[0], x.shape[2]), dtype=np.float64)
    _conv_fwd(x, w, y)
    return y


cdef void _conv_bwd(const double[:, :, ::1] x, const double[:, :, ::1] w,
                    const double[:, :, ::1] gy, double[:, :, ::1] gx,
                    double[:, :, ::1] gw, double[::1] gb) noexcept nogil:
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t O = w.shape[0], K = w.shape[2], p = K // 2
    cdef Py_ssize_t b, o, c, l, k, idx
    cdef double g
    for b in range(B):
        for o in range(O):
            for l in range(L):
                g = gy[b, o, l]
                gb[o] += g
                for c in range(C):
                    for k in range(K):
                        idx = l + k - p
                        if 0 <= idx < L:
                            gx[b, c, idx] += w[o, c, k] * g
                            gw[o, c, k] += x[b, c, idx] * g


def conv1d_bwd(x, w, gy):
    """Gradients of conv1d_fwd w.r.t. (x, w, bias)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    gb = np.zeros(w.shape[0], dtype=np.float64)
    _conv_bwd(x, w, gy, gx, gw, gb)
    return gx, gw, gb


cdef void _dw_fwd(const double[:, :, ::1] x, const double[:, ::1] w,
                  double[:, :, ::1] y) noexcept nogil:
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t K = w.shape[1], p = K // 2
    cdef Py_ssize_t b, c, l, k, idx
    cdef double acc
    for b in range(B):
        for c in range(C):
            for l in range(L):
                acc = 0.0
                for k in range(K):
                    idx = l + k - p
                    if 0 <= idx < L:
                        acc += w[c, k] * x[b, c, idx]
                y[b, c, l] = acc


def depthwise_fwd(x, w):
    """Per-channel same-padded correlation. x: (B,C,L), w: (C,K) -> (B,C,L)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    y = np.zeros_like(x)
    _dw_fwd(x, w, y)
    return y


cdef void _dw_bwd(const double[:, :, ::1] x, const double[:, ::1] w,
                  const double[:, :, ::1] gy, double[:, :, ::1] gx,
                  double[:, ::1] gw, double[::1] gb) noexcept nogil:
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t K = w.shape[1], p = K // 2
    cdef Py_ssize_t b, c, l, k, idx
    cdef double g
    for b in range(B):
        for c in range(C):
            for l in range(L):
                g = gy[b, c, l]
                gb[c] += g
                for k in range(K):
                    idx = l + k - p
                    if 0 <= idx < L:
                        gx[b, c, idx] += w[c, k] * g
                        gw[c, k] += x[b, c, idx] * g


def depthwise_bwd(x, w, gy):
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    gb = np.zeros(w.shape[0], dtype=np.float64)
    _dw_bwd(x, w, gy, gx, gw, gb)
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


cdef void _int_conv(const long long[:, :, ::1] qx, const long long[:, :, ::1] qw,
                    long long[:, :, ::1] acc) noexcept nogil:
    cdef Py_ssize_t B = qx.shape[0], C = qx.shape[1], L = qx.shape[2]
    cdef Py_ssize_t O = qw.shape[0], K = qw.shape[2], p = K // 2
    cdef Py_ssize_t b, o, c, l, k, idx
    cdef long long s
    for b in range(B):
        for o in range(O):
            for l in range(L):
                s = 0
                for c in range(C):
                    for k in range(K):
                        idx = l + k - p
                        if 0 <= idx < L:
                            s += qw[o, c, k] * qx[b, c, idx]
                acc[b, o, l] = s


def int_conv1d(qx, qw):
    """Integer accumulator conv. qx: (B,C,L) int64, qw: (O,C,K) int64."""
    qx = np.ascontiguousarray(qx, dtype=np.int64)
    qw = np.ascontiguousarray(qw, dtype=np.int64)
    acc = np.zeros((qx.shape[0], qw.shape[0], qx.shape[2]), dtype=np.int64)
    _int_conv(qx, qw, acc)
    return acc


cdef void _int_dw(const long long[:, :, ::1] qx, const long long[:, ::1] qw,
                  long long[:, :, ::1] acc) noexcept nogil:
    cdef Py_ssize_t B = qx.shape[0], C = qx.shape[1], L = qx.shape[2]
    cdef Py_ssize_t K = qw.shape[1], p = K // 2
    cdef Py_ssize_t b, c, l, k, idx
    cdef long long s
    for b in range(B):
        for c in range(C):
            for l in range(L):
                s = 0
                for k in range(K):
                    idx = l + k - p
                    if 0 <= idx < L:
                        s += qw[c, k] * qx[b, c, idx]
                acc[b, c, l] = s


def int_depthwise(qx, qw):
    qx = np.ascontiguousarray(qx, dtype=np.int64)
    qw = np.ascontiguousarray(qw, dtype=np.int64)
    acc = np.zeros_like(qx)
    _int_dw(qx, qw, acc)
    return acc


def int_dense(qx, qw):
    """qx: (..., N) int64, qw: (M, N) int64 -> (..., M) int64 accumulators."""
    return np.asarray(qx, dtype=np.int64) @ np.asarray(qw, dtype=np.int64).T
