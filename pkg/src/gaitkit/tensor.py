"""Small dense tensors with reverse-mode autodiff over a flat tape.

Covers exactly the op set the four model families need: 1D convolutions
(plain and depthwise), pooling, dense layers, batch norm, hard
activations, an LSTM step, and single-head attention built from matmul /
softmax primitives. Tensors are rank 1-3, float64, row-major.
"""

import numpy as np

from . import _kernels as K
from .errors import ShapeError, TapeError

_active_tape = None


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim > 3:
            raise ShapeError(f"rank {self.data.ndim} tensor; only rank<=3 supported")
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    def grad_or_zero(self):
        return self.grad if self.grad is not None else np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of executed ops; backward replays it in reverse."""

    def __init__(self):
        self._entries = []

    def __enter__(self):
        global _active_tape
        if _active_tape is not None:
            raise TapeError("nested tapes are not supported")
        _active_tape = self
        return self

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = None
        return False

    def record(self, backward_fn):
        self._entries.append(backward_fn)

    def backward(self, loss):
        if not self._entries:
            raise TapeError("backward on an empty tape")
        if loss.data.size != 1:
            raise ShapeError("backward expects a scalar loss")
        loss.grad = np.ones_like(loss.data)
        for fn in reversed(self._entries):
            fn()


def backward(tape, loss):
    """Run reverse-mode accumulation for a scalar loss recorded on `tape`."""
    tape.backward(loss)


def _tracked(*inputs):
    return _active_tape is not None and any(t.requires_grad for t in inputs)


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    """Sum `g` down to `shape` (inverse of NumPy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _record(out, fn):
    if _active_tape is not None:
        _active_tape.record(fn)


def _make_out(data, *inputs):
    return Tensor(data, requires_grad=_tracked(*inputs))


# ---------------------------------------------------------------------------
# elementwise / structural primitives


def add(a, b):
    out = _make_out(a.data + b.data, a, b)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            _accum(a, _unbroadcast(out.grad, a.data.shape))
            _accum(b, _unbroadcast(out.grad, b.data.shape))
        _record(out, bwd)
    return out


def mul(a, b):
    out = _make_out(a.data * b.data, a, b)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            _accum(a, _unbroadcast(out.grad * b.data, a.data.shape))
            _accum(b, _unbroadcast(out.grad * a.data, b.data.shape))
        _record(out, bwd)
    return out


def scale(a, c):
    c = float(c)
    out = _make_out(a.data * c, a)
    if out.requires_grad:
        def bwd():
            if out.grad is not None:
                _accum(a, out.grad * c)
        _record(out, bwd)
    return out


def sum_all(a):
    out = _make_out(np.array(a.data.sum()), a)
    if out.requires_grad:
        def bwd():
            if out.grad is not None:
                _accum(a, np.full_like(a.data, float(out.grad)))
        _record(out, bwd)
    return out


def split(a, sizes, axis=-1):
    """Split along `axis` into chunks of the given sizes."""
    if sum(sizes) != a.data.shape[axis]:
        raise ShapeError(f"split sizes {sizes} do not cover axis of length {a.data.shape[axis]}")
    offsets = np.cumsum([0] + list(sizes))
    outs = []
    for i, size in enumerate(sizes):
        idx = [slice(None)] * a.data.ndim
        idx[axis] = slice(offsets[i], offsets[i + 1])
        idx = tuple(idx)
        out = _make_out(a.data[idx], a)
        if out.requires_grad:
            def bwd(out=out, idx=idx):
                if out.grad is None:
                    return
                g = np.zeros_like(a.data)
                g[idx] = out.grad
                _accum(a, g)
            _record(out, bwd)
        outs.append(out)
    return tuple(outs)


def reshape(a, shape):
    out = _make_out(a.data.reshape(shape), a)
    if out.requires_grad:
        def bwd():
            if out.grad is not None:
                _accum(a, out.grad.reshape(a.data.shape))
        _record(out, bwd)
    return out


def time_slice(a, t):
    """Select time step t from a (B, C, L) tensor -> (B, C)."""
    out = _make_out(a.data[:, :, t], a)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            g = np.zeros_like(a.data)
            g[:, :, t] = out.grad
            _accum(a, g)
        _record(out, bwd)
    return out


def transpose_last2(a):
    out = _make_out(np.swapaxes(a.data, -1, -2), a)
    if out.requires_grad:
        def bwd():
            if out.grad is not None:
                _accum(a, np.swapaxes(out.grad, -1, -2))
        _record(out, bwd)
    return out


def matmul(a, b):
    out = _make_out(np.matmul(a.data, b.data), a, b)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            ga = np.matmul(out.grad, np.swapaxes(b.data, -1, -2))
            gb = np.matmul(np.swapaxes(a.data, -1, -2), out.grad)
            _accum(a, _unbroadcast(ga, a.data.shape))
            _accum(b, _unbroadcast(gb, b.data.shape))
        _record(out, bwd)
    return out


# ---------------------------------------------------------------------------
# hard activations


def relu(a):
    mask = a.data > 0
    out = _make_out(np.where(mask, a.data, 0.0), a)
    if out.requires_grad:
        def bwd():
            if out.grad is not None:
                _accum(a, out.grad * mask)
        _record(out, bwd)
    return out


HARDSIGMOID_SLOPE = 0.25  # shift-friendly on integer hardware


def hardsigmoid(a):
    y = np.clip(HARDSIGMOID_SLOPE * a.data + 0.5, 0.0, 1.0)
    mask = (y > 0.0) & (y < 1.0)
    out = _make_out(y, a)
    if out.requires_grad:
        def bwd():
            if out.grad is not None:
                _accum(a, out.grad * mask * HARDSIGMOID_SLOPE)
        _record(out, bwd)
    return out


def hardtanh(a):
    y = np.clip(a.data, -1.0, 1.0)
    mask = (np.abs(a.data) < 1.0)
    out = _make_out(y, a)
    if out.requires_grad:
        def bwd():
            if out.grad is not None:
                _accum(a, out.grad * mask)
        _record(out, bwd)
    return out


# ---------------------------------------------------------------------------
# layer kernels


def _as_bcl(x):
    """Return (data3d, was_batched) for a (C,L) or (B,C,L) tensor."""
    if x.data.ndim == 2:
        return x.data[None], False
    if x.data.ndim == 3:
        return x.data, True
    raise ShapeError(f"expected rank 2 or 3 input, got rank {x.data.ndim}")


def conv1d(x, w, b):
    """Same-zero-padded 1D convolution, stride 1, odd kernel."""
    xd, batched = _as_bcl(x)
    if w.data.ndim != 3:
        raise ShapeError("conv1d weight must be rank 3 (out, in, k)")
    O, Cw, Kk = w.data.shape
    if Kk % 2 == 0:
        raise ShapeError(f"conv1d kernel size must be odd, got {Kk}")
    if xd.shape[1] != Cw:
        raise ShapeError(f"conv1d input channels {xd.shape[1]} != weight channels {Cw}")
    if b.data.shape != (O,):
        raise ShapeError(f"conv1d bias shape {b.data.shape} != ({O},)")
    y = K.conv1d_fwd(xd, w.data) + b.data[None, :, None]
    out = _make_out(y if batched else y[0], x, w, b)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            gy = out.grad if batched else out.grad[None]
            gx, gw, gb = K.conv1d_bwd(xd, w.data, gy)
            _accum(x, gx if batched else gx[0])
            _accum(w, gw)
            _accum(b, gb)
        _record(out, bwd)
    return out


def depthwise_conv1d(x, w, b):
    """One odd kernel per channel, same zero padding, stride 1."""
    xd, batched = _as_bcl(x)
    if w.data.ndim != 2:
        raise ShapeError("depthwise weight must be rank 2 (channels, k)")
    C, Kk = w.data.shape
    if Kk % 2 == 0:
        raise ShapeError(f"depthwise kernel size must be odd, got {Kk}")
    if xd.shape[1] != C:
        raise ShapeError(f"depthwise channel count {xd.shape[1]} != weight channels {C}")
    if b.data.shape != (C,):
        raise ShapeError(f"depthwise bias shape {b.data.shape} != ({C},)")
    y = K.depthwise_fwd(xd, w.data) + b.data[None, :, None]
    out = _make_out(y if batched else y[0], x, w, b)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            gy = out.grad if batched else out.grad[None]
            gx, gw, gb = K.depthwise_bwd(xd, w.data, gy)
            _accum(x, gx if batched else gx[0])
            _accum(w, gw)
            _accum(b, gb)
        _record(out, bwd)
    return out


def maxpool1d(x):
    """Kernel 2, stride 2; a trailing odd element is dropped."""
    xd, batched = _as_bcl(x)
    L = xd.shape[2]
    if L < 2:
        raise ShapeError(f"maxpool1d needs length >= 2, got {L}")
    Lp = L // 2
    pairs = xd[:, :, : 2 * Lp].reshape(xd.shape[0], xd.shape[1], Lp, 2)
    idx = pairs.argmax(axis=3)
    y = np.take_along_axis(pairs, idx[..., None], axis=3)[..., 0]
    out = _make_out(y if batched else y[0], x)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            gy = out.grad if batched else out.grad[None]
            gp = np.zeros_like(pairs)
            np.put_along_axis(gp, idx[..., None], gy[..., None], axis=3)
            gx = np.zeros_like(xd)
            gx[:, :, : 2 * Lp] = gp.reshape(xd.shape[0], xd.shape[1], 2 * Lp)
            _accum(x, gx if batched else gx[0])
        _record(out, bwd)
    return out


def global_avg_pool(x):
    xd, batched = _as_bcl(x)
    L = xd.shape[2]
    y = xd.mean(axis=2)
    out = _make_out(y if batched else y[0], x)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            gy = out.grad if batched else out.grad[None]
            gx = np.repeat(gy[:, :, None], L, axis=2) / L
            _accum(x, gx if batched else gx[0])
        _record(out, bwd)
    return out


def dense(x, w, b):
    """y = W x + b for a single vector or a batch of vectors."""
    if w.data.ndim != 2:
        raise ShapeError("dense weight must be rank 2 (out, in)")
    M, N = w.data.shape
    if x.data.shape[-1] != N:
        raise ShapeError(f"dense input width {x.data.shape[-1]} != weight width {N}")
    if b.data.shape != (M,):
        raise ShapeError(f"dense bias shape {b.data.shape} != ({M},)")
    y = x.data @ w.data.T + b.data
    out = _make_out(y, x, w, b)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            g = out.grad
            _accum(x, g @ w.data)
            g2 = g.reshape(-1, M)
            x2 = x.data.reshape(-1, N)
            _accum(w, g2.T @ x2)
            _accum(b, g2.sum(axis=0))
        _record(out, bwd)
    return out


def batchnorm1d(x, gamma, beta, running_mean, running_var, eps=1e-5,
                mode="eval", momentum=0.1, channel_axis=1):
    """Per-channel batch norm.

    `running_mean` / `running_var` are plain float arrays and are updated
    in place in train mode (exponential moving average with `momentum`).
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    xd = x.data
    axes = tuple(ax for ax in range(xd.ndim) if ax != channel_axis % xd.ndim)
    shape = [1] * xd.ndim
    shape[channel_axis % xd.ndim] = xd.shape[channel_axis % xd.ndim]

    if mode == "train":
        mean = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        count = xd.size // xd.shape[channel_axis % xd.ndim]
        unbiased = var * count / max(count - 1, 1)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    elif mode == "eval":
        mean, var = running_mean, running_var
    else:
        raise ValueError(f"unknown batchnorm mode {mode!r}")

    denom = var + eps
    if np.any(denom <= 0):
        raise ValueError("non-positive variance estimate in batchnorm")
    inv_std = 1.0 / np.sqrt(denom)
    xhat = (xd - mean.reshape(shape)) * inv_std.reshape(shape)
    y = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)
    out = _make_out(y, x, gamma, beta)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            g = out.grad
            _accum(gamma, (g * xhat).sum(axis=axes))
            _accum(beta, g.sum(axis=axes))
            gs = gamma.data.reshape(shape) * inv_std.reshape(shape)
            if mode == "eval":
                _accum(x, g * gs)
            else:
                n = xd.size // xd.shape[channel_axis % xd.ndim]
                gm = g.mean(axis=axes).reshape(shape)
                gxm = (g * xhat).mean(axis=axes).reshape(shape)
                _accum(x, gs * (g - gm - xhat * gxm))
        _record(out, bwd)
    return out


def softmax(x, axis=-1):
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _make_out(y, x)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            g = out.grad
            dot = (g * y).sum(axis=axis, keepdims=True)
            _accum(x, y * (g - dot))
        _record(out, bwd)
    return out


def lstm_cell(x_t, h_prev, c_prev, w_ih, w_hh, b):
    """One LSTM step with hard activations; gate order is (i, f, g, o)."""
    H4 = w_ih.data.shape[0]
    if H4 % 4 != 0:
        raise ShapeError("lstm weight rows must be a multiple of 4")
    H = H4 // 4
    if w_hh.data.shape != (H4, H):
        raise ShapeError(f"lstm recurrent weight shape {w_hh.data.shape} != ({H4}, {H})")
    pre = add(dense(x_t, w_ih, b), dense(h_prev, w_hh, _zeros_bias(H4)))
    i_pre, f_pre, g_pre, o_pre = split(pre, [H, H, H, H], axis=-1)
    i = hardsigmoid(i_pre)
    f = hardsigmoid(f_pre)
    g = hardtanh(g_pre)
    o = hardsigmoid(o_pre)
    c_t = add(mul(f, c_prev), mul(i, g))
    h_t = mul(o, hardtanh(c_t))
    return h_t, c_t


def _zeros_bias(n):
    return Tensor(np.zeros(n))


def one_head_attention(x, wq, bq, wk, bk, wv, bv, wo, bo):
    """Single-head self-attention over a (n, d) or (B, n, d) sequence."""
    d = x.data.shape[-1]
    q = dense(x, wq, bq)
    k = dense(x, wk, bk)
    v = dense(x, wv, bv)
    scores = scale(matmul(q, transpose_last2(k)), 1.0 / np.sqrt(d))
    att = softmax(scores, axis=-1)
    ctx = matmul(att, v)
    return dense(ctx, wo, bo)


def cross_entropy_logits(logits, labels):
    """Mean cross-entropy over a (B, C) batch of logits; labels are ints."""
    z = logits.data
    if z.ndim != 2:
        raise ShapeError("cross_entropy_logits expects (batch, classes) logits")
    B = z.shape[0]
    labels = np.asarray(labels, dtype=np.int64)
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    p = e / e.sum(axis=1, keepdims=True)
    loss = -np.log(np.clip(p[np.arange(B), labels], 1e-300, None)).mean()
    out = _make_out(np.array(loss), logits)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            g = p.copy()
            g[np.arange(B), labels] -= 1.0
            _accum(logits, float(out.grad) * g / B)
        _record(out, bwd)
    return out
