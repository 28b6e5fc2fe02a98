"""Quantization: parameters, fake-quantized training ops, and the
integer-only building blocks.

The float ("fake-quant") path and the integer path share one rounding
rule - nearest, ties away from zero - and every requantization site
derives its effective output scale from its fixed-point multiplier
(scale = unit * 2^n / m). Both paths therefore round the *same* real
number at every site, which is what makes elementwise bit-exactness
between them achievable.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import tensor as T
from .errors import QuantError, AccumulatorOverflow

SUPPORTED_BITWIDTHS = (4, 6, 8)

INT32_MIN = -(2**31)
INT32_MAX = 2**31 - 1

round_away = K.round_away


def quant_range(bitwidth):
    """Two's-complement signed range for a supported bitwidth."""
    if bitwidth not in SUPPORTED_BITWIDTHS:
        raise QuantError(f"unsupported bitwidth {bitwidth}; expected one of {SUPPORTED_BITWIDTHS}")
    return -(2 ** (bitwidth - 1)), 2 ** (bitwidth - 1) - 1


@dataclass(frozen=True)
class QuantParams:
    bitwidth: int
    scale: float
    zero_point: int = 0

    def __post_init__(self):
        quant_range(self.bitwidth)
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise QuantError(f"scale must be positive and finite, got {self.scale}")
        if self.zero_point != 0:
            raise QuantError("only symmetric quantization (zero_point=0) is supported")

    @property
    def qmin(self):
        return quant_range(self.bitwidth)[0]

    @property
    def qmax(self):
        return quant_range(self.bitwidth)[1]


def quantize(x, qp):
    """clamp(round(x / scale)) with ties away from zero. Saturating."""
    q = round_away(np.asarray(x, dtype=np.float64) / qp.scale)
    q = np.clip(q, qp.qmin, qp.qmax)
    return q.astype(np.int64)


def dequantize(q, qp):
    return np.asarray(q, dtype=np.float64) * qp.scale


def fake_quantize(x, qp):
    """Quantize-then-dequantize with a straight-through gradient.

    Gradient is 1 where x lies inside [qmin*scale, qmax*scale], 0 outside.
    """
    y = dequantize(quantize(x.data, qp), qp)
    lo, hi = qp.qmin * qp.scale, qp.qmax * qp.scale
    mask = (x.data >= lo) & (x.data <= hi)
    out = T._make_out(y, x)
    if out.requires_grad:
        def bwd():
            if out.grad is not None:
                T._accum(x, out.grad * mask)
        T._record(out, bwd)
    return out


def weight_qparams(w, bitwidth):
    """Symmetric per-tensor params covering max |w|."""
    _, qmax = quant_range(bitwidth)
    amax = float(np.max(np.abs(w))) if np.size(w) else 0.0
    scale = amax / qmax if amax > 0 else 1.0 / qmax
    return QuantParams(bitwidth, scale)


class RangeObserver:
    """EMA tracker of the symmetric activation range seen during calibration."""

    def __init__(self, momentum=0.1):
        if not (0 < momentum <= 1):
            raise QuantError(f"momentum must be in (0, 1], got {momentum}")
        self.momentum = momentum
        self.range = None

    def update(self, x):
        x = np.asarray(x)
        if x.size == 0:
            return
        obs = max(abs(float(x.min())), abs(float(x.max())))
        if self.range is None:
            self.range = obs
        else:
            self.range = (1.0 - self.momentum) * self.range + self.momentum * obs

    def qparams(self, bitwidth):
        if self.range is None:
            raise QuantError("observer has seen no data")
        _, qmax = quant_range(bitwidth)
        scale = self.range / qmax if self.range > 0 else 1.0 / qmax
        return QuantParams(bitwidth, scale)


def calibrate(extrema, bitwidth, momentum=0.1):
    """QuantParams from a stream of (min, max) observations via EMA."""
    obs = RangeObserver(momentum)
    n = 0
    for mn, mx in extrema:
        obs.update(np.array([mn, mx]))
        n += 1
    if n == 0:
        raise QuantError("calibrate requires at least one observation")
    return obs.qparams(bitwidth)


# ---------------------------------------------------------------------------
# fixed-point requantization


@dataclass(frozen=True)
class FixedPointMultiplier:
    """m / 2^n approximation of a positive rescale ratio.

    m is at most 25 bits wide, so the relative error is below 2^-24 while
    products acc * m stay far inside int64.
    """

    m: int
    n: int

    @staticmethod
    def from_ratio(ratio):
        if not (ratio > 0 and math.isfinite(ratio)):
            raise QuantError(f"rescale ratio must be positive and finite, got {ratio}")
        n = 24 - math.floor(math.log2(ratio))
        if n < 0:
            n = 0
        m = int(round(ratio * 2.0**n))
        if m > INT32_MAX:
            raise QuantError(f"rescale ratio {ratio} too large for a 32-bit mantissa")
        return FixedPointMultiplier(m, n)

    @property
    def value(self):
        """Exact float64 value of m / 2^n."""
        return self.m * 2.0**-self.n


def requantize(acc, fpm, qp):
    """clamp(round(acc * m / 2^n)) using integer multiply, add, shift."""
    acc = np.asarray(acc, dtype=np.int64)
    if np.any(acc < INT32_MIN) or np.any(acc > INT32_MAX):
        raise AccumulatorOverflow("accumulator outside 32-bit range before requantization")
    q = K.rounddiv_pow2(acc * fpm.m, fpm.n)
    return np.clip(q, qp.qmin, qp.qmax)


class RequantSite:
    """One rescale point shared by the integer and fake-quant paths.

    The integer path computes clamp(round((acc * m + B) / 2^n)); the float
    path rounds the same real number, reconstructed from the value domain
    via `unit` (the real value of one accumulator count). Because both
    paths share the exact constants m * 2^-n and B * 2^-n, their rounding
    decisions coincide except on ties the accumulators never produce.
    """

    __slots__ = ("fpm", "bias_units", "qmin", "qmax", "unit", "out_scale")

    def __init__(self, unit, ratio, out_scale, qmin, qmax, offset=0.0):
        """`ratio`: target acc -> q multiplier; `offset`: additive shift in
        output quantized units (e.g. 0.5 * qmax for a hard sigmoid)."""
        self.fpm = FixedPointMultiplier.from_ratio(ratio)
        self.unit = float(unit)
        self.out_scale = float(out_scale)
        self.qmin = int(qmin)
        self.qmax = int(qmax)
        self.bias_units = int(round(offset * 2.0**self.fpm.n))

    @classmethod
    def linear(cls, unit, s_out, qmin, qmax):
        """Plain rescale from accumulator units to an output scale."""
        return cls(unit, unit / s_out, s_out, qmin, qmax)

    def apply_int(self, acc):
        acc = np.asarray(acc, dtype=np.int64)
        if np.any(acc < INT32_MIN) or np.any(acc > INT32_MAX):
            raise AccumulatorOverflow("accumulator outside 32-bit range at requant site")
        q = K.rounddiv_pow2(acc * self.fpm.m + self.bias_units, self.fpm.n)
        return np.clip(q, self.qmin, self.qmax)

    def apply_float(self, v):
        """Float twin of `apply_int`: rounds the same real value.

        v / unit is an integer (the accumulator) up to float drift, so it
        is snapped before the shared multiplier is applied; both paths
        then round the same number.
        """
        z = round_away(np.asarray(v, dtype=np.float64) / self.unit)
        q = round_away(z * self.fpm.value + self.bias_units * 2.0**-self.fpm.n)
        return np.clip(q, self.qmin, self.qmax)

    def to_dict(self):
        return {
            "m": self.fpm.m, "n": self.fpm.n, "bias_units": self.bias_units,
            "unit": self.unit, "out_scale": self.out_scale,
            "qmin": self.qmin, "qmax": self.qmax,
        }

    @classmethod
    def from_dict(cls, d):
        site = cls.__new__(cls)
        site.fpm = FixedPointMultiplier(int(d["m"]), int(d["n"]))
        site.bias_units = int(d["bias_units"])
        site.unit = float(d["unit"])
        site.out_scale = float(d["out_scale"])
        site.qmin = int(d["qmin"])
        site.qmax = int(d["qmax"])
        return site


class ChannelAffineSite:
    """Per-channel integer affine (eval-mode batch norm after a residual).

    For input q at scale `unit` and channel affine v' = v * a_c + b_c, the
    integer path computes clamp(round((q * m_c + B_c) / 2^n)) with one
    shared shift n. Channels live on the last axis.
    """

    __slots__ = ("m", "n", "bias_units", "qmin", "qmax", "unit", "out_scale")

    def __init__(self, unit, a, b, s_out, qmin, qmax):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        ratio = a * (unit / s_out)
        offset = b / s_out
        amax = float(np.max(np.abs(ratio)))
        if amax <= 0:
            n = 0
        else:
            n = min(max(24 - math.floor(math.log2(amax)), 0), 40)
        self.n = n
        self.m = np.round(ratio * 2.0**n).astype(np.int64)
        self.bias_units = np.round(offset * 2.0**n).astype(np.int64)
        if np.any(np.abs(self.m) > INT32_MAX):
            raise QuantError("per-channel affine mantissa exceeds 32 bits")
        self.unit = float(unit)
        self.out_scale = float(s_out)
        self.qmin = int(qmin)
        self.qmax = int(qmax)

    def apply_int(self, q):
        q = np.asarray(q, dtype=np.int64)
        p = q * self.m + self.bias_units
        out = K.rounddiv_pow2(p, self.n)
        return np.clip(out, self.qmin, self.qmax)

    def apply_float(self, v):
        z = round_away(np.asarray(v, dtype=np.float64) / self.unit)
        q = round_away(z * (self.m * 2.0**-self.n) + self.bias_units * 2.0**-self.n)
        return np.clip(q, self.qmin, self.qmax)

    def to_dict(self):
        return {
            "m": self.m.tolist(), "n": self.n, "bias_units": self.bias_units.tolist(),
            "unit": self.unit, "out_scale": self.out_scale,
            "qmin": self.qmin, "qmax": self.qmax,
        }

    @classmethod
    def from_dict(cls, d):
        site = cls.__new__(cls)
        site.m = np.asarray(d["m"], dtype=np.int64)
        site.n = int(d["n"])
        site.bias_units = np.asarray(d["bias_units"], dtype=np.int64)
        site.unit = float(d["unit"])
        site.out_scale = float(d["out_scale"])
        site.qmin = int(d["qmin"])
        site.qmax = int(d["qmax"])
        return site


def pow2_scale(range_, qmax):
    """Smallest power of two >= range / qmax (clip-free symmetric scale)."""
    if range_ <= 0:
        return 2.0**-20
    return 2.0 ** math.ceil(math.log2(range_ / qmax))


# ---------------------------------------------------------------------------
# batch-norm folding


def fold_batchnorm(conv_w, conv_b, gamma, beta, mean, var, eps=1e-5):
    """Absorb eval-mode batch norm into the preceding conv/dense weights.

    The per-output-channel factor gamma / sqrt(var + eps) scales axis 0
    of the weight; the bias becomes (b - mean) * factor + beta.
    """
    denom = np.asarray(var, dtype=np.float64) + eps
    if np.any(denom <= 0):
        raise QuantError("non-positive variance in batch-norm folding")
    factor = np.asarray(gamma, dtype=np.float64) / np.sqrt(denom)
    w = np.asarray(conv_w, dtype=np.float64)
    shape = (-1,) + (1,) * (w.ndim - 1)
    w_f = w * factor.reshape(shape)
    b_f = (np.asarray(conv_b, dtype=np.float64) - mean) * factor + beta
    return w_f, b_f


# ---------------------------------------------------------------------------
# integer kernels (thin wrappers adding the 32-bit accumulator contract)


def _check_acc(acc):
    if np.any(acc < INT32_MIN) or np.any(acc > INT32_MAX):
        raise AccumulatorOverflow("integer accumulator left the 32-bit range")
    return acc


def int_conv1d(qx, qw, qb):
    """qx: (B,C,L), qw: (O,C,K), qb: (O,) - returns int64 accumulators."""
    acc = K.int_conv1d(np.asarray(qx, np.int64), np.asarray(qw, np.int64))
    acc += np.asarray(qb, np.int64)[None, :, None]
    return _check_acc(acc)


def int_depthwise_conv1d(qx, qw, qb):
    acc = K.int_depthwise(np.asarray(qx, np.int64), np.asarray(qw, np.int64))
    acc += np.asarray(qb, np.int64)[None, :, None]
    return _check_acc(acc)


def int_dense(qx, qw, qb):
    acc = K.int_dense(np.asarray(qx, np.int64), np.asarray(qw, np.int64))
    acc += np.asarray(qb, np.int64)
    return _check_acc(acc)


def int_maxpool1d(qx):
    L = qx.shape[-1]
    Lp = L // 2
    pairs = qx[..., : 2 * Lp].reshape(qx.shape[:-1] + (Lp, 2))
    return pairs.max(axis=-1)


def int_global_sum(qx):
    """Summed (not averaged) pooling; the 1/L lives in the requant site."""
    return _check_acc(qx.sum(axis=-1))


def int_relu(q):
    return np.maximum(q, 0)


def int_div_round(a, b):
    """round(a / b) with ties away from zero for int64 arrays, b > 0."""
    a = np.asarray(a, dtype=np.int64)
    sign = np.where(a < 0, -1, 1)
    return sign * ((np.abs(a) + b // 2) // b)


# 256-entry base-2 exponential table in Q8.8: lut[f] ~ 2^(-f/256) * 256.
_EXP2_LUT = np.round(2.0 ** (-np.arange(256) / 256.0) * 256.0).astype(np.int64)


def int_softmax(q_scores, score_scale, axis=-1):
    """LUT-based integer softmax; returns Q16.16 weights along `axis`.

    Max-subtraction keeps exponents non-positive; the base-2 exponential
    uses the 256-entry Q8.8 table; the weight of each entry is its table
    value divided by the running sum, in Q16.16.
    """
    q = np.asarray(q_scores, dtype=np.int64)
    m = q.max(axis=axis, keepdims=True)
    # exponent in Q8.8 units of log2: e = (q - m) * scale * log2(e) * 256
    fe = FixedPointMultiplier.from_ratio(score_scale * math.log2(math.e) * 256.0)
    neg = K.rounddiv_pow2((m - q) * fe.m, fe.n)  # >= 0
    int_part = np.minimum(neg >> 8, 62)
    frac = neg & 255
    e = _EXP2_LUT[frac] >> int_part  # Q8.8 magnitudes, max 256
    s = e.sum(axis=axis, keepdims=True)
    w = int_div_round(e << 16, s)  # Q16.16 weights, rows sum to ~2^16
    return w
