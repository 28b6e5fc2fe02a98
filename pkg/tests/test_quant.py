"""Quantization primitives: ranges, tie rounding, observers, fixed-point
multipliers, requantization sites, batch-norm folding, integer softmax.
"""

import math

import numpy as np
import pytest

import gaitkit.quant as Q
import gaitkit.tensor as T
from gaitkit.errors import AccumulatorOverflow, QuantError


def test_quant_ranges():
    assert Q.quant_range(4) == (-8, 7)
    assert Q.quant_range(6) == (-32, 31)
    assert Q.quant_range(8) == (-128, 127)
    with pytest.raises(QuantError):
        Q.quant_range(5)


def test_quantparams_validation():
    with pytest.raises(QuantError):
        Q.QuantParams(8, -1.0)
    with pytest.raises(QuantError):
        Q.QuantParams(8, 0.0)
    with pytest.raises(QuantError):
        Q.QuantParams(8, 1.0, zero_point=3)
    qp = Q.QuantParams(8, 0.5)
    assert qp.qmin == -128 and qp.qmax == 127


def test_tie_rounding_away_from_zero():
    qp = Q.QuantParams(8, 1.0)
    x = np.array([0.5, -0.5, 1.5, -1.5, 2.5, -2.5, 0.49, -0.49])
    assert np.array_equal(Q.quantize(x, qp), [1, -1, 2, -2, 3, -3, 0, 0])


def test_quantize_saturates():
    qp = Q.QuantParams(4, 1.0)
    assert np.array_equal(Q.quantize(np.array([100.0, -100.0]), qp), [7, -8])


def test_fake_quantize_idempotent_and_ste():
    rng = np.random.default_rng(0)
    qp = Q.QuantParams(8, 0.05)
    x = rng.normal(size=(4, 5))
    y1 = Q.fake_quantize(T.Tensor(x), qp).data
    y2 = Q.fake_quantize(T.Tensor(y1), qp).data
    assert np.array_equal(y1, y2)

    # straight-through gradient: 1 inside the representable range, 0 outside
    big = np.array([0.0, 1.0, 100.0, -100.0])
    t = T.Tensor(big, requires_grad=True)
    with T.Tape() as tape:
        out = Q.fake_quantize(t, qp)
        T.backward(tape, T.sum_all(out))
    assert np.array_equal(t.grad, [1.0, 1.0, 0.0, 0.0])


def test_weight_qparams_cover_extremes():
    w = np.array([-1.3, 0.2, 0.9])
    for b in (4, 6, 8):
        qp = Q.weight_qparams(w, b)
        q = Q.quantize(w, qp)
        assert q.min() >= qp.qmin and q.max() <= qp.qmax
        assert q[0] == qp.qmin + 1 or q[0] == -qp.qmax  # -1.3 maps to -qmax
        assert abs(Q.dequantize(q, qp)[0] - -1.3) <= qp.scale / 2 + 1e-12


def test_observer_ema_recurrence():
    obs = Q.RangeObserver(momentum=0.25)
    seen = None
    rng = np.random.default_rng(3)
    for _ in range(10):
        x = rng.normal(size=20) * rng.uniform(0.5, 2.0)
        obs.update(x)
        peak = max(abs(x.min()), abs(x.max()))
        seen = peak if seen is None else 0.75 * seen + 0.25 * peak
        assert math.isclose(obs.range, seen, rel_tol=1e-12)
    qp = obs.qparams(8)
    assert math.isclose(qp.scale, seen / 127, rel_tol=1e-12)


def test_observer_errors():
    with pytest.raises(QuantError):
        Q.RangeObserver(momentum=0.0)
    with pytest.raises(QuantError):
        Q.RangeObserver().qparams(8)
    with pytest.raises(QuantError):
        Q.calibrate([], 8)


def test_calibrate_matches_observer():
    extrema = [(-1.0, 2.0), (-3.0, 0.5), (-0.2, 0.4)]
    qp = Q.calibrate(extrema, 6, momentum=0.5)
    expect = 2.0
    expect = 0.5 * expect + 0.5 * 3.0
    expect = 0.5 * expect + 0.5 * 0.4
    assert math.isclose(qp.scale, expect / 31, rel_tol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_fixed_point_multiplier_precision(seed):
    rng = np.random.default_rng(seed)
    for _ in range(100):
        ratio = float(np.exp(rng.uniform(np.log(1e-6), np.log(1e3))))
        fpm = Q.FixedPointMultiplier.from_ratio(ratio)
        assert fpm.m < 2**26
        assert abs(fpm.value - ratio) / ratio < 2.0**-24


def test_fixed_point_multiplier_errors():
    with pytest.raises(QuantError):
        Q.FixedPointMultiplier.from_ratio(0.0)
    with pytest.raises(QuantError):
        Q.FixedPointMultiplier.from_ratio(-1.0)
    with pytest.raises(QuantError):
        Q.FixedPointMultiplier.from_ratio(float("inf"))


def test_requantize_matches_float_oracle():
    rng = np.random.default_rng(4)
    qp = Q.QuantParams(8, 1.0)
    ratio = 0.003172
    fpm = Q.FixedPointMultiplier.from_ratio(ratio)
    acc = rng.integers(-40000, 40000, size=1000)
    got = Q.requantize(acc, fpm, qp)
    ref = np.clip(np.sign(acc) * np.floor(np.abs(acc * fpm.value) + 0.5), -128, 127)
    assert np.array_equal(got, ref)


def test_requantize_overflow_guard():
    qp = Q.QuantParams(8, 1.0)
    fpm = Q.FixedPointMultiplier.from_ratio(0.01)
    with pytest.raises(AccumulatorOverflow):
        Q.requantize(np.array([2**40]), fpm, qp)


@pytest.mark.parametrize("seed", range(5))
def test_requant_site_int_float_agree(seed):
    rng = np.random.default_rng(seed)
    unit = float(np.exp(rng.uniform(-8, 0)))
    s_out = float(np.exp(rng.uniform(-6, 0)))
    site = Q.RequantSite.linear(unit, s_out, -128, 127)
    acc = rng.integers(-30000, 30000, size=2000)
    qi = site.apply_int(acc)
    qf = site.apply_float(acc * unit)
    assert np.array_equal(qi, qf)


def test_requant_site_offset():
    # hard-sigmoid style site: offset shifts the output by 0.5*qmax
    site = Q.RequantSite(unit=0.01, ratio=0.01 * 127 / 4.0, out_scale=1 / 127,
                         qmin=0, qmax=127, offset=63.5)
    assert site.apply_int(np.array([0]))[0] == 64  # 63.5 rounds away from zero
    assert site.apply_int(np.array([10**6]))[0] == 127
    assert site.apply_int(np.array([-(10**6)]))[0] == 0


def test_requant_site_roundtrip_dict():
    site = Q.RequantSite(0.01, 0.37, 0.02, -32, 31, offset=2.5)
    clone = Q.RequantSite.from_dict(site.to_dict())
    acc = np.arange(-500, 500)
    assert np.array_equal(site.apply_int(acc), clone.apply_int(acc))


@pytest.mark.parametrize("seed", range(5))
def test_channel_affine_site(seed):
    rng = np.random.default_rng(seed)
    C = 6
    a = rng.uniform(0.2, 3.0, size=C) * np.where(rng.random(C) < 0.2, -1, 1)
    b = rng.normal(size=C)
    unit, s_out = 0.013, 0.05
    site = Q.ChannelAffineSite(unit, a, b, s_out, -128, 127)
    q = rng.integers(-128, 128, size=(10, C))
    qi = site.apply_int(q)
    qf = site.apply_float(q * unit)
    assert np.array_equal(qi, qf)
    # against the real affine, error at most one code (plus rounding of ref)
    ref = np.clip(Q.round_away((q * unit * a + b) / s_out), -128, 127)
    assert np.max(np.abs(qi - ref)) <= 1
    clone = Q.ChannelAffineSite.from_dict(site.to_dict())
    assert np.array_equal(qi, clone.apply_int(q))


def test_pow2_scale():
    assert Q.pow2_scale(127.0, 127) == 1.0
    assert Q.pow2_scale(128.0, 127) == 2.0
    assert Q.pow2_scale(0.0, 127) == 2.0**-20
    s = Q.pow2_scale(3.7, 31)
    assert s >= 3.7 / 31
    assert math.log2(s) == round(math.log2(s))


def test_fold_batchnorm_matches_unfolded():
    rng = np.random.default_rng(5)
    O, C, K = 4, 3, 5
    w = rng.normal(size=(O, C, K))
    b = rng.normal(size=O)
    gamma = rng.uniform(0.5, 1.5, size=O)
    beta = rng.normal(size=O)
    mean = rng.normal(size=O)
    var = rng.uniform(0.5, 2.0, size=O)
    wf, bf = Q.fold_batchnorm(w, b, gamma, beta, mean, var)
    x = rng.normal(size=(2, C, 9))
    from gaitkit import _kernels as Kr
    y_unfolded = Kr.conv1d_fwd(x, w) + b[None, :, None]
    y_unfolded = gamma[None, :, None] * (
        (y_unfolded - mean[None, :, None]) / np.sqrt(var + 1e-5)[None, :, None]
    ) + beta[None, :, None]
    y_folded = Kr.conv1d_fwd(x, wf) + bf[None, :, None]
    assert np.allclose(y_folded, y_unfolded, atol=1e-5)


def test_fold_batchnorm_rejects_bad_variance():
    with pytest.raises(QuantError):
        Q.fold_batchnorm(np.ones((2, 1, 3)), np.zeros(2), np.ones(2),
                         np.zeros(2), np.zeros(2), np.array([-1.0, 1.0]))


def test_int_softmax_properties():
    rng = np.random.default_rng(6)
    scale = 0.02
    q = rng.integers(-2047, 2048, size=(8, 25))
    w = Q.int_softmax(q, scale, axis=-1)
    sums = w.sum(axis=-1)
    # weights sum to one in Q16.16, within integer-division slack per row
    assert np.all(np.abs(sums - 65536) <= w.shape[-1])
    assert np.all(w >= 0)
    # monotone: the max score gets the largest weight
    assert np.array_equal(w.argmax(axis=-1), q.argmax(axis=-1))
    # close to the real softmax
    p = np.exp(q * scale - (q * scale).max(axis=-1, keepdims=True))
    p = p / p.sum(axis=-1, keepdims=True)
    assert np.max(np.abs(w / 65536.0 - p)) < 0.01


def test_int_div_round_ties_away():
    a = np.array([5, -5, 3, -3, 7], dtype=np.int64)
    b = np.array([2, 2, 2, 2, 7], dtype=np.int64)
    assert np.array_equal(Q.int_div_round(a, b), [3, -3, 2, -2, 1])
