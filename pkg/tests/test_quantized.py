"""Frozen integer inference: bit-exactness against the fake-quant twin,
output-domain saturation, and twin serialization.
"""

import numpy as np
import pytest

import gaitkit.models as M
import gaitkit.quant as Q
from gaitkit.errors import ConfigError

ARCH_CASES = [("cnn1d", {"num_blocks": 3}), ("sepcnn1d", {"num_blocks": 3}),
              ("lstm", {"h_size": 16}), ("transformer", {"d_model": 8})]


def _frozen(arch, kw, bitwidth, seed):
    rng = np.random.default_rng(seed + 1000)
    model = M.build(M.ModelConfig(arch=arch, bitwidth=bitwidth, **kw), seed=seed)
    model.freeze(rng.normal(size=(16, 3, 25)) * 0.8)
    return model, rng


@pytest.mark.parametrize("arch,kw", ARCH_CASES)
@pytest.mark.parametrize("bitwidth", [4, 6, 8])
def test_int_equals_fakequant_elementwise(arch, kw, bitwidth):
    mismatches = 0
    for seed in range(5):
        model, rng = _frozen(arch, kw, bitwidth, seed)
        x = rng.normal(size=(8, 3, 25)) * 0.8
        li = model.forward(x, mode="int")
        lf = model.forward(x, mode="fakequant")
        mismatches += int(np.sum(li != lf))
    assert mismatches == 0


@pytest.mark.parametrize("arch,kw", ARCH_CASES)
def test_int_codes_stay_in_range(arch, kw):
    for bitwidth in (4, 6, 8):
        model, rng = _frozen(arch, kw, bitwidth, 0)
        qm = model.quantized
        # inputs far outside the calibration range must still saturate cleanly
        x = rng.normal(size=(4, 3, 25)) * 10.0
        codes = qm.forward_int(x)
        assert codes.dtype == np.int64
        assert codes.min() >= qm.logits_qp.qmin
        assert codes.max() <= qm.logits_qp.qmax


@pytest.mark.parametrize("arch,kw", ARCH_CASES)
def test_int_close_to_float_after_calibration(arch, kw):
    model, rng = _frozen(arch, kw, 8, 3)
    x = rng.normal(size=(16, 3, 25)) * 0.8
    lf = model.forward(x, mode="float")
    li = model.forward(x, mode="int")
    # 8-bit inference tracks the float model's decisions on easy inputs
    agree = (lf.argmax(-1) == li.argmax(-1)).mean()
    assert agree >= 0.75


def test_quantized_twin_roundtrip():
    from gaitkit.quantized import QuantizedModel
    for arch, kw in ARCH_CASES:
        model, rng = _frozen(arch, kw, 6, 2)
        clone = QuantizedModel.from_dict(model.quantized.to_dict())
        x = rng.normal(size=(4, 3, 25))
        assert np.array_equal(model.quantized.forward_int(x), clone.forward_int(x))


def test_fakequant_without_freeze_or_observers_errors():
    model = M.build(M.ModelConfig(arch="cnn1d", num_blocks=2), seed=0)
    with pytest.raises(ConfigError):
        model.forward(np.zeros((3, 25)), mode="fakequant")


def test_bias_codes_fit_32_bits():
    model, _ = _frozen("cnn1d", {"num_blocks": 3}, 8, 1)
    for obj in model.quantized.objs.values():
        if hasattr(obj, "qb"):
            qb = np.asarray(obj.qb)
            assert np.all(np.abs(qb) < 2**31)


def test_logit_dequantization_consistent():
    model, rng = _frozen("sepcnn1d", {"num_blocks": 3}, 8, 4)
    qm = model.quantized
    x = rng.normal(size=(4, 3, 25)) * 0.8
    codes = qm.forward_int(x)
    via_model = model.forward(x, mode="int")
    assert np.allclose(via_model, codes * qm.logits_qp.scale, atol=1e-15)
