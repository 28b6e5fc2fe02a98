"""Acceptance gate: the eleven release criteria, each at its stated
tolerance and runtime budget.

1.  Exact parameter-count goldens for the four reference configurations.
2.  Energy identity (power x latency = energy within 0.5%) on all six
    measured platform rows.
3.  Exact 5x latency scaling between the 100 MHz and 20 MHz platforms.
4.  Feedback calculus verbatim figures: 0.5 s latency, 0.125 s real-time
    bound, 0.0028 mW worst-case compute power.
5.  Battery life 13.6 days within +-2%.
6.  Bit-exact integer inference: 20 random models x 100 random inputs per
    architecture and bitwidth (transformer gated on argmax agreement).
7.  Finite-difference gradient checks for every differentiable op.
8.  Trigger state machine identical to a brute-force reference on 1,000
    random streams of 1,000 steps.
9.  Search front equals the exhaustive non-dominated set on a fully
    enumerable space.
10. End-to-end synthetic study: two-step 6-bit training reaches integer
    test F1 >= 0.95 and the simulated heel session emits feedback.
11. Non-reproducibility note for externally recorded datasets, plus a
    best-effort (non-gating) adapter check when such a dataset is given.
"""

import itertools
import json
import math
import os
import time

import numpy as np
import pytest

import gaitkit.dataio as D
import gaitkit.hwcost as HW
import gaitkit.models as M
import gaitkit.search as SE
import gaitkit.stream as S
import gaitkit.tensor as T
import gaitkit.train as TR

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def _cfg(arch, variable, bitwidth=8, n=25):
    kw = {"cnn1d": "num_blocks", "sepcnn1d": "num_blocks",
          "lstm": "h_size", "transformer": "d_model"}[arch]
    return M.ModelConfig(arch, n=n, bitwidth=bitwidth, **{kw: variable})


# -- 1 ------------------------------------------------------------------


def test_acceptance_1_parameter_count_goldens():
    assert M.param_count(_cfg("cnn1d", 3)) == 173
    assert M.param_count(_cfg("sepcnn1d", 3)) == 137
    assert M.param_count(_cfg("lstm", 24)) == 2738
    assert M.param_count(_cfg("transformer", 8)) == 922


# -- 2 ------------------------------------------------------------------


def test_acceptance_2_energy_identity():
    large = HW.load_profile("large")
    small = HW.load_profile("small")
    rows = large.measured + small.measured
    assert len(rows) == 6
    for r in rows:
        implied = r["power_mw"] * r["latency_ms"]
        assert abs(implied - r["energy_uj"]) / r["energy_uj"] <= 0.005, r


# -- 3 ------------------------------------------------------------------


def test_acceptance_3_clock_scaling():
    large = HW.load_profile("large")
    small = HW.load_profile("small")
    for arch, lat100, lat20 in [("cnn1d", 0.032, 0.160),
                                ("sepcnn1d", 0.028, 0.140)]:
        b = {"cnn1d": 4, "sepcnn1d": 6}[arch]
        cfg = _cfg(arch, 3, bitwidth=b)
        assert large.lookup_measured(cfg)["latency_ms"] == lat100
        assert small.lookup_measured(cfg)["latency_ms"] == lat20
        assert small.lookup_measured(cfg)["latency_ms"] == 5.0 * lat100
        # predicted latencies scale exactly 5x (shared cycle model, 1:5 clocks)
        p100 = HW.latency_ms(large.cycles(cfg), large.clock_hz)
        p20 = HW.latency_ms(small.cycles(cfg), small.clock_hz)
        assert math.isclose(p20, 5.0 * p100, rel_tol=1e-12)


# -- 4 ------------------------------------------------------------------


def test_acceptance_4_feedback_calculus():
    cfg = S.StreamConfig(w=50, f=100.0, s=0.25, n_consec=5)
    assert S.feedback_latency(cfg) == 0.5
    assert S.realtime_bound(cfg) == 0.125
    power_mw = S.worst_case_energy_rate(cfg, 0.350e-6) * 1e3
    assert math.isclose(power_mw, 0.0028, rel_tol=1e-12)


# -- 5 ------------------------------------------------------------------


def test_acceptance_5_battery_life():
    cfg = S.StreamConfig(w=50, f=100.0, s=0.25)
    compute_mw = S.worst_case_energy_rate(cfg, 0.350e-6) * 1e3
    days = HW.battery_life([1.25, 2.28, compute_mw], 0.0, 0.0,
                           battery_mah=320.0, nominal_v=3.6)
    assert abs(days - 13.6) / 13.6 <= 0.02


# -- 6 ------------------------------------------------------------------


@pytest.mark.parametrize("arch,kw", [
    ("cnn1d", {"num_blocks": 3}), ("sepcnn1d", {"num_blocks": 3}),
    ("lstm", {"h_size": 24}), ("transformer", {"d_model": 8}),
])
def test_acceptance_6_bit_exact_quantization(arch, kw):
    t0 = time.monotonic()
    for bitwidth in (4, 6, 8):
        data_rng = np.random.default_rng(hash((arch, bitwidth)) % (1 << 32))
        mismatches = 0
        disagreements = 0
        total = 0
        for seed in range(20):
            model = M.build(M.ModelConfig(arch=arch, bitwidth=bitwidth, **kw),
                            seed=seed)
            model.freeze(data_rng.normal(size=(8, 3, 25)) * 0.8)
            x = data_rng.normal(size=(5, 3, 25)) * 0.8
            li = model.forward(x, mode="int")
            lf = model.forward(x, mode="fakequant")
            mismatches += int(np.sum(li != lf))
            disagreements += int(np.sum(li.argmax(-1) != lf.argmax(-1)))
            total += x.shape[0]
        assert total == 100
        if arch == "transformer":
            assert disagreements <= 1, (bitwidth, disagreements)  # >= 99/100
        else:
            assert mismatches == 0, (bitwidth, mismatches)
    assert time.monotonic() - t0 < 120.0


# -- 7 ------------------------------------------------------------------


def test_acceptance_7_gradient_correctness():
    t0 = time.monotonic()
    h, rtol = 1e-3, 1e-4

    def check(op, make, seed):
        rng = np.random.default_rng(seed)
        arrays = make(rng)
        tensors = [T.Tensor(a, requires_grad=True) for a in arrays]
        with T.Tape() as tape:
            outs = op(*tensors)
            if not isinstance(outs, tuple):
                outs = (outs,)
            projs = [rng.normal(size=o.data.shape) for o in outs]
            terms = [T.sum_all(T.mul(o, T.Tensor(p)))
                     for o, p in zip(outs, projs)]
            loss = terms[0]
            for t in terms[1:]:
                loss = T.add(loss, t)
            T.backward(tape, loss)

        def loss_at(arrs):
            os_ = op(*[T.Tensor(a) for a in arrs])
            if not isinstance(os_, tuple):
                os_ = (os_,)
            return float(sum((o.data * p).sum() for o, p in zip(os_, projs)))

        for i, a in enumerate(arrays):
            g = tensors[i].grad
            fd = np.zeros_like(a)
            it = np.nditer(a, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                ap = [x.copy() for x in arrays]
                am = [x.copy() for x in arrays]
                ap[i][idx] += h
                am[i][idx] -= h
                fd[idx] = (loss_at(ap) - loss_at(am)) / (2 * h)
                it.iternext()
            scale = max(np.abs(fd).max(), np.abs(g).max(), 1.0)
            assert np.abs(g - fd).max() / scale < rtol, (op.__name__, i)

    def smooth(a, margin=0.02, points=(0.0,)):
        for p in points:
            near = np.abs(a - p) < margin
            a[near] = p + margin * np.sign(a[near] - p + 1e-9)
        return a

    ops = [
        (T.add, lambda r: [r.normal(size=(3, 4)), r.normal(size=(3, 4))]),
        (T.mul, lambda r: [r.normal(size=(3, 4)), r.normal(size=(3, 4))]),
        (lambda a: T.scale(a, 1.7), lambda r: [r.normal(size=(3, 4))]),
        (T.sum_all, lambda r: [r.normal(size=(3, 4))]),
        (lambda a: T.split(a, [2, 2], axis=-1), lambda r: [r.normal(size=(3, 4))]),
        (lambda a: T.reshape(a, (6, 2)), lambda r: [r.normal(size=(3, 4))]),
        (lambda a: T.time_slice(a, 2), lambda r: [r.normal(size=(2, 3, 5))]),
        (T.transpose_last2, lambda r: [r.normal(size=(2, 3, 4))]),
        (T.matmul, lambda r: [r.normal(size=(2, 3, 4)), r.normal(size=(2, 4, 2))]),
        (T.relu, lambda r: [smooth(r.normal(size=(3, 4)))]),
        (T.hardsigmoid, lambda r: [smooth(3 * r.normal(size=(3, 4)),
                                          points=(-2.0, 2.0))]),
        (T.hardtanh, lambda r: [smooth(2 * r.normal(size=(3, 4)),
                                       points=(-1.0, 1.0))]),
        (lambda a: T.softmax(a, axis=-1), lambda r: [r.normal(size=(2, 5))]),
        (T.conv1d, lambda r: [r.normal(size=(2, 2, 7)), r.normal(size=(3, 2, 3)),
                              r.normal(size=3)]),
        (T.depthwise_conv1d, lambda r: [r.normal(size=(2, 3, 7)),
                                        r.normal(size=(3, 3)), r.normal(size=3)]),
        (T.global_avg_pool, lambda r: [r.normal(size=(2, 3, 6))]),
        (T.dense, lambda r: [r.normal(size=(3, 4)), r.normal(size=(2, 4)),
                             r.normal(size=2)]),
    ]

    def mp_input(r):
        x = r.normal(size=(2, 2, 6))
        x[..., 1::2] += 1.0  # keep pool argmaxes FD-stable
        return [x]
    ops.append((T.maxpool1d, mp_input))

    rm, rv = np.zeros(3), np.ones(3)
    ops.append((
        lambda x, g, b: T.batchnorm1d(x, g, b, rm.copy(), rv.copy(), mode="train"),
        lambda r: [r.normal(size=(4, 3, 5)), 1 + 0.1 * r.normal(size=3),
                   r.normal(size=3)]))
    ops.append((
        T.lstm_cell,
        lambda r: [0.4 * r.normal(size=(2, 3)), 0.4 * r.normal(size=(2, 4)),
                   0.4 * r.normal(size=(2, 4)), 0.3 * r.normal(size=(16, 3)),
                   0.3 * r.normal(size=(16, 4)), 0.1 * r.normal(size=16)]))
    ops.append((
        T.one_head_attention,
        lambda r: [0.5 * r.normal(size=(2, 4, 4))]
        + [0.4 * r.normal(size=(4, 4)) if i % 2 == 0 else 0.1 * r.normal(size=4)
           for i in range(8)]))
    labels = np.array([0, 1, 1])
    ops.append((lambda z: T.cross_entropy_logits(z, labels),
                lambda r: [r.normal(size=(3, 2))]))

    for seed in range(10):
        for op, make in ops:
            check(op, make, seed)
    assert time.monotonic() - t0 < 60.0


# -- 8 ------------------------------------------------------------------


def test_acceptance_8_trigger_oracle():
    t0 = time.monotonic()
    master = np.random.default_rng(2024)
    for _ in range(1000):
        n_consec = int(master.integers(1, 8))
        cooldown = float(master.choice([0.0, 0.25, 0.5, 1.5]))
        cfg = S.StreamConfig(n_consec=n_consec, cooldown=cooldown)
        preds = master.integers(0, 2, size=1000)
        times = np.cumsum(master.uniform(0.05, 0.25, size=1000))

        # brute-force reference machine, transcribed from the rules
        ref_events = []
        run, last = 0, None
        for p, t in zip(preds, times):
            run = run + 1 if p == 1 else 0
            if run >= n_consec:
                if last is None or t - last >= cooldown:
                    ref_events.append(t)
                    last = t
                    run = 0
                else:
                    run = n_consec

        state = S.TriggerState()
        got = []
        for p, t in zip(preds, times):
            state, ev = S.trigger_step(state, int(p), float(t), cfg)
            if ev is not None:
                got.append(ev.t)
        assert got == ref_events
    assert time.monotonic() - t0 < 30.0


# -- 9 ------------------------------------------------------------------


def test_acceptance_9_pareto_oracle():
    t0 = time.monotonic()
    space = SE.SearchSpace(arch="cnn1d")  # 6 x 3 x 3 = 54 discrete points

    def evaluator(genes, seed):
        v, b = genes["variable"], genes["bitwidth"]
        f1 = 1.0 - 1.0 / (1.0 + 0.15 * v * b)
        energy = float(v) ** 1.4 * b
        return f1, energy, True

    archive, front = SE.run_search(space, budget=500, evaluator=evaluator, seed=0)
    assert len(archive) == 500

    pts = set()
    for v, b in itertools.product(space.variables, space.bitwidths):
        f1, e, _ = evaluator({"variable": v, "bitwidth": b}, 0)
        pts.add((f1, e))
    brute = {(f1, e) for f1, e in pts
             if not any(f2 >= f1 and e2 <= e and (f2 > f1 or e2 < e)
                        for f2, e2 in pts)}
    assert {(t.f1, t.energy_uj) for t in front} == brute
    assert time.monotonic() - t0 < 60.0


# -- 10 -----------------------------------------------------------------


def test_acceptance_10_end_to_end_synthetic_study():
    t0 = time.monotonic()
    segments = D.synth_dataset(seed=0)  # default: 12 participants x 60 s/class
    scfg = S.StreamConfig()
    per = TR.windows_by_participant(segments, scfg)

    cfg = M.ModelConfig(arch="sepcnn1d", num_blocks=3, bitwidth=6)
    tc = TR.TrainConfig(bs=32, lr=1e-3, epochs=5, patience=10, seed=0)
    model, _ = TR.train_generalized(cfg, tc, per, held_out_id="p01")

    wins = per["p01"]
    split = TR.split_participant(wins)
    tc_ft = TR.TrainConfig(bs=32, lr=1e-4, epochs=3, patience=10, seed=0)
    model, _ = TR.finetune_qat(model, wins, split, tc_ft)
    f1_int = TR.evaluate(model, wins, split.test, mode="int")
    assert f1_int >= 0.95, f1_int

    heel = next(s for s in segments if s.participant == "p01" and s.label == "heel")

    def predict(window):
        return int(np.asarray(model.forward(window, mode="int")).argmax())

    _, events = S.simulate(predict, heel.acc, scfg, target_class=1)
    assert len(events) >= 1
    # cold start (w/f) plus four more strides before the trigger can fire
    assert events[0].t >= scfg.w / scfg.f + S.feedback_latency(scfg)
    assert time.monotonic() - t0 < 600.0


# -- 11 -----------------------------------------------------------------


def test_acceptance_11_non_reproducibility_note():
    """Externally recorded (human) study figures are out of desk-scale
    reach: synthetic data cannot reproduce per-subject F1 values measured
    on real recordings, and this package says so in its documentation.
    The criteria above substitute property-based checks. When a real
    session dataset is supplied, a best-effort check runs without gating.
    """
    readme = open(os.path.join(REPO_ROOT, "README.md"), encoding="utf-8").read()
    assert "Reproducibility" in readme
    assert "not reproducible" in readme.lower()


def test_acceptance_11_best_effort_dataset_check():
    """Non-gating: only runs when a real recorded dataset is supplied."""
    dataset_dir = os.environ.get("GAITKIT_DATASET_DIR")
    if not dataset_dir or not os.path.isdir(dataset_dir):
        pytest.skip("no externally recorded dataset supplied; note verified")
    # best effort, never gating: report the observed F1 for the first
    # participant and compare informally against published figures
    try:
        segments = D.load_sessions(dataset_dir)
        per = TR.windows_by_participant(segments, S.StreamConfig())
        pid = sorted(per)[0]
        cfg = M.ModelConfig(arch="sepcnn1d", num_blocks=3, bitwidth=6)
        tc = TR.TrainConfig(bs=32, lr=1e-3, epochs=5, seed=0)
        model, _ = TR.train_generalized(cfg, tc, per, held_out_id=pid)
        split = TR.split_participant(per[pid])
        model, _ = TR.finetune_qat(model, per[pid], split,
                                   TR.TrainConfig(bs=32, lr=1e-4, epochs=3, seed=0))
        f1 = TR.evaluate(model, per[pid], split.test, mode="int")
        print(json.dumps({"participant": pid, "best_effort_f1_int": f1}))
    except Exception as exc:  # non-gating by design
        print(f"best-effort dataset check skipped: {exc}")
