"""Session I/O: schema validation with precise error locations, write/read
round-trips, per-class sample capping, and the synthetic generator.
"""

import json

import numpy as np
import pytest

import gaitkit.dataio as D
from gaitkit.errors import DataError


def make_segment(participant="p01", label="forefoot", freq=100.0, T=100,
                 amp=0.5, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(T) / freq
    acc = np.clip(rng.normal(scale=amp, size=(3, T)), -2.0, 2.0)
    return D.LabeledSegment(participant, label, freq, t, acc)


def test_segment_validation():
    with pytest.raises(DataError):
        D.LabeledSegment("p", "toe", 100.0, np.zeros(3), np.zeros((3, 3)))
    with pytest.raises(DataError):
        D.LabeledSegment("p", "heel", -1.0, np.zeros(3), np.zeros((3, 3)))
    with pytest.raises(DataError):
        D.LabeledSegment("p", "heel", 100.0, np.zeros(3), np.zeros((3, 4)))
    seg = make_segment(label="heel")
    assert seg.label_index == 1
    assert len(seg) == 100


def test_write_read_roundtrip(tmp_path):
    segs = [make_segment(seed=i, label=l)
            for i, l in enumerate(["forefoot", "heel", "forefoot"])]
    D.write_sessions(segs, tmp_path)
    back = D.load_sessions(str(tmp_path))
    assert len(back) == 3
    for orig, got in sorted(zip(segs, back), key=lambda p: p[0].label):
        match = [b for b in back
                 if b.label == orig.label and np.allclose(b.acc, orig.acc)]
        assert match, orig.label
        b = match[0]
        assert b.participant == orig.participant
        assert b.freq_hz == orig.freq_hz
        assert np.allclose(b.t, orig.t)


def test_load_reports_bad_acceleration_location(tmp_path):
    seg = make_segment()
    seg.acc[1, 37] = 2.7  # out of the +-2 g range on axis y
    doc = {"participant": "p", "label": "heel", "freq_hz": 100.0,
           "samples": [{"t": float(seg.t[k]), "ax": float(seg.acc[0, k]),
                        "ay": float(seg.acc[1, k]), "az": float(seg.acc[2, k])}
                       for k in range(100)]}
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(DataError) as e:
        D.load_sessions(str(p))
    assert "sample 37" in str(e.value)
    assert "axis y" in str(e.value)


def test_load_reports_timing_errors(tmp_path):
    base = {"participant": "p", "label": "heel", "freq_hz": 100.0}
    # non-increasing timestamp
    samples = [{"t": k / 100.0, "ax": 0.0, "ay": 0.0, "az": 0.0} for k in range(20)]
    samples[5]["t"] = samples[4]["t"]
    (tmp_path / "a.json").write_text(json.dumps(dict(base, samples=samples)))
    with pytest.raises(DataError) as e:
        D.load_sessions(str(tmp_path / "a.json"))
    assert "index 5" in str(e.value)
    # spacing off by more than 1%
    samples = [{"t": k / 100.0, "ax": 0.0, "ay": 0.0, "az": 0.0} for k in range(20)]
    samples[7]["t"] += 0.002
    (tmp_path / "b.json").write_text(json.dumps(dict(base, samples=samples)))
    with pytest.raises(DataError) as e:
        D.load_sessions(str(tmp_path / "b.json"))
    assert "index 7" in str(e.value)


def test_load_malformed_json(tmp_path):
    (tmp_path / "x.json").write_text("{not json")
    with pytest.raises(DataError):
        D.load_sessions(str(tmp_path / "x.json"))
    (tmp_path / "x.json").write_text(json.dumps({"participant": "p"}))
    with pytest.raises(DataError):
        D.load_sessions(str(tmp_path / "x.json"))
    with pytest.raises(DataError):
        D.load_sessions(str(tmp_path / "missing.json"))


def test_load_skips_manifest(tmp_path):
    D.write_sessions([make_segment()], tmp_path)
    (tmp_path / "manifest.json").write_text(json.dumps({"command": "synth"}))
    assert len(D.load_sessions(str(tmp_path))) == 1


def test_cap_balance_exhaustive():
    # truncation happens per (participant, label), across many layouts
    rng = np.random.default_rng(0)
    cases = 0
    for n_segs in (1, 2, 3):
        for cap in (30, 100, 250, 1000):
            for lengths in ([50, 120, 200], [100, 100, 100], [10, 400, 80]):
                segs = []
                for p in ("a", "b"):
                    for label in D.LABELS:
                        for i in range(n_segs):
                            segs.append(make_segment(
                                p, label, T=lengths[i % 3],
                                seed=int(rng.integers(1 << 30))))
                out = D.cap_balance(segs, cap)
                totals = {}
                for s in out:
                    key = (s.participant, s.label)
                    totals[key] = totals.get(key, 0) + len(s)
                for (p, label), total in totals.items():
                    available = sum(len(s) for s in segs
                                    if s.participant == p and s.label == label)
                    assert total == min(cap, available), (n_segs, cap, lengths)
                # chronological prefix is preserved within each segment
                for s in out:
                    src = [o for o in segs
                           if o.participant == s.participant
                           and o.label == s.label and len(o) >= len(s)
                           and np.array_equal(o.acc[:, :len(s)], s.acc)]
                    assert src
                cases += len(segs)
    assert cases > 0


def test_cap_balance_paper_cap_3800():
    # 5000 + 5000 samples per class, cap 3800 -> 3800 + 3800
    segs = [make_segment("a", "forefoot", T=5000, seed=1),
            make_segment("a", "heel", T=5000, seed=2)]
    out = D.cap_balance(segs, 3800)
    assert sorted(len(s) for s in out) == [3800, 3800]
    # 4000 forefoot / 3600 heel: cap applies per class, no equalization
    segs = [make_segment("a", "forefoot", T=4000, seed=3),
            make_segment("a", "heel", T=3600, seed=4)]
    out = D.cap_balance(segs, 3800)
    got = {s.label: len(s) for s in out}
    assert got == {"forefoot": 3800, "heel": 3600}


def test_cap_balance_equalize():
    segs = [make_segment("a", "forefoot", T=300, seed=1),
            make_segment("a", "heel", T=120, seed=2),
            make_segment("b", "forefoot", T=80, seed=3),
            make_segment("b", "heel", T=200, seed=4)]
    out = D.cap_balance(segs, cap=1000, equalize=True)
    totals = {}
    for s in out:
        totals[(s.participant, s.label)] = totals.get((s.participant, s.label), 0) + len(s)
    assert totals[("a", "forefoot")] == totals[("a", "heel")] == 120
    assert totals[("b", "forefoot")] == totals[("b", "heel")] == 80


def test_cap_balance_rejects_bad_cap():
    with pytest.raises(DataError):
        D.cap_balance([], 0)


def test_synth_deterministic():
    a = D.synth_dataset(seed=7, participants=2, seconds_per_class=5.0)
    b = D.synth_dataset(seed=7, participants=2, seconds_per_class=5.0)
    assert len(a) == len(b) == 4
    for x, y in zip(a, b):
        assert x.participant == y.participant and x.label == y.label
        assert np.array_equal(x.acc, y.acc)
    c = D.synth_dataset(seed=8, participants=2, seconds_per_class=5.0)
    assert not np.array_equal(a[0].acc, c[0].acc)


def test_synth_within_full_scale_and_valid():
    segs = D.synth_dataset(seed=0, participants=3, seconds_per_class=10.0)
    for seg in segs:
        assert np.all(np.abs(seg.acc) <= D.ACC_FULL_SCALE)
        D._validate_samples(seg, "synth")  # spacing + monotonicity


def test_synth_heel_has_wider_larger_spike():
    # at zero noise the heel impact is wider and taller than the forefoot's
    rng = np.random.default_rng(0)
    fore = D.synth_segment(np.random.default_rng(1), "p", "forefoot", 20.0,
                           noise_sigma=0.0)
    heel = D.synth_segment(np.random.default_rng(1), "p", "heel", 20.0,
                           noise_sigma=0.0)
    assert heel.acc[2].max() > fore.acc[2].max()
    # width proxy: samples above half of each spike's own peak
    def above_half(seg):
        z = seg.acc[2] - np.median(seg.acc[2])
        return int(np.sum(z > 0.5 * z.max()))
    assert above_half(heel) > above_half(fore)


def test_synth_rejects_bad_args():
    with pytest.raises(DataError):
        D.synth_dataset(seed=0, participants=0)
    with pytest.raises(DataError):
        D.synth_dataset(seed=0, seconds_per_class=0.0)
