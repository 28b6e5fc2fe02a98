"""Session-file ingestion, per-class sample capping, and a deterministic
synthetic gait generator used for desk-scale end-to-end runs.

Session schema (JSON, UTF-8): one object or an array of objects shaped
{"participant": str, "label": "forefoot"|"heel", "freq_hz": number,
 "samples": [{"t": seconds, "ax": g, "ay": g, "az": g}, ...]}.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError

LABELS = ("forefoot", "heel")
ACC_FULL_SCALE = 2.0  # g
TIMING_TOLERANCE = 0.01  # +-1% of the nominal sample spacing


@dataclass
class LabeledSegment:
    participant: str
    label: str          # "forefoot" | "heel"
    freq_hz: float
    t: np.ndarray       # (T,) seconds, strictly increasing
    acc: np.ndarray     # (3, T) in g, axes ax/ay/az

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.acc = np.asarray(self.acc, dtype=np.float64)
        if self.label not in LABELS:
            raise DataError(f"unknown label {self.label!r}; expected one of {LABELS}")
        if self.freq_hz <= 0:
            raise DataError(f"freq_hz must be positive, got {self.freq_hz}")
        if self.acc.shape != (3, self.t.size):
            raise DataError(f"acc shape {self.acc.shape} != (3, {self.t.size})")

    @property
    def label_index(self):
        return LABELS.index(self.label)

    def __len__(self):
        return self.t.size

    def truncated(self, count):
        return LabeledSegment(self.participant, self.label, self.freq_hz,
                              self.t[:count], self.acc[:, :count])


def _validate_samples(seg, context):
    if np.any(np.abs(seg.acc) > ACC_FULL_SCALE):
        ch, idx = np.unravel_index(np.argmax(np.abs(seg.acc)), seg.acc.shape)
        raise DataError(
            f"{context}: acceleration out of range +-{ACC_FULL_SCALE} g at "
            f"sample {idx}, axis {'xyz'[ch]} ({seg.acc[ch, idx]:.3f} g)")
    dt = np.diff(seg.t)
    if np.any(dt <= 0):
        k = int(np.argmax(dt <= 0)) + 1
        raise DataError(f"{context}: non-increasing timestamp at index {k}")
    nominal = 1.0 / seg.freq_hz
    bad = np.abs(dt - nominal) > TIMING_TOLERANCE * nominal
    if np.any(bad):
        k = int(np.argmax(bad)) + 1
        raise DataError(
            f"{context}: sample spacing at index {k} deviates more than "
            f"{TIMING_TOLERANCE:.0%} from 1/freq_hz")


def _parse_segment(doc, context):
    try:
        participant = str(doc["participant"])
        label = str(doc["label"])
        freq = float(doc["freq_hz"])
        samples = doc["samples"]
        t = np.array([s["t"] for s in samples], dtype=np.float64)
        acc = np.array([[s["ax"], s["ay"], s["az"]] for s in samples],
                       dtype=np.float64).T.reshape(3, -1)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{context}: malformed session object ({exc})") from exc
    seg = LabeledSegment(participant, label, freq, t, acc)
    _validate_samples(seg, context)
    return seg


def load_sessions(path):
    """Load every *.json session file under `path` (file or directory)."""
    if os.path.isdir(path):
        files = sorted(os.path.join(path, f) for f in os.listdir(path)
                       if f.endswith(".json") and f != "manifest.json")
    elif os.path.exists(path):
        files = [path]
    else:
        raise DataError(f"no such file or directory: {path}")
    segments = []
    for fname in files:
        try:
            with open(fname, encoding="utf-8") as f:
                doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise DataError(f"{fname}: invalid JSON ({exc})") from exc
        docs = doc if isinstance(doc, list) else [doc]
        for i, d in enumerate(docs):
            segments.append(_parse_segment(d, f"{fname}[{i}]"))
    return segments


def write_sessions(segments, out_dir):
    """Write one schema-conformant JSON file per segment; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i, seg in enumerate(segments):
        doc = {
            "participant": seg.participant,
            "label": seg.label,
            "freq_hz": seg.freq_hz,
            "samples": [
                {"t": float(seg.t[k]), "ax": float(seg.acc[0, k]),
                 "ay": float(seg.acc[1, k]), "az": float(seg.acc[2, k])}
                for k in range(len(seg))
            ],
        }
        path = os.path.join(out_dir, f"{seg.participant}_{seg.label}_{i:03d}.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, sort_keys=True)
        paths.append(path)
    return paths


def cap_balance(segments, cap, equalize=False):
    """Cap retained samples per (participant, label), truncating tails.

    With `equalize`, each participant's cap is further lowered to the
    smaller of their two per-label totals, so both classes end up equal.
    """
    if cap <= 0:
        raise DataError(f"cap must be positive, got {cap}")
    caps = {}
    if equalize:
        totals = {}
        for seg in segments:
            key = (seg.participant, seg.label)
            totals[key] = totals.get(key, 0) + len(seg)
        by_pid = {}
        for (pid, _), n in totals.items():
            by_pid.setdefault(pid, []).append(n)
        caps = {pid: min(cap, min(ns)) for pid, ns in by_pid.items()}
    used = {}
    out = []
    for seg in segments:
        key = (seg.participant, seg.label)
        limit = caps.get(seg.participant, cap)
        budget = limit - used.get(key, 0)
        if budget <= 0:
            continue
        keep = min(budget, len(seg))
        used[key] = used.get(key, 0) + keep
        out.append(seg if keep == len(seg) else seg.truncated(keep))
    return out


# ---------------------------------------------------------------------------
# synthetic gait generator


def _biphasic_spike(phase, center, width, amplitude):
    """Positive impact lobe followed by a smaller rebound lobe."""
    u = (phase - center + 0.5) % 1.0 - 0.5
    main = np.exp(-0.5 * (u / width) ** 2)
    rebound = np.exp(-0.5 * ((u - 2.5 * width) / width) ** 2)
    return amplitude * (main - 0.5 * rebound)


def synth_segment(rng, participant, label, seconds, freq_hz=100.0,
                  noise_sigma=0.05):
    """One synthetic running segment: arm swing plus footstrike impacts.

    Both classes share a participant-specific arm-swing sinusoid; the
    heel class has a wider, larger impact spike at a shifted phase plus a
    low-frequency body-motion component.
    """
    T = int(round(seconds * freq_hz))
    t = np.arange(T) / freq_hz
    gait_f = rng.uniform(2.4, 3.2)
    amp = rng.uniform(0.4, 0.7)
    phi = rng.uniform(0, 2 * np.pi, size=3)
    phase = (gait_f * t) % 1.0

    ax = amp * np.sin(2 * np.pi * gait_f * t + phi[0])
    ay = 0.6 * amp * np.sin(2 * np.pi * gait_f * t + phi[1])
    az = 0.4 * amp * np.sin(4 * np.pi * gait_f * t + phi[2])
    if label == "forefoot":
        az = az + _biphasic_spike(phase, 0.20, 0.020, 1.3)
    else:
        az = az + _biphasic_spike(phase, 0.45, 0.055, 1.7)
        az = az + 0.25 * np.sin(2 * np.pi * 0.5 * t)
    acc = np.stack([ax, ay, az])
    acc = acc + rng.normal(0.0, noise_sigma, size=acc.shape)
    acc = np.clip(acc, -ACC_FULL_SCALE, ACC_FULL_SCALE)
    return LabeledSegment(participant, label, freq_hz, t, acc)


def synth_dataset(seed, participants=12, seconds_per_class=60.0, freq_hz=100.0,
                  noise_sigma=0.05):
    """Deterministic synthetic dataset: one segment per participant/class."""
    if participants <= 0 or seconds_per_class <= 0:
        raise DataError("participants and seconds_per_class must be positive")
    rng = np.random.default_rng(seed)
    segments = []
    for p in range(participants):
        pid = f"p{p + 1:02d}"
        for label in LABELS:
            segments.append(synth_segment(rng, pid, label, seconds_per_class,
                                          freq_hz, noise_sigma))
    return segments
