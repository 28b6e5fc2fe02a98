"""Streaming inference calculus: sliding windows over the accelerometer
stream, the consecutive-positive feedback trigger, and the timing/energy
bounds that tie model latency to the window stride.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class StreamConfig:
    w: int = 50            # window size in raw samples
    f: float = 100.0       # sampling frequency, Hz
    s: float = 0.25        # stride ratio; overlap = 1 - s
    d: int = 2             # keep-every-d-th downsampling inside a window
    n_consec: int = 5      # consecutive positives required to fire
    cooldown: float = 0.5  # minimum spacing between feedback events, s

    def __post_init__(self):
        if not (isinstance(self.w, int) and self.w > 0):
            raise ConfigError(f"window size w must be a positive integer, got {self.w}")
        if not self.f > 0:
            raise ConfigError(f"sampling frequency must be positive, got {self.f}")
        if not (0 < self.s <= 1):
            raise ConfigError(f"stride ratio must be in (0, 1], got {self.s}")
        if not (isinstance(self.d, int) and self.d > 0 and self.w % self.d == 0):
            raise ConfigError(f"downsampling factor {self.d} must divide w={self.w}")
        if not (isinstance(self.n_consec, int) and self.n_consec >= 1):
            raise ConfigError(f"n_consec must be a positive integer, got {self.n_consec}")
        if self.cooldown < 0:
            raise ConfigError(f"cooldown must be >= 0, got {self.cooldown}")

    @property
    def n(self):
        """Model input length per window."""
        return self.w // self.d

    @property
    def stride_samples(self):
        return self.w * self.s

    @property
    def stride_seconds(self):
        return self.w * self.s / self.f


@dataclass(frozen=True)
class Window:
    data: np.ndarray   # (channels, n)
    start: int         # raw-sample interval [start, end)
    end: int

    def overlaps(self, other):
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class FeedbackEvent:
    t: float
    detected_class: int


@dataclass(frozen=True)
class TriggerState:
    counter: int = 0
    last_event_t: float = None
    last_t: float = None


def window_count(total_samples, cfg):
    if total_samples < cfg.w:
        return 0
    return int(math.floor((total_samples - cfg.w) / cfg.stride_samples)) + 1


def make_windows(samples, cfg):
    """Slice a (channels, T) stream into downsampled windows.

    Window k covers the raw interval [floor(k*w*s), floor(k*w*s) + w) and
    keeps every d-th sample. Streams shorter than w yield no windows.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigError(f"expected a (channels, T) stream, got shape {x.shape}")
    T = x.shape[1]
    out = []
    for k in range(window_count(T, cfg)):
        start = int(math.floor(k * cfg.stride_samples))
        out.append(Window(x[:, start:start + cfg.w][:, ::cfg.d], start, start + cfg.w))
    return out


def feedback_latency(cfg):
    """Minimum time between the first of N_consec positives and the event."""
    return (cfg.n_consec - 1) * cfg.w * cfg.s / cfg.f


def realtime_bound(cfg):
    """Inference must finish within one window stride: T_infer <= w*s/f."""
    return cfg.w * cfg.s / cfg.f


def realtime_ok(cfg, t_infer_s):
    return t_infer_s <= realtime_bound(cfg)


def worst_case_energy_rate(cfg, e_infer_j):
    """Upper bound on compute power (W) when inferring every stride."""
    if e_infer_j < 0:
        raise ConfigError(f"per-inference energy must be >= 0, got {e_infer_j}")
    return e_infer_j * cfg.f / (cfg.w * cfg.s)


def trigger_step(state, predicted_class, timestamp, cfg, target_class=1):
    """Advance the trigger machine by one prediction.

    The counter increments on target-class predictions and resets to zero
    otherwise; an event fires when the counter reaches N_consec and the
    cooldown since the previous event has elapsed, resetting the counter.
    """
    if state.last_t is not None and timestamp < state.last_t:
        raise DataError(
            f"timestamps must be nondecreasing ({timestamp} after {state.last_t})")
    counter = state.counter + 1 if predicted_class == target_class else 0
    event = None
    last_event_t = state.last_event_t
    if counter >= cfg.n_consec:
        ready = last_event_t is None or timestamp - last_event_t >= cfg.cooldown
        if ready:
            event = FeedbackEvent(timestamp, target_class)
            last_event_t = timestamp
            counter = 0
        else:
            counter = cfg.n_consec  # hold until the cooldown elapses
    return TriggerState(counter, last_event_t, timestamp), event


def simulate(predict, samples, cfg, target_class=1):
    """Run the windowing + trigger pipeline over one recorded stream.

    `predict` maps a (channels, n) window to a class index. Returns
    (records, events) where each record mirrors one inference step;
    timestamps are window-completion times (start + w) / f.
    """
    state = TriggerState()
    records, events = [], []
    for idx, win in enumerate(make_windows(samples, cfg)):
        t = win.end / cfg.f
        pred = int(predict(win.data))
        state, event = trigger_step(state, pred, t, cfg, target_class)
        rec = {"window_index": idx, "t": t, "predicted_class": pred,
               "counter": state.counter}
        if event is not None:
            rec["event"] = {"t": event.t, "detected_class": event.detected_class}
            events.append(event)
        records.append(rec)
    return records, events
