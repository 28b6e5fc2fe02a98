"""FPGA deployment cost model: per-inference latency / power / energy,
coarse resource-utilization prediction, deployability, and battery life.

Two tiers: a measured table embedded in each platform profile is
authoritative and reproduced bit-for-bit; configurations absent from the
table fall back to a calibrated estimator (cycles-per-MAC latency model
and a least-squares resource regression fitted to the measured rows).
"""

import json
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import models as M
from .errors import ConfigError

BUILTIN_PROFILES = ("large", "small")
RESOURCES = ("lut_pct", "dsp_pct", "bram_pct")
# estimator coarseness, percentage points; drives the "uncertain" verdict
RESOURCE_MARGIN_PP = 15.0


def energy(power_mw, latency_ms):
    """Per-inference energy in microjoules (mW x ms = uJ)."""
    if power_mw < 0 or latency_ms < 0:
        raise ConfigError("power and latency must be nonnegative")
    return power_mw * latency_ms


def latency_ms(cycles, clock_hz):
    if clock_hz <= 0:
        raise ConfigError(f"clock must be positive, got {clock_hz}")
    return cycles / clock_hz * 1e3


def _variable_config(arch, variable, bitwidth):
    kw = {"cnn1d": "num_blocks", "sepcnn1d": "num_blocks",
          "lstm": "h_size", "transformer": "d_model"}[arch]
    return M.ModelConfig(arch, bitwidth=bitwidth, **{kw: variable})


class PlatformProfile:
    def __init__(self, doc, origin="<dict>"):
        try:
            self.name = doc["name"]
            self.clock_hz = float(doc["clock_hz"])
            self.lut_capacity = int(doc["lut_capacity"])
            self.dsp_capacity = int(doc["dsp_capacity"])
            self.bram_capacity = int(doc["bram_capacity"])
            self.cycles_per_mac = dict(doc["cycles_per_mac"])
            self.measured = list(doc.get("measured", []))
            self.anchors = list(doc.get("anchors", []))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{origin}: malformed platform profile ({exc})") from exc
        if self.clock_hz <= 0 or min(self.lut_capacity, self.dsp_capacity,
                                     self.bram_capacity) <= 0:
            raise ConfigError(f"{origin}: capacities and clock must be positive")
        self._res_coefs = self._fit_resources()
        self._power_coefs = self._fit_power()

    # -- calibration --------------------------------------------------------

    @staticmethod
    def _features(cfg):
        onehot = [1.0 if cfg.arch == a else 0.0 for a in M.ARCHITECTURES]
        return np.array([M.param_count(cfg) * cfg.bitwidth, M.mac_count(cfg)]
                        + onehot + [1.0])

    def _rows(self):
        return self.measured + self.anchors

    def _fit_resources(self):
        coefs = {}
        for res in RESOURCES:
            rows = [r for r in self._rows() if r.get(res) is not None]
            if not rows:
                coefs[res] = None
                continue
            A = np.stack([self._features(_variable_config(
                r["arch"], r["variable"], r["bitwidth"])) for r in rows])
            y = np.array([float(r[res]) for r in rows])
            coefs[res], *_ = np.linalg.lstsq(A, y, rcond=None)
        return coefs

    def _fit_power(self):
        rows = [r for r in self.measured if r.get("power_mw") is not None]
        if not rows:
            return None
        A = np.stack([self._features(_variable_config(
            r["arch"], r["variable"], r["bitwidth"])) for r in rows])
        y = np.array([float(r["power_mw"]) for r in rows])
        coefs, *_ = np.linalg.lstsq(A, y, rcond=None)
        return coefs

    # -- estimation ---------------------------------------------------------

    def lookup_measured(self, cfg):
        for r in self.measured:
            if (r["arch"] == cfg.arch and r["variable"] == cfg.variable
                    and r["bitwidth"] == cfg.bitwidth):
                return r
        return None

    def cycles(self, cfg):
        if cfg.arch not in self.cycles_per_mac:
            raise ConfigError(f"profile {self.name} has no cycle model for {cfg.arch}")
        return int(round(self.cycles_per_mac[cfg.arch] * M.mac_count(cfg)))

    def estimate_resources(self, cfg):
        """Regression-based utilization percentages; may exceed 100."""
        feats = self._features(cfg)
        out = {}
        for res in RESOURCES:
            c = self._res_coefs[res]
            out[res] = float(feats @ c) if c is not None else 0.0
        return out

    def estimate_power(self, cfg):
        if self._power_coefs is None:
            raise ConfigError(f"profile {self.name} has no measured power rows")
        return max(float(self._features(cfg) @ self._power_coefs), 0.0)


@dataclass(frozen=True)
class CostReport:
    latency_ms: float
    power_mw: float
    energy_uj: float
    lut_pct: float
    dsp_pct: float
    bram_pct: float
    deployable: bool
    source: str  # "measured" | "estimated"

    @property
    def verdict(self):
        """Tri-state deployability for humans; the boolean stays <= 100%."""
        if self.source == "measured":
            return "yes" if self.deployable else "no"
        near = any(abs(u - 100.0) <= RESOURCE_MARGIN_PP
                   for u in (self.lut_pct, self.dsp_pct, self.bram_pct))
        if near:
            return "uncertain"
        return "yes" if self.deployable else "no"

    def to_dict(self):
        return {"latency_ms": self.latency_ms, "power_mw": self.power_mw,
                "energy_uj": self.energy_uj, "lut_pct": self.lut_pct,
                "dsp_pct": self.dsp_pct, "bram_pct": self.bram_pct,
                "deployable": self.deployable, "verdict": self.verdict,
                "source": self.source}


def check_deployable(utilizations):
    """True iff every utilization is <= 100% (boundary included)."""
    return all(u <= 100.0 for u in utilizations)


def cost_report(cfg, profile):
    """Measured-table lookup first; calibrated estimation otherwise."""
    row = profile.lookup_measured(cfg)
    if row is not None:
        utils = tuple(float(row[res]) for res in RESOURCES)
        return CostReport(float(row["latency_ms"]), float(row["power_mw"]),
                          float(row["energy_uj"]), *utils,
                          deployable=check_deployable(utils), source="measured")
    lat = latency_ms(profile.cycles(cfg), profile.clock_hz)
    power = profile.estimate_power(cfg)
    res = profile.estimate_resources(cfg)
    utils = tuple(res[r] for r in RESOURCES)
    return CostReport(lat, power, energy(power, lat), *utils,
                      deployable=check_deployable(utils), source="estimated")


def battery_life(idle_mw_components, inference_rate_hz, e_infer_uj,
                 battery_mah=320.0, nominal_v=3.6):
    """Days of continuous operation from a battery of the given capacity.

    Inference contributes rate * E_infer microwatts on top of the idle
    component powers (MCU, IMU, ...).
    """
    if battery_mah <= 0 or nominal_v <= 0:
        raise ConfigError("battery capacity and voltage must be positive")
    if inference_rate_hz < 0 or e_infer_uj < 0:
        raise ConfigError("rate and energy must be nonnegative")
    total_mw = float(sum(idle_mw_components)) + inference_rate_hz * e_infer_uj * 1e-3
    if total_mw <= 0:
        raise ConfigError("total power draw must be positive")
    capacity_mwh = battery_mah * nominal_v
    return capacity_mwh / total_mw / 24.0


def load_profile(name_or_path):
    """Load a profile by builtin name, file path, or GAITKIT_PROFILE_DIR."""
    if name_or_path in BUILTIN_PROFILES:
        override = os.environ.get("GAITKIT_PROFILE_DIR")
        if override:
            path = os.path.join(override, f"{name_or_path}.json")
            if os.path.exists(path):
                return _load_file(path)
        ref = resources.files("gaitkit") / "profiles" / f"{name_or_path}.json"
        return PlatformProfile(json.loads(ref.read_text()), origin=str(ref))
    if os.path.exists(name_or_path):
        return _load_file(name_or_path)
    raise ConfigError(f"unknown platform profile {name_or_path!r}; "
                      f"builtins are {BUILTIN_PROFILES}")


def _load_file(path):
    with open(path, encoding="utf-8") as f:
        return PlatformProfile(json.load(f), origin=path)
