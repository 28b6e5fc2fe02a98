"""gaitkit: compact quantized time-series classifiers for wrist-worn
footstrike detection, with bit-exact integer inference, a streaming
feedback trigger, FPGA cost modeling, and bi-objective config search.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    AccumulatorOverflow, ConfigError, DataError, GaitkitError,
    QuantError, ShapeError, TapeError, TrainingError,
)
from .models import Model, ModelConfig, build, forward, mac_count, param_count  # noqa: F401
from .quant import FixedPointMultiplier, QuantParams  # noqa: F401
from .stream import StreamConfig, feedback_latency, make_windows, realtime_bound  # noqa: F401
from .train import TrainConfig, f1_score, finetune_qat, train_generalized  # noqa: F401
from .hwcost import CostReport, battery_life, cost_report, load_profile  # noqa: F401
from .search import SearchSpace, Trial, pareto_front, run_search  # noqa: F401
from .dataio import LabeledSegment, load_sessions, synth_dataset  # noqa: F401
