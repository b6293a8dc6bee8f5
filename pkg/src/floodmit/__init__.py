"""Differentiable flood-mitigation control toolkit.

Two learned components around a mass-balance river simulator: a frozen
surrogate that predicts control-point water levels from past observations,
forecast covariates and a candidate gate/pump schedule, and a scheduler
trained by backpropagating band-violation penalties through that frozen
surrogate.  Rule-based and genetic-algorithm baselines, closed-loop
benchmarking, attention/attribution reports, and an operator HTTP service
sit on top.
"""

from .baselines import GAConfig, RulePolicy, StationRule, ga_optimize, rule_schedule
from .metrics import FloodMetrics, accuracy_metrics, flood_metrics
from .models import (
    FloodEvaluator,
    FloodManager,
    LossWeights,
    Thresholds,
    combined_loss,
    default_thresholds,
    flood_loss,
    persistence_mae,
    wastage_loss,
)
from .scaling import FrameNormalizer
from .series import (
    SeriesFrame,
    ValidationError,
    VariableSpec,
    WindowConfig,
    WindowSample,
    make_windows,
    read_csv,
    write_csv,
)
from .sim import ForcingConfig, NetworkTopology, default_topology, simulate

__version__ = "0.1.0"

__all__ = [
    "FloodEvaluator",
    "FloodManager",
    "FloodMetrics",
    "ForcingConfig",
    "FrameNormalizer",
    "GAConfig",
    "LossWeights",
    "NetworkTopology",
    "RulePolicy",
    "SeriesFrame",
    "StationRule",
    "Thresholds",
    "ValidationError",
    "VariableSpec",
    "WindowConfig",
    "WindowSample",
    "accuracy_metrics",
    "combined_loss",
    "default_thresholds",
    "default_topology",
    "flood_loss",
    "flood_metrics",
    "ga_optimize",
    "make_windows",
    "persistence_mae",
    "read_csv",
    "rule_schedule",
    "simulate",
    "wastage_loss",
    "write_csv",
    "__version__",
]
