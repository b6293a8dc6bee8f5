from .evaluator import FloodEvaluator, frame_fingerprint, persistence_mae
from .losses import (
    LossWeights,
    Thresholds,
    combined_loss,
    default_thresholds,
    evaluate_levels,
    flood_loss,
    wastage_loss,
)
from .manager import FloodManager
from .nets import ARCHITECTURES, VariableLayout, stack_samples

__all__ = [
    "ARCHITECTURES",
    "FloodEvaluator",
    "FloodManager",
    "LossWeights",
    "Thresholds",
    "VariableLayout",
    "combined_loss",
    "default_thresholds",
    "evaluate_levels",
    "flood_loss",
    "frame_fingerprint",
    "persistence_mae",
    "stack_samples",
    "wastage_loss",
]
