"""Flood and wastage penalties on predicted level trajectories.

Both penalties are squared hinge losses around a per-location band: levels
above the flood threshold are penalized by the squared exceedance, levels
below the wastage threshold by the squared shortfall.  They accept either
numpy arrays or autodiff Tensors, so the same definitions serve reporting
and gradient-based training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..series import ValidationError

DEFAULT_FLOOD_FT = 3.5
DEFAULT_BAND_FT = 1.5


@dataclass(frozen=True)
class Thresholds:
    flood_ft: np.ndarray  # per control point
    waste_ft: np.ndarray

    def __post_init__(self):
        flood = np.asarray(self.flood_ft, dtype=np.float64)
        waste = np.asarray(self.waste_ft, dtype=np.float64)
        object.__setattr__(self, "flood_ft", flood)
        object.__setattr__(self, "waste_ft", waste)
        if flood.shape != waste.shape:
            raise ValidationError("flood and waste thresholds must have equal shape")
        if not (waste < flood).all():
            raise ValidationError("waste threshold must be below flood threshold everywhere")

    @classmethod
    def uniform(cls, n_points: int, flood_ft: float = DEFAULT_FLOOD_FT,
                waste_ft: float = DEFAULT_FLOOD_FT - DEFAULT_BAND_FT) -> "Thresholds":
        return cls(np.full(n_points, flood_ft), np.full(n_points, waste_ft))

    @property
    def n_points(self) -> int:
        return self.flood_ft.shape[0]

    def to_dict(self) -> dict:
        return {"flood_ft": self.flood_ft.tolist(), "waste_ft": self.waste_ft.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Thresholds":
        return cls(np.asarray(d["flood_ft"]), np.asarray(d["waste_ft"]))


@dataclass(frozen=True)
class LossWeights:
    flood: float = 1.0
    waste: float = 0.1

    def __post_init__(self):
        if self.flood < 0 or self.waste < 0:
            raise ValidationError("loss weights must be nonnegative")
        if self.flood == 0 and self.waste == 0:
            raise ValidationError("at least one loss weight must be positive")

    def to_dict(self) -> dict:
        return {"flood": self.flood, "waste": self.waste}

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(**d)


def _as_tensor(levels) -> Tensor:
    return levels if isinstance(levels, Tensor) else Tensor(np.asarray(levels))


def flood_loss(levels, thresholds: Thresholds) -> Tensor:
    """Sum of squared exceedances above the flood threshold.

    ``levels`` is [... x N] with control points on the last axis; thresholds
    broadcast across all leading axes (horizon steps, batch).
    """
    t = _as_tensor(levels)
    excess = ad.max_with_scalar(t - Tensor(thresholds.flood_ft), 0.0)
    return ad.reduce_sum(ad.square(excess))


def wastage_loss(levels, thresholds: Thresholds) -> Tensor:
    """Sum of squared shortfalls below the wastage threshold."""
    t = _as_tensor(levels)
    shortfall = ad.min_with_scalar(t - Tensor(thresholds.waste_ft), 0.0)
    return ad.reduce_sum(ad.square(shortfall))


def combined_loss(l_flood, l_waste, weights: LossWeights):
    """Weighted sum; works on Tensors during training and floats in reports."""
    return l_flood * weights.flood + l_waste * weights.waste


def evaluate_levels(levels, thresholds: Thresholds,
                    weights: LossWeights) -> tuple[float, float, float]:
    """(L_flood, L_waste, combined) as plain floats for a level trajectory."""
    l1 = float(flood_loss(levels, thresholds).data)
    l2 = float(wastage_loss(levels, thresholds).data)
    return l1, l2, l1 * weights.flood + l2 * weights.waste


def default_thresholds(topology) -> Thresholds:
    """Flood threshold 3.5 ft everywhere; wastage 2.0 ft at gated storage
    cells and 0.2 ft at free tidal cells, where low water is not wastage."""
    gated = {s.upstream for s in topology.structures}
    flood = np.full(len(topology.control_points), DEFAULT_FLOOD_FT)
    waste = np.array([DEFAULT_FLOOD_FT - DEFAULT_BAND_FT if cp in gated else 0.2
                      for cp in topology.control_points])
    return Thresholds(flood, waste)
