"""Band-violation and accuracy metrics for level trajectories.

OverTime counts hours above the flood threshold and OverArea integrates the
exceedance depth over those hours (ft-hours); UnderTime/UnderArea mirror
them below the wastage threshold.  Computed per control point on hourly
series, so the area integral is a plain sum of depths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models.losses import Thresholds


@dataclass(frozen=True)
class FloodMetrics:
    over_time: int
    over_area: float
    under_time: int
    under_area: float

    def __post_init__(self):
        if min(self.over_time, self.over_area, self.under_time, self.under_area) < 0:
            raise ValueError("metrics must be nonnegative")
        if self.over_time == 0 and self.over_area != 0:
            raise ValueError("over_area must be 0 when over_time is 0")
        if self.under_time == 0 and self.under_area != 0:
            raise ValueError("under_area must be 0 when under_time is 0")

    def __add__(self, other: "FloodMetrics") -> "FloodMetrics":
        return FloodMetrics(self.over_time + other.over_time,
                            self.over_area + other.over_area,
                            self.under_time + other.under_time,
                            self.under_area + other.under_area)

    def to_dict(self) -> dict:
        return {"over_time": self.over_time, "over_area": self.over_area,
                "under_time": self.under_time, "under_area": self.under_area}


def flood_metrics(levels: np.ndarray, thresholds: Thresholds) -> FloodMetrics:
    """Aggregate band violations for a [T] or [T x N] level series."""
    levels = np.asarray(levels, dtype=np.float64)
    if levels.ndim == 1:
        levels = levels[:, None]
    if not np.isfinite(levels).all():
        raise ValueError("levels must be finite")
    if levels.shape[1] != thresholds.n_points:
        raise ValueError(
            f"series has {levels.shape[1]} points, thresholds have {thresholds.n_points}")
    over = levels - thresholds.flood_ft
    under = thresholds.waste_ft - levels
    return FloodMetrics(
        over_time=int((over > 0).sum()),
        over_area=float(np.where(over > 0, over, 0.0).sum()),
        under_time=int((under > 0).sum()),
        under_area=float(np.where(under > 0, under, 0.0).sum()),
    )


def flood_metrics_per_point(levels: np.ndarray,
                            thresholds: Thresholds) -> list[FloodMetrics]:
    levels = np.asarray(levels, dtype=np.float64)
    return [flood_metrics(levels[:, j:j + 1],
                          Thresholds(thresholds.flood_ft[j:j + 1],
                                     thresholds.waste_ft[j:j + 1]))
            for j in range(levels.shape[1])]


def accuracy_metrics(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    """(MAE, RMSE) over all control points and horizon steps, in feet."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    err = pred - truth
    return float(np.abs(err).mean()), float(np.sqrt((err ** 2).mean()))
