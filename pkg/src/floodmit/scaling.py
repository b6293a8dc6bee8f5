"""Per-variable affine scaling fit on the training split only.

Non-control columns (levels, tide, rain) are z-scored; gate/pump columns are
left untouched so schedules stay in [0,1] end to end.  The fitted statistics
travel with trained models to keep train/test handling identical.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .series import CONTROL_ROLES, SeriesFrame


class FrameNormalizer(BaseEstimator, TransformerMixin):
    """Column-wise (x - mean) / scale with identity on control columns.

    Zero-variance columns keep scale 1 so the transform stays invertible.
    """

    def __init__(self, ddof: int = 0):
        self.ddof = ddof

    def fit(self, frame: SeriesFrame, y=None) -> "FrameNormalizer":
        values = frame.values
        means = values.mean(axis=0)
        scales = values.std(axis=0, ddof=self.ddof)
        for j, spec in enumerate(frame.specs):
            if spec.role in CONTROL_ROLES:
                means[j] = 0.0
                scales[j] = 1.0
            elif scales[j] == 0.0:
                scales[j] = 1.0
        self.means_ = means
        self.scales_ = scales
        self.headers_ = [s.header() for s in frame.specs]
        return self

    def _check_fitted(self):
        if not hasattr(self, "means_"):
            raise NotFittedError("FrameNormalizer is not fitted")

    def transform(self, frame: SeriesFrame) -> SeriesFrame:
        self._check_fitted()
        scaled = (frame.values - self.means_) / self.scales_
        return SeriesFrame(frame.specs, frame.start_time, scaled)

    def inverse_transform(self, frame: SeriesFrame) -> SeriesFrame:
        self._check_fitted()
        raw = frame.values * self.scales_ + self.means_
        return SeriesFrame(frame.specs, frame.start_time, raw)

    # array-level hooks used by models that normalize sample blocks directly

    def transform_columns(self, values: np.ndarray, indices) -> np.ndarray:
        self._check_fitted()
        idx = np.asarray(indices, dtype=int)
        return (values - self.means_[idx]) / self.scales_[idx]

    def inverse_transform_columns(self, values: np.ndarray, indices) -> np.ndarray:
        self._check_fitted()
        idx = np.asarray(indices, dtype=int)
        return values * self.scales_[idx] + self.means_[idx]

    def state(self) -> dict:
        self._check_fitted()
        return {
            "means": self.means_.tolist(),
            "scales": self.scales_.tolist(),
            "headers": self.headers_,
        }

    @classmethod
    def from_state(cls, state: dict) -> "FrameNormalizer":
        norm = cls()
        norm.means_ = np.asarray(state["means"], dtype=np.float64)
        norm.scales_ = np.asarray(state["scales"], dtype=np.float64)
        norm.headers_ = list(state["headers"])
        return norm
