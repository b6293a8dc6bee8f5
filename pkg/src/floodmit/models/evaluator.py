"""The level predictor: maps (past window, future covariates, candidate
schedule) to future water levels at the control points.

Trained with MSE on normalized levels, then frozen.  Once frozen it serves
as the differentiable referee for schedule optimization: forward and
backward stay functional, gradients flow through it into the schedule
input, but its own values can never change again.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .. import autodiff as ad
from ..autodiff import Adam, ParamSet, Tensor
from ..scaling import FrameNormalizer
from ..series import (
    SeriesFrame,
    ValidationError,
    VariableSpec,
    WindowConfig,
    WindowSample,
    make_windows,
)
from ..sim.topology import NetworkTopology, default_topology
from .nets import ARCHITECTURES, VariableLayout, build_core, stack_samples

ARTIFACT_VERSION = 1


def persistence_mae(samples, water_indices) -> float:
    """MAE of repeating the last observed level across the horizon."""
    total = 0.0
    count = 0
    for s in samples:
        last = s.past[-1, list(water_indices)]
        total += np.abs(s.future_water - last).sum()
        count += s.future_water.size
    return total / count


def frame_fingerprint(frame: SeriesFrame) -> str:
    return hashlib.sha256(frame.values.tobytes()).hexdigest()[:16]


class FloodEvaluator(BaseEstimator):
    """Sequence regressor with a fit/predict surface and a freeze contract."""

    def __init__(self, architecture: str = "gtn_lite", topology: NetworkTopology | None = None,
                 w: int = 72, k: int = 24, hidden: int = 24, embed_dim: int = 4,
                 epochs: int = 30, batch_size: int = 32, lr: float = 3e-3,
                 patience: int = 5, stride: int = 2, seed: int = 0,
                 peak_level_ft: float | None = None, peak_weight: float = 1.0):
        self.architecture = architecture
        self.topology = topology
        self.w = w
        self.k = k
        self.hidden = hidden
        self.embed_dim = embed_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.patience = patience
        self.stride = stride
        self.seed = seed
        self.peak_level_ft = peak_level_ft
        self.peak_weight = peak_weight

    # -- construction --------------------------------------------------------

    def _build(self, specs) -> None:
        if self.architecture not in ARCHITECTURES:
            raise ValidationError(
                f"unknown architecture {self.architecture!r}; expected one of {ARCHITECTURES}")
        self.topology_ = self.topology or default_topology()
        self.specs_ = tuple(specs)
        self.layout_ = VariableLayout.from_specs(self.specs_)
        self.params_ = ParamSet()
        rng = np.random.default_rng(self.seed)
        self.core_ = build_core(self.architecture, self.params_, rng,
                                self.layout_, self.specs_, self.topology_,
                                self.w, self.k, self.hidden, self.embed_dim,
                                role="evaluator")

    def build(self, specs) -> "FloodEvaluator":
        """Construct the network at its seeded initialization, untrained.

        ``fit`` does this internally; exposing it separately supports
        gradient checking and shape probing without a training pass.
        """
        self._build(specs)
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("evaluator is not fitted")

    def is_frozen(self) -> bool:
        return hasattr(self, "params_") and self.params_.frozen

    def freeze(self) -> "FloodEvaluator":
        """Make the parameters immutable for good; inference-only from here."""
        self._check_fitted()
        self.params_.freeze()
        return self

    # -- normalization plumbing ----------------------------------------------

    def _norm_blocks(self, past: np.ndarray, cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        past_n = self.normalizer_.transform_columns(past, range(past.shape[-1]))
        cov_n = self.normalizer_.transform_columns(cov, self.layout_.cov)
        return self.layout_.permute_past(past_n), cov_n

    def _water_scale(self) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(self.layout_.water)
        return self.normalizer_.means_[idx], self.normalizer_.scales_[idx]

    # -- forward paths ---------------------------------------------------------

    def forward_norm(self, past_n: Tensor, cov_n: Tensor, ctrl: Tensor):
        """Graph forward on pre-normalized canonical blocks; returns
        (normalized levels [B x k x N], attention or None)."""
        return self.core_.forward(past_n, cov_n, ctrl)

    def forward_levels_ft(self, past_n: Tensor, cov_n: Tensor, ctrl: Tensor):
        """Like forward_norm but denormalized to feet (still differentiable)."""
        out_n, attn = self.forward_norm(past_n, cov_n, ctrl)
        mean_w, scale_w = self._water_scale()
        return out_n * Tensor(scale_w) + Tensor(mean_w), attn

    def _predict_arrays(self, past: np.ndarray, cov: np.ndarray, ctrl: np.ndarray,
                        return_attention: bool = False):
        self._check_fitted()
        if past.ndim == 2:
            past, cov, ctrl = past[None], cov[None], ctrl[None]
        self._validate_blocks(past, cov, ctrl)
        past_n, cov_n = self._norm_blocks(past, cov)
        outs, attns = [], []
        with ad.no_grad():
            for lo in range(0, past.shape[0], self.batch_size):
                hi = lo + self.batch_size
                levels, attn = self.forward_levels_ft(
                    Tensor(past_n[lo:hi]), Tensor(cov_n[lo:hi]), Tensor(ctrl[lo:hi]))
                outs.append(levels.data)
                if return_attention and attn is not None:
                    attns.append(attn.data)
        levels = np.concatenate(outs, axis=0)
        if not np.isfinite(levels).all():
            raise RuntimeError("evaluator produced non-finite levels")
        attention = np.concatenate(attns, axis=0) if attns else None
        return levels, attention

    def _validate_blocks(self, past, cov, ctrl):
        expect = {
            "past": (self.w, self.layout_.n_vars),
            "future_cov": (self.k, self.layout_.n_cov),
            "future_controls": (self.k, self.layout_.n_ctrl),
        }
        for name, block in zip(expect, (past, cov, ctrl)):
            if block.shape[-2:] != expect[name]:
                raise ValidationError(
                    f"{name} block must end with {expect[name]}, got {block.shape}")

    def predict(self, samples, return_attention: bool = False):
        """Predict future levels (ft) for a WindowSample or a list of them."""
        self._check_fitted()
        single = isinstance(samples, WindowSample)
        if single:
            samples = [samples]
        blocks = stack_samples(samples)
        levels, attn = self._predict_arrays(
            blocks["past"], blocks["future_cov"], blocks["future_controls"],
            return_attention=return_attention)
        if single:
            levels = levels[0]
            attn = attn[0] if attn is not None else None
        if return_attention:
            return levels, attn
        return levels

    def predict_blocks(self, past: np.ndarray, future_cov: np.ndarray,
                       future_controls: np.ndarray) -> np.ndarray:
        """Levels (ft) for fully batched raw blocks [B x ...]."""
        levels, _ = self._predict_arrays(np.asarray(past, dtype=np.float64),
                                         np.asarray(future_cov, dtype=np.float64),
                                         np.asarray(future_controls, dtype=np.float64))
        return levels

    def predict_batch(self, past: np.ndarray, future_cov: np.ndarray,
                      schedules: np.ndarray) -> np.ndarray:
        """Evaluate many candidate schedules against one shared context."""
        schedules = np.asarray(schedules, dtype=np.float64)
        b = schedules.shape[0]
        past_b = np.broadcast_to(past, (b,) + past.shape)
        cov_b = np.broadcast_to(future_cov, (b,) + future_cov.shape)
        levels, _ = self._predict_arrays(past_b, cov_b, schedules)
        return levels

    def attention_matrix(self, samples) -> tuple[np.ndarray, list[str]]:
        """Mean [V x V] attention over samples, with canonical labels."""
        self._check_fitted()
        _, attn = self.predict(samples if isinstance(samples, list) else [samples],
                               return_attention=True)
        if attn is None:
            raise ValidationError(
                f"architecture {self.architecture!r} exposes no attention matrix")
        labels = [self.specs_[i].name for i in self.layout_.order]
        return attn.mean(axis=0), labels

    # -- training ---------------------------------------------------------------

    def fit(self, train_frame: SeriesFrame, val_frame: SeriesFrame | None = None):
        t0 = time.perf_counter()
        self._build(train_frame.specs)
        if self.params_.frozen:
            raise ValidationError("cannot refit a frozen evaluator")
        self.normalizer_ = FrameNormalizer().fit(train_frame)
        self.fingerprint_ = frame_fingerprint(train_frame)

        cfg = WindowConfig(self.w, self.k, self.stride)
        train = stack_samples(make_windows(train_frame, cfg))
        past_n, cov_n = self._norm_blocks(train["past"], train["future_cov"])
        mean_w, scale_w = self._water_scale()
        target_n = (train["future_water"] - mean_w) / scale_w
        ctrl = train["future_controls"]
        n = past_n.shape[0]

        val_samples = None
        if val_frame is not None:
            val_samples = make_windows(val_frame, WindowConfig(self.w, self.k,
                                                               max(self.stride, 2)))

        opt = Adam(self.params_, lr=self.lr)
        shuffle = np.random.default_rng(self.seed + 1)
        best = {"val": np.inf, "state": self.params_.state_copy(), "epoch": -1}
        self.history_ = []
        stall = 0
        for epoch in range(self.epochs):
            perm = shuffle.permutation(n)
            train_mse = 0.0
            for lo in range(0, n, self.batch_size):
                idx = perm[lo:lo + self.batch_size]
                pred, _ = self.forward_norm(Tensor(past_n[idx]), Tensor(cov_n[idx]),
                                            Tensor(ctrl[idx]))
                err = pred - Tensor(target_n[idx])
                loss = ad.reduce_sum(ad.square(err)) * (1.0 / err.size)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise RuntimeError(
                        f"evaluator training diverged at epoch {epoch} "
                        f"(batch loss {value}); lower the learning rate")
                opt.zero_grad()
                loss.backward()
                opt.step()
                train_mse += value * len(idx)
            record = {"epoch": epoch, "train_mse": train_mse / n}
            if val_samples is not None:
                val_mae, val_rmse = self.score_samples(val_samples)
                record.update(val_mae=val_mae, val_rmse=val_rmse)
                if val_mae < best["val"] - 1e-6:
                    best = {"val": val_mae, "state": self.params_.state_copy(),
                            "epoch": epoch}
                    stall = 0
                else:
                    stall += 1
            self.history_.append(record)
            if val_samples is not None and stall > self.patience:
                break
        if val_samples is not None and best["epoch"] >= 0:
            self.params_.load_state(best["state"])
            self.val_mae_ = best["val"]
            self.persistence_mae_ = persistence_mae(val_samples, self.layout_.water)
        self.train_seconds_ = time.perf_counter() - t0
        return self

    def score_samples(self, samples) -> tuple[float, float]:
        """(MAE, RMSE) in feet over all points and horizon steps."""
        blocks = stack_samples(samples)
        pred, _ = self._predict_arrays(blocks["past"], blocks["future_cov"],
                                       blocks["future_controls"])
        err = pred - blocks["future_water"]
        return float(np.abs(err).mean()), float(np.sqrt((err ** 2).mean()))

    # -- persistence --------------------------------------------------------------

    def save(self, path) -> None:
        self._check_fitted()
        path = Path(path)
        self.params_.save(path)
        sidecar = {
            "version": ARTIFACT_VERSION,
            "kind": "evaluator",
            "architecture": self.architecture,
            "w": self.w, "k": self.k,
            "hidden": self.hidden, "embed_dim": self.embed_dim,
            "seed": self.seed,
            "frozen": self.params_.frozen,
            "normalizer": self.normalizer_.state(),
            "specs": [s.header() for s in self.specs_],
            "topology": self.topology_.to_dict(),
            "fingerprint": getattr(self, "fingerprint_", None),
            "history": getattr(self, "history_", []),
            "val_mae": getattr(self, "val_mae_", None),
        }
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2))

    @classmethod
    def load(cls, path) -> "FloodEvaluator":
        path = Path(path)
        sidecar = json.loads(Path(str(path) + ".json").read_text())
        if sidecar.get("kind") != "evaluator":
            raise ValidationError(f"{path}: not an evaluator artifact")
        model = cls(architecture=sidecar["architecture"],
                    topology=NetworkTopology.from_dict(sidecar["topology"]),
                    w=sidecar["w"], k=sidecar["k"], hidden=sidecar["hidden"],
                    embed_dim=sidecar["embed_dim"], seed=sidecar["seed"])
        specs = tuple(VariableSpec.from_header(h) for h in sidecar["specs"])
        model._build(specs)
        loaded = ParamSet.load(path)
        model.params_.load_state(loaded.state_copy())
        model.normalizer_ = FrameNormalizer.from_state(sidecar["normalizer"])
        model.history_ = sidecar.get("history", [])
        model.fingerprint_ = sidecar.get("fingerprint")
        if sidecar.get("val_mae") is not None:
            model.val_mae_ = sidecar["val_mae"]
        if sidecar["frozen"]:
            model.params_.freeze()
        return model
