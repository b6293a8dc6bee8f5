"""The schedule generator, trained by gradient descent through the frozen
level predictor.

Each training step runs: manager forward -> candidate schedule -> frozen
referee forward -> predicted levels -> band penalties -> backward through
the referee into the manager -> Adam step on the manager only.  A sigmoid
squash keeps every emitted setting inside [0,1] with live gradients at the
bounds.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .. import autodiff as ad
from ..autodiff import Adam, FrozenParamsError, ParamSet, Tensor
from ..scaling import FrameNormalizer
from ..series import (
    SeriesFrame,
    ValidationError,
    VariableSpec,
    WindowConfig,
    WindowSample,
    make_windows,
)
from ..sim.topology import NetworkTopology
from .evaluator import ARTIFACT_VERSION, FloodEvaluator
from .losses import LossWeights, Thresholds, combined_loss, flood_loss, wastage_loss
from .nets import ARCHITECTURES, VariableLayout, build_core, stack_samples


class FloodManager(BaseEstimator):
    """Emits [k x S] gate/pump schedules from the past window and the
    reliably forecastable covariates; never sees future water levels."""

    def __init__(self, evaluator: FloodEvaluator | None = None,
                 architecture: str = "gtn_lite",
                 thresholds: Thresholds | None = None,
                 weights: LossWeights | None = None,
                 flood_margin_ft: float = 0.45, waste_margin_ft: float = 0.15,
                 hidden: int = 24, embed_dim: int = 4,
                 epochs: int = 12, batch_size: int = 32, lr: float = 3e-3,
                 patience: int = 4, stride: int = 2, seed: int = 0):
        self.evaluator = evaluator
        self.architecture = architecture
        self.thresholds = thresholds
        self.weights = weights
        self.flood_margin_ft = flood_margin_ft
        self.waste_margin_ft = waste_margin_ft
        self.hidden = hidden
        self.embed_dim = embed_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.patience = patience
        self.stride = stride
        self.seed = seed

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("manager is not fitted")

    def _require_frozen_evaluator(self) -> FloodEvaluator:
        ev = self.evaluator
        if ev is None or not hasattr(ev, "params_"):
            raise ValidationError("manager needs a fitted evaluator")
        if not ev.is_frozen():
            raise FrozenParamsError(
                "manager training requires a frozen evaluator; call evaluator.freeze()")
        return ev

    def _build(self, specs, topology: NetworkTopology) -> None:
        if self.architecture not in ARCHITECTURES:
            raise ValidationError(
                f"unknown architecture {self.architecture!r}; expected one of {ARCHITECTURES}")
        self.specs_ = tuple(specs)
        self.topology_ = topology
        self.layout_ = VariableLayout.from_specs(self.specs_)
        self.params_ = ParamSet()
        rng = np.random.default_rng(self.seed)
        self.core_ = build_core(self.architecture, self.params_, rng,
                                self.layout_, self.specs_, self.topology_,
                                self.w_, self.k_, self.hidden, self.embed_dim,
                                role="manager")

    def build(self, specs, topology: NetworkTopology, w: int, k: int) -> "FloodManager":
        """Construct the network untrained (see FloodEvaluator.build)."""
        self.w_, self.k_ = w, k
        self._build(specs, topology)
        return self

    # -- forward ---------------------------------------------------------------

    def _norm_blocks(self, past: np.ndarray, cov: np.ndarray):
        past_n = self.normalizer_.transform_columns(past, range(past.shape[-1]))
        cov_n = self.normalizer_.transform_columns(cov, self.layout_.cov)
        return self.layout_.permute_past(past_n), cov_n

    def schedule_tensor(self, past_n: Tensor, cov_n: Tensor) -> Tensor:
        logits, _ = self.core_.forward(past_n, cov_n, None)
        return ad.sigmoid(logits)

    def suggest_schedule(self, past: np.ndarray, future_cov: np.ndarray) -> np.ndarray:
        """Deterministic [k x S] schedule in [0,1] for one decision point."""
        self._check_fitted()
        single = past.ndim == 2
        if single:
            past, future_cov = past[None], future_cov[None]
        if past.shape[-2:] != (self.w_, self.layout_.n_vars):
            raise ValidationError(
                f"past block must end with {(self.w_, self.layout_.n_vars)}, "
                f"got {past.shape}")
        if future_cov.shape[-2:] != (self.k_, self.layout_.n_cov):
            raise ValidationError(
                f"future_cov block must end with {(self.k_, self.layout_.n_cov)}, "
                f"got {future_cov.shape}")
        past_n, cov_n = self._norm_blocks(past, future_cov)
        with ad.no_grad():
            out = self.schedule_tensor(Tensor(past_n), Tensor(cov_n)).data
        return out[0] if single else out

    def predict(self, samples) -> np.ndarray:
        """Schedules for a WindowSample or list of them."""
        single = isinstance(samples, WindowSample)
        if single:
            samples = [samples]
        blocks = stack_samples(samples)
        out = self.suggest_schedule(blocks["past"], blocks["future_cov"])
        return out[0] if single else out

    # -- training -----------------------------------------------------------------

    def _referee_loss(self, ev: FloodEvaluator, past_n, cov_n, schedule: Tensor):
        levels_ft, _ = ev.forward_levels_ft(past_n, cov_n, schedule)
        th = getattr(self, "train_thresholds_", self.thresholds_)
        l1 = flood_loss(levels_ft, th)
        l2 = wastage_loss(levels_ft, th)
        return l1, l2

    def fit(self, train_frame: SeriesFrame, val_frame: SeriesFrame | None = None):
        t0 = time.perf_counter()
        ev = self._require_frozen_evaluator()
        self.w_, self.k_ = ev.w, ev.k
        self._build(train_frame.specs, ev.topology_)
        if self.layout_.order != ev.layout_.order:
            raise ValidationError("manager and evaluator see different variable layouts")
        self.normalizer_ = FrameNormalizer.from_state(ev.normalizer_.state())
        self.thresholds_ = self.thresholds or Thresholds.uniform(self.layout_.n_water)
        self.weights_ = self.weights or LossWeights()
        # train against a band shrunk by safety margins: the referee's
        # prediction error would otherwise let realized levels graze the true
        # thresholds the moment the optimum sits exactly on them.  The flood
        # side gets the wider margin because the referee smooths storm peaks
        self.train_thresholds_ = Thresholds(
            self.thresholds_.flood_ft - self.flood_margin_ft,
            self.thresholds_.waste_ft + self.waste_margin_ft)

        cfg = WindowConfig(self.w_, self.k_, self.stride)
        train = stack_samples(make_windows(train_frame, cfg))
        past_n, cov_n = self._norm_blocks(train["past"], train["future_cov"])
        n = past_n.shape[0]

        val = None
        if val_frame is not None:
            val_samples = make_windows(val_frame, WindowConfig(self.w_, self.k_,
                                                               max(self.stride, 2)))
            vb = stack_samples(val_samples)
            val = self._norm_blocks(vb["past"], vb["future_cov"])
            val_recorded = vb["future_controls"]

        opt = Adam(self.params_, lr=self.lr)
        shuffle = np.random.default_rng(self.seed + 1)
        best = {"val": np.inf, "state": self.params_.state_copy(), "epoch": -1}
        self.history_ = []
        self.steps_ = 0
        stall = 0
        for epoch in range(self.epochs):
            perm = shuffle.permutation(n)
            tot1 = tot2 = 0.0
            for lo in range(0, n, self.batch_size):
                idx = perm[lo:lo + self.batch_size]
                pb, cb = Tensor(past_n[idx]), Tensor(cov_n[idx])
                schedule = self.schedule_tensor(pb, cb)
                l1, l2 = self._referee_loss(ev, pb, cb, schedule)
                loss = combined_loss(l1, l2, self.weights_) * (1.0 / len(idx))
                value = float(loss.data)
                if not np.isfinite(value):
                    raise RuntimeError(
                        f"manager training diverged at epoch {epoch}; "
                        "lower the learning rate or loss weights")
                opt.zero_grad()
                ev.params_.zero_grad()
                loss.backward()
                opt.step()
                self.steps_ += 1
                tot1 += float(l1.data)
                tot2 += float(l2.data)
            record = {"epoch": epoch, "train_flood": tot1 / n, "train_waste": tot2 / n,
                      "train_combined": combined_loss(tot1, tot2, self.weights_) / n}
            if val is not None:
                record.update(self._validate(ev, val, val_recorded))
                if record["val_combined"] < best["val"] - 1e-9:
                    best = {"val": record["val_combined"],
                            "state": self.params_.state_copy(), "epoch": epoch}
                    stall = 0
                else:
                    stall += 1
            self.history_.append(record)
            if val is not None and stall > self.patience:
                break
        if val is not None and best["epoch"] >= 0:
            self.params_.load_state(best["state"])
            self.val_combined_ = best["val"]
        self.train_seconds_ = time.perf_counter() - t0
        return self

    def _validate(self, ev: FloodEvaluator, val_blocks, recorded: np.ndarray) -> dict:
        past_n, cov_n = val_blocks
        n = past_n.shape[0]
        tot1 = tot2 = rec1 = rec2 = 0.0
        with ad.no_grad():
            for lo in range(0, n, self.batch_size):
                hi = lo + self.batch_size
                pb, cb = Tensor(past_n[lo:hi]), Tensor(cov_n[lo:hi])
                schedule = self.schedule_tensor(pb, cb)
                l1, l2 = self._referee_loss(ev, pb, cb, schedule)
                tot1 += float(l1.data)
                tot2 += float(l2.data)
                r1, r2 = self._referee_loss(ev, pb, cb, Tensor(recorded[lo:hi]))
                rec1 += float(r1.data)
                rec2 += float(r2.data)
        return {
            "val_flood": tot1 / n, "val_waste": tot2 / n,
            "val_combined": combined_loss(tot1, tot2, self.weights_) / n,
            "val_recorded_combined": combined_loss(rec1, rec2, self.weights_) / n,
        }

    # -- persistence -----------------------------------------------------------

    def save(self, path) -> None:
        self._check_fitted()
        path = Path(path)
        self.params_.save(path)
        sidecar = {
            "version": ARTIFACT_VERSION,
            "kind": "manager",
            "architecture": self.architecture,
            "w": self.w_, "k": self.k_,
            "hidden": self.hidden, "embed_dim": self.embed_dim,
            "seed": self.seed,
            "normalizer": self.normalizer_.state(),
            "specs": [s.header() for s in self.specs_],
            "topology": self.topology_.to_dict(),
            "thresholds": self.thresholds_.to_dict(),
            "weights": self.weights_.to_dict(),
            "history": getattr(self, "history_", []),
        }
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2))

    @classmethod
    def load(cls, path, evaluator: FloodEvaluator | None = None) -> "FloodManager":
        path = Path(path)
        sidecar = json.loads(Path(str(path) + ".json").read_text())
        if sidecar.get("kind") != "manager":
            raise ValidationError(f"{path}: not a manager artifact")
        model = cls(evaluator=evaluator,
                    architecture=sidecar["architecture"],
                    thresholds=Thresholds.from_dict(sidecar["thresholds"]),
                    weights=LossWeights.from_dict(sidecar["weights"]),
                    hidden=sidecar["hidden"], embed_dim=sidecar["embed_dim"],
                    seed=sidecar["seed"])
        model.w_, model.k_ = sidecar["w"], sidecar["k"]
        specs = tuple(VariableSpec.from_header(h) for h in sidecar["specs"])
        model._build(specs, NetworkTopology.from_dict(sidecar["topology"]))
        loaded = ParamSet.load(path)
        model.params_.load_state(loaded.state_copy())
        model.normalizer_ = FrameNormalizer.from_state(sidecar["normalizer"])
        model.thresholds_ = Thresholds.from_dict(sidecar["thresholds"])
        model.weights_ = LossWeights.from_dict(sidecar["weights"])
        model.history_ = sidecar.get("history", [])
        return model
