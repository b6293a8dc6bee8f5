"""Model inspection: variable-to-variable attention maps and local linear
attributions of input cells to predicted levels.

The attribution method is a continuous local surrogate: perturb every input
cell with Gaussian noise scaled to its training spread, weight perturbations
by an exponential proximity kernel, and fit a weighted ridge regression to
the model's scalar output.  The surrogate's R^2 is reported and findings are
only asserted when the fit is faithful (R^2 >= 0.6); one perturbation design
is shared across all outputs of a sample, so a full heatmap bundle costs one
batched model sweep plus cheap per-output solves.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .models.evaluator import FloodEvaluator
from .models.nets import stack_samples
from .series import ValidationError, WindowSample

R2_FIDELITY_GATE = 0.6


@dataclass(frozen=True)
class AttentionMap:
    scores: np.ndarray          # [V x V], rows sum to 1
    labels: tuple[str, ...]

    def __post_init__(self):
        if self.scores.ndim != 2 or self.scores.shape[0] != self.scores.shape[1]:
            raise ValidationError(f"attention map must be square, got {self.scores.shape}")
        if (self.scores < 0).any() or not np.allclose(self.scores.sum(axis=1), 1.0,
                                                      atol=1e-6):
            raise ValidationError("attention rows must be nonnegative and sum to 1")

    def incoming(self, receiver: str, sender: str) -> float:
        i = self.labels.index(receiver)
        j = self.labels.index(sender)
        return float(self.scores[i, j])


def attention_map(evaluator: FloodEvaluator, samples) -> AttentionMap:
    """Mean attention over samples; requires an attention-bearing model."""
    scores, labels = evaluator.attention_matrix(
        samples if isinstance(samples, list) else [samples])
    return AttentionMap(scores, tuple(labels))


@dataclass
class AttributionHeatmap:
    """Per-cell contributions to one scalar output of the model."""

    past: np.ndarray             # [w x V] in frame column order
    future_cov: np.ndarray       # [k x C]
    future_controls: np.ndarray  # [k x S]
    r_squared: float
    output_point: int
    output_step: int | None      # None marks a horizon-mean output
    intercept: float

    @property
    def faithful(self) -> bool:
        return self.r_squared >= R2_FIDELITY_GATE

    def to_dict(self) -> dict:
        return {
            "past": self.past.tolist(),
            "future_cov": self.future_cov.tolist(),
            "future_controls": self.future_controls.tolist(),
            "r_squared": self.r_squared,
            "output_point": self.output_point,
            "output_step": self.output_step,
            "intercept": self.intercept,
            "faithful": self.faithful,
        }


@dataclass
class PerturbationDesign:
    deltas: np.ndarray       # [n x F], centered perturbations
    weights: np.ndarray      # [n] proximity kernel
    outputs: np.ndarray      # [n x k x N] model levels at the perturbed inputs
    base: WindowSample
    shapes: tuple


def _flatten_sample(sample: WindowSample) -> tuple[np.ndarray, tuple]:
    shapes = (sample.past.shape, sample.future_cov.shape,
              sample.future_controls.shape)
    flat = np.concatenate([sample.past.reshape(-1), sample.future_cov.reshape(-1),
                           sample.future_controls.reshape(-1)])
    return flat, shapes


def _unflatten(flat: np.ndarray, shapes: tuple) -> tuple[np.ndarray, ...]:
    sizes = [int(np.prod(s)) for s in shapes]
    parts = np.split(flat, np.cumsum(sizes)[:-1], axis=-1)
    return tuple(p.reshape(flat.shape[:-1] + s) for p, s in zip(parts, shapes))


def _cell_sigmas(evaluator: FloodEvaluator, shapes: tuple,
                 sigma_scale: float) -> np.ndarray:
    scales = evaluator.normalizer_.scales_
    per_block = [
        np.tile(scales, (shapes[0][0], 1)),
        np.tile(scales[list(evaluator.layout_.cov)], (shapes[1][0], 1)),
        np.tile(scales[list(evaluator.layout_.ctrl)], (shapes[2][0], 1)),
    ]
    return sigma_scale * np.concatenate([b.reshape(-1) for b in per_block])


def perturbation_design(evaluator: FloodEvaluator, sample: WindowSample,
                        n_perturb: int | None = None, kernel_width: float | None = None,
                        seed: int = 0, sigma_scale: float = 0.3) -> PerturbationDesign:
    """Sample the local neighborhood once and sweep the model over it."""
    x0, shapes = _flatten_sample(sample)
    n_features = x0.size
    if n_perturb is None:
        n_perturb = 10 * n_features
    if kernel_width is None:
        kernel_width = 0.75 * np.sqrt(n_features)
    rng = np.random.default_rng(seed)
    sigmas = _cell_sigmas(evaluator, shapes, sigma_scale)
    deltas = rng.normal(0.0, 1.0, (n_perturb, n_features)) * sigmas
    safe = np.where(sigmas > 0, sigmas, 1.0)
    dist = np.linalg.norm(deltas / safe, axis=1)
    weights = np.exp(-(dist ** 2) / kernel_width ** 2)
    past, cov, ctrl = _unflatten(x0 + deltas, shapes)
    outputs = evaluator.predict_blocks(past, cov, ctrl)
    return PerturbationDesign(deltas=deltas, weights=weights, outputs=outputs,
                              base=sample, shapes=shapes)


def _weighted_ridge(deltas: np.ndarray, y: np.ndarray, weights: np.ndarray,
                    ridge: float) -> tuple[np.ndarray, float, float]:
    """Fit y ~ intercept + deltas @ beta with proximity weights; returns
    (beta, intercept, weighted R^2).  Bumps the ridge on singular systems."""
    w = weights / weights.sum()
    y_mean = float(w @ y)
    x_mean = w @ deltas
    xc = deltas - x_mean
    yc = y - y_mean
    gram = (xc * w[:, None]).T @ xc
    rhs = (xc * w[:, None]).T @ yc
    lam = ridge
    for _ in range(8):
        try:
            beta = np.linalg.solve(gram + lam * np.eye(gram.shape[0]), rhs)
            break
        except np.linalg.LinAlgError:
            lam = lam * 10.0 if lam > 0 else 1e-8
            warnings.warn(f"singular attribution regression; ridge raised to {lam}")
    else:
        raise RuntimeError("attribution regression failed to stabilize")
    resid = yc - xc @ beta
    ss_res = float(w @ (resid ** 2))
    ss_tot = float(w @ (yc ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    intercept = y_mean - float(x_mean @ beta)
    return beta, intercept, r2


def lime_attributions(evaluator: FloodEvaluator, sample: WindowSample,
                      output_point: int, output_step: int | None = None,
                      n_perturb: int | None = None, kernel_width: float | None = None,
                      seed: int = 0, ridge: float = 1e-3, sigma_scale: float = 0.3,
                      design: PerturbationDesign | None = None) -> AttributionHeatmap:
    """Local attribution of every input cell to one predicted level.

    ``output_step=None`` attributes the horizon-mean level at the point;
    passing a precomputed ``design`` reuses the model sweep across outputs.
    """
    if design is None:
        design = perturbation_design(evaluator, sample, n_perturb, kernel_width,
                                     seed, sigma_scale)
    if output_step is None:
        y = design.outputs[:, :, output_point].mean(axis=1)
    else:
        y = design.outputs[:, output_step, output_point]
    beta, intercept, r2 = _weighted_ridge(design.deltas, y, design.weights, ridge)
    past, cov, ctrl = _unflatten(beta, design.shapes)
    return AttributionHeatmap(past=past, future_cov=cov, future_controls=ctrl,
                              r_squared=r2, output_point=output_point,
                              output_step=output_step, intercept=intercept)


# -- measurable versions of the qualitative findings --------------------------


def future_cov_mass_ratio(h: AttributionHeatmap, k: int, cov_columns) -> float:
    """Mass on the future covariate block vs the strongest equally sized
    slice of the same covariates' history (k hours x C columns each)."""
    future_mass = np.abs(h.future_cov).sum()
    cols = list(cov_columns)
    w = h.past.shape[0]
    slices = []
    for hi in range(w, 0, -k):
        lo = max(0, hi - k)
        if hi - lo == k:
            slices.append(np.abs(h.past[lo:hi, :][:, cols]).sum())
    strongest = max(slices) if slices else 0.0
    return float(future_mass / max(strongest, 1e-12))


def gate_low_tide_concentration(h: AttributionHeatmap,
                                future_tide: np.ndarray) -> float:
    """Mean |gate/pump attribution| in below-median forecast tide hours over
    the mean in the remaining hours."""
    ctrl_mass = np.abs(h.future_controls).mean(axis=1)
    low = future_tide < np.median(future_tide)
    if not low.any() or low.all():
        return 1.0
    return float(ctrl_mass[low].mean() / max(ctrl_mass[~low].mean(), 1e-12))


def lag_decay_ratio(h: AttributionHeatmap, k: int) -> float:
    """Mean |attribution| over the most recent k past hours over the mean in
    the k hours furthest back."""
    recent = np.abs(h.past[-k:]).mean()
    distant = np.abs(h.past[:k]).mean()
    return float(recent / max(distant, 1e-12))


def tide_rain_attention_gap(att: AttentionMap, receiver: str, tide_label: str,
                            rain_label: str) -> float:
    return att.incoming(receiver, tide_label) - att.incoming(receiver, rain_label)


# -- regime reports -----------------------------------------------------------

REGIMES = ("low_tide", "high_tide", "rising", "falling")


def classify_regime(sample: WindowSample, tide_col: int,
                    q_low: float, q_high: float) -> str:
    tide_now = sample.past[-1, tide_col]
    back = min(4, sample.past.shape[0])
    slope = sample.past[-1, tide_col] - sample.past[-back, tide_col]
    if tide_now <= q_low:
        return "low_tide"
    if tide_now >= q_high:
        return "high_tide"
    return "rising" if slope > 0 else "falling"


def pick_regime_samples(samples, tide_col: int) -> dict[str, WindowSample]:
    """One representative decision point per tidal regime."""
    tides = np.array([s.past[-1, tide_col] for s in samples])
    q_low, q_high = np.quantile(tides, [0.25, 0.75])
    chosen: dict[str, WindowSample] = {}
    for s in samples:
        regime = classify_regime(s, tide_col, q_low, q_high)
        if regime not in chosen:
            chosen[regime] = s
        if len(chosen) == len(REGIMES):
            break
    return chosen


def explain_report(evaluator: FloodEvaluator, samples, out_dir,
                   n_perturb: int | None = None, seed: int = 0,
                   make_plots: bool = True) -> dict:
    """Per-regime attention and attribution bundle (JSON + SVG heatmaps)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tide_col = evaluator.layout_.cov[
        [evaluator.specs_[i].role for i in evaluator.layout_.cov].index("tide")]
    regimes = pick_regime_samples(samples, tide_col)
    k = evaluator.k

    bundle: dict = {"regimes": {}, "labels": {
        "variables": [s.name for s in evaluator.specs_],
        "cov": [evaluator.specs_[i].name for i in evaluator.layout_.cov],
        "controls": [evaluator.specs_[i].name for i in evaluator.layout_.ctrl],
        "points": [evaluator.specs_[i].name for i in evaluator.layout_.water],
    }}
    for regime, sample in regimes.items():
        design = perturbation_design(evaluator, sample, n_perturb=n_perturb,
                                     seed=seed)
        heatmaps = [lime_attributions(evaluator, sample, output_point=p,
                                      design=design)
                    for p in range(evaluator.layout_.n_water)]
        entry = {
            "tide_now_ft": float(sample.past[-1, tide_col]),
            "future_tide_ft": sample.future_cov[:, 0].tolist(),
            "heatmaps": [h.to_dict() for h in heatmaps],
            "summary": {
                "future_cov_mass_ratio": [
                    future_cov_mass_ratio(h, k, evaluator.layout_.cov)
                    for h in heatmaps],
                "gate_low_tide_concentration": [
                    gate_low_tide_concentration(h, sample.future_cov[:, 0])
                    for h in heatmaps],
                "lag_decay_ratio": [lag_decay_ratio(h, k) for h in heatmaps],
                "r_squared": [h.r_squared for h in heatmaps],
            },
        }
        try:
            att = attention_map(evaluator, [sample])
            entry["attention"] = {"scores": att.scores.tolist(),
                                  "labels": list(att.labels)}
        except ValidationError:
            entry["attention"] = None
        bundle["regimes"][regime] = entry
        if make_plots:
            _plot_regime(evaluator, regime, sample, heatmaps, out_dir)

    (out_dir / "explain.json").write_text(json.dumps(bundle, indent=2))
    return bundle


def _plot_regime(evaluator, regime, sample, heatmaps, out_dir: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    w, v = sample.past.shape
    k = sample.future_cov.shape[0]
    names = [s.name for s in evaluator.specs_]
    fig, axes = plt.subplots(len(heatmaps), 1,
                             figsize=(9, 2.6 * len(heatmaps)), squeeze=False)
    for row, h in enumerate(heatmaps):
        grid = np.full((v, w + k), np.nan)
        grid[:, :w] = h.past.T
        for c, col in enumerate(evaluator.layout_.cov):
            grid[col, w:] = h.future_cov[:, c]
        for c, col in enumerate(evaluator.layout_.ctrl):
            grid[col, w:] = h.future_controls[:, c]
        ax = axes[row, 0]
        vmax = np.nanmax(np.abs(grid)) or 1.0
        ax.imshow(grid, aspect="auto", cmap="RdBu_r", vmin=-vmax, vmax=vmax)
        ax.axvline(w - 0.5, color="black", linewidth=0.8)
        ax.set_yticks(range(v))
        ax.set_yticklabels(names, fontsize=6)
        point = evaluator.specs_[evaluator.layout_.water[h.output_point]].name
        ax.set_title(f"{regime}: contributions to {point} "
                     f"(R^2={h.r_squared:.2f})", fontsize=8)
    axes[-1, 0].set_xlabel(f"hour (0..{w - 1} past, {w}..{w + k - 1} forecast)")
    fig.tight_layout()
    fig.savefig(out_dir / f"attributions_{regime}.svg")
    plt.close(fig)
