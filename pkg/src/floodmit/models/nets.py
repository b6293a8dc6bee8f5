"""Network cores shared by the level predictor and the schedule generator.

Three architectures with one forward contract:

    forward(past, future_cov, future_controls | None) -> ([B x k x n_out], attention | None)

* ``mlp``      - flatten everything, two tanh layers, linear readout.
* ``rnn``      - GRU encoder over the past window, GRU decoder stepped with
                 the future covariates (and schedule, when given).
* ``gtn_lite`` - a shared per-variable GRU with learned variable embeddings,
                 continued over the future steps for variables whose future
                 is known, then one self-attention layer across variables
                 (its [V x V] weight matrix is exposed for inspection), an
                 aggregation onto network cells, one graph message pass over
                 the cell adjacency, and per-output heads.

All blocks arrive in a canonical variable order (water levels, covariates,
controls) produced by :class:`VariableLayout`, so slicing the future-known
variables is a contiguous-range operation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Dense, GraphMessagePass, GRUCell, Attention, ParamSet, Tensor
from ..series import ValidationError, VariableSpec
from ..sim.topology import NetworkTopology


@dataclass(frozen=True)
class VariableLayout:
    """Frame-column indices grouped by role, defining the canonical order."""

    water: tuple[int, ...]
    cov: tuple[int, ...]
    ctrl: tuple[int, ...]
    headers: tuple[str, ...]

    @classmethod
    def from_specs(cls, specs: tuple[VariableSpec, ...]) -> "VariableLayout":
        water = tuple(i for i, s in enumerate(specs) if s.role == "water_level")
        cov = tuple(i for i, s in enumerate(specs) if s.role in ("rain", "tide"))
        ctrl = tuple(i for i, s in enumerate(specs) if s.role in ("gate", "pump"))
        if not water:
            raise ValidationError("frame has no water-level variables")
        return cls(water, cov, ctrl, tuple(s.header() for s in specs))

    @property
    def order(self) -> tuple[int, ...]:
        return self.water + self.cov + self.ctrl

    @property
    def n_water(self) -> int:
        return len(self.water)

    @property
    def n_cov(self) -> int:
        return len(self.cov)

    @property
    def n_ctrl(self) -> int:
        return len(self.ctrl)

    @property
    def n_vars(self) -> int:
        return len(self.order)

    def permute_past(self, past: np.ndarray) -> np.ndarray:
        """Reorder a [.. x V_frame] past block into canonical order."""
        return past[..., self.order]

    def cell_assignments(self, specs, topology: NetworkTopology) -> list:
        """Cell index per canonical variable; None for basin-wide variables."""
        cells = []
        for idx in self.order:
            s = specs[idx]
            if s.role in ("water_level", "gate", "pump"):
                try:
                    cells.append(topology.cell_index(s.station))
                except KeyError:
                    cells.append(None)
            else:
                cells.append(None)
        return cells

    def to_dict(self) -> dict:
        return {"water": list(self.water), "cov": list(self.cov),
                "ctrl": list(self.ctrl), "headers": list(self.headers)}

    @classmethod
    def from_dict(cls, d: dict) -> "VariableLayout":
        return cls(tuple(d["water"]), tuple(d["cov"]), tuple(d["ctrl"]),
                   tuple(d["headers"]))


def stack_samples(samples) -> dict[str, np.ndarray]:
    """Stack WindowSamples into batched blocks."""
    return {
        "past": np.stack([s.past for s in samples]),
        "future_cov": np.stack([s.future_cov for s in samples]),
        "future_controls": np.stack([s.future_controls for s in samples]),
        "future_water": np.stack([s.future_water for s in samples]),
    }


def _tile_rows(t: Tensor, batch: int) -> Tensor:
    """[V x E] -> [batch*V x E], differentiable w.r.t. ``t``."""
    v, e = t.shape
    spread = ad.reshape(t, (1, v, e)) + Tensor(np.zeros((batch, v, e)))
    return ad.reshape(spread, (batch * v, e))


class MlpCore:
    def __init__(self, params: ParamSet, rng: np.random.Generator,
                 layout: VariableLayout, w: int, k: int, n_out: int,
                 hidden: int, with_controls: bool):
        self.layout = layout
        self.w, self.k, self.n_out = w, k, n_out
        self.with_controls = with_controls
        n_in = w * layout.n_vars + k * layout.n_cov
        if with_controls:
            n_in += k * layout.n_ctrl
        self.l1 = Dense(params, "mlp.l1", n_in, hidden, rng)
        self.l2 = Dense(params, "mlp.l2", hidden, hidden, rng)
        self.out = Dense(params, "mlp.out", hidden, k * n_out, rng)

    def forward(self, past: Tensor, cov: Tensor, ctrl: Tensor | None):
        b = past.shape[0]
        parts = [ad.reshape(past, (b, -1)), ad.reshape(cov, (b, -1))]
        if self.with_controls:
            parts.append(ad.reshape(ctrl, (b, -1)))
        x = ad.concat(parts, axis=1)
        h = ad.tanh(self.l1(x))
        h = ad.tanh(self.l2(h))
        return ad.reshape(self.out(h), (b, self.k, self.n_out)), None


class RnnCore:
    def __init__(self, params: ParamSet, rng: np.random.Generator,
                 layout: VariableLayout, w: int, k: int, n_out: int,
                 hidden: int, with_controls: bool):
        self.layout = layout
        self.w, self.k, self.n_out = w, k, n_out
        self.with_controls = with_controls
        dec_in = layout.n_cov + (layout.n_ctrl if with_controls else 0)
        self.encoder = GRUCell(params, "rnn.enc", layout.n_vars, hidden, rng)
        self.decoder = GRUCell(params, "rnn.dec", dec_in, hidden, rng)
        self.head = Dense(params, "rnn.head", hidden, n_out, rng)

    def forward(self, past: Tensor, cov: Tensor, ctrl: Tensor | None):
        b = past.shape[0]
        h = self.encoder.init_state(b)
        for t in range(self.w):
            h = self.encoder(past[:, t, :], h)
        outs = []
        for t in range(self.k):
            x = cov[:, t, :]
            if self.with_controls:
                x = ad.concat([x, ctrl[:, t, :]], axis=1)
            h = self.decoder(x, h)
            outs.append(ad.reshape(self.head(h), (b, 1, self.n_out)))
        return ad.concat(outs, axis=1), None


class GtnCore:
    def __init__(self, params: ParamSet, rng: np.random.Generator,
                 layout: VariableLayout, w: int, k: int, hidden: int,
                 embed_dim: int, adjacency: np.ndarray, cell_of_var: list,
                 out_cells: list[int], with_controls: bool):
        self.layout = layout
        self.w, self.k = w, k
        self.hidden = hidden
        self.with_controls = with_controls
        self.n_fut = layout.n_cov + (layout.n_ctrl if with_controls else 0)
        self.out_cells = list(out_cells)
        v = layout.n_vars
        self.embed = params.register("gtn.embed",
                                     rng.normal(0.0, 0.3, (v, embed_dim)))
        self.gru = GRUCell(params, "gtn.gru", 1 + embed_dim, hidden, rng)
        self.attention = Attention(params, "gtn.attn", hidden, rng)
        n_cells = adjacency.shape[0]
        self.assign = Tensor(self._assignment_matrix(cell_of_var, n_cells))
        self.mp = GraphMessagePass(params, "gtn.mp", adjacency, hidden, rng)
        self.heads = [Dense(params, f"gtn.head{i}", hidden, k, rng)
                      for i in range(len(out_cells))]

    @staticmethod
    def _assignment_matrix(cell_of_var: list, n_cells: int) -> np.ndarray:
        m = np.zeros((n_cells, len(cell_of_var)))
        for v, c in enumerate(cell_of_var):
            if c is not None:
                m[c, v] = 1.0
        counts = m.sum(axis=1, keepdims=True)
        counts[counts == 0] = 1.0
        return m / counts

    def forward(self, past: Tensor, cov: Tensor, ctrl: Tensor | None):
        b = past.shape[0]
        v = self.layout.n_vars
        emb_all = _tile_rows(self.embed, b)

        h = Tensor(np.zeros((b * v, self.hidden)))
        for t in range(self.w):
            xt = ad.reshape(past[:, t, :], (b * v, 1))
            h = self.gru(ad.concat([xt, emb_all], axis=1), h)
        h_grid = ad.reshape(h, (b, v, self.hidden))

        # continue the recurrence for variables with known futures; those sit
        # in a contiguous canonical range starting right after the water vars
        f = self.n_fut
        lo = self.layout.n_water
        fut = cov if not self.with_controls else ad.concat([cov, ctrl], axis=2)
        h_fut = ad.reshape(h_grid[:, lo:lo + f, :], (b * f, self.hidden))
        emb_fut = _tile_rows(self.embed[lo:lo + f, :], b)
        for t in range(self.k):
            xt = ad.reshape(fut[:, t, :], (b * f, 1))
            h_fut = self.gru(ad.concat([xt, emb_fut], axis=1), h_fut)
        h_fut = ad.reshape(h_fut, (b, f, self.hidden))

        parts = [h_grid[:, :lo, :], h_fut]
        if lo + f < v:
            parts.append(h_grid[:, lo + f:, :])
        states = ad.concat(parts, axis=1)

        att_out, att_w = self.attention(states)
        feats = states + att_out
        cells = ad.matmul(self.assign, feats)
        cells = self.mp(cells)
        outs = [ad.reshape(head(cells[:, c, :]), (b, self.k, 1))
                for head, c in zip(self.heads, self.out_cells)]
        return ad.concat(outs, axis=2), att_w


ARCHITECTURES = ("mlp", "rnn", "gtn_lite")


def build_core(architecture: str, params: ParamSet, rng: np.random.Generator,
               layout: VariableLayout, specs, topology: NetworkTopology,
               w: int, k: int, hidden: int, embed_dim: int,
               role: str) -> object:
    """Instantiate a core for 'evaluator' (predicts levels, consumes the
    schedule) or 'manager' (emits the schedule, covariates only)."""
    if role not in ("evaluator", "manager"):
        raise ValidationError(f"unknown role {role!r}")
    with_controls = role == "evaluator"
    n_out = layout.n_water if with_controls else layout.n_ctrl

    if architecture == "mlp":
        return MlpCore(params, rng, layout, w, k, n_out,
                       hidden=max(hidden * 4, 64), with_controls=with_controls)
    if architecture == "rnn":
        return RnnCore(params, rng, layout, w, k, n_out, hidden=hidden * 2,
                       with_controls=with_controls)
    if architecture == "gtn_lite":
        cell_of_var = layout.cell_assignments(specs, topology)
        if with_controls:
            out_cells = [cell_of_var[i] for i in range(layout.n_water)]
        else:
            lo = layout.n_water + layout.n_cov
            out_cells = [cell_of_var[lo + i] for i in range(layout.n_ctrl)]
        if any(c is None for c in out_cells):
            raise ValidationError("every output variable must map to a topology cell")
        return GtnCore(params, rng, layout, w, k, hidden, embed_dim,
                       topology.adjacency(), cell_of_var, out_cells,
                       with_controls=with_controls)
    raise ValidationError(
        f"unknown architecture {architecture!r}; expected one of {ARCHITECTURES}")
