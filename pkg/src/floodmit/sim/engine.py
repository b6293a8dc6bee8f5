"""Mass-balance simulation engine.

Levels evolve by explicit hourly volume balance: runoff from a per-cell
linear reservoir, signed reach exchanges, one-way gate flows, and head-
independent pump flows.  Outflows from a cell are scaled down when they
would overdraw its storage, which keeps levels non-negative and makes the
volume accounting exact, so conservation is a testable oracle rather than an
approximation.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Callable, Sequence

import numpy as np

from ..series import SeriesFrame, ValidationError, VariableSpec
from .forcing import ForcingConfig, make_forcing
from .topology import NetworkTopology

DT_SECONDS = 3600.0
FT_PER_INCH = 1.0 / 12.0


class SimulationFault(RuntimeError):
    """Non-finite forcing or state during a step; message names the cell."""


@dataclass(frozen=True)
class SimState:
    levels: np.ndarray        # ft, per internal cell
    runoff_store: np.ndarray  # ft of equivalent depth per internal cell

    def __post_init__(self):
        if not (np.isfinite(self.levels).all() and np.isfinite(self.runoff_store).all()):
            raise SimulationFault("non-finite simulation state")


@dataclass(frozen=True)
class FlowReport:
    """Per-step volume accounting used by the conservation oracle."""

    boundary_net_cfs: float   # net flow from the boundary into internal cells
    rain_volume_ft3: float    # rainfall volume entering the runoff stores
    structure_flows_cfs: np.ndarray


def initial_state(topology: NetworkTopology, level_ft: float | np.ndarray) -> SimState:
    levels = np.broadcast_to(np.asarray(level_ft, dtype=np.float64),
                             (topology.n_cells,)).copy()
    return SimState(levels=np.maximum(levels, 0.0),
                    runoff_store=np.zeros(topology.n_cells))


def gate_flow(opening: float, h_up: float, h_dn: float, coeff: float) -> float:
    """Orifice flow with a one-way flap: zero when downstream head wins."""
    head = h_up - h_dn
    if head <= 0.0:
        return 0.0
    return coeff * opening * np.sqrt(head)


def total_volume(state: SimState, topology: NetworkTopology) -> float:
    """Water volume in cells plus runoff stores (ft^3)."""
    areas = topology.areas
    return float(state.levels @ areas + state.runoff_store @ areas)


def step(state: SimState, topology: NetworkTopology, controls: Sequence[float],
         rain_in_hr: float | np.ndarray, tide_ft: float,
         runoff_coeff: float = 4.0, runoff_lag_hr: float = 6.0,
         return_flows: bool = False):
    """Advance one hour; returns the new state (plus a FlowReport on request)."""
    n = topology.n_cells
    areas = topology.areas
    controls = np.asarray(controls, dtype=np.float64)
    if controls.shape != (topology.n_structures,):
        raise ValidationError(
            f"expected {topology.n_structures} control settings, got {controls.shape}")
    if ((controls < 0.0) | (controls > 1.0)).any():
        raise ValidationError("control settings must lie in [0,1]")
    if not np.isfinite(tide_ft):
        raise SimulationFault(f"non-finite tide at boundary cell {topology.boundary!r}")
    rain = np.broadcast_to(np.asarray(rain_in_hr, dtype=np.float64), (n,)).copy()
    bad = np.argwhere(~np.isfinite(rain))
    if bad.size:
        raise SimulationFault(
            f"non-finite rain at cell {topology.cells[int(bad[0][0])].id!r}")

    # linear-reservoir runoff routing (depths in ft over each cell)
    rain_in_ft = rain * FT_PER_INCH * runoff_coeff
    drain_ft = state.runoff_store / runoff_lag_hr
    new_store = state.runoff_store + rain_in_ft - drain_ft
    runoff_cfs = drain_ft * areas / DT_SECONDS

    levels = state.levels

    def head(idx: int | None) -> float:
        return tide_ft if idx is None else levels[idx]

    # candidate flows, each oriented so q >= 0 moves from `src` to `dst`
    flows: list[tuple[int | None, int | None, float]] = []
    for r in topology.reaches:
        up = None if r.upstream == topology.boundary else topology.cell_index(r.upstream)
        dn = None if r.downstream == topology.boundary else topology.cell_index(r.downstream)
        q = r.conveyance_cfs_per_ft * (head(up) - head(dn))
        flows.append((up, dn, q) if q >= 0 else (dn, up, -q))
    structure_q = np.zeros(topology.n_structures)
    for j, s in enumerate(topology.structures):
        up, dn = topology.structure_cell_index(s)
        if s.kind == "gate":
            q = gate_flow(controls[j], head(up), head(dn), s.capacity)
        else:
            q = s.capacity * controls[j]
        structure_q[j] = q
        flows.append((up, dn, q))

    # cap outflows at the available storage so cells cannot go negative
    outflow_cfs = np.zeros(n)
    for src, _, q in flows:
        if src is not None:
            outflow_cfs[src] += q
    max_out_cfs = levels * areas / DT_SECONDS
    scale = np.ones(n)
    mask = outflow_cfs > 0
    scale[mask] = np.minimum(1.0, max_out_cfs[mask] / outflow_cfs[mask])

    net_cfs = runoff_cfs.copy()
    boundary_net = 0.0
    realized_structure = np.zeros(topology.n_structures)
    for idx, (src, dst, q) in enumerate(flows):
        realized = q if src is None else q * scale[src]
        if src is not None:
            net_cfs[src] -= realized
        else:
            boundary_net += realized
        if dst is not None:
            net_cfs[dst] += realized
        else:
            boundary_net -= realized
        if idx >= len(topology.reaches):
            realized_structure[idx - len(topology.reaches)] = realized

    new_levels = np.maximum(levels + DT_SECONDS * net_cfs / areas, 0.0)
    new_state = SimState(levels=new_levels, runoff_store=new_store)
    if not return_flows:
        return new_state
    report = FlowReport(
        boundary_net_cfs=boundary_net,
        rain_volume_ft3=float(rain_in_ft @ areas),
        structure_flows_cfs=realized_structure,
    )
    return new_state, report


Controller = Callable[[SimState, dict], np.ndarray]
"""Controller protocol: (state, {'tide': [k], 'rain': [k]}) -> settings [S]."""


def frame_specs(topology: NetworkTopology) -> list[VariableSpec]:
    specs = [VariableSpec(f"ws_{cp.lower()}", "water_level", cp, "ft")
             for cp in topology.control_points]
    specs.append(VariableSpec(f"tide_{topology.boundary.lower()}", "tide",
                              topology.boundary, "ft"))
    specs.append(VariableSpec("rain", "rain", "BASIN", "in_per_hr"))
    for s in topology.structures:
        specs.append(VariableSpec(s.id.lower(), s.kind, s.upstream, "fraction"))
    return specs


def simulate(topology: NetworkTopology, forcing: ForcingConfig, controller: Controller,
             T_hours: int, seed: int, forecast_horizon: int = 24,
             start_time: datetime | None = None,
             init: SimState | None = None) -> SeriesFrame:
    """Run the loop for T hours and record the five-role observation table.

    Row t holds the covariates and control settings for hour t together with
    the end-of-hour water levels, so a schedule column aligns causally with
    the levels it produced.  Deterministic given (topology, forcing, seed,
    controller behaviour).
    """
    tide, rain = make_forcing(forcing, T_hours + forecast_horizon, seed)
    rng = np.random.default_rng(seed + 1)
    state = init if init is not None else initial_state(
        topology, forcing.tide_mean_ft + rng.uniform(0.0, 0.8, topology.n_cells))

    cp_idx = topology.control_point_indices
    rows = np.empty((T_hours, len(cp_idx) + 2 + topology.n_structures))
    for t in range(T_hours):
        forecast = {"tide": tide[t + 1:t + 1 + forecast_horizon],
                    "rain": rain[t + 1:t + 1 + forecast_horizon],
                    "tide_now": tide[t], "rain_now": rain[t]}
        controls = np.clip(np.asarray(controller(state, forecast), dtype=np.float64),
                           0.0, 1.0)
        state = step(state, topology, controls, rain[t], tide[t],
                     runoff_coeff=forcing.runoff_coeff,
                     runoff_lag_hr=forcing.runoff_lag_hr)
        rows[t, :len(cp_idx)] = state.levels[cp_idx]
        rows[t, len(cp_idx)] = tide[t]
        rows[t, len(cp_idx) + 1] = rain[t]
        rows[t, len(cp_idx) + 2:] = controls

    return SeriesFrame(frame_specs(topology),
                       start_time or datetime(2021, 1, 1), rows)
