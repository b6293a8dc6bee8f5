"""Network description for the synthetic coastal river system.

The default layout mirrors a tidally influenced urban watershed: three branch
canals, each drained into a shared trunk canal through a gated structure with
an auxiliary pump, and the trunk exchanging freely with the ocean boundary.
All four internal cells are control points whose levels the system tries to
keep inside the [wastage, flood] band.  Coefficients are synthetic: the real
basin's geometry is not public, so they are sized to produce occasional
flooding under reactive rule-based control.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..series import ValidationError


@dataclass(frozen=True)
class Cell:
    id: str
    surface_area_ft2: float

    def __post_init__(self):
        if self.surface_area_ft2 <= 0:
            raise ValidationError(f"cell {self.id!r}: area must be positive")


@dataclass(frozen=True)
class Reach:
    """Ungated linear exchange: Q = conveyance * (h_up - h_dn), signed."""

    upstream: str
    downstream: str
    conveyance_cfs_per_ft: float


@dataclass(frozen=True)
class Structure:
    """Controllable gate (orifice with one-way flap) or pump."""

    id: str
    kind: str
    upstream: str
    downstream: str
    capacity: float  # gate: cfs per unit opening per sqrt(ft); pump: cfs per unit setting

    def __post_init__(self):
        if self.kind not in ("gate", "pump"):
            raise ValidationError(f"structure {self.id!r}: kind must be gate or pump")
        if self.capacity <= 0:
            raise ValidationError(f"structure {self.id!r}: capacity must be positive")


@dataclass(frozen=True)
class NetworkTopology:
    cells: tuple[Cell, ...]
    reaches: tuple[Reach, ...]
    structures: tuple[Structure, ...]
    boundary: str
    control_points: tuple[str, ...]

    def __post_init__(self):
        ids = [c.id for c in self.cells]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate cell ids")
        if self.boundary in ids:
            raise ValidationError("boundary must not be an internal cell")
        known = set(ids) | {self.boundary}
        for r in self.reaches:
            if r.upstream not in known or r.downstream not in known:
                raise ValidationError(f"reach {r.upstream}->{r.downstream}: unknown cell")
        for s in self.structures:
            if s.upstream not in known or s.downstream not in known:
                raise ValidationError(f"structure {s.id!r}: unknown cell")
        for cp in self.control_points:
            if cp not in ids:
                raise ValidationError(f"control point {cp!r} is not an internal cell")
        self._check_connected(known)

    def _check_connected(self, known: set[str]) -> None:
        adj: dict[str, set[str]] = {n: set() for n in known}
        for r in self.reaches:
            adj[r.upstream].add(r.downstream)
            adj[r.downstream].add(r.upstream)
        for s in self.structures:
            adj[s.upstream].add(s.downstream)
            adj[s.downstream].add(s.upstream)
        seen = set()
        stack = [next(iter(known))]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(adj[n] - seen)
        if seen != known:
            raise ValidationError(f"network is not connected: unreachable {sorted(known - seen)}")

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_structures(self) -> int:
        return len(self.structures)

    def cell_index(self, cell_id: str) -> int:
        for i, c in enumerate(self.cells):
            if c.id == cell_id:
                return i
        raise KeyError(cell_id)

    @property
    def areas(self) -> np.ndarray:
        return np.array([c.surface_area_ft2 for c in self.cells])

    @property
    def control_point_indices(self) -> list[int]:
        return [self.cell_index(cp) for cp in self.control_points]

    def structure_cell_index(self, structure: Structure) -> tuple[int | None, int | None]:
        """(upstream idx, downstream idx); None marks the boundary side."""
        up = None if structure.upstream == self.boundary else self.cell_index(structure.upstream)
        dn = None if structure.downstream == self.boundary else self.cell_index(structure.downstream)
        return up, dn

    def adjacency(self) -> np.ndarray:
        """Symmetric 0/1 adjacency over internal cells (reaches + structures)."""
        n = self.n_cells
        A = np.zeros((n, n))
        ids = {c.id: i for i, c in enumerate(self.cells)}

        def link(a: str, b: str):
            if a in ids and b in ids:
                A[ids[a], ids[b]] = 1.0
                A[ids[b], ids[a]] = 1.0

        for r in self.reaches:
            link(r.upstream, r.downstream)
        for s in self.structures:
            link(s.upstream, s.downstream)
        return A

    def to_dict(self) -> dict:
        return {
            "cells": [{"id": c.id, "surface_area_ft2": c.surface_area_ft2} for c in self.cells],
            "reaches": [{"upstream": r.upstream, "downstream": r.downstream,
                         "conveyance_cfs_per_ft": r.conveyance_cfs_per_ft} for r in self.reaches],
            "structures": [{"id": s.id, "kind": s.kind, "upstream": s.upstream,
                            "downstream": s.downstream, "capacity": s.capacity}
                           for s in self.structures],
            "boundary": self.boundary,
            "control_points": list(self.control_points),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkTopology":
        return cls(
            cells=tuple(Cell(**c) for c in d["cells"]),
            reaches=tuple(Reach(**r) for r in d["reaches"]),
            structures=tuple(Structure(**s) for s in d["structures"]),
            boundary=d["boundary"],
            control_points=tuple(d["control_points"]),
        )


def default_topology() -> NetworkTopology:
    """Three gated branch canals feeding a tidal trunk canal."""
    return NetworkTopology(
        cells=(
            Cell("S1", 2.0e7),
            Cell("S25A", 1.6e7),
            Cell("S25B", 1.8e7),
            Cell("S26", 3.0e7),
        ),
        reaches=(
            # weak ungated seepage keeps the network relaxing toward the tide
            Reach("S1", "S26", 15.0),
            Reach("S25A", "S26", 13.0),
            Reach("S25B", "S26", 14.0),
            # trunk-to-ocean exchange dominates the tidal response
            Reach("S26", "S4", 2800.0),
        ),
        structures=(
            Structure("S1_gate", "gate", "S1", "S26", 420.0),
            Structure("S1_pump", "pump", "S1", "S26", 180.0),
            Structure("S25A_gate", "gate", "S25A", "S26", 380.0),
            Structure("S25A_pump", "pump", "S25A", "S26", 150.0),
            Structure("S25B_gate", "gate", "S25B", "S26", 400.0),
            Structure("S25B_pump", "pump", "S25B", "S26", 160.0),
        ),
        boundary="S4",
        control_points=("S1", "S25A", "S25B", "S26"),
    )
