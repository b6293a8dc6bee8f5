"""Hourly multivariate series: variable roles, windowing, CSV and binary IO.

The data model is deliberately rigid: a fixed hourly grid, no missing values,
and every column tagged with a role (water_level, tide, rain, gate, pump) so
downstream code can split a frame into targets, covariates, and controls
without guessing from column names.  Frames are immutable after construction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

ROLES = ("water_level", "tide", "rain", "gate", "pump")
UNITS = ("ft", "in_per_hr", "fraction")
COV_ROLES = ("rain", "tide")
CONTROL_ROLES = ("gate", "pump")

CACHE_MAGIC = b"FMSF"
CACHE_VERSION = 1

TIME_FORMAT = "%Y-%m-%dT%H:%M"


class ValidationError(ValueError):
    """A frame or sample violates a structural invariant."""


class IngestError(ValidationError):
    """CSV ingestion failure, with row/column location in the message."""


@dataclass(frozen=True)
class VariableSpec:
    name: str
    role: str
    station: str
    unit: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValidationError(f"unknown role {self.role!r} for {self.name!r}")
        if self.unit not in UNITS:
            raise ValidationError(f"unknown unit {self.unit!r} for {self.name!r}")
        if self.role in CONTROL_ROLES and self.unit != "fraction":
            raise ValidationError(
                f"{self.name!r}: role {self.role} requires unit 'fraction', got {self.unit!r}")

    def header(self) -> str:
        return f"{self.name}:{self.role}:{self.station}:{self.unit}"

    @classmethod
    def from_header(cls, text: str) -> "VariableSpec":
        parts = text.split(":")
        if len(parts) != 4:
            raise IngestError(f"header column {text!r} is not name:role:station:unit")
        return cls(*parts)


class SeriesFrame:
    """Immutable [T x V] hourly table with per-variable metadata."""

    def __init__(self, specs: Sequence[VariableSpec], start_time: datetime,
                 values: np.ndarray):
        specs = tuple(specs)
        values = np.array(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(specs):
            raise ValidationError(
                f"values must be [T x {len(specs)}], got {values.shape}")
        if not np.isfinite(values).all():
            t, v = np.argwhere(~np.isfinite(values))[0]
            raise ValidationError(
                f"non-finite value at row {t}, column {specs[v].name!r}")
        tides = [s for s in specs if s.role == "tide"]
        if len(tides) != 1:
            raise ValidationError(f"expected exactly one tide variable, got {len(tides)}")
        for j, s in enumerate(specs):
            if s.role in CONTROL_ROLES:
                col = values[:, j]
                bad = np.argwhere((col < 0.0) | (col > 1.0))
                if bad.size:
                    raise ValidationError(
                        f"control {s.name!r} outside [0,1] at row {int(bad[0][0])}")
        self.specs = specs
        self.start_time = start_time
        self.values = values
        self.values.setflags(write=False)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def indices_by_role(self, *roles: str) -> list[int]:
        return [i for i, s in enumerate(self.specs) if s.role in roles]

    @property
    def cov_indices(self) -> list[int]:
        return self.indices_by_role(*COV_ROLES)

    @property
    def control_indices(self) -> list[int]:
        return self.indices_by_role(*CONTROL_ROLES)

    @property
    def water_indices(self) -> list[int]:
        return self.indices_by_role("water_level")

    def column(self, name: str) -> np.ndarray:
        for i, s in enumerate(self.specs):
            if s.name == name:
                return self.values[:, i]
        raise KeyError(name)

    def time_at(self, row: int) -> datetime:
        return self.start_time + timedelta(hours=row)

    def slice_rows(self, start: int, stop: int) -> "SeriesFrame":
        return SeriesFrame(self.specs, self.time_at(start), self.values[start:stop])

    def __eq__(self, other) -> bool:
        return (isinstance(other, SeriesFrame)
                and self.specs == other.specs
                and self.start_time == other.start_time
                and np.array_equal(self.values, other.values))


def concat_frames(frames: Sequence["SeriesFrame"]) -> "SeriesFrame":
    """Stitch frames into one contiguous timeline starting at the first frame.

    Episode seams are benign for training (no future information crosses a
    seam, levels just jump), but callers that need physical continuity should
    keep episodes separate.
    """
    frames = list(frames)
    first = frames[0]
    for f in frames[1:]:
        if f.specs != first.specs:
            raise ValidationError("cannot concat frames with different variables")
    values = np.concatenate([f.values for f in frames], axis=0)
    return SeriesFrame(first.specs, first.start_time, values)


@dataclass(frozen=True)
class WindowConfig:
    w: int = 72
    k: int = 24
    stride: int = 1

    def __post_init__(self):
        if self.w < 1 or self.k < 1 or self.stride < 1:
            raise ValidationError(
                f"window config must be positive, got w={self.w} k={self.k} stride={self.stride}")


@dataclass(frozen=True)
class WindowSample:
    """One forecasting instance anchored at hour ``t`` (the last past row).

    ``past`` holds all variables for the w hours ending at t; the three
    future blocks cover hours t+1 .. t+k.  Covariate and control futures are
    legitimate model inputs (reliably forecast / operator-chosen); the water
    block is the prediction target and must never be fed as input.
    """

    past: np.ndarray
    future_cov: np.ndarray
    future_controls: np.ndarray
    future_water: np.ndarray
    t_index: int


def make_windows(frame: SeriesFrame, cfg: WindowConfig) -> list[WindowSample]:
    """Slice a frame into (past, future covariates/controls/levels) samples."""
    w, k, stride = cfg.w, cfg.k, cfg.stride
    if frame.T < w + k:
        raise ValidationError(
            f"frame has {frame.T} rows; windowing needs at least w+k = {w + k}")
    cov = frame.cov_indices
    ctrl = frame.control_indices
    water = frame.water_indices
    n = (frame.T - w - k) // stride + 1
    samples = []
    for i in range(n):
        start = i * stride
        t = start + w - 1
        fut = frame.values[t + 1:t + 1 + k]
        samples.append(WindowSample(
            past=frame.values[start:start + w],
            future_cov=fut[:, cov],
            future_controls=fut[:, ctrl],
            future_water=fut[:, water],
            t_index=t,
        ))
    return samples


def window_count(T: int, cfg: WindowConfig) -> int:
    if T < cfg.w + cfg.k:
        return 0
    return (T - cfg.w - cfg.k) // cfg.stride + 1


# -- CSV ------------------------------------------------------------------
#
# Header: "time" then one "name:role:station:unit" per column.  Body rows are
# hourly and chronological; floats are written with Python's shortest
# round-trip repr, so write -> read -> write is byte-identical.


def _format_value(v: float) -> str:
    return repr(float(v))


def write_csv(frame: SeriesFrame, path) -> None:
    path = Path(path)
    lines = ["time," + ",".join(s.header() for s in frame.specs)]
    for t in range(frame.T):
        stamp = frame.time_at(t).strftime(TIME_FORMAT)
        lines.append(stamp + "," + ",".join(_format_value(v) for v in frame.values[t]))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path) -> SeriesFrame:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise IngestError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[0] != "time":
        raise IngestError(f"{path}: first column must be 'time', got {header[0]!r}")
    specs = [VariableSpec.from_header(h) for h in header[1:]]
    rows = []
    start_time = None
    prev_time = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(specs) + 1:
            raise IngestError(
                f"{path}:{lineno}: expected {len(specs) + 1} cells, got {len(cells)}")
        try:
            stamp = datetime.strptime(cells[0], TIME_FORMAT)
        except ValueError as exc:
            raise IngestError(f"{path}:{lineno}: bad timestamp {cells[0]!r}") from exc
        if start_time is None:
            start_time = stamp
        elif stamp != prev_time + timedelta(hours=1):
            raise IngestError(
                f"{path}:{lineno}: timestamps must advance by exactly one hour")
        prev_time = stamp
        row = np.empty(len(specs))
        for j, cell in enumerate(cells[1:]):
            if cell.strip() == "":
                raise IngestError(
                    f"{path}:{lineno}: empty cell in column {specs[j].name!r}")
            try:
                val = float(cell)
            except ValueError as exc:
                raise IngestError(
                    f"{path}:{lineno}: bad number {cell!r} in column {specs[j].name!r}"
                ) from exc
            if not np.isfinite(val):
                raise IngestError(
                    f"{path}:{lineno}: non-finite value in column {specs[j].name!r}")
            if specs[j].role in CONTROL_ROLES and not 0.0 <= val <= 1.0:
                raise IngestError(
                    f"{path}:{lineno}: control {specs[j].name!r} value {val} outside [0,1]")
            row[j] = val
        rows.append(row)
    if not rows:
        raise IngestError(f"{path}: no data rows")
    return SeriesFrame(specs, start_time, np.vstack(rows))


# -- binary cache -----------------------------------------------------------


def save_cache(frame: SeriesFrame, path) -> None:
    """Versioned binary frame cache: magic, version, specs, start, raw values."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<I", CACHE_VERSION))
        stamp = frame.start_time.strftime(TIME_FORMAT).encode()
        fh.write(struct.pack("<I", len(stamp)))
        fh.write(stamp)
        fh.write(struct.pack("<II", frame.T, frame.n_vars))
        for s in frame.specs:
            raw = s.header().encode()
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(frame.values, dtype="<f8").tobytes())


def load_cache(path) -> SeriesFrame:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != CACHE_MAGIC:
            raise IngestError(f"{path}: not a frame cache")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CACHE_VERSION:
            raise IngestError(f"{path}: unsupported cache version {version}")
        (slen,) = struct.unpack("<I", fh.read(4))
        start_time = datetime.strptime(fh.read(slen).decode(), TIME_FORMAT)
        T, V = struct.unpack("<II", fh.read(8))
        specs = []
        for _ in range(V):
            (nlen,) = struct.unpack("<I", fh.read(4))
            specs.append(VariableSpec.from_header(fh.read(nlen).decode()))
        values = np.frombuffer(fh.read(8 * T * V), dtype="<f8").reshape(T, V).copy()
    return SeriesFrame(specs, start_time, values)
