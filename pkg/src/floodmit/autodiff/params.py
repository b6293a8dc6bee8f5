"""Named parameter collections with a freeze contract and binary persistence.

A frozen ParamSet still participates in forward/backward passes (gradients
flow *through* its tensors into the rest of the graph) but any attempt to
apply an optimizer update to it raises :class:`FrozenParamsError`.  This is
the guard that keeps a pre-trained referee model immutable while a second
model is trained against it.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterator

import numpy as np

from .tensor import Tensor

MAGIC = b"FMTN"
VERSION = 1


class FrozenParamsError(RuntimeError):
    """Raised when an update is attempted on a frozen ParamSet."""


class ParamSet:
    def __init__(self, frozen: bool = False):
        self._tensors: dict[str, Tensor] = {}
        self.frozen = frozen

    def register(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def tensors(self) -> Iterator[Tensor]:
        return iter(self._tensors.values())

    def items(self):
        return self._tensors.items()

    def n_values(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def freeze(self) -> "ParamSet":
        self.frozen = True
        return self

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def state_copy(self) -> dict[str, np.ndarray]:
        """Snapshot of raw values, for bit-identity checks and rollbacks."""
        return {k: t.data.copy() for k, t in self._tensors.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if self.frozen:
            raise FrozenParamsError("cannot load state into a frozen ParamSet")
        for k, t in self._tensors.items():
            src = state[k]
            if src.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {k!r}: {src.shape} vs {t.data.shape}")
            t.data[...] = src

    # -- binary container: MAGIC, version, count, then per tensor the
    #    utf-8 name, ndim, dims, and raw little-endian float64 payload.

    def save(self, path) -> None:
        path = Path(path)
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", VERSION, len(self._tensors)))
            fh.write(struct.pack("<B", 1 if self.frozen else 0))
            for name, t in self._tensors.items():
                raw = name.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<I", t.ndim))
                fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
                fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ParamSet":
        path = Path(path)
        with open(path, "rb") as fh:
            if fh.read(4) != MAGIC:
                raise ValueError(f"{path}: not a parameter container")
            version, count = struct.unpack("<II", fh.read(8))
            if version != VERSION:
                raise ValueError(f"{path}: unsupported container version {version}")
            (frozen,) = struct.unpack("<B", fh.read(1))
            ps = cls()
            for _ in range(count):
                (nlen,) = struct.unpack("<I", fh.read(4))
                name = fh.read(nlen).decode("utf-8")
                (ndim,) = struct.unpack("<I", fh.read(4))
                shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
                n = int(np.prod(shape)) if ndim else 1
                buf = fh.read(8 * n)
                data = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
                ps.register(name, data)
            ps.frozen = bool(frozen)
        return ps
