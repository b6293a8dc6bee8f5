"""Neural building blocks on top of the tensor engine.

Each layer registers its weights into a caller-supplied :class:`ParamSet`
under a name prefix, so a whole model's parameters live in one container
that can be saved, frozen, or handed to an optimizer as a unit.
Initialization is uniform Glorot driven by a numpy ``Generator``, which makes
model construction reproducible from a single seed.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .params import ParamSet
from .tensor import Tensor


def glorot(rng: np.random.Generator, n_in: int, n_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    shape = (n_in, n_out) if shape is None else shape
    return rng.uniform(-limit, limit, size=shape)


class Dense:
    """Affine map on the last axis: x @ W + b."""

    def __init__(self, params: ParamSet, name: str, n_in: int, n_out: int,
                 rng: np.random.Generator):
        self.n_in = n_in
        self.n_out = n_out
        self.W = params.register(f"{name}.W", glorot(rng, n_in, n_out))
        self.b = params.register(f"{name}.b", np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.n_in:
            raise T.ShapeError(f"dense expects last dim {self.n_in}, got {x.shape}")
        return T.matmul(x, self.W) + self.b


class GRUCell:
    """Gated recurrent cell; hidden state stays in (-1, 1) by construction."""

    def __init__(self, params: ParamSet, name: str, n_in: int, n_hidden: int,
                 rng: np.random.Generator):
        self.n_in = n_in
        self.n_hidden = n_hidden
        self.W = params.register(f"{name}.W", glorot(rng, n_in, 3 * n_hidden,
                                                     (n_in, 3 * n_hidden)))
        self.U = params.register(f"{name}.U", glorot(rng, n_hidden, 3 * n_hidden,
                                                     (n_hidden, 3 * n_hidden)))
        self.b = params.register(f"{name}.b", np.zeros(3 * n_hidden))

    def init_state(self, batch: int) -> Tensor:
        return Tensor(np.zeros((batch, self.n_hidden)))

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        if x.shape[-1] != self.n_in or h.shape[-1] != self.n_hidden:
            raise T.ShapeError(
                f"gru expects input {self.n_in} / hidden {self.n_hidden}, "
                f"got {x.shape} and {h.shape}")
        n = self.n_hidden
        xw = T.matmul(x, self.W) + self.b
        hu = T.matmul(h, self.U)
        z = T.sigmoid(xw[..., 0:n] + hu[..., 0:n])
        r = T.sigmoid(xw[..., n:2 * n] + hu[..., n:2 * n])
        cand = T.tanh(xw[..., 2 * n:3 * n] + T.mul(r, hu[..., 2 * n:3 * n]))
        one = Tensor(1.0)
        return T.mul(one - z, h) + T.mul(z, cand)


class Attention:
    """Single-head scaled dot-product self-attention over the second-to-last axis.

    Returns (output, weights); weight rows are a softmax, so they sum to 1.
    """

    def __init__(self, params: ParamSet, name: str, d_model: int,
                 rng: np.random.Generator):
        self.d_model = d_model
        self.Wq = params.register(f"{name}.Wq", glorot(rng, d_model, d_model))
        self.Wk = params.register(f"{name}.Wk", glorot(rng, d_model, d_model))
        self.Wv = params.register(f"{name}.Wv", glorot(rng, d_model, d_model))

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor]:
        if x.shape[-1] != self.d_model:
            raise T.ShapeError(f"attention expects d_model {self.d_model}, got {x.shape}")
        q = T.matmul(x, self.Wq)
        k = T.matmul(x, self.Wk)
        v = T.matmul(x, self.Wv)
        scores = T.matmul(q, T.transpose(k)) * (1.0 / np.sqrt(self.d_model))
        weights = T.softmax(scores, axis=-1)
        return T.matmul(weights, v), weights


class GraphMessagePass:
    """One round of neighbor aggregation over a fixed adjacency matrix.

    h'_i = tanh(h_i W_self + (sum_j A_ij h_j) W_nbr + b).  With a zero
    adjacency this reduces to a per-node dense transform.
    """

    def __init__(self, params: ParamSet, name: str, adjacency: np.ndarray,
                 d_model: int, rng: np.random.Generator):
        adjacency = np.asarray(adjacency, dtype=np.float64)
        if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
            raise T.ShapeError(f"adjacency must be square, got {adjacency.shape}")
        self.n_nodes = adjacency.shape[0]
        self.adjacency = Tensor(adjacency)
        self.W_self = params.register(f"{name}.W_self", glorot(rng, d_model, d_model))
        self.W_nbr = params.register(f"{name}.W_nbr", glorot(rng, d_model, d_model))
        self.b = params.register(f"{name}.b", np.zeros(d_model))

    def __call__(self, h: Tensor) -> Tensor:
        if h.shape[-2] != self.n_nodes:
            raise T.ShapeError(
                f"message pass expects {self.n_nodes} nodes, got {h.shape}")
        msgs = T.matmul(self.adjacency, h)
        return T.tanh(T.matmul(h, self.W_self) + T.matmul(msgs, self.W_nbr) + self.b)
