from .tensor import (
    ShapeError,
    Tensor,
    add,
    concat,
    grad_enabled,
    matmul,
    max_with_scalar,
    mean,
    min_with_scalar,
    mul,
    no_grad,
    reduce_sum,
    relu,
    reshape,
    sigmoid,
    softmax,
    square,
    sub,
    tanh,
    transpose,
    tslice,
)
from .params import FrozenParamsError, ParamSet
from .layers import Attention, Dense, GraphMessagePass, GRUCell, glorot
from .optim import Adam, grad_check

__all__ = [
    "Adam",
    "Attention",
    "Dense",
    "FrozenParamsError",
    "GraphMessagePass",
    "GRUCell",
    "ParamSet",
    "ShapeError",
    "Tensor",
    "add",
    "concat",
    "glorot",
    "grad_check",
    "grad_enabled",
    "matmul",
    "max_with_scalar",
    "mean",
    "min_with_scalar",
    "mul",
    "no_grad",
    "reduce_sum",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "square",
    "sub",
    "tanh",
    "transpose",
    "tslice",
]
