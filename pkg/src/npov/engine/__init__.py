from .tensor import (
    ShapeError,
    Tape,
    Tensor,
    add,
    backward,
    concat,
    dropout,
    embedding_lookup,
    exp,
    gather_rows,
    log,
    matmul,
    minimum,
    mul,
    narrow,
    relu,
    reshape,
    scatter_add_rows,
    sigmoid,
    softmax,
    sqrt,
    sub,
    swap_last2,
    tanh,
    no_tape,
    tape,
    tmean,
    tsum,
)

__all__ = [
    "ShapeError",
    "Tape",
    "Tensor",
    "add",
    "backward",
    "concat",
    "dropout",
    "embedding_lookup",
    "exp",
    "gather_rows",
    "log",
    "matmul",
    "minimum",
    "mul",
    "narrow",
    "relu",
    "reshape",
    "scatter_add_rows",
    "sigmoid",
    "softmax",
    "sqrt",
    "sub",
    "swap_last2",
    "tanh",
    "no_tape",
    "tape",
    "tmean",
    "tsum",
]
