"""Parameterized layers built on the tensor ops: dense, embedding, LSTM."""

from __future__ import annotations

import numpy as np

from .tensor import (
    Tensor,
    add,
    concat,
    embedding_lookup,
    matmul,
    mul,
    narrow,
    sigmoid,
    sqrt,
    sub,
    tanh,
    tmean,
)

INIT_RANGE = 0.1  # uniform init bound for all learned weights


def uniform_param(rng: np.random.Generator, shape, dtype=np.float32) -> Tensor:
    data = rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape).astype(dtype)
    return Tensor(data, requires_grad=True)


def zeros_param(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def ones_param(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)


class Dense:
    def __init__(self, rng, n_in: int, n_out: int, dtype=np.float32):
        self.W = uniform_param(rng, (n_in, n_out), dtype)
        self.b = zeros_param((n_out,), dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.W), self.b)

    def params(self, prefix: str):
        return [(f"{prefix}.W", self.W), (f"{prefix}.b", self.b)]


class Embedding:
    def __init__(self, rng, n_rows: int, dim: int, dtype=np.float32):
        self.table = uniform_param(rng, (n_rows, dim), dtype)

    def __call__(self, ids: np.ndarray) -> Tensor:
        return embedding_lookup(self.table, ids)

    def params(self, prefix: str):
        return [(f"{prefix}.table", self.table)]


class LSTMCell:
    """Standard LSTM gates; weights fused as (in, 4h) / (h, 4h) with i,f,g,o slabs."""

    def __init__(self, rng, n_in: int, n_hidden: int, dtype=np.float32):
        self.n_hidden = n_hidden
        self.Wx = uniform_param(rng, (n_in, 4 * n_hidden), dtype)
        self.Wh = uniform_param(rng, (n_hidden, 4 * n_hidden), dtype)
        self.b = zeros_param((4 * n_hidden,), dtype)

    def step(self, x: Tensor, h: Tensor, c: Tensor):
        z = add(add(matmul(x, self.Wx), matmul(h, self.Wh)), self.b)
        nh = self.n_hidden
        i = sigmoid(narrow(z, -1, 0, nh))
        f = sigmoid(narrow(z, -1, nh, nh))
        g = tanh(narrow(z, -1, 2 * nh, nh))
        o = sigmoid(narrow(z, -1, 3 * nh, nh))
        c_new = add(mul(f, c), mul(i, g))
        h_new = mul(o, tanh(c_new))
        return h_new, c_new

    def params(self, prefix: str):
        return [(f"{prefix}.Wx", self.Wx), (f"{prefix}.Wh", self.Wh), (f"{prefix}.b", self.b)]


class LayerNorm:
    def __init__(self, dim: int, dtype=np.float32, eps: float = 1e-5):
        self.gain = ones_param((dim,), dtype)
        self.bias = zeros_param((dim,), dtype)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = tmean(x, axis=-1, keepdims=True)
        centered = sub(x, mu)
        var = tmean(mul(centered, centered), axis=-1, keepdims=True)
        inv = sqrt(add(var, self.eps))
        normed = mul(centered, _reciprocal(inv))
        return add(mul(normed, self.gain), self.bias)

    def params(self, prefix: str):
        return [(f"{prefix}.gain", self.gain), (f"{prefix}.bias", self.bias)]


def _reciprocal(t: Tensor) -> Tensor:
    from .tensor import _record, _acc

    y = 1.0 / t.data
    out = Tensor(y, t.requires_grad)

    def fn(g, t=t, y=y):
        if t.requires_grad:
            _acc(t, -g * y * y)

    _record(out, fn)
    return out


def masked_blend(new: Tensor, old: Tensor, mask: np.ndarray) -> Tensor:
    """new where mask==1, old where mask==0; mask is constant (B, 1)."""
    m = Tensor(mask)
    return add(mul(new, m), mul(old, sub(Tensor(np.ones_like(mask)), m)))


def lstm_sequence(cell: LSTMCell, xs: list[Tensor], mask: np.ndarray | None,
                  h0: Tensor, c0: Tensor) -> list[Tensor]:
    """Run the cell over time; padded steps carry state through unchanged."""
    h, c = h0, c0
    out = []
    for t_idx, x in enumerate(xs):
        h_new, c_new = cell.step(x, h, c)
        if mask is not None:
            m = mask[:, t_idx : t_idx + 1]
            h = masked_blend(h_new, h, m)
            c = masked_blend(c_new, c, m)
        else:
            h, c = h_new, c_new
        out.append(h)
    return out


def collect_params(pairs) -> dict[str, Tensor]:
    out: dict[str, Tensor] = {}
    for name, t in pairs:
        if name in out:
            raise ValueError(f"duplicate parameter name {name}")
        out[name] = t
    return out
