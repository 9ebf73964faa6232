"""Reverse-mode automatic differentiation over dense numpy arrays.

A ``Tensor`` wraps a float array plus an optional gradient buffer. While a
``tape()`` context is active, every op that touches a grad-requiring tensor
records a backward closure; ``backward(loss)`` replays the tape in reverse.
With no tape active, ops run forward-only (inference mode).

Gradient buffers are never mutated in place: accumulation always rebinds
``t.grad`` to a fresh array, so views handed out by backward closures stay
valid.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when op inputs have incompatible shapes."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        elif isinstance(data, (np.ndarray, np.floating)) and np.asarray(data).dtype in (
            np.float32,
            np.float64,
        ):
            arr = np.asarray(data)
        else:
            arr = np.asarray(data, dtype=np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


_ACTIVE_TAPE: "Tape | None" = None


class Tape:
    """Ordered record of ops; execution order is the topological order."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a tape is already active")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False


def tape() -> Tape:
    return Tape()


class _TapePause:
    """Suspends recording; computations inside behave as frozen constants."""

    def __enter__(self):
        global _ACTIVE_TAPE
        self._saved = _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._saved
        return False


def no_tape() -> _TapePause:
    return _TapePause()


def backward(loss: Tensor, t: Tape | None = None) -> None:
    """Populate grads of every tensor reachable from ``loss`` on the tape.

    ``loss`` must be a scalar. Each tape node is visited exactly once, in
    reverse execution order.
    """
    t = t or _ACTIVE_TAPE
    if t is None:
        raise RuntimeError("backward() needs an active or explicit tape")
    if loss.data.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.data.shape}")
    loss.grad = np.ones_like(loss.data)
    for out, fn in reversed(t.nodes):
        if out.grad is not None:
            fn(out.grad)


def _record(out: Tensor, fn) -> None:
    if _ACTIVE_TAPE is not None and out.requires_grad:
        _ACTIVE_TAPE.nodes.append((out, fn))


def _acc(t: Tensor, g: np.ndarray) -> None:
    # rebind, never +=: g may be a view into another tensor's grad
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, np.ndarray):
        return Tensor(x)
    # bare scalars adapt to float32 operands instead of promoting them
    return Tensor(np.asarray(x, dtype=np.float32))


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = Tensor(a.data + b.data, a.requires_grad or b.requires_grad)
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.data.shape} and {b.data.shape}")

    def fn(g, a=a, b=b):
        if a.requires_grad:
            _acc(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _acc(b, _unbroadcast(g, b.data.shape))

    _record(out, fn)
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data, a.requires_grad or b.requires_grad)

    def fn(g, a=a, b=b):
        if a.requires_grad:
            _acc(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _acc(b, _unbroadcast(-g, b.data.shape))

    _record(out, fn)
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = Tensor(a.data * b.data, a.requires_grad or b.requires_grad)
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.data.shape} and {b.data.shape}")

    def fn(g, a=a, b=b):
        if a.requires_grad:
            _acc(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _acc(b, _unbroadcast(g * a.data, b.data.shape))

    _record(out, fn)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeError(f"matmul: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, a.requires_grad or b.requires_grad)

    def fn(g, a=a, b=b):
        if a.requires_grad:
            ga = g @ b.data.swapaxes(-1, -2) if b.data.ndim > 1 else np.outer(g, b.data)
            _acc(a, _unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            if a.data.ndim == 1:
                gb = np.outer(a.data, g)
            else:
                gb = a.data.swapaxes(-1, -2) @ g
            _acc(b, _unbroadcast(gb, b.data.shape))

    _record(out, fn)
    return out


# ---------------------------------------------------------------------------
# shape ops


def reshape(t: Tensor, shape) -> Tensor:
    out = Tensor(t.data.reshape(shape), t.requires_grad)

    def fn(g, t=t):
        if t.requires_grad:
            _acc(t, g.reshape(t.data.shape))

    _record(out, fn)
    return out


def swap_last2(t: Tensor) -> Tensor:
    out = Tensor(t.data.swapaxes(-1, -2), t.requires_grad)

    def fn(g, t=t):
        if t.requires_grad:
            _acc(t, g.swapaxes(-1, -2))

    _record(out, fn)
    return out


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = Tensor(
        np.concatenate([t.data for t in tensors], axis=axis),
        any(t.requires_grad for t in tensors),
    )

    def fn(g, tensors=tuple(tensors), axis=axis):
        sizes = [t.data.shape[axis] for t in tensors]
        pieces = np.split(g, np.cumsum(sizes)[:-1], axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                _acc(t, piece)

    _record(out, fn)
    return out


def narrow(t: Tensor, axis: int, start: int, length: int) -> Tensor:
    idx = [slice(None)] * t.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = Tensor(t.data[idx], t.requires_grad)

    def fn(g, t=t, idx=idx):
        if t.requires_grad:
            buf = np.zeros_like(t.data)
            buf[idx] = g
            _acc(t, buf)

    _record(out, fn)
    return out


# ---------------------------------------------------------------------------
# nonlinearities


def sigmoid(t) -> Tensor:
    t = _as_tensor(t)
    x = t.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor(y, t.requires_grad)

    def fn(g, t=t, y=y):
        if t.requires_grad:
            _acc(t, g * y * (1.0 - y))

    _record(out, fn)
    return out


def tanh(t) -> Tensor:
    t = _as_tensor(t)
    y = np.tanh(t.data)
    out = Tensor(y, t.requires_grad)

    def fn(g, t=t, y=y):
        if t.requires_grad:
            _acc(t, g * (1.0 - y * y))

    _record(out, fn)
    return out


def relu(t) -> Tensor:
    t = _as_tensor(t)
    out = Tensor(np.maximum(t.data, 0.0), t.requires_grad)

    def fn(g, t=t):
        if t.requires_grad:
            _acc(t, g * (t.data > 0))

    _record(out, fn)
    return out


def softmax(t: Tensor) -> Tensor:
    """Softmax along the last axis."""
    x = t.data
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y, t.requires_grad)

    def fn(g, t=t, y=y):
        if t.requires_grad:
            _acc(t, y * (g - (g * y).sum(axis=-1, keepdims=True)))

    _record(out, fn)
    return out


def log(t: Tensor, floor: float | None = None) -> Tensor:
    """Natural log; ``floor`` clamps the argument away from zero."""
    x = np.maximum(t.data, floor) if floor is not None else t.data
    out = Tensor(np.log(x), t.requires_grad)

    def fn(g, t=t, x=x):
        if t.requires_grad:
            _acc(t, g / x)

    _record(out, fn)
    return out


def exp(t: Tensor) -> Tensor:
    y = np.exp(t.data)
    out = Tensor(y, t.requires_grad)

    def fn(g, t=t, y=y):
        if t.requires_grad:
            _acc(t, g * y)

    _record(out, fn)
    return out


def sqrt(t: Tensor) -> Tensor:
    y = np.sqrt(t.data)
    out = Tensor(y, t.requires_grad)

    def fn(g, t=t, y=y):
        if t.requires_grad:
            _acc(t, g * 0.5 / y)

    _record(out, fn)
    return out


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; at ties the subgradient goes to ``a``."""
    out = Tensor(np.minimum(a.data, b.data), a.requires_grad or b.requires_grad)

    def fn(g, a=a, b=b):
        take_a = a.data <= b.data
        if a.requires_grad:
            _acc(a, _unbroadcast(g * take_a, a.data.shape))
        if b.requires_grad:
            _acc(b, _unbroadcast(g * ~take_a, b.data.shape))

    _record(out, fn)
    return out


# ---------------------------------------------------------------------------
# reductions


def tsum(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(t.data.sum(axis=axis, keepdims=keepdims), t.requires_grad)

    def fn(g, t=t, axis=axis, keepdims=keepdims):
        if t.requires_grad:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _acc(t, np.broadcast_to(g, t.data.shape))

    _record(out, fn)
    return out


def tmean(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(t.data.mean(axis=axis, keepdims=keepdims), t.requires_grad)
    count = t.data.size if axis is None else t.data.shape[axis]

    def fn(g, t=t, axis=axis, keepdims=keepdims, count=count):
        if t.requires_grad:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _acc(t, np.broadcast_to(g, t.data.shape) / count)

    _record(out, fn)
    return out


# ---------------------------------------------------------------------------
# lookup / scatter


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    out = Tensor(table.data[ids], table.requires_grad)

    def fn(g, table=table, ids=ids):
        if table.requires_grad:
            buf = np.zeros_like(table.data)
            np.add.at(buf, ids, g)
            _acc(table, buf)

    _record(out, fn)
    return out


def gather_rows(t: Tensor, ids: np.ndarray) -> Tensor:
    """Pick ``t[i, ids[i]]`` for each row i; returns shape (B,)."""
    ids = np.asarray(ids)
    rows = np.arange(t.data.shape[0])
    out = Tensor(t.data[rows, ids], t.requires_grad)

    def fn(g, t=t, ids=ids, rows=rows):
        if t.requires_grad:
            buf = np.zeros_like(t.data)
            np.add.at(buf, (rows, ids), g)
            _acc(t, buf)

    _record(out, fn)
    return out


def scatter_add_rows(base: Tensor, idx: np.ndarray, vals: Tensor) -> Tensor:
    """Per row i: ``out[i, idx[i, j]] += vals[i, j]`` on a copy of ``base``."""
    idx = np.asarray(idx)
    rows = np.broadcast_to(np.arange(base.data.shape[0])[:, None], idx.shape)
    data = base.data.copy()
    np.add.at(data, (rows, idx), vals.data)
    out = Tensor(data, base.requires_grad or vals.requires_grad)

    def fn(g, base=base, vals=vals, idx=idx, rows=rows):
        if base.requires_grad:
            _acc(base, g)
        if vals.requires_grad:
            _acc(vals, g[rows, idx])

    _record(out, fn)
    return out


def dropout(t: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: scales kept units by 1/(1-p). Caller gates on mode."""
    if p <= 0.0:
        return t
    keep = (rng.random(t.data.shape) >= p).astype(t.data.dtype) / (1.0 - p)
    out = Tensor(t.data * keep, t.requires_grad)

    def fn(g, t=t, keep=keep):
        if t.requires_grad:
            _acc(t, g * keep)

    _record(out, fn)
    return out
