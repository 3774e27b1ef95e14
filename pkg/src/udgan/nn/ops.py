"""Differentiable elementwise, reduction and indexing ops."""

from __future__ import annotations

import numpy as np

from .autograd import DTYPE, ConfigError, Tensor, as_tensor, make_node

EXP_CLIP = 700.0


def unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    # 0.5 * (1 + tanh(x / 2)), computed in place to avoid temporaries
    out = np.multiply(x, 0.5, dtype=np.float64)
    np.tanh(out, out=out)
    out += 1.0
    out *= 0.5
    return out


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return make_node(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return make_node(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return make_node(a.data * b.data, (a, b), bw)


def matmul(a, b) -> Tensor:
    """``a @ b`` where ``a`` is (..., K) and ``b`` is (K, M)."""
    a, b = as_tensor(a), as_tensor(b)
    if b.data.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ConfigError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def bw(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return make_node(a.data @ b.data, (a, b), bw)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = stable_sigmoid(x.data)
    return make_node(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return make_node(y, (x,), lambda g: (g * (1.0 - y * y),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return make_node(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,))


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(np.minimum(x.data, EXP_CLIP))
    return make_node(y, (x,), lambda g: (g * y,))


def log(x) -> Tensor:
    x = as_tensor(x)
    return make_node(np.log(x.data), (x,), lambda g: (g / x.data,))


def sum(x, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    out = x.data.sum(axis=axis)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return make_node(np.asarray(out, dtype=DTYPE), (x,), bw)


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return mul(sum(x, axis), 1.0 / n)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return make_node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def concat(xs, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_node(np.concatenate([x.data for x in xs], axis=axis), xs, bw)


def slice_last(x, start: int, stop: int) -> Tensor:
    """``x[..., start:stop]``."""
    x = as_tensor(x)

    def bw(g):
        out = np.zeros_like(x.data)
        out[..., start:stop] = g
        return (out,)

    return make_node(x.data[..., start:stop], (x,), bw)


def index_first(x, i: int) -> Tensor:
    """``x[i]`` along the leading axis."""
    x = as_tensor(x)

    def bw(g):
        out = np.zeros_like(x.data)
        out[i] = g
        return (out,)

    return make_node(x.data[i], (x,), bw)


def take_rows(table, idx) -> Tensor:
    """Gather rows of a 2-D ``table``; output shape is ``idx.shape + (D,)``."""
    table = as_tensor(table)
    idx = np.asarray(idx, dtype=np.int64)
    if table.data.ndim != 2:
        raise ConfigError("take_rows expects a 2-D table")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ConfigError("take_rows index out of range")

    def bw(g):
        out = np.zeros_like(table.data)
        np.add.at(out, idx.reshape(-1), g.reshape(-1, table.shape[1]))
        return (out,)

    return make_node(table.data[idx], (table,), bw)


def gather_time(x, idx) -> Tensor:
    """``out[t, b] = x[idx[t, b], b]`` for a time-major (T, B, D) tensor."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    cols = np.broadcast_to(np.arange(x.shape[1]), idx.shape)

    def bw(g):
        out = np.zeros_like(x.data)
        np.add.at(out, (idx, cols), g)
        return (out,)

    return make_node(x.data[idx, cols], (x,), bw)


def pick(x, idx) -> Tensor:
    """``x[i, idx[i]]`` for a 2-D tensor, returned as shape (N,)."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(x.shape[0])

    def bw(g):
        out = np.zeros_like(x.data)
        out[rows, idx] = g
        return (out,)

    return make_node(x.data[rows, idx], (x,), bw)


def softmax_np(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_np(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(x) -> Tensor:
    """Row softmax with max subtraction."""
    x = as_tensor(x)
    y = softmax_np(x.data)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return make_node(y, (x,), bw)


def log_softmax(x) -> Tensor:
    x = as_tensor(x)
    y = log_softmax_np(x.data)

    def bw(g):
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return make_node(y, (x,), bw)


def cross_entropy(logits, targets, weights=None) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under row softmax.

    With ``weights`` the per-row terms are weighted and divided by the weight sum.
    """
    logp = pick(log_softmax(logits), targets)
    if weights is None:
        return mul(mean(logp), -1.0)
    w = np.asarray(weights, dtype=DTYPE)
    return mul(sum(mul(logp, w)), -1.0 / max(w.sum(), 1e-12))
