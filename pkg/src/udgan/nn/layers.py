"""Parameterized layers registered in a shared ParamStore."""

from __future__ import annotations

import numpy as np

from . import ops
from .autograd import ConfigError, Tensor, as_tensor
from .params import LayerSpec, ParamStore, uniform_init
from .recurrent import gru_forward_np, gru_layer, gru_step, lstm_forward_np, lstm_layer, lstm_step


class Linear:
    def __init__(self, store: ParamStore, name: str, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.spec = LayerSpec("linear", in_dim, out_dim)
        self.W = store.add(f"{name}.W", uniform_init(rng, (in_dim, out_dim), in_dim))
        self.b = store.add(f"{name}.b", uniform_init(rng, (out_dim,), in_dim))

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        if x.shape[-1] != self.spec.input_dim:
            raise ConfigError(f"linear expects input dim {self.spec.input_dim}, got {x.shape[-1]}")
        return ops.add(ops.matmul(x, self.W), self.b)

    def np_forward(self, x: np.ndarray) -> np.ndarray:
        return x @ self.W.data + self.b.data


class Embedding:
    def __init__(self, store: ParamStore, name: str, vocab: int, dim: int, rng: np.random.Generator):
        self.spec = LayerSpec("embedding", vocab, dim)
        self.table = store.add(f"{name}.table", uniform_init(rng, (vocab, dim), dim))

    def __call__(self, ids) -> Tensor:
        return ops.take_rows(self.table, ids)


class GRUCell:
    def __init__(self, store: ParamStore, name: str, in_dim: int, hidden: int, rng: np.random.Generator):
        self.spec = LayerSpec("gru-cell", in_dim, hidden)
        self.hidden = hidden
        self.wx = store.add(f"{name}.wx", uniform_init(rng, (in_dim, 3 * hidden), in_dim))
        self.wh = store.add(f"{name}.wh", uniform_init(rng, (hidden, 3 * hidden), hidden))
        self.bx = store.add(f"{name}.bx", uniform_init(rng, (3 * hidden,), hidden))
        self.bh = store.add(f"{name}.bh", uniform_init(rng, (3 * hidden,), hidden))

    def step(self, x, h) -> Tensor:
        return gru_step(x, h, self.wx, self.wh, self.bx, self.bh)

    def sequence(self, X, mask=None, h0=None) -> Tensor:
        return gru_layer(X, mask, h0, self.wx, self.wh, self.bx, self.bh)

    def np_sequence(self, X, mask=None, h0=None) -> np.ndarray:
        return gru_forward_np(X, mask, h0, self.wx.data, self.wh.data, self.bx.data, self.bh.data)[0]


class LSTMCell:
    def __init__(self, store: ParamStore, name: str, in_dim: int, hidden: int, rng: np.random.Generator):
        self.spec = LayerSpec("lstm-cell", in_dim, hidden)
        self.hidden = hidden
        self.wx = store.add(f"{name}.wx", uniform_init(rng, (in_dim, 4 * hidden), in_dim))
        self.wh = store.add(f"{name}.wh", uniform_init(rng, (hidden, 4 * hidden), hidden))
        self.b = store.add(f"{name}.b", uniform_init(rng, (4 * hidden,), hidden))

    def step(self, x, h, c) -> tuple[Tensor, Tensor]:
        return lstm_step(x, h, c, self.wx, self.wh, self.b)

    def sequence(self, X, mask=None, h0=None, c0=None) -> Tensor:
        return lstm_layer(X, mask, h0, c0, self.wx, self.wh, self.b)

    def np_sequence(self, X, mask=None, h0=None, c0=None):
        Hs, Cs, _ = lstm_forward_np(X, mask, h0, c0, self.wx.data, self.wh.data, self.b.data)
        return Hs, Cs


class LSTMStack:
    """Stacked unidirectional LSTM; returns the top layer's states."""

    def __init__(self, store: ParamStore, name: str, in_dim: int, hidden: int, layers: int,
                 rng: np.random.Generator):
        self.spec = LayerSpec("lstm-stack", in_dim, hidden, layers)
        self.cells = [
            LSTMCell(store, f"{name}.{k}", in_dim if k == 0 else hidden, hidden, rng)
            for k in range(layers)
        ]

    def __call__(self, X, mask=None) -> Tensor:
        for cell in self.cells:
            X = cell.sequence(X, mask)
        return X


def reverse_index(lengths: np.ndarray, T: int) -> np.ndarray:
    """(T, B) time index reversing each column's valid prefix; padding stays put."""
    t = np.arange(T)[:, None]
    L = np.asarray(lengths)[None, :]
    return np.where(t < L, L - 1 - t, t)


class BiLSTM:
    """Forward LSTM over the sequence and a second LSTM over its reversal."""

    def __init__(self, store: ParamStore, name: str, in_dim: int, hidden: int, rng: np.random.Generator):
        self.spec = LayerSpec("bilstm", in_dim, hidden)
        self.fwd = LSTMCell(store, f"{name}.fwd", in_dim, hidden, rng)
        self.bwd = LSTMCell(store, f"{name}.bwd", in_dim, hidden, rng)

    def outputs(self, X, lengths=None) -> Tensor:
        """Per-position ``[h_fwd_t, h_bwd_t]`` of shape (T, B, 2H)."""
        X = as_tensor(X)
        T, B = X.shape[0], X.shape[1]
        if T == 0:
            raise ConfigError("bilstm needs a nonempty sequence")
        lengths = np.full(B, T) if lengths is None else np.asarray(lengths)
        mask = (np.arange(T)[:, None] < lengths[None, :]).astype(float)
        rev = reverse_index(lengths, T)
        hf = self.fwd.sequence(X, mask)
        hb = ops.gather_time(self.bwd.sequence(ops.gather_time(X, rev), mask), rev)
        return ops.concat([hf, hb], axis=-1)

    def sequence(self, xs) -> Tensor:
        """Final forward state concatenated with final backward state, (B, 2H)."""
        if isinstance(xs, Tensor):
            X = xs
        else:
            xs = [as_tensor(x) for x in xs]
            if not xs:
                raise ConfigError("bilstm needs a nonempty sequence")
            X = ops.concat([ops.reshape(x, (1,) + x.shape) for x in xs], axis=0)
        T = X.shape[0]
        if T == 0:
            raise ConfigError("bilstm needs a nonempty sequence")
        hf = ops.index_first(self.fwd.sequence(X), T - 1)
        rev = reverse_index(np.full(X.shape[1], T), T)
        hb = ops.index_first(self.bwd.sequence(ops.gather_time(X, rev)), T - 1)
        return ops.concat([hf, hb], axis=-1)
