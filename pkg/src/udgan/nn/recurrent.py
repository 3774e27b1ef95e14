"""GRU and LSTM recurrences.

Two routes compute the same thing:

* ``gru_step`` / ``lstm_step`` compose elementary ops, one tape node per op.
* ``gru_layer`` / ``lstm_layer`` run a whole (masked) sequence as a single tape
  node with hand-written backpropagation through time.

The fused layers are what the models use; the step compositions serve as the
independent reference they are tested against.

Gate layout: GRU columns are ``[reset, update, candidate]``; LSTM columns are
``[input, forget, cell, output]``. Sequences are time-major ``(T, B, D)`` and
``mask[t, b] = 0`` freezes the state of row ``b`` from step ``t`` on.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .autograd import DTYPE, ConfigError, Tensor, as_tensor, make_node
from .ops import stable_sigmoid as _sig


def _check(x_dim: int, h_dim: int, wx: Tensor, wh: Tensor, gates: int) -> None:
    if wx.shape != (x_dim, gates * h_dim) or wh.shape != (h_dim, gates * h_dim):
        raise ConfigError(
            f"recurrent weights {wx.shape}/{wh.shape} do not match input {x_dim}, hidden {h_dim}"
        )


def gru_step(x, h, wx, wh, bx, bh) -> Tensor:
    x, h, wx, wh = as_tensor(x), as_tensor(h), as_tensor(wx), as_tensor(wh)
    H = h.shape[-1]
    _check(x.shape[-1], H, wx, wh, 3)
    xw = ops.add(ops.matmul(x, wx), bx)
    hw = ops.add(ops.matmul(h, wh), bh)
    r = ops.sigmoid(ops.add(ops.slice_last(xw, 0, H), ops.slice_last(hw, 0, H)))
    z = ops.sigmoid(ops.add(ops.slice_last(xw, H, 2 * H), ops.slice_last(hw, H, 2 * H)))
    n = ops.tanh(ops.add(ops.slice_last(xw, 2 * H, 3 * H), ops.mul(r, ops.slice_last(hw, 2 * H, 3 * H))))
    return ops.add(ops.mul(ops.sub(1.0, z), n), ops.mul(z, h))


def lstm_step(x, h, c, wx, wh, b) -> tuple[Tensor, Tensor]:
    x, h, c, wx, wh = (as_tensor(v) for v in (x, h, c, wx, wh))
    H = h.shape[-1]
    _check(x.shape[-1], H, wx, wh, 4)
    z = ops.add(ops.add(ops.matmul(x, wx), ops.matmul(h, wh)), b)
    i = ops.sigmoid(ops.slice_last(z, 0, H))
    f = ops.sigmoid(ops.slice_last(z, H, 2 * H))
    g = ops.tanh(ops.slice_last(z, 2 * H, 3 * H))
    o = ops.sigmoid(ops.slice_last(z, 3 * H, 4 * H))
    c_new = ops.add(ops.mul(f, c), ops.mul(i, g))
    h_new = ops.mul(o, ops.tanh(c_new))
    return h_new, c_new


def _mask_or_ones(mask, T: int, B: int) -> np.ndarray:
    if mask is None:
        return np.ones((T, B), dtype=DTYPE)
    mask = np.asarray(mask, dtype=DTYPE)
    if mask.shape != (T, B):
        raise ConfigError(f"mask shape {mask.shape} != {(T, B)}")
    return mask


def gru_forward_np(X, mask, h0, wx, wh, bx, bh, keep=False):
    """Plain numpy GRU over a sequence; returns (Hs, cache)."""
    T, B, _ = X.shape
    H = wh.shape[0]
    m = _mask_or_ones(mask, T, B)
    xw = X @ wx + bx
    h = np.zeros((B, H), dtype=DTYPE) if h0 is None else h0
    Hs = np.empty((T, B, H), dtype=DTYPE)
    cache = [] if keep else None
    full = bool(np.all(m == 1.0))
    for t in range(T):
        hw = h @ wh
        hw += bh
        rz = _sig(xw[t, :, :2 * H] + hw[:, :2 * H])
        r, z = rz[:, :H], rz[:, H:]
        n = np.tanh(xw[t, :, 2 * H:] + r * hw[:, 2 * H:])
        h_new = n + z * (h - n)
        mt = m[t][:, None]
        if keep:
            cache.append((h, r, z, n, hw[:, 2 * H:], mt))
        h = h_new if full else np.where(mt > 0, h_new, h)
        Hs[t] = h
    return Hs, cache


def gru_layer(X, mask, h0, wx, wh, bx, bh) -> Tensor:
    """Masked GRU over ``X`` (T, B, D); returns all hidden states (T, B, H)."""
    X, wx, wh, bx, bh = (as_tensor(v) for v in (X, wx, wh, bx, bh))
    h0 = None if h0 is None else as_tensor(h0)
    T, B, D = X.shape
    H = wh.shape[0]
    _check(D, H, wx, wh, 3)
    Hs, cache = gru_forward_np(
        X.data, mask, None if h0 is None else h0.data, wx.data, wh.data, bx.data, bh.data, keep=True
    )

    def bw(gHs):
        dxw = np.empty((T, B, 3 * H), dtype=DTYPE)
        dwh = np.zeros_like(wh.data)
        dbh = np.zeros_like(bh.data)
        dh_next = np.zeros((B, H), dtype=DTYPE)
        for t in range(T - 1, -1, -1):
            h_prev, r, z, n, hw_n, mt = cache[t]
            dh = gHs[t] + dh_next
            dh_new = mt * dh
            dh_prev = (1.0 - mt) * dh + dh_new * z
            dz = dh_new * (h_prev - n)
            dn_pre = dh_new * (1.0 - z) * (1.0 - n * n)
            dr_pre = dn_pre * hw_n * r * (1.0 - r)
            dz_pre = dz * z * (1.0 - z)
            dxw[t, :, :H] = dr_pre
            dxw[t, :, H:2 * H] = dz_pre
            dxw[t, :, 2 * H:] = dn_pre
            dhw = np.concatenate([dr_pre, dz_pre, dn_pre * r], axis=1)
            dwh += h_prev.T @ dhw
            dbh += dhw.sum(axis=0)
            dh_next = dh_prev + dhw @ wh.data.T
        dX = dxw @ wx.data.T
        dwx = X.data.reshape(-1, D).T @ dxw.reshape(-1, 3 * H)
        dbx = dxw.sum(axis=(0, 1))
        grads = [dX, dwx, dwh, dbx, dbh]
        if h0 is not None:
            grads.append(dh_next)
        return tuple(grads)

    parents = [X, wx, wh, bx, bh] + ([h0] if h0 is not None else [])
    return make_node(Hs, parents, bw)


def lstm_forward_np(X, mask, h0, c0, wx, wh, b, keep=False):
    """Plain numpy LSTM over a sequence; returns (Hs, Cs, cache)."""
    T, B, _ = X.shape
    H = wh.shape[0]
    m = _mask_or_ones(mask, T, B)
    xw = X @ wx + b
    h = np.zeros((B, H), dtype=DTYPE) if h0 is None else h0
    c = np.zeros((B, H), dtype=DTYPE) if c0 is None else c0
    Hs = np.empty((T, B, H), dtype=DTYPE)
    Cs = np.empty((T, B, H), dtype=DTYPE)
    cache = [] if keep else None
    full = bool(np.all(m == 1.0))
    for t in range(T):
        z = h @ wh
        z += xw[t]
        s = _sig(z)
        i, f, o = s[:, :H], s[:, H:2 * H], s[:, 3 * H:]
        g = np.tanh(z[:, 2 * H:3 * H])
        c_new = f * c
        c_new += i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        mt = m[t][:, None]
        if keep:
            cache.append((h, c, i, f, g, o, tc, mt))
        if full:
            h, c = h_new, c_new
        else:
            h = np.where(mt > 0, h_new, h)
            c = np.where(mt > 0, c_new, c)
        Hs[t] = h
        Cs[t] = c
    return Hs, Cs, cache


def lstm_layer(X, mask, h0, c0, wx, wh, b) -> Tensor:
    """Masked LSTM over ``X`` (T, B, D); returns all hidden states (T, B, H)."""
    X, wx, wh, b = (as_tensor(v) for v in (X, wx, wh, b))
    h0 = None if h0 is None else as_tensor(h0)
    c0 = None if c0 is None else as_tensor(c0)
    T, B, D = X.shape
    H = wh.shape[0]
    _check(D, H, wx, wh, 4)
    Hs, _, cache = lstm_forward_np(
        X.data, mask,
        None if h0 is None else h0.data,
        None if c0 is None else c0.data,
        wx.data, wh.data, b.data, keep=True,
    )

    def bw(gHs):
        dz_all = np.empty((T, B, 4 * H), dtype=DTYPE)
        dwh = np.zeros_like(wh.data)
        dh_next = np.zeros((B, H), dtype=DTYPE)
        dc_next = np.zeros((B, H), dtype=DTYPE)
        for t in range(T - 1, -1, -1):
            h_prev, c_prev, i, f, g, o, tc, mt = cache[t]
            dh = gHs[t] + dh_next
            dh_new = mt * dh
            dc_new = mt * dc_next + dh_new * o * (1.0 - tc * tc)
            dz = dz_all[t]
            dz[:, :H] = dc_new * g * i * (1.0 - i)
            dz[:, H:2 * H] = dc_new * c_prev * f * (1.0 - f)
            dz[:, 2 * H:3 * H] = dc_new * i * (1.0 - g * g)
            dz[:, 3 * H:] = dh_new * tc * o * (1.0 - o)
            dwh += h_prev.T @ dz
            dh_next = (1.0 - mt) * dh + dz @ wh.data.T
            dc_next = (1.0 - mt) * dc_next + dc_new * f
        dX = dz_all @ wx.data.T
        dwx = X.data.reshape(-1, D).T @ dz_all.reshape(-1, 4 * H)
        db = dz_all.sum(axis=(0, 1))
        grads = [dX, dwx, dwh, db]
        if h0 is not None:
            grads.append(dh_next)
        if c0 is not None:
            grads.append(dc_next)
        return tuple(grads)

    parents = [X, wx, wh, b] + [t for t in (h0, c0) if t is not None]
    return make_node(Hs, parents, bw)
