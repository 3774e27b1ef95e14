import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from udgan.nn import (
    BiLSTM, ConfigError, Embedding, GRUCell, Linear, LSTMCell, LSTMStack, ParamStore, Tensor,
    UsageError, no_grad, ops,
)
from udgan.nn import checkpoint
from udgan.nn.gradcheck import check_gradients
from udgan.nn.optim import Adam, clip_grad_norm
from udgan.nn.params import LayerSpec


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def loop_matmul(x, W, b):
    out = [[0.0] * W.shape[1] for _ in range(x.shape[0])]
    for i in range(x.shape[0]):
        for j in range(W.shape[1]):
            acc = b[j]
            for k in range(x.shape[1]):
                acc += x[i, k] * W[k, j]
            out[i][j] = acc
    return np.array(out)


def scalar_gru(x, h, wx, wh, bx, bh):
    H = h.shape[0]
    out = np.zeros(H)
    for j in range(H):
        def pre(gate, src, w, bias):
            return bias[gate * H + j] + sum(src[k] * w[k, gate * H + j] for k in range(len(src)))
        r = _sig(pre(0, x, wx, bx) + pre(0, h, wh, bh))
        z = _sig(pre(1, x, wx, bx) + pre(1, h, wh, bh))
        n = math.tanh(pre(2, x, wx, bx) + r * pre(2, h, wh, bh))
        out[j] = (1 - z) * n + z * h[j]
    return out


def scalar_lstm(x, h, c, wx, wh, b):
    H = h.shape[0]
    hn, cn = np.zeros(H), np.zeros(H)
    for j in range(H):
        def pre(gate):
            return (b[gate * H + j] + sum(x[k] * wx[k, gate * H + j] for k in range(len(x)))
                    + sum(h[k] * wh[k, gate * H + j] for k in range(H)))
        i, f, g, o = _sig(pre(0)), _sig(pre(1)), math.tanh(pre(2)), _sig(pre(3))
        cn[j] = f * c[j] + i * g
        hn[j] = o * math.tanh(cn[j])
    return hn, cn


# ---------------------------------------------------------------- linear

def test_linear_identity_and_zero():
    store = ParamStore()
    lin = Linear(store, "l", 2, 2, np.random.default_rng(0))
    lin.W.data[...] = np.eye(2)
    lin.b.data[...] = 0
    assert np.array_equal(lin(np.array([[1.0, 2.0]])).data, [[1.0, 2.0]])
    store = ParamStore()
    lin = Linear(store, "l", 4, 1, np.random.default_rng(0))
    lin.W.data[...] = 0
    lin.b.data[...] = 3
    assert np.array_equal(lin(np.random.default_rng(1).normal(size=(5, 4))).data, np.full((5, 1), 3.0))


def test_linear_matches_loop_oracle():
    rng = np.random.default_rng(42)
    store = ParamStore()
    lin = Linear(store, "l", 3, 4, rng)
    x = rng.normal(size=(5, 3))
    np.testing.assert_allclose(lin(x).data, loop_matmul(x, lin.W.data, lin.b.data), rtol=0, atol=1e-12)


def test_linear_dimension_mismatch():
    lin = Linear(ParamStore(), "l", 3, 2, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        lin(np.zeros((1, 4)))


# ---------------------------------------------------------------- gru

def test_gru_zero_weights_halves_state():
    cell = GRUCell(ParamStore(), "g", 3, 4, np.random.default_rng(0))
    for p in (cell.wx, cell.wh, cell.bx, cell.bh):
        p.data[...] = 0
    h = np.array([[0.4, -0.2, 0.9, 0.0]])
    np.testing.assert_allclose(cell.step(np.ones((1, 3)), h).data, 0.5 * h, atol=1e-15)


def test_gru_zero_state_fixed_point():
    cell = GRUCell(ParamStore(), "g", 3, 4, np.random.default_rng(0))
    cell.bx.data[...] = 0
    cell.bh.data[...] = 0
    assert np.array_equal(cell.step(np.zeros((2, 3)), np.zeros((2, 4))).data, np.zeros((2, 4)))


@pytest.mark.parametrize("seed", range(3))
def test_gru_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    cell = GRUCell(ParamStore(), "g", 3, 4, rng)
    x, h = rng.normal(size=3), rng.uniform(-1, 1, size=4)
    got = cell.step(x[None], h[None]).data[0]
    ref = scalar_gru(x, h, cell.wx.data, cell.wh.data, cell.bx.data, cell.bh.data)
    np.testing.assert_allclose(got, ref, atol=1e-13)
    assert np.all(np.abs(got) < 1)


def test_gru_dimension_mismatch():
    cell = GRUCell(ParamStore(), "g", 3, 4, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        cell.step(np.zeros((1, 2)), np.zeros((1, 4)))


def test_fused_gru_equals_unrolled_steps_with_mask():
    rng = np.random.default_rng(7)
    cell = GRUCell(ParamStore(), "g", 3, 4, rng)
    X = rng.normal(size=(5, 2, 3))
    mask = np.array([[1, 1], [1, 1], [1, 0], [1, 0], [0, 0]], dtype=float)
    Hs = cell.sequence(X, mask).data
    for b, length in enumerate([4, 2]):
        h = Tensor(np.zeros((1, 4)))
        for t in range(5):
            if t < length:
                h = cell.step(X[t, b][None], h)
            np.testing.assert_allclose(Hs[t, b], h.data[0], atol=1e-13)


# ---------------------------------------------------------------- lstm

def test_lstm_zero_weights():
    cell = LSTMCell(ParamStore(), "l", 3, 4, np.random.default_rng(0))
    for p in (cell.wx, cell.wh, cell.b):
        p.data[...] = 0
    h, c = cell.step(np.ones((1, 3)), np.full((1, 4), 0.3), np.zeros((1, 4)))
    assert np.array_equal(c.data, np.zeros((1, 4)))
    assert np.array_equal(h.data, np.zeros((1, 4)))


def test_lstm_large_forget_bias_keeps_cell():
    rng = np.random.default_rng(3)
    cell = LSTMCell(ParamStore(), "l", 3, 4, rng)
    cell.b.data[4:8] = 20.0
    x, h, c = rng.normal(size=3), rng.uniform(-1, 1, 4), rng.normal(size=4)
    _, cn = cell.step(x[None], h[None], c[None])
    _, ref_c = scalar_lstm(x, h, c, cell.wx.data, cell.wh.data, cell.b.data)
    np.testing.assert_allclose(cn.data[0], ref_c, atol=1e-13)
    # with f -> 1 the update is purely additive: c = c_prev + i*g
    H = 4
    z = x @ cell.wx.data + h @ cell.wh.data + cell.b.data
    i = 1 / (1 + np.exp(-z[:H]))
    g = np.tanh(z[2 * H:3 * H])
    np.testing.assert_allclose(cn.data[0], c + i * g, atol=1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_lstm_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    cell = LSTMCell(ParamStore(), "l", 3, 5, rng)
    x, h, c = rng.normal(size=3), rng.uniform(-1, 1, 5), rng.normal(size=5)
    hn, cn = cell.step(x[None], h[None], c[None])
    rh, rc = scalar_lstm(x, h, c, cell.wx.data, cell.wh.data, cell.b.data)
    np.testing.assert_allclose(hn.data[0], rh, atol=1e-13)
    np.testing.assert_allclose(cn.data[0], rc, atol=1e-13)


def test_fused_lstm_equals_unrolled_steps():
    rng = np.random.default_rng(11)
    cell = LSTMCell(ParamStore(), "l", 3, 4, rng)
    X = rng.normal(size=(4, 3, 3))
    lengths = [4, 1, 3]
    mask = (np.arange(4)[:, None] < np.array(lengths)[None]).astype(float)
    Hs = cell.sequence(X, mask).data
    for b, length in enumerate(lengths):
        h, c = Tensor(np.zeros((1, 4))), Tensor(np.zeros((1, 4)))
        for t in range(length):
            h, c = cell.step(X[t, b][None], h, c)
        np.testing.assert_allclose(Hs[-1, b], h.data[0], atol=1e-13)


# ---------------------------------------------------------------- bilstm

def test_bilstm_single_element_symmetry():
    rng = np.random.default_rng(0)
    bi = BiLSTM(ParamStore(), "bi", 3, 4, rng)
    bi.bwd.wx.data[...] = bi.fwd.wx.data
    bi.bwd.wh.data[...] = bi.fwd.wh.data
    bi.bwd.b.data[...] = bi.fwd.b.data
    out = bi.sequence([rng.normal(size=(2, 3))]).data
    np.testing.assert_array_equal(out[:, :4], out[:, 4:])


def test_bilstm_palindrome_shared_weights():
    rng = np.random.default_rng(1)
    bi = BiLSTM(ParamStore(), "bi", 3, 4, rng)
    for a, b in ((bi.bwd.wx, bi.fwd.wx), (bi.bwd.wh, bi.fwd.wh), (bi.bwd.b, bi.fwd.b)):
        a.data[...] = b.data
    a, b = rng.normal(size=(1, 3)), rng.normal(size=(1, 3))
    out = bi.sequence([a, b, a]).data
    np.testing.assert_allclose(out[:, :4], out[:, 4:], atol=1e-15)


def test_bilstm_matches_manual_unrolling():
    rng = np.random.default_rng(5)
    bi = BiLSTM(ParamStore(), "bi", 3, 4, rng)
    xs = [rng.normal(size=(2, 3)) for _ in range(3)]
    out = bi.sequence(xs).data

    def run(cell, seq):
        h, c = Tensor(np.zeros((2, 4))), Tensor(np.zeros((2, 4)))
        for x in seq:
            h, c = cell.step(x, h, c)
        return h.data

    ref = np.concatenate([run(bi.fwd, xs), run(bi.bwd, xs[::-1])], axis=1)
    np.testing.assert_allclose(out, ref, atol=1e-13)


def test_bilstm_outputs_respect_lengths():
    rng = np.random.default_rng(9)
    bi = BiLSTM(ParamStore(), "bi", 3, 4, rng)
    X = rng.normal(size=(3, 2, 3))
    out = bi.outputs(X, lengths=[3, 2]).data
    # column 1 has two valid steps: its backward pass starts at t=1
    short = bi.outputs(X[:2, 1:2], lengths=[2]).data
    np.testing.assert_allclose(out[:2, 1], short[:, 0], atol=1e-13)


def test_bilstm_empty_sequence():
    bi = BiLSTM(ParamStore(), "bi", 3, 4, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        bi.sequence([])


# ---------------------------------------------------------------- softmax

def test_softmax_examples():
    np.testing.assert_allclose(ops.softmax(np.array([[0.0, 0.0]])).data, [[0.5, 0.5]])
    big = ops.softmax(np.array([[1000.0, 0.0]])).data
    assert np.all(np.isfinite(big)) and big[0, 0] == pytest.approx(1.0) and big[0, 1] < 1e-300
    got = ops.softmax(np.log(np.array([[1.0, 2.0, 3.0]]))).data
    np.testing.assert_allclose(got, [[1 / 6, 2 / 6, 3 / 6]], atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-500, 500), min_size=1, max_size=8), st.floats(-100, 100))
def test_softmax_rows_sum_to_one_and_shift_invariant(row, shift):
    x = np.array([row])
    p = ops.softmax(x).data
    assert abs(p.sum() - 1.0) < 1e-9 and np.all(p >= 0)
    np.testing.assert_allclose(ops.softmax(x + shift).data, p, atol=1e-12)


# ---------------------------------------------------------------- backward

def test_backward_linear_outer_product():
    store = ParamStore()
    W = store.add("W", np.random.default_rng(0).normal(size=(3, 2)))
    x = np.array([[1.0, 2.0, 3.0]])
    ops.sum(ops.matmul(x, W)).backward()
    np.testing.assert_array_equal(W.grad, np.outer(x[0], np.ones(2)))


def test_backward_zero_influence_parameter():
    store = ParamStore()
    a = store.add("a", np.array([1.5]))
    b = store.add("b", np.array([2.0]))
    ops.sum(ops.add(ops.mul(a, a), ops.mul(b, 0.0))).backward()
    assert b.grad[0] == 0.0 and a.grad[0] == 3.0


def test_backward_without_forward():
    store = ParamStore()
    p = store.add("p", np.ones(2))
    with pytest.raises(UsageError):
        p.backward()
    with no_grad():
        out = ops.sum(ops.mul(p, 2.0))
    with pytest.raises(UsageError):
        out.backward()


def _gradcheck_params(store):
    return {k: p for k, p in store.items()}


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("kind", ["linear", "embedding", "gru-cell", "lstm-cell", "lstm-stack", "bilstm"])
def test_gradient_check_every_layer(kind, seed):
    rng = np.random.default_rng(100 + seed)
    store = ParamStore()
    T, B = 3, 2
    if kind == "linear":
        layer = Linear(store, "l", 3, 2, rng)
        x = rng.normal(size=(B, 3))
        f = lambda: ops.sum(ops.tanh(layer(x)))
    elif kind == "embedding":
        layer = Embedding(store, "e", 5, 3, rng)
        proj = rng.normal(size=(3, 1))
        ids = np.array([[0, 3, 3], [4, 1, 0]])
        f = lambda: ops.sum(ops.tanh(ops.matmul(layer(ids), proj)))
    elif kind == "gru-cell":
        layer = GRUCell(store, "g", 3, 4, rng)
        X = rng.normal(size=(T, B, 3))
        mask = np.array([[1, 1], [1, 0], [1, 0]], dtype=float)
        h0 = store.add("h0", rng.normal(size=(B, 4)))
        w = rng.normal(size=(T, B, 4))
        f = lambda: ops.sum(ops.mul(layer.sequence(X, mask, h0), w))
    elif kind == "lstm-cell":
        layer = LSTMCell(store, "c", 3, 4, rng)
        X = store.add("X", rng.normal(size=(T, B, 3)))
        mask = np.array([[1, 1], [1, 1], [0, 1]], dtype=float)
        w = rng.normal(size=(T, B, 4))
        f = lambda: ops.sum(ops.mul(layer.sequence(X, mask), w))
    elif kind == "lstm-stack":
        layer = LSTMStack(store, "s", 3, 3, 3, rng)
        X = rng.normal(size=(T, B, 3))
        w = rng.normal(size=(T, B, 3))
        f = lambda: ops.sum(ops.mul(layer(X), w))
    else:
        layer = BiLSTM(store, "b", 3, 3, rng)
        X = rng.normal(size=(T, B, 3))
        w = rng.normal(size=(T, B, 6))
        f = lambda: ops.sum(ops.mul(layer.outputs(X, lengths=[3, 2]), w))
    res = check_gradients(f, _gradcheck_params(store))
    assert res.ok(1e-3), res


@pytest.mark.parametrize("seed", range(5))
def test_gradient_check_step_compositions(seed):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    g = GRUCell(store, "g", 2, 3, rng)
    l = LSTMCell(store, "l", 3, 2, rng)
    x = rng.normal(size=(2, 2))

    def f():
        h = g.step(x, np.zeros((2, 3)))
        h = g.step(x, h)
        hl, cl = l.step(h, np.zeros((2, 2)), np.zeros((2, 2)))
        return ops.cross_entropy(ops.softmax(hl), np.array([0, 1]))

    assert check_gradients(f, _gradcheck_params(store)).ok()


def test_determinism_bitwise():
    def run():
        rng = np.random.default_rng(3)
        store = ParamStore()
        stack = LSTMStack(store, "s", 4, 5, 2, rng)
        return stack(rng.normal(size=(6, 3, 4))).data.tobytes()

    assert run() == run()


def test_layer_spec_validation():
    with pytest.raises(ConfigError):
        LayerSpec("linear", 0, 3)
    with pytest.raises(ConfigError):
        LayerSpec("lstm-stack", 3, 3, layers=0)
    with pytest.raises(ConfigError):
        LayerSpec("conv", 3, 3)


def test_no_nan_on_extreme_inputs():
    rng = np.random.default_rng(0)
    cell = LSTMCell(ParamStore(), "c", 3, 4, rng)
    X = np.full((4, 2, 3), 1e6)
    assert np.all(np.isfinite(cell.sequence(X).data))
    assert np.all(np.isfinite(ops.log_softmax(np.array([[1e300, -1e300]])).data))
    assert np.all(np.isfinite(ops.exp(np.array([1e5])).data))


# ---------------------------------------------------------------- optimizer

def test_clip_grad_norm():
    store = ParamStore()
    p = store.add("p", np.zeros(2))
    p.grad[...] = [30.0, 40.0]
    assert clip_grad_norm(store, 5.0) == pytest.approx(50.0)
    np.testing.assert_allclose(p.grad, [3.0, 4.0])


def test_adam_minimizes_quadratic():
    store = ParamStore()
    p = store.add("p", np.array([3.0, -2.0]))
    opt = Adam(store, lr=0.1)
    for _ in range(300):
        ops.sum(ops.mul(p, p)).backward()
        opt.step()
    assert np.all(np.abs(p.data) < 1e-2)


# ---------------------------------------------------------------- checkpoint

def test_checkpoint_byte_exact_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    store = ParamStore()
    LSTMStack(store, "s", 3, 4, 2, rng)
    specs = [LayerSpec("lstm-stack", 3, 4, 2).to_dict()]
    path = tmp_path / "m.ckpt"
    digest = checkpoint.save(path, "d-general", store.state(), specs, seed=7)
    header, tensors = checkpoint.load(path, expected_kind="d-general")
    assert header["seed"] == 7 and header["layer_specs"] == specs
    blob = checkpoint.dumps("d-general", tensors, header["layer_specs"], header["seed"], header["config"])
    assert blob == path.read_bytes()
    assert digest == checkpoint.file_hash(path)
    for k, v in store.state().items():
        assert np.array_equal(tensors[k], v)


def test_checkpoint_kind_mismatch(tmp_path):
    path = tmp_path / "m.ckpt"
    checkpoint.save(path, "generator", {"a": np.zeros(2)}, [], seed=0)
    with pytest.raises(ConfigError):
        checkpoint.load(path, expected_kind="d-special")
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"garbage!" + bytes(16))
