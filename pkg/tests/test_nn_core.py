"""Gradient and behaviour checks for the numpy net layers.

All gradient checks run in float64; the hand-written backward passes must
match central differences to high precision.
"""

import numpy as np
import pytest

from faultgait.nn import Adam, Dense, Mlp, ParameterStore, TransformerStack, clip_grad_norm, positional_encoding
from faultgait.nn.core import Elu, Gelu, LayerNorm, Tanh
from faultgait.nn.gradcheck import max_param_rel_error

TOL = 1e-4


def _check_mlp(activation):
    rng = np.random.default_rng(7)
    store = ParameterStore(dtype=np.float64)
    net = Mlp(store, "net", (5, 16, 8, 3), rng, activation=activation)
    x = rng.normal(size=(11, 5))
    target = rng.normal(size=(11, 3))

    def loss_and_grad():
        store.zero_grads()
        y = net.forward(x)
        diff = y - target
        net.backward(2.0 * diff / diff.size)
        return float(np.mean(diff**2))

    assert max_param_rel_error(store, loss_and_grad) < TOL


@pytest.mark.parametrize("activation", ["tanh", "elu", "gelu"])
def test_mlp_gradients(activation):
    _check_mlp(activation)


def test_layernorm_gradients():
    rng = np.random.default_rng(3)
    store = ParameterStore(dtype=np.float64)
    ln = LayerNorm(store, "ln", 6)
    x = rng.normal(size=(4, 6)) * 2.0 + 1.0
    w = rng.normal(size=(4, 6))

    def loss_and_grad():
        store.zero_grads()
        y = ln.forward(x)
        ln.backward(w / x.size)
        return float(np.sum(y * w)) / x.size

    assert max_param_rel_error(store, loss_and_grad) < TOL


def test_layernorm_input_gradient_fd():
    rng = np.random.default_rng(5)
    store = ParameterStore(dtype=np.float64)
    ln = LayerNorm(store, "ln", 5)
    x0 = rng.normal(size=(3, 5))
    w = rng.normal(size=(3, 5))
    ln.forward(x0)
    dx = ln.backward(w)
    eps = 1e-6
    for idx in [(0, 0), (1, 3), (2, 4)]:
        xp = x0.copy()
        xp[idx] += eps
        xm = x0.copy()
        xm[idx] -= eps
        num = (np.sum(ln.forward(xp) * w) - np.sum(ln.forward(xm) * w)) / (2 * eps)
        assert abs(num - dx[idx]) / max(1e-6, abs(num) + abs(dx[idx])) < TOL


def test_activation_derivatives_match_fd():
    rng = np.random.default_rng(11)
    x = rng.normal(size=64) * 2.0
    for act in (Tanh(), Elu(), Gelu()):
        y0 = act.forward(x.copy())
        g = act.backward(np.ones_like(x))
        eps = 1e-6
        num = (act.forward(x + eps) - act.forward(x - eps)) / (2 * eps)
        assert np.allclose(g, num, atol=1e-5), type(act).__name__
        assert y0.shape == x.shape


def test_transformer_gradients():
    rng = np.random.default_rng(19)
    store = ParameterStore(dtype=np.float64)
    stack = TransformerStack(store, "tf", d_model=8, n_heads=2, n_blocks=2, rng=rng)
    x = rng.normal(size=(2, 5, 8))
    w = rng.normal(size=(2, 5, 8))

    def loss_and_grad():
        store.zero_grads()
        y = stack.forward(x)
        stack.backward(w / y.size)
        return float(np.sum(y * w)) / y.size

    assert max_param_rel_error(store, loss_and_grad, max_coords=40) < TOL


def test_attention_is_causal():
    rng = np.random.default_rng(23)
    store = ParameterStore(dtype=np.float64)
    stack = TransformerStack(store, "tf", d_model=8, n_heads=2, n_blocks=2, rng=rng)
    x = rng.normal(size=(1, 6, 8))
    y0 = stack.forward(x)
    x_pert = x.copy()
    x_pert[0, 4, 1] += 10.0  # poke token 4; tokens 0..3 must not move
    y1 = stack.forward(x_pert)
    assert np.array_equal(y0[0, :4], y1[0, :4])
    assert not np.allclose(y0[0, 4], y1[0, 4])


def test_positional_encoding_values():
    # dim 4, t = pi/2: components are cos(t), sin(t), cos(0.01 t), sin(0.01 t)
    t = np.pi / 2
    enc = positional_encoding(t, 4)
    w1 = 10000.0 ** (-2.0 / 4.0)
    expect = [np.cos(t), np.sin(t), np.cos(w1 * t), np.sin(w1 * t)]
    assert np.allclose(enc, expect, atol=1e-12)
    # batch shape passthrough
    enc2 = positional_encoding(np.arange(5.0), 6)
    assert enc2.shape == (5, 6)
    assert np.allclose(enc2[0, 0::2], 1.0) and np.allclose(enc2[0, 1::2], 0.0)


def test_adam_converges_on_quadratic():
    store = ParameterStore(dtype=np.float32)
    p = store.add("p", np.array([4.0, -3.0], dtype=np.float32))
    opt = Adam(store, lr=0.1)
    for _ in range(400):
        store.zero_grads()
        store.grads["p"][...] = 2.0 * p
        opt.step()
    assert np.all(np.abs(p) < 1e-3)


def test_clip_grad_norm():
    store = ParameterStore(dtype=np.float32)
    store.add("a", np.zeros(3, dtype=np.float32))
    store.grads["a"][...] = np.array([3.0, 0.0, 4.0])
    norm = clip_grad_norm(store, 1.0)
    assert abs(norm - 5.0) < 1e-6
    assert abs(np.linalg.norm(store.grads["a"]) - 1.0) < 1e-6


def test_dense_nd_batch_shapes():
    rng = np.random.default_rng(2)
    store = ParameterStore(dtype=np.float32)
    d = Dense(store, "d", 4, 7, rng)
    x = rng.normal(size=(3, 5, 4)).astype(np.float32)
    y = d.forward(x)
    assert y.shape == (3, 5, 7)
    dx = d.backward(np.ones_like(y))
    assert dx.shape == x.shape
