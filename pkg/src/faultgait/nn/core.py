"""Minimal reverse-mode neural net layers on numpy.

Everything here is a plain layer object holding its parameters in a shared
ParameterStore. forward() caches what backward() needs; backward() takes the
gradient w.r.t. the output, accumulates parameter gradients into the store
and returns the gradient w.r.t. the input. One forward/backward pair per
layer per step, which is all the training loops need.

The store dtype is float32 for training and float64 for gradient checking.
"""

import numpy as np


class ParameterStore:
    """Named parameter arrays plus matching gradient buffers."""

    def __init__(self, dtype=np.float32):
        self.dtype = dtype
        self.params = {}
        self.grads = {}

    def add(self, name, value):
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        arr = np.array(value, dtype=self.dtype)
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)
        return arr

    def zero_grads(self):
        for g in self.grads.values():
            g[...] = 0.0

    def n_params(self):
        return sum(p.size for p in self.params.values())

    def state_dict(self):
        return {k: v.copy() for k, v in self.params.items()}

    def load_state_dict(self, state, strict=True):
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if strict and (missing or extra):
            raise ValueError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, value in state.items():
            if name not in self.params:
                continue
            if self.params[name].shape != value.shape:
                raise ValueError(f"shape mismatch for {name!r}: {self.params[name].shape} vs {value.shape}")
            self.params[name][...] = value


def global_grad_norm(store):
    total = 0.0
    for g in store.grads.values():
        total += float(np.sum(g.astype(np.float64) ** 2))
    return float(np.sqrt(total))


def clip_grad_norm(store, max_norm):
    """Scale all gradients so the global norm is at most max_norm."""
    norm = global_grad_norm(store)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in store.grads.values():
            g *= scale
    return norm


class Adam:
    """Adam over every parameter in a store."""

    def __init__(self, store, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in store.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in store.params.items()}

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, p in self.store.params.items():
            g = self.store.grads[name]
            m = self.m[name]
            v = self.v[name]
            m[...] = b1 * m + (1.0 - b1) * g
            v[...] = b2 * v + (1.0 - b2) * g * g
            p -= lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def _uniform_init(rng, n_in, shape, scale, dtype):
    # torch-style fan-in bound; scale shrinks output heads
    bound = scale * np.sqrt(1.0 / n_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Dense:
    """Affine layer y = x W + b over the last axis."""

    def __init__(self, store, name, n_in, n_out, rng, w_scale=1.0):
        self.name = name
        self.n_in = n_in
        self.n_out = n_out
        self.store = store
        self.W = store.add(f"{name}.W", _uniform_init(rng, n_in, (n_in, n_out), w_scale, store.dtype))
        self.b = store.add(f"{name}.b", np.zeros(n_out, dtype=store.dtype))
        self._x = None

    def forward(self, x):
        self._x = x
        y = x.reshape(-1, self.n_in) @ self.W + self.b
        return y.reshape(x.shape[:-1] + (self.n_out,))

    def backward(self, dy):
        x2 = self._x.reshape(-1, self.n_in)
        dy2 = dy.reshape(-1, self.n_out)
        self.store.grads[f"{self.name}.W"] += x2.T @ dy2
        self.store.grads[f"{self.name}.b"] += dy2.sum(axis=0)
        dx = dy2 @ self.W.T
        return dx.reshape(self._x.shape)


class Tanh:
    def __init__(self):
        self._y = None

    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy):
        return dy * (1.0 - self._y * self._y)


class Elu:
    def __init__(self, alpha=1.0):
        self.alpha = alpha
        self._x = None
        self._y = None

    def forward(self, x):
        self._x = x
        self._y = np.where(x > 0.0, x, self.alpha * np.expm1(x))
        return self._y

    def backward(self, dy):
        return dy * np.where(self._x > 0.0, 1.0, self._y + self.alpha)


_GELU_C = np.sqrt(2.0 / np.pi)


class Gelu:
    """tanh-approximation GELU, as used in GPT-style blocks."""

    def __init__(self):
        self._x = None
        self._t = None

    def forward(self, x):
        self._x = x
        self._t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
        return 0.5 * x * (1.0 + self._t)

    def backward(self, dy):
        x, t = self._x, self._t
        du = _GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
        return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


class LayerNorm:
    """Normalisation over the last axis with learned gain and shift."""

    def __init__(self, store, name, dim, eps=1e-5):
        self.name = name
        self.dim = dim
        self.eps = eps
        self.store = store
        self.g = store.add(f"{name}.g", np.ones(dim, dtype=store.dtype))
        self.b = store.add(f"{name}.b", np.zeros(dim, dtype=store.dtype))
        self._xhat = None
        self._inv = None

    def forward(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        self._inv = 1.0 / np.sqrt(var + self.eps)
        self._xhat = (x - mu) * self._inv
        return self._xhat * self.g + self.b

    def backward(self, dy):
        xhat = self._xhat
        self.store.grads[f"{self.name}.g"] += (dy * xhat).reshape(-1, self.dim).sum(axis=0)
        self.store.grads[f"{self.name}.b"] += dy.reshape(-1, self.dim).sum(axis=0)
        dxhat = dy * self.g
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        return self._inv * (dxhat - m1 - xhat * m2)


class Dropout:
    """Inverted dropout; identity when eval or p = 0."""

    def __init__(self, p):
        self.p = p
        self._mask = None

    def forward(self, x, rng=None, train=False):
        if not train or self.p <= 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.p
        self._mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, dy):
        if self._mask is None:
            return dy
        return dy * self._mask


_ACTIVATIONS = {"tanh": Tanh, "elu": Elu, "gelu": Gelu}


class Mlp:
    """Dense stack with a shared activation and a linear output layer."""

    def __init__(self, store, name, sizes, rng, activation="elu", out_scale=1.0):
        if len(sizes) < 2:
            raise ValueError("sizes needs at least input and output dims")
        act_cls = _ACTIVATIONS[activation]
        self.layers = []
        for i in range(len(sizes) - 1):
            last = i == len(sizes) - 2
            scale = out_scale if last else 1.0
            self.layers.append(Dense(store, f"{name}.l{i}", sizes[i], sizes[i + 1], rng, w_scale=scale))
            if not last:
                self.layers.append(act_cls())

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy
