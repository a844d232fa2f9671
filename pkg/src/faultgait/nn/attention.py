"""Causal transformer pieces: sinusoidal positions, attention, blocks.

Positions are local to the rolling context window (0 .. window-1), not
absolute episode time, so the encoding accepts float inputs and small
integer positions equally.
"""

import numpy as np

from .core import Dense, Dropout, Gelu, LayerNorm


def positional_encoding(t, dim):
    """Sinusoidal encoding of position t into R^dim.

    Component 2k is cos(w_k t) and 2k+1 is sin(w_k t) with
    w_k = 10000^(-2k/dim). t may be a scalar or an array; output shape is
    t.shape + (dim,).
    """
    t = np.asarray(t, dtype=np.float64)
    k = np.arange(dim) // 2
    omega = 10000.0 ** (-2.0 * k / dim)
    ang = t[..., None] * omega
    enc = np.where(np.arange(dim) % 2 == 0, np.cos(ang), np.sin(ang))
    return enc


def softmax_lastaxis(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class CausalSelfAttention:
    """Multi-head self-attention with a strict lower-triangular mask."""

    def __init__(self, store, name, d_model, n_heads, rng, dropout=0.0):
        if d_model % n_heads:
            raise ValueError("d_model must divide evenly into heads")
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.qkv = Dense(store, f"{name}.qkv", d_model, 3 * d_model, rng)
        self.proj = Dense(store, f"{name}.proj", d_model, d_model, rng)
        self.att_drop = Dropout(dropout)
        self._cache = None

    def forward(self, x, rng=None, train=False):
        B, T, D = x.shape
        H, dh = self.n_heads, self.d_head
        qkv = self.qkv.forward(x).reshape(B, T, 3, H, dh)
        q = np.ascontiguousarray(qkv[:, :, 0].transpose(0, 2, 1, 3))  # (B,H,T,dh)
        k = np.ascontiguousarray(qkv[:, :, 1].transpose(0, 2, 1, 3))
        v = np.ascontiguousarray(qkv[:, :, 2].transpose(0, 2, 1, 3))
        scores = (q @ k.transpose(0, 1, 3, 2)) / np.sqrt(dh)
        mask = np.tril(np.ones((T, T), dtype=bool))
        scores = np.where(mask, scores, -np.inf)
        P = softmax_lastaxis(scores)
        Pd = self.att_drop.forward(P, rng=rng, train=train)
        y = Pd @ v  # (B,H,T,dh)
        out = self.proj.forward(np.ascontiguousarray(y.transpose(0, 2, 1, 3)).reshape(B, T, D))
        self._cache = (q, k, v, P, Pd, (B, T))
        return out

    def backward(self, dout):
        q, k, v, P, Pd, (B, T) = self._cache
        H, dh, D = self.n_heads, self.d_head, self.d_model
        dy = self.proj.backward(dout).reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        dPd = dy @ v.transpose(0, 1, 3, 2)
        dv = Pd.transpose(0, 1, 3, 2) @ dy
        dP = self.att_drop.backward(dPd)
        # softmax backward; masked entries have P = 0 so they drop out
        dS = P * (dP - (dP * P).sum(axis=-1, keepdims=True))
        dS = dS / np.sqrt(dh)
        dq = dS @ k
        dk = dS.transpose(0, 1, 3, 2) @ q
        dqkv = np.empty((B, T, 3, H, dh), dtype=dq.dtype)
        dqkv[:, :, 0] = dq.transpose(0, 2, 1, 3)
        dqkv[:, :, 1] = dk.transpose(0, 2, 1, 3)
        dqkv[:, :, 2] = dv.transpose(0, 2, 1, 3)
        return self.qkv.backward(dqkv.reshape(B, T, 3 * D))


class TransformerBlock:
    """Pre-norm block: x + drop(attn(ln(x))), then x + drop(mlp(ln(x)))."""

    def __init__(self, store, name, d_model, n_heads, rng, dropout=0.0):
        self.ln1 = LayerNorm(store, f"{name}.ln1", d_model)
        self.attn = CausalSelfAttention(store, f"{name}.attn", d_model, n_heads, rng, dropout)
        self.drop1 = Dropout(dropout)
        self.ln2 = LayerNorm(store, f"{name}.ln2", d_model)
        self.fc1 = Dense(store, f"{name}.fc1", d_model, 4 * d_model, rng)
        self.act = Gelu()
        self.fc2 = Dense(store, f"{name}.fc2", 4 * d_model, d_model, rng)
        self.drop2 = Dropout(dropout)

    def forward(self, x, rng=None, train=False):
        x = x + self.drop1.forward(self.attn.forward(self.ln1.forward(x), rng=rng, train=train), rng=rng, train=train)
        h = self.fc2.forward(self.act.forward(self.fc1.forward(self.ln2.forward(x))))
        return x + self.drop2.forward(h, rng=rng, train=train)

    def backward(self, dy):
        dh = self.drop2.backward(dy)
        dx = self.ln2.backward(self.fc1.backward(self.act.backward(self.fc2.backward(dh))))
        dy = dy + dx
        da = self.ln1.backward(self.attn.backward(self.drop1.backward(dy)))
        return dy + da


class TransformerStack:
    """Block stack with a final layer norm."""

    def __init__(self, store, name, d_model, n_heads, n_blocks, rng, dropout=0.0):
        self.blocks = [
            TransformerBlock(store, f"{name}.b{i}", d_model, n_heads, rng, dropout) for i in range(n_blocks)
        ]
        self.ln_f = LayerNorm(store, f"{name}.lnf", d_model)

    def forward(self, x, rng=None, train=False):
        for block in self.blocks:
            x = block.forward(x, rng=rng, train=train)
        return self.ln_f.forward(x)

    def backward(self, dy):
        dy = self.ln_f.backward(dy)
        for block in reversed(self.blocks):
            dy = block.backward(dy)
        return dy
