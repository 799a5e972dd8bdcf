"""Minimal numpy recurrent layers with hand-written backpropagation.

Parameters live in flat ``dict[str, np.ndarray]`` objects so they map one to
one onto named checkpoint tensors.  Every forward function returns the
output plus a cache that its backward counterpart consumes.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

Params = dict


sigmoid = expit


def uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------- LSTM


def init_lstm(rng, params: Params, prefix: str, input_size: int, hidden: int) -> None:
    params[f"{prefix}.W"] = uniform_init(rng, (4 * hidden, input_size + hidden), hidden)
    b = np.zeros(4 * hidden)
    b[hidden : 2 * hidden] = 1.0  # forget-gate bias
    params[f"{prefix}.b"] = b


def lstm_forward(x, W, b):
    """Run one LSTM layer over a batch of sequences.

    x has shape (B, T, D); W is (4H, D + H) with gate blocks ordered
    input, forget, candidate, output.  Returns hidden states (B, T, H).
    """
    B, T, D = x.shape
    H = W.shape[0] // 4
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((B, T, H))
    steps = []
    for t in range(T):
        z = np.concatenate([x[:, t], h], axis=1)
        a = z @ W.T + b
        i = sigmoid(a[:, :H])
        f = sigmoid(a[:, H : 2 * H])
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = sigmoid(a[:, 3 * H :])
        c_prev = c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, t] = h
        steps.append((z, i, f, g, o, c_prev, tc))
    return hs, (steps, W, D)


def lstm_backward(dhs, cache):
    """Backpropagate through :func:`lstm_forward`.

    dhs is the loss gradient w.r.t. every hidden state, shape (B, T, H).
    Returns (dx, dW, db).
    """
    steps, W, D = cache
    B, T, H = dhs.shape
    dW = np.zeros_like(W)
    db = np.zeros(W.shape[0])
    dx = np.empty((B, T, D))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in reversed(range(T)):
        z, i, f, g, o, c_prev, tc = steps[t]
        dh = dhs[:, t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc**2)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        da = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), dg * (1 - g**2), do * o * (1 - o)], axis=1
        )
        dW += da.T @ z
        db += da.sum(axis=0)
        dz = da @ W
        dx[:, t] = dz[:, :D]
        dh_next = dz[:, D:]
        dc_next = dc * f
    return dx, dW, db


def lstm_step(x, h, c, W, b):
    """Single inference step; returns the new (h, c)."""
    H = h.shape[-1]
    a = np.concatenate([x, h], axis=-1) @ W.T + b
    i = sigmoid(a[..., :H])
    f = sigmoid(a[..., H : 2 * H])
    g = np.tanh(a[..., 2 * H : 3 * H])
    o = sigmoid(a[..., 3 * H :])
    c = f * c + i * g
    return o * np.tanh(c), c


def stacked_lstm_forward(params: Params, prefix: str, n_layers: int, x):
    caches = []
    out = x
    for layer in range(n_layers):
        out, cache = lstm_forward(out, params[f"{prefix}{layer}.W"], params[f"{prefix}{layer}.b"])
        caches.append(cache)
    return out, caches


def stacked_lstm_backward(grads: Params, prefix: str, dout, caches):
    for layer in reversed(range(len(caches))):
        dout, dW, db = lstm_backward(dout, caches[layer])
        grads[f"{prefix}{layer}.W"] = grads.get(f"{prefix}{layer}.W", 0) + dW
        grads[f"{prefix}{layer}.b"] = grads.get(f"{prefix}{layer}.b", 0) + db
    return dout


# ---------------------------------------------------------------- GRU


def init_gru(rng, params: Params, prefix: str, input_size: int, hidden: int) -> None:
    params[f"{prefix}.Wzr"] = uniform_init(rng, (2 * hidden, input_size + hidden), hidden)
    params[f"{prefix}.bzr"] = np.zeros(2 * hidden)
    params[f"{prefix}.Wn"] = uniform_init(rng, (hidden, input_size + hidden), hidden)
    params[f"{prefix}.bn"] = np.zeros(hidden)


def gru_cell(x, h, Wzr, bzr, Wn, bn):
    """One GRU update; x is (B, D), h is (B, H).  Returns (h_new, cache)."""
    H = h.shape[1]
    zr = sigmoid(np.concatenate([x, h], axis=1) @ Wzr.T + bzr)
    u, r = zr[:, :H], zr[:, H:]
    xn = np.concatenate([x, r * h], axis=1)
    n = np.tanh(xn @ Wn.T + bn)
    h_new = (1.0 - u) * n + u * h
    return h_new, (x, h, u, r, xn, n)


def gru_cell_backward(dh_new, cache, Wzr, Wn, grads):
    """Returns (dx, dh); accumulates parameter gradients into ``grads``."""
    x, h, u, r, xn, n = cache
    D = x.shape[1]
    du = dh_new * (h - n)
    dn = dh_new * (1.0 - u)
    dh = dh_new * u
    dan = dn * (1.0 - n**2)
    grads["Wn"] += dan.T @ xn
    grads["bn"] += dan.sum(axis=0)
    dxn = dan @ Wn
    dx = dxn[:, :D].copy()
    drh = dxn[:, D:]
    dr = drh * h
    dh += drh * r
    dazr = np.concatenate([du * u * (1 - u), dr * r * (1 - r)], axis=1)
    grads["Wzr"] += dazr.T @ np.concatenate([x, h], axis=1)
    grads["bzr"] += dazr.sum(axis=0)
    dxh = dazr @ Wzr
    dx += dxh[:, :D]
    dh += dxh[:, D:]
    return dx, dh


# ---------------------------------------------------------------- optimiser


def global_norm(grads: Params) -> float:
    return float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))


class SGD:
    """Stochastic gradient descent with global-norm clipping.

    ``momentum=0`` gives the plain update.
    """

    def __init__(self, lr: float, clip_norm: float | None = None, momentum: float = 0.0):
        self.lr = lr
        self.clip_norm = clip_norm
        self.momentum = momentum
        self.velocity: Params = {}

    def step(self, params: Params, grads: Params, skip=()) -> float:
        norm = global_norm(grads)
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / norm
        for name, g in grads.items():
            if name in skip:
                continue
            g = g * scale
            if self.momentum:
                v = self.velocity.get(name)
                v = g if v is None else self.momentum * v + g
                self.velocity[name] = v
                g = v
            params[name] = params[name] - self.lr * g
        return norm
