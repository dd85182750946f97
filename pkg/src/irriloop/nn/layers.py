"""Dense and LSTM layers with exact analytic gradients.

Arrays are batch-first: dense layers take (B, D), LSTM layers (B, T, D).
Every layer exposes ``forward(x) -> (y, cache)`` and
``backward(dy, cache) -> (dx, grads)`` where ``grads`` mirrors ``params``.
"""

from __future__ import annotations

import numpy as np


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


_ACTS = {
    "identity": (lambda z: z, lambda y: np.ones_like(y)),
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
    "sigmoid": (sigmoid, lambda y: y * (1.0 - y)),
}


def _fan_in_uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class DenseLayer:
    def __init__(self, n_in: int, n_out: int, activation: str = "identity",
                 rng: np.random.Generator | None = None):
        if activation not in _ACTS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng or np.random.default_rng(0)
        self.n_in = n_in
        self.n_out = n_out
        self.activation = activation
        self.params = {
            "W": _fan_in_uniform(rng, (n_in, n_out), n_in),
            "b": np.zeros(n_out),
        }

    @property
    def takes_sequence(self):
        return False

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"dense layer expects (B, {self.n_in}), got {x.shape}")
        act, _ = _ACTS[self.activation]
        y = act(x @ self.params["W"] + self.params["b"])
        return y, (x, y)

    def backward(self, dy, cache):
        x, y = cache
        _, dact = _ACTS[self.activation]
        dz = dy * dact(y)
        grads = {"W": x.T @ dz, "b": dz.sum(axis=0)}
        return dz @ self.params["W"].T, grads


class LstmLayer:
    """Single LSTM layer over a full sequence.

    Gate activations are sigmoid; ``cell_activation`` (tanh by default)
    is applied to the candidate and to the cell output.  Gate order in the
    packed weight matrices is input, forget, output, candidate.
    """

    def __init__(self, n_in: int, n_hidden: int, cell_activation: str = "tanh",
                 rng: np.random.Generator | None = None):
        if cell_activation not in ("tanh", "sigmoid"):
            raise ValueError(f"unsupported cell activation {cell_activation!r}")
        rng = rng or np.random.default_rng(0)
        self.n_in = n_in
        self.n_hidden = n_hidden
        self.cell_activation = cell_activation
        fan_in = n_in + n_hidden
        b = np.zeros(4 * n_hidden)
        b[n_hidden:2 * n_hidden] = 1.0  # forget-gate bias
        self.params = {
            "Wx": _fan_in_uniform(rng, (n_in, 4 * n_hidden), fan_in),
            "Wh": _fan_in_uniform(rng, (n_hidden, 4 * n_hidden), fan_in),
            "b": b,
        }

    @property
    def takes_sequence(self):
        return True

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ValueError(f"lstm layer expects (B, T, {self.n_in}), got {x.shape}")
        B, T, _ = x.shape
        H = self.n_hidden
        act, _ = _ACTS[self.cell_activation]
        zx = x @ self.params["Wx"] + self.params["b"]
        gates = np.empty((B, T, 4 * H))
        c_seq = np.empty((B, T, H))
        ct_seq = np.empty((B, T, H))
        h_seq = np.empty((B, T, H))
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        Wh = self.params["Wh"]
        for t in range(T):
            z = zx[:, t, :] + h @ Wh
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H:2 * H])
            o = sigmoid(z[:, 2 * H:3 * H])
            g = act(z[:, 3 * H:])
            c = f * c + i * g
            ct = act(c)
            h = o * ct
            gates[:, t, :H] = i
            gates[:, t, H:2 * H] = f
            gates[:, t, 2 * H:3 * H] = o
            gates[:, t, 3 * H:] = g
            c_seq[:, t, :] = c
            ct_seq[:, t, :] = ct
            h_seq[:, t, :] = h
        return h_seq, (x, gates, c_seq, ct_seq, h_seq)

    def backward(self, dh_seq, cache):
        x, gates, c_seq, ct_seq, h_seq = cache
        B, T, _ = x.shape
        H = self.n_hidden
        _, dact = _ACTS[self.cell_activation]
        Wx, Wh = self.params["Wx"], self.params["Wh"]
        dz_seq = np.empty((B, T, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            i = gates[:, t, :H]
            f = gates[:, t, H:2 * H]
            o = gates[:, t, 2 * H:3 * H]
            g = gates[:, t, 3 * H:]
            ct = ct_seq[:, t, :]
            dh = dh_seq[:, t, :] + dh_next
            dc = dc_next + dh * o * dact(ct)
            c_prev = c_seq[:, t - 1, :] if t > 0 else np.zeros((B, H))
            dz = dz_seq[:, t, :]
            dz[:, :H] = dc * g * i * (1.0 - i)
            dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * H:3 * H] = dh * ct * o * (1.0 - o)
            dz[:, 3 * H:] = dc * i * dact(g)
            dh_next = dz @ Wh.T
            dc_next = dc * f
        flat_dz = dz_seq.reshape(B * T, 4 * H)
        grads = {
            "Wx": x.reshape(B * T, self.n_in).T @ flat_dz,
            "Wh": np.zeros_like(Wh),
            "b": flat_dz.sum(axis=0),
        }
        # recurrent weight gradient pairs h(t-1) with z(t)
        if T > 1:
            h_prev = h_seq[:, :-1, :].reshape(B * (T - 1), H)
            grads["Wh"] = h_prev.T @ dz_seq[:, 1:, :].reshape(B * (T - 1), 4 * H)
        return dz_seq @ Wx.T, grads
