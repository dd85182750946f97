"""Layer stacks mapping a (u, y) history window to a scalar prediction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import DenseLayer, LstmLayer


@dataclass(frozen=True)
class LayerSpec:
    kind: str                 # "lstm" or "dense"
    n_in: int
    n_out: int
    activation: str = "tanh"  # cell activation for lstm, output activation for dense

    def to_dict(self):
        return {"kind": self.kind, "n_in": self.n_in, "n_out": self.n_out,
                "activation": self.activation}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["n_in"], d["n_out"], d["activation"])


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer list plus the expected input window shape."""

    layers: tuple
    window: int       # p; 0 for dense-only networks taking flat inputs
    channels: int

    def __post_init__(self):
        prev = self.channels
        for ls in self.layers:
            if ls.n_in != prev:
                raise ValueError(
                    f"layer dimension mismatch: expected input {prev}, spec says {ls.n_in}"
                )
            prev = ls.n_out

    def to_dict(self):
        return {"layers": [ls.to_dict() for ls in self.layers],
                "window": self.window, "channels": self.channels}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(LayerSpec.from_dict(x) for x in d["layers"]),
                   d["window"], d["channels"])


def lstm_spec(n_lstm_layers: int, hidden: int = 32, window: int = 20,
              channels: int = 2, cell_activation: str = "tanh",
              output_activation: str = "tanh") -> NetworkSpec:
    """Recurrent predictor: LSTM stack plus a dense head on the last state."""
    layers = []
    n_in = channels
    for _ in range(n_lstm_layers):
        layers.append(LayerSpec("lstm", n_in, hidden, cell_activation))
        n_in = hidden
    layers.append(LayerSpec("dense", n_in, 1, output_activation))
    return NetworkSpec(tuple(layers), window, channels)


def dense_spec(sizes, hidden_activation: str = "sigmoid",
               output_activation: str = "identity") -> NetworkSpec:
    """Fully connected stack; ``sizes`` runs input..output."""
    layers = []
    for k in range(len(sizes) - 1):
        act = output_activation if k == len(sizes) - 2 else hidden_activation
        layers.append(LayerSpec("dense", sizes[k], sizes[k + 1], act))
    return NetworkSpec(tuple(layers), 0, sizes[0])


class Network:
    """A stack of layers; LSTM layers consume the sequence, the first dense
    layer takes the final hidden state."""

    def __init__(self, spec: NetworkSpec, seed: int = 0):
        self.spec = spec
        rng = np.random.default_rng(seed)
        self.layers = []
        for ls in spec.layers:
            if ls.kind == "lstm":
                self.layers.append(LstmLayer(ls.n_in, ls.n_out, ls.activation, rng))
            elif ls.kind == "dense":
                self.layers.append(DenseLayer(ls.n_in, ls.n_out, ls.activation, rng))
            else:
                raise ValueError(f"unknown layer kind {ls.kind!r}")

    def forward(self, x: np.ndarray):
        """x: (B, p, channels) for recurrent specs, (B, channels) for dense.

        Returns (pred (B,), caches).
        """
        x = np.asarray(x, dtype=float)
        caches = []
        out = x
        squeezed = False
        for layer in self.layers:
            if not layer.takes_sequence and out.ndim == 3:
                out = out[:, -1, :]
                squeezed = True
            out, cache = layer.forward(out)
            caches.append(cache)
        if out.shape[1] != 1:
            raise ValueError("network head must emit a single output")
        return out[:, 0], (caches, x.shape, squeezed)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, dpred: np.ndarray, state):
        """Backpropagate d(loss)/d(pred) of shape (B,).

        Returns (dx, grads_per_layer) with dx matching the forward input
        shape.
        """
        caches, x_shape, squeezed = state
        grad = np.asarray(dpred, dtype=float)[:, None]
        grads = [None] * len(self.layers)
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            grad, grads[idx] = layer.backward(grad, caches[idx])
            prev_is_seq = idx > 0 and self.layers[idx - 1].takes_sequence
            if not layer.takes_sequence and grad.ndim == 2 and (prev_is_seq or
                    (idx == 0 and squeezed)):
                # undo the last-timestep selection
                B = grad.shape[0]
                T = x_shape[1] if idx == 0 else caches[idx - 1][4].shape[1]
                full = np.zeros((B, T, grad.shape[1]))
                full[:, -1, :] = grad
                grad = full
        return grad, grads

    # -- parameter plumbing ------------------------------------------------

    def parameters(self):
        """Iterate (layer_index, name, array)."""
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params.items():
                yield i, name, arr

    def get_state(self):
        return [{k: v.copy() for k, v in layer.params.items()} for layer in self.layers]

    def set_state(self, state):
        for layer, st in zip(self.layers, state):
            for k in layer.params:
                layer.params[k] = st[k].copy()
