"""Mean-squared-error training with Adam and best-validation selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import Network


class TrainingDiverged(RuntimeError):
    """Loss became non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    validation_split: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.epochs, self.batch_size) <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs, batch size, and learning rate must be positive")
        if not 0.0 <= self.validation_split <= 0.5:
            raise ValueError("validation split must lie in [0, 0.5]")


@dataclass
class TrainResult:
    network: Network
    train_loss: list
    val_loss: list
    best_epoch: int


class Adam:
    def __init__(self, network: Network, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = [{k: np.zeros_like(v) for k, v in layer.params.items()}
                  for layer in network.layers]
        self.v = [{k: np.zeros_like(v) for k, v in layer.params.items()}
                  for layer in network.layers]

    def update(self, network: Network, grads):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for i, layer in enumerate(network.layers):
            for k, g in grads[i].items():
                m = self.m[i][k]
                v = self.v[i][k]
                m *= c.beta1
                m += (1.0 - c.beta1) * g
                v *= c.beta2
                v += (1.0 - c.beta2) * g * g
                layer.params[k] -= c.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


def mse(network: Network, inputs, targets) -> float:
    pred = network.predict(inputs)
    return float(np.mean((pred - targets) ** 2))


def batch_gradients(network: Network, inputs, targets):
    """MSE loss and its exact gradients over one batch."""
    pred, state = network.forward(inputs)
    resid = pred - targets
    loss = float(np.mean(resid**2))
    dpred = 2.0 * resid / resid.size
    _, grads = network.backward(dpred, state)
    return loss, grads


def train(network: Network, inputs, targets, cfg: TrainConfig) -> TrainResult:
    """Adam over shuffled mini-batches; returns the parameters that achieved
    the best validation loss (the initial parameters count as epoch 0)."""
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if len(targets) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(targets))
    n_val = int(round(cfg.validation_split * len(targets)))
    val_idx, train_idx = order[:n_val], order[n_val:]
    x_tr, t_tr = inputs[train_idx], targets[train_idx]
    x_val, t_val = (inputs[val_idx], targets[val_idx]) if n_val else (x_tr, t_tr)

    opt = Adam(network, cfg)
    val0 = mse(network, x_val, t_val)
    val_hist = [val0]
    train_hist = [mse(network, x_tr, t_tr)]
    best_val = val0
    best_state = network.get_state()
    best_epoch = 0

    n = len(t_tr)
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss, grads = batch_gradients(network, x_tr[idx], t_tr[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            opt.update(network, grads)
            epoch_loss += loss * len(idx)
        train_hist.append(epoch_loss / n)
        val = mse(network, x_val, t_val)
        if not np.isfinite(val):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        val_hist.append(val)
        if val < best_val:
            best_val = val
            best_state = network.get_state()
            best_epoch = epoch
    network.set_state(best_state)
    return TrainResult(network, train_hist, val_hist, best_epoch)
