"""Two-layer soil-moisture surrogate: three range-specialized LSTM
sub-models blended by a dense aggregator, plus a single-LSTM baseline.

All models map a p-step (u, y) history window to the next output sample.
Multi-step prediction feeds predictions back into the window; the
:class:`RolloutTape` variant keeps the caches needed to backpropagate a
cost on the predicted trajectory to the input sequence, which is what the
gradient-based controller consumes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .excitation import (
    WINDOW,
    Y_RANGE,
    Dataset,
    ScalingSpec,
    window,
)

log = logging.getLogger(__name__)

SUB_MODEL_RANGES = {
    "m1": (0.12, 0.27),
    "m2": (0.21, 0.32),
    "m3": (0.29, 0.40),
}
SUB_MODEL_NAMES = ("m1", "m2", "m3")

# Predictions fed back into the window are clipped to the physically
# admissible water-content interval (residual..saturated for the default
# soil, with a hair of slack).
CLIP_RANGE = (0.066, 0.409)


def sub_model_spec(name: str, hidden: int = 32, p: int = WINDOW) -> nn.NetworkSpec:
    """The wet-range model gets a second recurrent layer; the others one."""
    if name not in SUB_MODEL_NAMES:
        raise ValueError(f"unknown sub-model {name!r}")
    n_layers = 2 if name == "m3" else 1
    return nn.lstm_spec(n_layers, hidden=hidden, window=p)


def aggregator_spec() -> nn.NetworkSpec:
    return nn.dense_spec([3, 16, 16, 1], hidden_activation="sigmoid",
                         output_activation="identity")


def baseline_spec(hidden: int = 32, p: int = WINDOW) -> nn.NetworkSpec:
    """Whole-range single model: two LSTM layers with sigmoid cell updates."""
    return nn.lstm_spec(2, hidden=hidden, window=p,
                        cell_activation="sigmoid", output_activation="tanh")


# ---------------------------------------------------------------------------
# model wrappers


class SurrogateModel:
    """Common interface: scaled forward/backward plus raw-unit prediction."""

    scaler: ScalingSpec
    window: int
    kind: str

    def forward_scaled(self, x):  # pragma: no cover - interface
        raise NotImplementedError

    def backward_scaled(self, dy, cache):  # pragma: no cover - interface
        raise NotImplementedError

    def predict_scaled(self, x) -> np.ndarray:
        return self.forward_scaled(np.asarray(x, dtype=float))[0]

    def predict_one_step(self, history) -> np.ndarray:
        """history: (p, 2) or (B, p, 2) raw-unit (u, y) rows, oldest first."""
        h = np.asarray(history, dtype=float)
        single = h.ndim == 2
        if single:
            h = h[None]
        if h.shape[1:] != (self.window, 2):
            raise ValueError(f"expected (*, {self.window}, 2) history, got {h.shape}")
        x = np.empty_like(h)
        x[..., 0] = self.scaler.scale_u(h[..., 0])
        x[..., 1] = self.scaler.scale_y(h[..., 1])
        y = self.scaler.unscale_y(self.predict_scaled(x))
        if np.any(y < Y_RANGE[0]) or np.any(y > Y_RANGE[1]):
            log.warning("prediction outside the modeled output range "
                        "[%.2f, %.2f]: %s", *Y_RANGE, np.round(y, 4))
        return float(y[0]) if single else y


class TwoLayerSurrogate(SurrogateModel):
    kind = "two_layer"

    def __init__(self, subs: dict, aggregator: nn.Network, scaler: ScalingSpec,
                 p: int = WINDOW):
        missing = [n for n in SUB_MODEL_NAMES if n not in subs]
        if missing:
            raise ValueError(f"missing sub-models: {missing}")
        self.subs = {n: subs[n] for n in SUB_MODEL_NAMES}
        self.aggregator = aggregator
        self.scaler = scaler
        self.window = p

    def forward_scaled(self, x):
        outs, states = [], []
        for name in SUB_MODEL_NAMES:
            y, st = self.subs[name].forward(x)
            outs.append(y)
            states.append(st)
        features = np.stack(outs, axis=1)
        y, agg_state = self.aggregator.forward(features)
        return y, (states, agg_state)

    def backward_scaled(self, dy, cache):
        states, agg_state = cache
        dfeat, _ = self.aggregator.backward(dy, agg_state)
        dx = None
        for i, name in enumerate(SUB_MODEL_NAMES):
            d, _ = self.subs[name].backward(dfeat[:, i], states[i])
            dx = d if dx is None else dx + d
        return dx

    def networks(self) -> dict:
        out = dict(self.subs)
        out["aggregator"] = self.aggregator
        return out


class SingleLstmSurrogate(SurrogateModel):
    kind = "single_lstm"

    def __init__(self, network: nn.Network, scaler: ScalingSpec, p: int = WINDOW):
        self.network = network
        self.scaler = scaler
        self.window = p

    def forward_scaled(self, x):
        return self.network.forward(x)

    def backward_scaled(self, dy, cache):
        return self.network.backward(dy, cache)[0]

    def networks(self) -> dict:
        return {"baseline": self.network}


# ---------------------------------------------------------------------------
# persistence

_MANIFEST = "surrogate.json"


def save_surrogate(model: SurrogateModel, dirpath) -> None:
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    manifest = {"kind": model.kind, "window": model.window,
                "scaler": model.scaler.to_dict()}
    (dirpath / _MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    for role, net in model.networks().items():
        nn.save_model(net, dirpath / f"{role}.bin", extra={"role": role})


def load_surrogate(dirpath) -> SurrogateModel:
    dirpath = Path(dirpath)
    manifest = json.loads((dirpath / _MANIFEST).read_text())
    scaler = ScalingSpec.from_dict(manifest["scaler"])
    p = manifest["window"]
    if manifest["kind"] == "two_layer":
        subs = {n: nn.load_model(dirpath / f"{n}.bin") for n in SUB_MODEL_NAMES}
        agg = nn.load_model(dirpath / "aggregator.bin")
        return TwoLayerSurrogate(subs, agg, scaler, p)
    if manifest["kind"] == "single_lstm":
        return SingleLstmSurrogate(nn.load_model(dirpath / "baseline.bin"), scaler, p)
    raise ValueError(f"unknown surrogate kind {manifest['kind']!r}")


# ---------------------------------------------------------------------------
# training


def train_sub_model(name: str, dataset: Dataset, scaler: ScalingSpec,
                    cfg: nn.TrainConfig, seed: int = 0, hidden: int = 32,
                    p: int = WINDOW):
    net = nn.Network(sub_model_spec(name, hidden, p), seed=seed)
    w = window(dataset, scaler, p=p)
    result = nn.train(net, w.inputs, w.targets, cfg)
    return net, result


def aggregator_features(subs: dict, inputs: np.ndarray) -> np.ndarray:
    """Frozen sub-model outputs for each scaled window; shape (B, 3)."""
    return np.stack([subs[n].predict(inputs) for n in SUB_MODEL_NAMES], axis=1)


def train_aggregator(subs: dict, dataset: Dataset, scaler: ScalingSpec,
                     cfg: nn.TrainConfig, seed: int = 0, p: int = WINDOW):
    net = nn.Network(aggregator_spec(), seed=seed)
    w = window(dataset, scaler, p=p)
    feats = aggregator_features(subs, w.inputs)
    result = nn.train(net, feats, w.targets, cfg)
    return net, result


def train_baseline(dataset: Dataset, scaler: ScalingSpec, cfg: nn.TrainConfig,
                   seed: int = 0, hidden: int = 32, p: int = WINDOW):
    net = nn.Network(baseline_spec(hidden, p), seed=seed)
    w = window(dataset, scaler, p=p)
    result = nn.train(net, w.inputs, w.targets, cfg)
    return net, result


# ---------------------------------------------------------------------------
# multi-step rollout and validation


@dataclass
class RolloutResult:
    preds: np.ndarray      # (B, N) raw-unit predictions after correction/clip
    raw: np.ndarray        # (B, N) uncorrected model outputs
    n_clipped: int


def rollout_batch(model: SurrogateModel, histories: np.ndarray,
                  u_seq: np.ndarray, corrector=None, y_act=None,
                  clip_range=CLIP_RANGE) -> RolloutResult:
    """Autoregressive N-step prediction for a batch of start points.

    ``histories`` is (B, p, 2) raw-unit rows oldest first; ``u_seq`` is
    (B, N) with u_seq[:, 0] the input held over the first predicted
    interval (it overwrites the last history row's input) and u_seq[:, j]
    paired with the j-th prediction when it is fed back.  A corrector, if
    given, adjusts every prediction and observes the actual outputs
    ``y_act`` (B, N) to refresh its parameters.
    """
    histories = np.asarray(histories, dtype=float)
    u_seq = np.asarray(u_seq, dtype=float)
    B, p, _ = histories.shape
    N = u_seq.shape[1]
    sc = model.scaler
    x = np.empty_like(histories)
    x[..., 0] = sc.scale_u(histories[..., 0])
    x[..., 1] = sc.scale_y(histories[..., 1])
    u_s = sc.scale_u(u_seq)
    x[:, -1, 0] = u_s[:, 0]

    preds = np.empty((B, N))
    raw = np.empty((B, N))
    n_clipped = 0
    for j in range(N):
        y_raw = sc.unscale_y(model.predict_scaled(x))
        y_corr = corrector.apply(y_raw) if corrector is not None else y_raw
        clipped = np.clip(y_corr, *clip_range)
        n_clipped += int(np.sum(clipped != y_corr))
        raw[:, j] = y_raw
        preds[:, j] = clipped
        if corrector is not None and y_act is not None:
            corrector.record_and_maybe_update(y_act[:, j], y_raw)
        if j < N - 1:
            row = np.stack([u_s[:, j + 1], sc.scale_y(clipped)], axis=1)
            x = np.concatenate([x[:, 1:, :], row[:, None, :]], axis=1)
    if n_clipped:
        log.debug("clipped %d of %d fed-back predictions", n_clipped, B * N)
    return RolloutResult(preds, raw, n_clipped)


def nrmse(actual: np.ndarray, predicted: np.ndarray) -> float:
    """Root-mean-square error normalized by the range of the actual data."""
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.shape != predicted.shape or actual.size == 0:
        raise ValueError("actual/predicted must be equal-length and nonempty")
    span = float(np.max(actual) - np.min(actual))
    if span <= 0:
        raise ValueError("actual data has zero range")
    return float(np.sqrt(np.mean((actual - predicted) ** 2)) / span)


def multi_step_predictions(model: SurrogateModel, dataset: Dataset,
                           horizon: int = 20, stride: int = 1):
    """Rollouts from every admissible start; returns (starts, RolloutResult).

    History windows use the noisy (measured) outputs; inputs are the
    recorded series.  Prediction j of start s corresponds to clean sample
    s + p + j.
    """
    p = model.window
    n = len(dataset)
    starts = np.arange(0, n - p - horizon + 1, stride)
    if len(starts) == 0:
        raise ValueError("dataset too short for the requested horizon")
    histories = np.empty((len(starts), p, 2))
    u_seq = np.empty((len(starts), horizon))
    for i, s in enumerate(starts):
        histories[i, :, 0] = dataset.u[s:s + p]
        histories[i, :, 1] = dataset.y_noisy[s:s + p]
        u_seq[i] = dataset.u[s + p - 1:s + p - 1 + horizon]
    return starts, rollout_batch(model, histories, u_seq)


def multi_step_nrmse(model: SurrogateModel, dataset: Dataset,
                     steps=(1, 10, 20), stride: int = 1) -> dict:
    """RMSE of the k-step-ahead prediction against the clean output,
    normalized by the dataset's clean operating range."""
    horizon = max(steps)
    starts, result = multi_step_predictions(model, dataset, horizon, stride)
    p = model.window
    lo, hi = dataset.operating_range
    if hi <= lo:
        raise ValueError("dataset output has zero range")
    out = {}
    for k in steps:
        actual = dataset.y_clean[starts + p + k - 1]
        err = actual - result.preds[:, k - 1]
        out[int(k)] = float(np.sqrt(np.mean(err * err)) / (hi - lo))
    return out


def validation_table(models: dict, datasets: dict, steps=(1, 10, 20),
                     stride: int = 1) -> list:
    """NRMSE rows [{'model', 'step', 'nrmse'}] for each (model, dataset)."""
    rows = []
    for name, model in models.items():
        scores = multi_step_nrmse(model, datasets[name], steps, stride)
        for k in steps:
            rows.append({"model": name, "step": int(k), "nrmse": scores[k]})
    return rows


def write_validation_csv(rows: list, path) -> None:
    lines = ["model,step,nrmse"]
    lines += [f"{r['model']},{r['step']},{r['nrmse']:.6f}" for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# differentiable rollout for gradient-based control


class RolloutTape:
    """N-step rollout from one history, differentiable in the input sequence.

    Works in scaled units throughout: inputs are in [0, 1], outputs in the
    scaled output interval.  An affine output correction (gain, offset) in
    raw units is folded into scaled space.  No clipping is applied so the
    chain rule holds everywhere.
    """

    def __init__(self, model: SurrogateModel, history_raw: np.ndarray,
                 gain: float = 1.0, offset: float = 0.0):
        sc = model.scaler
        h = np.asarray(history_raw, dtype=float)
        if h.shape != (model.window, 2):
            raise ValueError(f"expected ({model.window}, 2) history, got {h.shape}")
        self.model = model
        self.hist = np.stack([sc.scale_u(h[:, 0]), sc.scale_y(h[:, 1])], axis=1)
        # raw-unit y = a*y + b maps to scaled s -> a*s + g*((a-1)*o + b)
        self.gain = float(gain)
        self.offset_scaled = sc.y_gain * ((gain - 1.0) * sc.y_offset + offset)
        self._caches = None

    def forward(self, u_scaled: np.ndarray) -> np.ndarray:
        """u_scaled: (B, N) candidate input sequences; returns scaled,
        correction-adjusted predictions (B, N)."""
        u = np.asarray(u_scaled, dtype=float)
        B, N = u.shape
        x = np.broadcast_to(self.hist, (B,) + self.hist.shape).copy()
        x[:, -1, 0] = u[:, 0]
        preds = np.empty((B, N))
        caches = []
        for j in range(N):
            y, cache = self.model.forward_scaled(x)
            yc = self.gain * y + self.offset_scaled
            preds[:, j] = yc
            caches.append(cache)
            if j < N - 1:
                row = np.stack([u[:, j + 1], yc], axis=1)
                x = np.concatenate([x[:, 1:, :], row[:, None, :]], axis=1)
        self._caches = caches
        self._shape = (B, N)
        return preds

    def backward(self, dpreds: np.ndarray) -> np.ndarray:
        """Gradient of sum(dpreds * preds) with respect to u_scaled."""
        if self._caches is None:
            raise RuntimeError("forward() must run before backward()")
        B, N = self._shape
        dpreds = np.asarray(dpreds, dtype=float)
        du = np.zeros((B, N))
        adj_next = None  # adjoint of the (j+1)-th window
        for j in range(N - 1, -1, -1):
            adj_yc = dpreds[:, j].copy()
            if adj_next is not None:
                adj_yc += adj_next[:, -1, 1]
                du[:, j + 1] += adj_next[:, -1, 0]
            dx = self.model.backward_scaled(adj_yc * self.gain, self._caches[j])
            if adj_next is not None:
                dx[:, 1:, :] += adj_next[:, :-1, :]
            adj_next = dx
        du[:, 0] += adj_next[:, -1, 0]
        return du
