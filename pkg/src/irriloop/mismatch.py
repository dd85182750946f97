"""Online plant-model mismatch compensation.

Two correction laws run alongside the predictor and are refreshed every f
steps from the latest prediction errors:

* ``single_bias`` — an additive offset set to the mean of the last f
  errors of the corrected prediction.
* ``linear`` — an affine map a * y + b fitted to the last f (model
  output, actual) pairs by box-constrained least squares.

Both work elementwise over a batch of independent prediction streams so a
whole validation sweep updates in one vectorized pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .excitation import Dataset
from .surrogate import SurrogateModel, multi_step_predictions, rollout_batch

KINDS = ("none", "single_bias", "linear")
A_BOX = (0.8, 1.5)
B_BOX = (-0.2, 0.3)


@dataclass(frozen=True)
class CorrectionConfig:
    kind: str = "single_bias"
    f: int = 2
    a_box: tuple = A_BOX
    b_box: tuple = B_BOX

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown correction kind {self.kind!r}")
        if self.f < 1:
            raise ValueError("update interval f must be >= 1")
        if self.kind == "linear" and self.f < 2:
            raise ValueError("linear correction needs f >= 2 error samples")
        if self.a_box[0] > self.a_box[1] or self.b_box[0] > self.b_box[1]:
            raise ValueError("degenerate parameter boxes")
        if not (self.a_box[0] <= 1.0 <= self.a_box[1] and
                self.b_box[0] <= 0.0 <= self.b_box[1]):
            raise ValueError("parameter boxes must contain the identity map")


def box_lstsq(x: np.ndarray, y: np.ndarray, a_box=A_BOX, b_box=B_BOX):
    """Minimize sum_i (y_i - a*x_i - b)^2 over the box a_box x b_box.

    ``x`` and ``y`` have shape (f,) or (f, B); the fit runs independently
    per column.  Exact for this convex problem: the optimum is either the
    interior stationary point or the clipped 1-D optimum along one of the
    four box edges.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float).T).T
    y = np.atleast_2d(np.asarray(y, dtype=float).T).T
    f = x.shape[0]
    sx, sy = x.sum(axis=0), y.sum(axis=0)
    sxx, sxy = (x * x).sum(axis=0), (x * y).sum(axis=0)
    var = f * sxx - sx * sx

    cands_a, cands_b = [], []
    with np.errstate(divide="ignore", invalid="ignore"):
        a_free = np.where(var > 1e-20 * np.maximum(sxx, 1.0),
                          (f * sxy - sx * sy) / np.where(var == 0, 1.0, var), 1.0)
    a_free = np.clip(a_free, *a_box)
    cands_a.append(a_free)
    cands_b.append(np.clip((sy - a_free * sx) / f, *b_box))
    for a_edge in a_box:
        a = np.full_like(sx, a_edge)
        cands_a.append(a)
        cands_b.append(np.clip((sy - a * sx) / f, *b_box))
    for b_edge in b_box:
        b = np.full_like(sx, b_edge)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(sxx > 1e-30, (sxy - b * sx) / np.where(sxx == 0, 1.0, sxx), 1.0)
        cands_a.append(np.clip(a, *a_box))
        cands_b.append(b)

    best_a, best_b, best_obj = None, None, None
    for a, b in zip(cands_a, cands_b):
        obj = ((y - a * x - b) ** 2).sum(axis=0)
        if best_obj is None:
            best_a, best_b, best_obj = a.copy(), b.copy(), obj.copy()
        else:
            better = obj < best_obj
            best_a = np.where(better, a, best_a)
            best_b = np.where(better, b, best_b)
            best_obj = np.where(better, obj, best_obj)
    return best_a, best_b


class CorrectionState:
    """Running correction parameters for a batch of prediction streams.

    ``batch=None`` gives scalar parameters (one stream, e.g. the closed
    loop); an integer gives per-stream parameters updated elementwise.
    """

    def __init__(self, cfg: CorrectionConfig, batch: int | None = None):
        self.cfg = cfg
        shape = () if batch is None else (batch,)
        self.b1 = np.zeros(shape)
        self.a = np.ones(shape)
        self.b2 = np.zeros(shape)
        self._count = 0
        self._errors = []   # last f corrected-prediction errors
        self._pairs = []    # last f (raw model output, actual) pairs

    def apply(self, y_pred):
        """Corrected prediction for raw model output(s) ``y_pred``."""
        y_pred = np.asarray(y_pred, dtype=float)
        if self.cfg.kind == "single_bias":
            return y_pred + self.b1
        if self.cfg.kind == "linear":
            return self.a * y_pred + self.b2
        return y_pred

    def affine(self):
        """(gain, offset) equivalent of the current correction."""
        if self.cfg.kind == "single_bias":
            return 1.0, float(self.b1)
        if self.cfg.kind == "linear":
            return float(self.a), float(self.b2)
        return 1.0, 0.0

    def record_and_maybe_update(self, y_act, y_pred_raw) -> None:
        """Log one step's actual output against the raw model output and
        refit the parameters once every f steps."""
        if self.cfg.kind == "none":
            return
        y_act = np.asarray(y_act, dtype=float)
        y_pred_raw = np.asarray(y_pred_raw, dtype=float)
        f = self.cfg.f
        self._errors.append(y_act - self.apply(y_pred_raw))
        self._pairs.append((y_pred_raw, y_act))
        self._errors = self._errors[-f:]
        self._pairs = self._pairs[-f:]
        self._count += 1
        if self._count % f or len(self._errors) < f:
            return
        if self.cfg.kind == "single_bias":
            self.b1 = np.mean(self._errors, axis=0)
        else:
            x = np.stack([p[0] for p in self._pairs])
            y = np.stack([p[1] for p in self._pairs])
            a, b = box_lstsq(x, y, self.cfg.a_box, self.cfg.b_box)
            self.a = a.reshape(self.a.shape)
            self.b2 = b.reshape(self.b2.shape)


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class MismatchReport:
    kind: str
    f: int
    upsilon: float  # mean absolute prediction error, scaled units


def evaluate_correction(model: SurrogateModel, dataset: Dataset,
                        cfg: CorrectionConfig | None, horizon: int = 20,
                        stride: int = 1) -> MismatchReport:
    """Mean absolute multi-step prediction error with the correction live.

    Every admissible start of the dataset contributes an N-step rollout;
    the corrector sees the measured (noisy) outputs as they "arrive" and
    its updates affect the later steps of the same rollout.  The score is
    averaged over all steps and starts in scaled output units.
    """
    if cfg is not None and cfg.kind != "none" and horizon % cfg.f:
        raise ValueError(f"update interval {cfg.f} must divide the horizon {horizon}")
    p = model.window
    n = len(dataset)
    starts = np.arange(0, n - p - horizon + 1, stride)
    if len(starts) == 0:
        raise ValueError("dataset too short for the requested horizon")
    histories = np.empty((len(starts), p, 2))
    u_seq = np.empty((len(starts), horizon))
    y_act = np.empty((len(starts), horizon))
    for i, s in enumerate(starts):
        histories[i, :, 0] = dataset.u[s:s + p]
        histories[i, :, 1] = dataset.y_noisy[s:s + p]
        u_seq[i] = dataset.u[s + p - 1:s + p - 1 + horizon]
        y_act[i] = dataset.y_noisy[s + p:s + p + horizon]
    if cfg is None or cfg.kind == "none":
        result = rollout_batch(model, histories, u_seq)
        kind, f = "none", 0
    else:
        corr = CorrectionState(cfg, batch=len(starts))
        result = rollout_batch(model, histories, u_seq, corrector=corr,
                               y_act=y_act)
        kind, f = cfg.kind, cfg.f
    err = np.abs(y_act - result.preds) * model.scaler.y_gain
    return MismatchReport(kind, f, float(np.mean(err)))


def correction_sweep(model: SurrogateModel, dataset: Dataset,
                     f_values=(1, 2, 5, 10, 20), horizon: int = 20,
                     stride: int = 1) -> list:
    """Reports for no correction plus both laws across update intervals."""
    reports = [evaluate_correction(model, dataset, None, horizon, stride)]
    for kind in ("single_bias", "linear"):
        for f in f_values:
            if kind == "linear" and f < 2:
                continue
            cfg = CorrectionConfig(kind=kind, f=f)
            reports.append(evaluate_correction(model, dataset, cfg, horizon, stride))
    return reports


def write_correction_csv(reports: list, path) -> None:
    lines = ["kind,f,upsilon"]
    lines += [f"{r.kind},{r.f},{r.upsilon:.6f}" for r in reports]
    Path(path).write_text("\n".join(lines) + "\n")
