"""Zone-tracking model predictive control with a shrinking target zone.

The controller minimizes, over an N-step input sequence in scaled units
[0, 1], the squared distance of the predicted output to a (possibly
time-shrinking) target zone plus a quadratic input penalty, with the
admissible output interval enforced as a soft quadratic penalty.  The
optimizer is projected gradient descent with a backtracking line search;
gradients flow through the predictor (backpropagation for network
surrogates, finite differences for the physics-based predictor), and
several candidate sequences descend in one batch with a deterministic
argmin tie-break.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from time import perf_counter

import numpy as np

from .excitation import U_MAX_DEFAULT, WINDOW, Y_RANGE
from .surrogate import RolloutTape, SurrogateModel


@dataclass(frozen=True)
class ZoneSpec:
    """Target zone: initial bounds, terminal bounds, and shrink rate."""

    lo_init: float = 0.18
    hi_init: float = 0.23
    lo_term: float = 0.20
    hi_term: float = 0.21
    mu: float = 0.0
    horizon: int = 20

    def __post_init__(self):
        if not (self.lo_init <= self.hi_init and self.lo_term <= self.hi_term):
            raise ValueError("zone bounds must be ordered")
        if not (self.lo_init <= self.lo_term and self.hi_term <= self.hi_init):
            raise ValueError("terminal zone must lie inside the initial zone")
        if self.mu < 0 or self.horizon < 1:
            raise ValueError("mu must be >= 0 and horizon >= 1")


def zone_bounds(j_offset, zone: ZoneSpec):
    """Zone at j_offset steps into the horizon; accepts scalars or arrays.

    The lower bound rises exponentially toward its terminal value and the
    upper bound decays toward its own, so the zone only ever narrows.
    """
    j = np.asarray(j_offset, dtype=float)
    lower = np.minimum(zone.lo_init * np.exp(zone.mu * j / zone.horizon),
                       zone.lo_term)
    upper = np.maximum(zone.hi_init * np.exp(-zone.mu * j / zone.horizon),
                       zone.hi_term)
    if np.ndim(j_offset) == 0:
        return float(lower), float(upper)
    return lower, upper


@dataclass(frozen=True)
class ZmpcConfig:
    q: float = 4000.0
    r: float = 100.0
    horizon: int = 20
    dt: float = 7200.0
    u_max: float = U_MAX_DEFAULT
    y_set: tuple = Y_RANGE          # admissible outputs, soft-penalized
    y_penalty_factor: float = 100.0  # multiplies q outside y_set
    iters: int = 500
    restarts: int = 3
    tol: float = 1e-7               # relative objective improvement

    def __post_init__(self):
        if self.q < 0 or self.r < 0:
            raise ValueError("weights must be nonnegative")
        if self.horizon < 1 or self.u_max <= 0:
            raise ValueError("horizon must be >= 1 and u_max positive")
        if self.y_set[0] >= self.y_set[1]:
            raise ValueError("output set must be a proper interval")


def interval_distance(y, lo, hi):
    """Euclidean distance from y to the interval [lo, hi]; 0 inside."""
    y = np.asarray(y, dtype=float)
    return np.maximum(0.0, np.maximum(lo - y, y - hi))


def stage_cost(y_hat: float, j_offset: int, u_scaled: float, zone: ZoneSpec,
               cfg: ZmpcConfig) -> float:
    """Single-step tracking cost with the zone slack eliminated: the
    optimal zone point is the clip of the prediction into the zone, so the
    residual is the distance to the interval."""
    lo, hi = zone_bounds(j_offset, zone)
    d = interval_distance(y_hat, lo, hi)
    return float(cfg.q * d**2 + cfg.r * np.asarray(u_scaled, dtype=float)**2)


@dataclass
class OcpSolution:
    u: np.ndarray            # (N,) scaled inputs in [0, 1]
    y_pred: np.ndarray       # (N,) predicted outputs, raw units
    objective: float
    iterations: int
    n_candidates: int
    converged: bool
    trace: list = field(default_factory=list)  # best objective per iteration
    solve_time: float = 0.0


class SurrogatePredictor:
    """Batch predictor over a network surrogate: forecast precipitation is
    added to the irrigation input (both reach the surface identically), and
    an affine output correction is folded into the rollout."""

    def __init__(self, model: SurrogateModel, history_raw: np.ndarray,
                 precip_forecast: np.ndarray, affine=(1.0, 0.0)):
        self.tape = RolloutTape(model, history_raw, gain=affine[0],
                                offset=affine[1])
        self.scaler = model.scaler
        self.p_scaled = self.scaler.scale_u(np.asarray(precip_forecast, dtype=float))

    def rollout(self, u_scaled: np.ndarray) -> np.ndarray:
        return self.scaler.unscale_y(self.tape.forward(u_scaled + self.p_scaled))

    def gradient(self, dJ_dy: np.ndarray) -> np.ndarray:
        """Chain a raw-unit output adjoint back to the scaled inputs; must
        follow a rollout() of the matching batch."""
        return self.tape.backward(dJ_dy / self.scaler.y_gain)


def _objective_terms(y, u, lo, hi, cfg):
    d = interval_distance(y, lo, hi)
    dy = interval_distance(y, *cfg.y_set)
    return (cfg.q * np.sum(d * d, axis=-1)
            + cfg.r * np.sum(u * u, axis=-1)
            + cfg.y_penalty_factor * cfg.q * np.sum(dy * dy, axis=-1))


def _objective_output_grad(y, lo, hi, cfg):
    below = np.where(y < lo, y - lo, 0.0)
    above = np.where(y > hi, y - hi, 0.0)
    g = 2.0 * cfg.q * (below + above)
    below_s = np.where(y < cfg.y_set[0], y - cfg.y_set[0], 0.0)
    above_s = np.where(y > cfg.y_set[1], y - cfg.y_set[1], 0.0)
    g += 2.0 * cfg.y_penalty_factor * cfg.q * (below_s + above_s)
    return g


def solve_ocp(predictor, zone: ZoneSpec, cfg: ZmpcConfig,
              warm_start: np.ndarray | None = None,
              rng: np.random.Generator | None = None) -> OcpSolution:
    """Minimize the horizon cost over u in [0, 1]^N.

    Candidates (optional warm start, zero input, max input, then random
    sequences up to ``restarts`` cold starts) descend together; the best
    final objective wins, with the earliest candidate breaking ties.
    """
    N = cfg.horizon
    lo, hi = zone_bounds(np.arange(N), zone)

    cands = []
    if warm_start is not None:
        w = np.clip(np.asarray(warm_start, dtype=float), 0.0, 1.0)
        if w.shape != (N,):
            raise ValueError(f"warm start must have shape ({N},)")
        cands.append(w)
    cold = [np.zeros(N), np.ones(N)]
    while len(cold) < cfg.restarts:
        if rng is None:
            rng = np.random.default_rng(0)
        cold.append(rng.uniform(0.0, 1.0, N))
    cands.extend(cold[:max(cfg.restarts, 0)])
    if not cands:
        cands.append(np.zeros(N))
    U = np.stack(cands)
    B = len(U)

    def objective(Umat):
        return _objective_terms(predictor.rollout(Umat), Umat, lo, hi, cfg)

    def objective_grad(Umat):
        y = predictor.rollout(Umat)
        J = _objective_terms(y, Umat, lo, hi, cfg)
        dU = predictor.gradient(_objective_output_grad(y, lo, hi, cfg))
        dU += 2.0 * cfg.r * Umat
        return J, dU

    J, G = objective_grad(U)
    step = 1.0 / (np.max(np.abs(G), axis=1) + 1e-12)
    active = np.ones(B, dtype=bool)
    trace = [float(np.min(J))]
    it = 0
    for it in range(1, cfg.iters + 1):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        Ua, Ja, Ga, ta = U[idx], J[idx], G[idx], step[idx]
        accepted = np.zeros(len(idx), dtype=bool)
        U_new, J_new = Ua.copy(), Ja.copy()
        for _ in range(40):
            rem = ~accepted
            if not np.any(rem):
                break
            U_try = np.clip(Ua[rem] - ta[rem, None] * Ga[rem], 0.0, 1.0)
            J_try = objective(U_try)
            decrease = np.einsum("bn,bn->b", Ga[rem], Ua[rem] - U_try)
            ok = J_try <= Ja[rem] - 1e-4 * decrease + 1e-15
            sub = np.flatnonzero(rem)
            U_new[sub[ok]] = U_try[ok]
            J_new[sub[ok]] = J_try[ok]
            accepted[sub[ok]] = True
            ta[sub[~ok]] *= 0.5
        # candidates whose line search stalled, or whose improvement fell
        # below tolerance, stop descending
        improved = Ja - J_new
        done = ~accepted | (improved <= cfg.tol * (np.abs(Ja) + 1e-12))
        U[idx], J[idx] = U_new, J_new
        step[idx] = np.minimum(ta * 2.0, 1e6)
        active[idx[done]] = False
        trace.append(float(np.min(J)))
        if np.any(active):
            J2, G2 = objective_grad(U)
            G[:] = G2
            J[:] = np.minimum(J, J2)
    best = int(np.argmin(J))
    u_best = U[best]
    y_best = predictor.rollout(u_best[None])[0]
    return OcpSolution(u_best, y_best, float(J[best]), it, B,
                       converged=not active[best], trace=trace)


class ZmpcController:
    """Receding-horizon wrapper: keeps the (u, y) history window, the
    shifted warm start, and an optional online output correction.

    ``predictor_factory(history, precip_forecast, et0_forecast, affine)``
    builds the per-solve predictor, so the same controller drives network
    surrogates and the physics-based benchmark.
    """

    def __init__(self, predictor_factory, zone: ZoneSpec, cfg: ZmpcConfig,
                 p: int = WINDOW, y0: float = 0.266, correction=None,
                 seed: int = 0, warm_start: bool = True):
        self.factory = predictor_factory
        self.zone = zone
        self.cfg = cfg
        self.p = p
        self.correction = correction
        self.warm_start_enabled = warm_start
        self._warm = None
        self._prev_raw = None
        self._rng = np.random.default_rng(seed)
        self._ys = [y0] * (p - 1)
        self._us = [0.0] * (p - 1)

    def history(self, y_meas: float) -> np.ndarray:
        ys = np.array(self._ys[-(self.p - 1):] + [y_meas])
        us = np.array(self._us[-(self.p - 1):] + [0.0])
        return np.stack([us, ys], axis=1)

    def step(self, y_meas: float, precip_forecast, et0_forecast=None):
        """One receding-horizon move; returns (applied u [m/s], OcpSolution)."""
        precip_forecast = np.asarray(precip_forecast, dtype=float)
        if et0_forecast is None:
            et0_forecast = np.zeros_like(precip_forecast)
        if self.correction is not None and self._prev_raw is not None:
            self.correction.record_and_maybe_update(y_meas, self._prev_raw)
        affine = self.correction.affine() if self.correction is not None else (1.0, 0.0)
        hist = self.history(y_meas)
        predictor = self.factory(hist, precip_forecast[:self.cfg.horizon],
                                 np.asarray(et0_forecast, dtype=float)[:self.cfg.horizon],
                                 affine)
        warm = self._warm if self.warm_start_enabled else None
        t0 = perf_counter()
        sol = solve_ocp(predictor, self.zone, self.cfg, warm_start=warm,
                        rng=self._rng)
        sol.solve_time = perf_counter() - t0
        u_phys = float(sol.u[0]) * self.cfg.u_max
        gain, offset = affine
        self._prev_raw = (float(sol.y_pred[0]) - offset) / gain
        self._warm = np.concatenate([sol.u[1:], sol.u[-1:]])
        self._ys.append(float(y_meas))
        self._us.append(u_phys)
        return u_phys, sol


def surrogate_factory(model: SurrogateModel):
    """Predictor factory for network surrogates (ET0 forecast unused: the
    surrogate has no ET input channel; slow ET mismatch is absorbed by the
    online correction)."""
    def build(history, precip_forecast, et0_forecast, affine):
        return SurrogatePredictor(model, history, precip_forecast, affine)
    return build
