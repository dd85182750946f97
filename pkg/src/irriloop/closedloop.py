"""Closed-loop experiment harness: ground-truth plant under the
zone-tracking controller, with process/measurement noise, true-vs-forecast
weather, irrigation-total and zone-violation metrics, and a scenario
battery that compares controller variants on common random numbers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import soil
from .excitation import SAMPLE_TIME, U_MAX_DEFAULT, WINDOW
from .mismatch import CorrectionConfig, CorrectionState
from .surrogate import SurrogateModel
from .zmpc import (
    ZmpcConfig,
    ZmpcController,
    ZoneSpec,
    interval_distance,
    surrogate_factory,
    zone_bounds,
)

log = logging.getLogger(__name__)

BASE_ZONE = (0.18, 0.23)


@dataclass(frozen=True)
class NoiseSpec:
    """Multiplicative uniform disturbances, as fractions of the signal."""

    process_frac: float = 0.0
    measurement_frac: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.process_frac < 0 or self.measurement_frac < 0:
            raise ValueError("noise fractions must be nonnegative")


@dataclass
class WeatherScenario:
    """True weather over the episode plus the controller-visible forecast."""

    precipitation: np.ndarray
    et0: np.ndarray
    crop_coeff: np.ndarray
    forecast_precipitation: np.ndarray | None = None
    forecast_et0: np.ndarray | None = None

    def __post_init__(self):
        self.precipitation = np.asarray(self.precipitation, dtype=float)
        self.et0 = np.asarray(self.et0, dtype=float)
        self.crop_coeff = np.asarray(self.crop_coeff, dtype=float)
        if not (len(self.precipitation) == len(self.et0) == len(self.crop_coeff)):
            raise ValueError("weather series lengths differ")
        if np.any(self.precipitation < 0) or np.any(self.et0 < 0):
            raise ValueError("weather rates must be nonnegative")
        if self.forecast_precipitation is None:
            self.forecast_precipitation = self.precipitation.copy()
        if self.forecast_et0 is None:
            self.forecast_et0 = self.et0.copy()

    def __len__(self):
        return len(self.precipitation)


def make_forecast(true_series: np.ndarray, error_frac: float, seed: int) -> np.ndarray:
    """Forecast = truth times a uniform factor in [1-e, 1+e], floored at 0."""
    true_series = np.asarray(true_series, dtype=float)
    if error_frac == 0.0:
        return true_series.copy()
    rng = np.random.default_rng(seed)
    factors = rng.uniform(1.0 - error_frac, 1.0 + error_frac, true_series.shape)
    return np.maximum(0.0, true_series * factors)


def with_forecast_error(scenario: WeatherScenario, error_frac: float,
                        seed: int) -> WeatherScenario:
    return WeatherScenario(
        scenario.precipitation, scenario.et0, scenario.crop_coeff,
        forecast_precipitation=make_forecast(scenario.precipitation, error_frac, seed),
        forecast_et0=make_forecast(scenario.et0, error_frac, seed + 1),
    )


def default_scenario(n: int, rain: bool = True, et: bool = True) -> WeatherScenario:
    """Committed reference weather: two triangular rain events peaking at
    6e-7 m/s (steps 18-22 and 40-43) and a diurnal ET0 cycle peaking at
    5e-8 m/s (12 two-hour samples per day)."""
    p = np.zeros(n)
    if rain:
        for lo, hi in ((18, 22), (40, 43)):
            span = np.arange(lo, hi + 1)
            mid = 0.5 * (lo + hi)
            half = max(hi - mid, 1.0)
            peak_shape = 1.0 - np.abs(span - mid) / (half + 1.0)
            p[span[span < n]] = 6.0e-7 * peak_shape[span < n]
    et0 = np.zeros(n)
    if et:
        k = np.arange(n)
        et0 = 5.0e-8 * np.maximum(0.0, np.sin(2 * np.pi * k / 12.0))
    return WeatherScenario(p, et0, np.ones(n))


def save_scenario(scenario: WeatherScenario, path, dt: float = SAMPLE_TIME) -> None:
    t = np.arange(len(scenario)) * dt
    table = np.column_stack([t, scenario.precipitation, scenario.et0,
                             scenario.crop_coeff])
    np.savetxt(path, table, delimiter=",", header="t_s,P_mps,ET0_mps,Kc",
               comments="", fmt="%.12g")


def load_scenario(path) -> WeatherScenario:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if table.shape[1] != 4:
        raise ValueError(f"{path}: expected columns t_s,P_mps,ET0_mps,Kc")
    return WeatherScenario(table[:, 1], table[:, 2], table[:, 3])


# ---------------------------------------------------------------------------
# physics-based predictor for the benchmark controller


class RichardsPredictor:
    """OCP predictor that simulates the plant model itself.

    Gradients come from forward finite differences; perturbing input j only
    re-simulates steps j..N-1 from cached nominal states.  A coarser
    integrator substep than the plant's keeps the many rollouts affordable.
    """

    def __init__(self, state: soil.SoilColumnState, precip_forecast,
                 et0_forecast, params: soil.SoilParams,
                 geometry: soil.ColumnGeometry, u_max: float,
                 options: soil.StepOptions, dt: float = SAMPLE_TIME,
                 fd_eps: float = 1e-3):
        self.state0 = state.copy()
        self.pf = np.asarray(precip_forecast, dtype=float)
        self.ef = np.asarray(et0_forecast, dtype=float)
        self.params = params
        self.geometry = geometry
        self.u_max = u_max
        self.options = options
        self.dt = dt
        self.fd_eps = fd_eps
        self._nominal = None  # (U, list of state trajectories, outputs)

    def _simulate(self, u_scaled, state, j0):
        """Outputs and states for steps j0..N-1 starting from ``state``."""
        states, ys = [], []
        for j in range(j0, len(u_scaled)):
            w = soil.WeatherSample(precipitation=self.pf[j], et0=self.ef[j])
            state = soil.step(state, float(u_scaled[j]) * self.u_max, w,
                              self.dt, self.params, self.geometry,
                              options=self.options)
            states.append(state)
            ys.append(soil.measure_output(state, self.params, self.geometry))
        return states, np.array(ys)

    def rollout(self, u_scaled: np.ndarray) -> np.ndarray:
        U = np.atleast_2d(np.asarray(u_scaled, dtype=float))
        ys = np.empty_like(U)
        trajs = []
        for b in range(U.shape[0]):
            states, ys[b] = self._simulate(U[b], self.state0, 0)
            trajs.append(states)
        self._nominal = (U.copy(), trajs, ys.copy())
        return ys

    def gradient(self, dJ_dy: np.ndarray) -> np.ndarray:
        if self._nominal is None:
            raise RuntimeError("rollout() must run before gradient()")
        U, trajs, ys = self._nominal
        B, N = U.shape
        dJ_dy = np.asarray(dJ_dy, dtype=float)
        du = np.zeros((B, N))
        for b in range(B):
            for j in range(N):
                u_pert = U[b].copy()
                u_pert[j] += self.fd_eps
                start = trajs[b][j - 1] if j > 0 else self.state0
                _, y_pert = self._simulate(u_pert, start, j)
                du[b, j] = dJ_dy[b, j:] @ (y_pert - ys[b, j:]) / self.fd_eps
        return du


def richards_factory(state_ref: dict, params: soil.SoilParams,
                     geometry: soil.ColumnGeometry, u_max: float,
                     options: soil.StepOptions | None = None,
                     dt: float = SAMPLE_TIME):
    """Predictor factory reading the current plant state from ``state_ref``
    (key 'state'), which the closed loop refreshes each step."""
    options = options or soil.StepOptions(substep_init=900.0)

    def build(history, precip_forecast, et0_forecast, affine):
        return RichardsPredictor(state_ref["state"], precip_forecast,
                                 et0_forecast, params, geometry, u_max,
                                 options, dt)
    return build


# ---------------------------------------------------------------------------
# metrics


def total_irrigation(u_sequence, dt: float = SAMPLE_TIME) -> float:
    """Accumulated irrigation depth in millimetres."""
    u = np.asarray(u_sequence, dtype=float)
    if np.any(u < 0):
        raise ValueError("irrigation rates must be nonnegative")
    return float(np.sum(u) * dt * 1000.0)


def zone_violation(y_trajectory, base_zone=BASE_ZONE) -> float:
    """Time-averaged distance of the output to the fixed base zone."""
    y = np.asarray(y_trajectory, dtype=float)
    if y.size == 0:
        raise ValueError("empty trajectory")
    return float(np.mean(interval_distance(y, *base_zone)))


# ---------------------------------------------------------------------------
# run configuration and loop


@dataclass(frozen=True)
class RunConfig:
    n_sim: int = 60
    dt: float = SAMPLE_TIME
    y0: float = 0.266
    controller_model: str = "two_layer"  # {richards, single_lstm, two_layer}
    correction: CorrectionConfig | None = None
    zone: ZoneSpec = ZoneSpec()
    zmpc: ZmpcConfig = ZmpcConfig()
    forecast_error_frac: float = 0.20
    p: int = WINDOW
    params: soil.SoilParams = soil.SANDY_LOAM
    geometry: soil.ColumnGeometry = soil.ColumnGeometry()
    plant_options: soil.StepOptions = soil.DEFAULT_OPTIONS
    predictor_options: soil.StepOptions = soil.StepOptions(substep_init=900.0)

    def __post_init__(self):
        if self.n_sim < 1:
            raise ValueError("n_sim must be >= 1")
        if self.controller_model not in ("richards", "single_lstm", "two_layer"):
            raise ValueError(f"unknown controller model {self.controller_model!r}")


@dataclass
class RunMetrics:
    i_t_mm: float
    zone_violation: float
    mean_solve_time: float
    n_steps: int
    aborted: bool = False


@dataclass
class RunResult:
    metrics: RunMetrics
    t: np.ndarray
    u: np.ndarray
    y_true: np.ndarray
    y_meas: np.ndarray
    zone_lo: np.ndarray
    zone_hi: np.ndarray
    precipitation: np.ndarray
    et0: np.ndarray
    solve_times: list = field(default_factory=list)


def run_closed_loop(config: RunConfig, noise: NoiseSpec,
                    scenario: WeatherScenario,
                    model: SurrogateModel | None = None) -> RunResult:
    """Simulate the plant under receding-horizon control.

    ``scenario`` must cover n_sim + horizon steps.  The controller sees the
    forecast weather and the noisy measurement; the plant advances under
    the true weather, with process noise injected into the root-zone node
    after each step and measurement noise applied to the reported output.
    """
    N = config.zmpc.horizon
    if len(scenario) < config.n_sim + N:
        raise ValueError(f"scenario must cover {config.n_sim + N} steps")
    if config.controller_model != "richards" and model is None:
        raise ValueError("a surrogate model is required for this controller")

    h0 = soil.potential_from_water_content(config.y0, config.params)
    state = soil.uniform_state(h0)
    state_ref = {"state": state}
    if config.controller_model == "richards":
        factory = richards_factory(state_ref, config.params, config.geometry,
                                   config.zmpc.u_max, config.predictor_options,
                                   config.dt)
        correction = None
    else:
        factory = surrogate_factory(model)
        correction = (CorrectionState(config.correction)
                      if config.correction is not None
                      and config.correction.kind != "none" else None)
    controller = ZmpcController(factory, config.zone, config.zmpc, p=config.p,
                                y0=config.y0, correction=correction,
                                seed=noise.seed)
    rng_proc = np.random.default_rng([noise.seed, 101])
    rng_meas = np.random.default_rng([noise.seed, 202])

    n = config.n_sim
    u_log = np.zeros(n)
    y_true = np.zeros(n)
    y_meas = np.zeros(n)
    solve_times = []
    aborted = False
    steps_done = 0
    for i in range(n):
        yt = soil.measure_output(state, config.params, config.geometry)
        ym = yt * (1.0 + rng_meas.uniform(-noise.measurement_frac,
                                          noise.measurement_frac)) \
            if noise.measurement_frac else yt
        y_true[i] = yt
        y_meas[i] = ym
        try:
            u, sol = controller.step(
                ym, scenario.forecast_precipitation[i:i + N],
                scenario.forecast_et0[i:i + N])
            w = soil.WeatherSample(precipitation=scenario.precipitation[i],
                                   et0=scenario.et0[i],
                                   crop_coeff=scenario.crop_coeff[i])
            state = soil.step(state, u, w, config.dt, config.params,
                              config.geometry, options=config.plant_options)
        except (soil.IntegrationError, FloatingPointError) as exc:
            log.error("closed loop aborted at step %d: %s", i, exc)
            aborted = True
            break
        if noise.process_frac:
            state = _perturb_root_node(state, config, rng_proc,
                                       noise.process_frac)
        state_ref["state"] = state
        u_log[i] = u
        solve_times.append(sol.solve_time)
        steps_done = i + 1

    steps = slice(0, steps_done)
    lo0, hi0 = zone_bounds(0, config.zone)
    metrics = RunMetrics(
        i_t_mm=total_irrigation(u_log[steps], config.dt),
        zone_violation=zone_violation(y_true[steps]),
        mean_solve_time=float(np.mean(solve_times)) if solve_times else 0.0,
        n_steps=steps_done,
        aborted=aborted,
    )
    t = np.arange(n) * config.dt
    return RunResult(metrics, t[steps], u_log[steps], y_true[steps],
                     y_meas[steps], np.full(steps_done, lo0),
                     np.full(steps_done, hi0),
                     scenario.precipitation[:steps_done],
                     scenario.et0[:steps_done], solve_times)


def _perturb_root_node(state, config: RunConfig, rng, frac: float):
    idx = config.geometry.root_node_index
    theta = soil.water_content(state.h[idx], config.params)
    theta *= 1.0 + rng.uniform(-frac, frac)
    eps = 1e-6
    theta = float(np.clip(theta, config.params.theta_r + eps,
                          config.params.theta_s - eps))
    h = state.h.copy()
    h[idx] = soil.potential_from_water_content(theta, config.params)
    return soil.SoilColumnState(h, state.t)


def write_trajectory_csv(result: RunResult, path) -> None:
    header = "t_s,u_mps,y_true,y_meas,zone_lo,zone_hi,P_mps,ET0_mps"
    table = np.column_stack([result.t, result.u, result.y_true, result.y_meas,
                             result.zone_lo, result.zone_hi,
                             result.precipitation, result.et0])
    np.savetxt(path, table, delimiter=",", header=header, comments="",
               fmt="%.12g")


def write_metrics_csv(metrics: RunMetrics, path) -> None:
    lines = ["metric,value",
             f"I_T_mm,{metrics.i_t_mm:.6f}",
             f"zone_violation,{metrics.zone_violation:.8f}",
             f"mean_solve_time_s,{metrics.mean_solve_time:.4f}",
             f"n_steps,{metrics.n_steps}",
             f"aborted,{int(metrics.aborted)}"]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# scenario battery


@dataclass
class BatteryRow:
    name: str
    metrics: RunMetrics | None
    error: str = ""


def scenario_battery(entries, noise: NoiseSpec, scenario: WeatherScenario,
                     models: dict | None = None,
                     benchmark: str | None = None) -> list:
    """Run named configurations on common random numbers.

    ``entries`` is a list of (name, RunConfig); ``models`` maps controller
    model names to surrogate instances.  Per-run failures are recorded and
    the battery continues.  Returns BatteryRow results in entry order.
    """
    models = models or {}
    rows = []
    for name, cfg in entries:
        model = models.get(cfg.controller_model)
        try:
            result = run_closed_loop(cfg, noise, scenario, model)
            rows.append(BatteryRow(name, result.metrics))
        except Exception as exc:  # a battery survives individual failures
            log.error("battery run %r failed: %s", name, exc)
            rows.append(BatteryRow(name, None, error=str(exc)))
    return rows


def battery_table(rows, benchmark: str | None = None) -> list:
    """Comparison dicts with percent differences against a benchmark row."""
    bench = None
    if benchmark is not None:
        for row in rows:
            if row.name == benchmark and row.metrics is not None:
                bench = row.metrics
    out = []
    for row in rows:
        rec = {"name": row.name}
        if row.metrics is None:
            rec.update(status="failed", error=row.error)
        else:
            m = row.metrics
            rec.update(status="ok", i_t_mm=m.i_t_mm,
                       zone_violation=m.zone_violation,
                       mean_solve_time_s=m.mean_solve_time)
            if bench is not None:
                rec["d_i_t_pct"] = _pct_delta(bench.i_t_mm, m.i_t_mm)
                rec["d_violation_pct"] = _pct_delta(bench.zone_violation,
                                                    m.zone_violation)
        out.append(rec)
    return out


def _pct_delta(reference: float, value: float) -> float:
    if reference == 0.0:
        return 0.0 if value == 0.0 else float("inf")
    return 100.0 * (value - reference) / reference


def write_battery_csv(table: list, path) -> None:
    cols = ["name", "status", "i_t_mm", "zone_violation", "mean_solve_time_s",
            "d_i_t_pct", "d_violation_pct", "error"]
    lines = [",".join(cols)]
    for rec in table:
        vals = []
        for c in cols:
            v = rec.get(c, "")
            vals.append(f"{v:.6f}" if isinstance(v, float) else str(v))
        lines.append(",".join(vals))
    Path(path).write_text("\n".join(lines) + "\n")
