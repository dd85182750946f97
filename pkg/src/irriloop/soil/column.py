"""Column dynamics: right-hand side, implicit time stepping, and the output map."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import hydraulics
from ._fallback import IntegrationError, advance as _advance_numpy
from .params import ColumnGeometry, SoilColumnState, SoilParams, WeatherSample

__all__ = [
    "IntegrationError",
    "StepOptions",
    "StepDiagnostics",
    "backend_name",
    "face_fluxes",
    "rhs",
    "step",
    "measure_output",
]

if os.environ.get("IRRILOOP_PURE_PYTHON"):
    _advance = _advance_numpy
    _BACKEND = "numpy"
else:
    try:
        from ._kernel import advance as _advance  # type: ignore[attr-defined]

        _BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build environment
        _advance = _advance_numpy
        _BACKEND = "numpy"


def backend_name() -> str:
    """Which stepper implementation is active ('cython' or 'numpy')."""
    return _BACKEND


@dataclass(frozen=True)
class StepOptions:
    substep_init: float = 60.0   # initial implicit-Euler substep [s]
    newton_tol: float = 1e-8     # convergence tolerance on the h update [m]
    max_newton: int = 15
    min_substep: float = 1e-3    # integration fails below this substep [s]
    geometric_mean: bool = False  # internode conductivity averaging
    stress: hydraulics.StressCurve = hydraulics.DEFAULT_STRESS


DEFAULT_OPTIONS = StepOptions()


@dataclass
class StepDiagnostics:
    """Per-call integrator bookkeeping, cumulative over substeps."""

    n_substeps: int = 0
    n_clamps: int = 0
    inflow: float = 0.0    # surface infiltration [m]
    drainage: float = 0.0  # bottom drainage [m]
    transpiration: float = 0.0  # root extraction [m]

    def merge(self, other: "StepDiagnostics") -> None:
        self.n_substeps += other.n_substeps
        self.n_clamps += other.n_clamps
        self.inflow += other.inflow
        self.drainage += other.drainage
        self.transpiration += other.transpiration


def face_fluxes(
    state: SoilColumnState,
    irrigation: float,
    weather: WeatherSample,
    p: SoilParams,
    g: ColumnGeometry,
    options: StepOptions = DEFAULT_OPTIONS,
):
    """Downward-positive Darcy fluxes at the node faces and the sink profile.

    Returns (q, sink) with q of length n_nodes + 1 (surface face first) in
    [m/s] and sink in volumetric content per second for every node.
    """
    h = state.h
    k = hydraulics.hydraulic_conductivity(h, p)
    if options.geometric_mean:
        kf = np.sqrt(k[:-1] * k[1:])
    else:
        kf = 0.5 * (k[:-1] + k[1:])
    q = np.empty(g.n_nodes + 1)
    q[0] = irrigation + weather.precipitation
    q[1:-1] = kf * ((h[:-1] - h[1:]) / g.dz + 1.0)
    q[-1] = k[-1]
    sink = np.zeros(g.n_nodes)
    n_root = g.n_root_nodes
    et = weather.crop_coeff * weather.et0
    if et > 0:
        sink[:n_root] = hydraulics.water_stress(h[:n_root], options.stress) * et / abs(g.z_r)
    return q, sink


def rhs(
    state: SoilColumnState,
    irrigation: float,
    weather: WeatherSample,
    p: SoilParams,
    g: ColumnGeometry,
    options: StepOptions = DEFAULT_OPTIONS,
) -> np.ndarray:
    """dh/dt [m/s] per node for the spatially discretized pressure-head dynamics."""
    if irrigation < 0:
        raise ValueError("irrigation rate must be nonnegative")
    q, sink = face_fluxes(state, irrigation, weather, p, g, options)
    dtheta_dt = (q[:-1] - q[1:]) / g.dz - sink
    return dtheta_dt / hydraulics.capillary_capacity(state.h, p)


def step(
    state: SoilColumnState,
    irrigation: float,
    weather: WeatherSample,
    dt: float,
    p: SoilParams,
    g: ColumnGeometry,
    options: StepOptions = DEFAULT_OPTIONS,
    diag: StepDiagnostics | None = None,
) -> SoilColumnState:
    """Advance the column by dt [s] using implicit Euler with Newton iteration.

    Substeps halve on Newton non-convergence; an IntegrationError is raised
    if the substep falls below options.min_substep.  Pass a StepDiagnostics
    to accumulate boundary fluxes and clamp events.
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if irrigation < 0:
        raise ValueError("irrigation rate must be nonnegative")
    if dt == 0:
        return state.copy()
    s = options.stress
    h_new, n_sub, n_clamp, inflow, drain, transp = _advance(
        state.h,
        float(dt),
        float(irrigation + weather.precipitation),
        float(weather.crop_coeff * weather.et0),
        (p.ks, p.theta_s, p.theta_r, p.alpha, p.n),
        g.dz,
        g.n_root_nodes,
        abs(g.z_r),
        (s.h_anaer, s.h_wet_full, s.h_dry_full, s.h_wilt),
        substep_init=options.substep_init,
        newton_tol=options.newton_tol,
        max_newton=options.max_newton,
        min_substep=options.min_substep,
        geometric_mean=options.geometric_mean,
    )
    if diag is not None:
        diag.merge(StepDiagnostics(n_sub, n_clamp, inflow, drain, transp))
    return SoilColumnState(np.asarray(h_new), state.t + dt)


def storage(state: SoilColumnState, p: SoilParams, g: ColumnGeometry) -> float:
    """Total water stored in the column [m]."""
    return float(np.sum(hydraulics.water_content(state.h, p)) * g.dz)


def measure_output(state: SoilColumnState, p: SoilParams, g: ColumnGeometry) -> float:
    """Volumetric water content at the rooting-depth node [m3/m3]."""
    return float(hydraulics.water_content(state.h[g.root_node_index], p))
