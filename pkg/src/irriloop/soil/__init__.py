"""Ground-truth soil water dynamics: a 1D variably saturated column.

The hot implicit-Euler stepper has a compiled Cython kernel with a
pure-numpy fallback; ``column.backend_name()`` reports which one is active.
"""

from .column import (
    DEFAULT_OPTIONS,
    IntegrationError,
    StepDiagnostics,
    StepOptions,
    backend_name,
    face_fluxes,
    measure_output,
    rhs,
    step,
    storage,
)
from .hydraulics import (
    StressCurve,
    capillary_capacity,
    hydraulic_conductivity,
    potential_from_water_content,
    water_content,
    water_stress,
)
from .params import (
    N_NODES,
    SANDY_LOAM,
    ColumnGeometry,
    SoilColumnState,
    SoilParams,
    WeatherSample,
    uniform_state,
)

__all__ = [
    "DEFAULT_OPTIONS",
    "N_NODES",
    "SANDY_LOAM",
    "ColumnGeometry",
    "IntegrationError",
    "SoilColumnState",
    "SoilParams",
    "StepDiagnostics",
    "StepOptions",
    "StressCurve",
    "WeatherSample",
    "backend_name",
    "capillary_capacity",
    "face_fluxes",
    "hydraulic_conductivity",
    "measure_output",
    "potential_from_water_content",
    "rhs",
    "step",
    "storage",
    "uniform_state",
    "water_content",
    "water_stress",
]
