"""Soil column description: material parameters, geometry, and weather forcing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_NODES = 26
TOTAL_DEPTH = 0.5  # m

# Clamping window for the capillary potential; the constitutive relations
# are only defined for h < 0.
H_MIN = -1.0e6
H_MAX = -1.0e-8


@dataclass(frozen=True)
class SoilParams:
    """van Genuchten-Mualem parameters of the soil material."""

    ks: float = 1.23e-5      # saturated hydraulic conductivity [m/s]
    theta_s: float = 0.41    # saturated water content [m3/m3]
    theta_r: float = 0.065   # residual water content [m3/m3]
    alpha: float = 7.5       # [1/m]
    n: float = 1.89          # [-]
    m: float = 0.47          # informational; relations use 1 - 1/n

    def __post_init__(self):
        if self.ks <= 0:
            raise ValueError(f"ks must be positive, got {self.ks}")
        if not (0 <= self.theta_r < self.theta_s <= 1):
            raise ValueError(
                f"need 0 <= theta_r < theta_s <= 1, got {self.theta_r}, {self.theta_s}"
            )
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.n <= 1:
            raise ValueError(f"n must exceed 1, got {self.n}")


SANDY_LOAM = SoilParams()


@dataclass(frozen=True)
class ColumnGeometry:
    """Vertical discretization of the soil column.

    Node centers sit at depths (k + 0.5) * dz below the surface, k = 0 at
    the top.  The output node is the one whose center is closest to the
    rooting depth |z_r|.
    """

    total_depth: float = TOTAL_DEPTH
    n_nodes: int = N_NODES
    z_r: float = -0.13  # rooting depth, negative downwards [m]

    def __post_init__(self):
        if self.total_depth <= 0 or self.n_nodes < 2:
            raise ValueError("degenerate column geometry")
        if not -self.total_depth <= self.z_r < 0:
            raise ValueError(f"rooting depth {self.z_r} outside the column")

    @property
    def dz(self) -> float:
        return self.total_depth / self.n_nodes

    @property
    def node_depths(self) -> np.ndarray:
        """Depths of the node centers below the surface [m], top first."""
        return (np.arange(self.n_nodes) + 0.5) * self.dz

    @property
    def root_node_index(self) -> int:
        return int(np.argmin(np.abs(self.node_depths - abs(self.z_r))))

    @property
    def n_root_nodes(self) -> int:
        """Number of nodes whose center lies within the root zone."""
        return int(np.sum(self.node_depths <= abs(self.z_r)))


@dataclass(frozen=True)
class WeatherSample:
    """Forcing over one sampling interval."""

    precipitation: float = 0.0  # P [m/s]
    et0: float = 0.0            # reference evapotranspiration [m/s]
    crop_coeff: float = 1.0     # K_c [-]

    def __post_init__(self):
        if self.precipitation < 0 or self.et0 < 0 or self.crop_coeff < 0:
            raise ValueError("weather rates and crop coefficient must be nonnegative")


NO_WEATHER = WeatherSample()


@dataclass
class SoilColumnState:
    """Capillary potential at every node, top of the column first."""

    h: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        if self.h.shape != (N_NODES,):
            raise ValueError(f"state must have {N_NODES} nodes, got shape {self.h.shape}")
        if not np.all(np.isfinite(self.h)):
            raise ValueError("non-finite capillary potential")
        if np.any(self.h >= 0):
            raise ValueError("capillary potential must be negative (unsaturated)")

    def copy(self) -> "SoilColumnState":
        return SoilColumnState(self.h.copy(), self.t)


def uniform_state(h: float, t: float = 0.0) -> SoilColumnState:
    return SoilColumnState(np.full(N_NODES, float(h)), t)
