"""Training-data machinery: pseudorandom irrigation signals, open-loop
simulation, output-noise injection, scaling, and windowing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import soil
from .soil.column import DEFAULT_OPTIONS, StepOptions

SAMPLE_TIME = 7200.0  # s
WINDOW = 20           # history length fed to the networks

# Global operating range of the output channel and its scale target; the
# scaled magnitudes stay below 1 with headroom for excursions.
Y_RANGE = (0.12, 0.40)
Y_SCALED_SPAN = 0.9
U_MAX_DEFAULT = 4.0e-6  # m/s; covers the strongest excitation level


@dataclass(frozen=True)
class PrsSpec:
    """Multi-level pseudorandom irrigation signal.

    ``held-levels`` holds each drawn level for the drawn duration;
    ``impulse`` emits the level for a single sample and stays at zero for
    the rest of the hold, giving sharper output transients.
    """

    levels: tuple
    min_hold: int
    max_hold: int
    length: int
    seed: int = 0
    mode: str = "held-levels"

    def __post_init__(self):
        if not self.levels or any(l < 0 for l in self.levels):
            raise ValueError("levels must be nonempty and nonnegative")
        if not (1 <= self.min_hold <= self.max_hold):
            raise ValueError("need 1 <= min_hold <= max_hold")
        if self.length <= 0:
            raise ValueError("length must be positive")
        if self.mode not in ("held-levels", "impulse"):
            raise ValueError(f"unknown mode {self.mode!r}")


def gen_prs(spec: PrsSpec) -> np.ndarray:
    """Generate the excitation sequence [m/s], deterministic in the seed."""
    rng = np.random.default_rng(spec.seed)
    levels = np.asarray(spec.levels, dtype=float)
    u = np.zeros(spec.length)
    pos = 0
    while pos < spec.length:
        level = levels[rng.integers(len(levels))]
        hold = int(rng.integers(spec.min_hold, spec.max_hold + 1))
        end = min(pos + hold, spec.length)
        if spec.mode == "held-levels":
            u[pos:end] = level
        else:
            u[pos] = level
        pos = end
    return u


@dataclass
class Dataset:
    """Open-loop input/output record at the 2-hour sample time."""

    u: np.ndarray
    y_clean: np.ndarray
    y_noisy: np.ndarray
    dt: float = SAMPLE_TIME

    def __post_init__(self):
        if not (len(self.u) == len(self.y_clean) == len(self.y_noisy)):
            raise ValueError("channel lengths differ")

    def __len__(self):
        return len(self.u)

    @property
    def operating_range(self) -> tuple[float, float]:
        return float(np.min(self.y_clean)), float(np.max(self.y_clean))


def add_output_noise(y_clean: np.ndarray, noise_frac: float, seed: int,
                     gaussian: bool = False) -> np.ndarray:
    """Additive output noise bounded by noise_frac of the observed range."""
    y_clean = np.asarray(y_clean, dtype=float)
    eps_max = noise_frac * (np.max(y_clean) - np.min(y_clean))
    if eps_max == 0.0:
        return y_clean.copy()
    rng = np.random.default_rng(seed)
    if gaussian:
        eps = np.clip(rng.normal(0.0, eps_max / 2.0, size=y_clean.size),
                      -eps_max, eps_max)
    else:
        eps = rng.uniform(-eps_max, eps_max, size=y_clean.size)
    return y_clean + eps


@dataclass(frozen=True)
class PlantConfig:
    """Fixed plant setup used for open-loop dataset generation."""

    params: soil.SoilParams = soil.SANDY_LOAM
    geometry: soil.ColumnGeometry = soil.ColumnGeometry()
    et0: float = 3.0e-8      # constant background evapotranspiration [m/s]
    crop_coeff: float = 1.0
    y0: float = 0.266        # initial output; sets a uniform h profile
    step_options: StepOptions = DEFAULT_OPTIONS


def simulate_open_loop(signal: np.ndarray, plant: PlantConfig) -> np.ndarray:
    """Clean output trajectory sampled before each input interval.

    y[k] is the output at time k * dt, after which u[k] is held over the
    interval; a history window ending at (u[k], y[k]) therefore predicts
    y[k+1] without peeking at future inputs.
    """
    h0 = soil.potential_from_water_content(plant.y0, plant.params)
    state = soil.uniform_state(h0)
    weather = soil.WeatherSample(et0=plant.et0, crop_coeff=plant.crop_coeff)
    y = np.empty(len(signal))
    for k, u in enumerate(signal):
        y[k] = soil.measure_output(state, plant.params, plant.geometry)
        state = soil.step(state, float(u), weather, SAMPLE_TIME,
                          plant.params, plant.geometry, options=plant.step_options)
    return y


def simulate_dataset(signal: np.ndarray, plant: PlantConfig,
                     noise_frac: float = 0.1, seed: int = 0,
                     gaussian_noise: bool = False) -> Dataset:
    y_clean = simulate_open_loop(signal, plant)
    y_noisy = add_output_noise(y_clean, noise_frac, seed, gaussian_noise)
    return Dataset(np.asarray(signal, dtype=float), y_clean, y_noisy)


@dataclass(frozen=True)
class ScalingSpec:
    """Per-channel affine maps: scaled = (raw - offset) * gain."""

    u_offset: float
    u_gain: float
    y_offset: float
    y_gain: float

    def __post_init__(self):
        if self.u_gain <= 0 or self.y_gain <= 0:
            raise ValueError("gains must be positive")

    def scale_u(self, u):
        return (np.asarray(u, dtype=float) - self.u_offset) * self.u_gain

    def unscale_u(self, s):
        return np.asarray(s, dtype=float) / self.u_gain + self.u_offset

    def scale_y(self, y):
        return (np.asarray(y, dtype=float) - self.y_offset) * self.y_gain

    def unscale_y(self, s):
        return np.asarray(s, dtype=float) / self.y_gain + self.y_offset

    def to_dict(self) -> dict:
        return {"u_offset": self.u_offset, "u_gain": self.u_gain,
                "y_offset": self.y_offset, "y_gain": self.y_gain}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingSpec":
        return cls(d["u_offset"], d["u_gain"], d["y_offset"], d["y_gain"])


def fit_scaler(u_max: float = U_MAX_DEFAULT,
               y_range: tuple[float, float] = Y_RANGE) -> ScalingSpec:
    """u maps to [0, 1] by u / u_max; y maps affinely onto [-0.9, 0.9]."""
    y_lo, y_hi = y_range
    if u_max <= 0 or y_hi <= y_lo:
        raise ValueError("degenerate scaling ranges")
    return ScalingSpec(
        u_offset=0.0,
        u_gain=1.0 / u_max,
        y_offset=0.5 * (y_lo + y_hi),
        y_gain=2.0 * Y_SCALED_SPAN / (y_hi - y_lo),
    )


@dataclass
class WindowedDataset:
    """Supervised one-step-ahead samples in scaled units.

    ``inputs`` has shape (n, p, 2) with (u, y) pairs ordered oldest first;
    ``targets`` is the scaled output one step after each window.
    """

    inputs: np.ndarray
    targets: np.ndarray
    scaler: ScalingSpec

    def __len__(self):
        return len(self.targets)


def window(dataset: Dataset, scaler: ScalingSpec, p: int = WINDOW,
           target_clean: bool = False) -> WindowedDataset:
    """Slice a dataset into contiguous p-step windows with one-step targets."""
    n = len(dataset)
    if n <= p:
        raise ValueError(f"dataset of length {n} too short for window {p}")
    u_s = scaler.scale_u(dataset.u)
    y_s = scaler.scale_y(dataset.y_noisy)
    t_s = scaler.scale_y(dataset.y_clean if target_clean else dataset.y_noisy)
    n_win = n - p
    inputs = np.empty((n_win, p, 2))
    for k in range(p):
        inputs[:, k, 0] = u_s[k:k + n_win]
        inputs[:, k, 1] = y_s[k:k + n_win]
    targets = t_s[p:].copy()
    return WindowedDataset(inputs, targets, scaler)


def save_dataset(dataset: Dataset, path: Path, meta: dict | None = None) -> None:
    """Write the CSV record plus a sidecar metadata file."""
    path = Path(path)
    t = np.arange(len(dataset)) * dataset.dt
    header = "t_s,u_mps,y_clean,y_noisy"
    table = np.column_stack([t, dataset.u, dataset.y_clean, dataset.y_noisy])
    np.savetxt(path, table, delimiter=",", header=header, comments="",
               fmt="%.12g")
    sidecar = {"dt": dataset.dt, "n": len(dataset),
               "operating_range": list(dataset.operating_range)}
    if meta:
        sidecar.update(meta)
    path.with_suffix(".meta.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_dataset(path: Path) -> Dataset:
    path = Path(path)
    table = np.loadtxt(path, delimiter=",", skiprows=1)
    if table.ndim != 2 or table.shape[1] != 4:
        raise ValueError(f"{path}: expected 4 columns t_s,u_mps,y_clean,y_noisy")
    return Dataset(table[:, 1], table[:, 2], table[:, 3])
