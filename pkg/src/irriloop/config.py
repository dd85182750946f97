"""Configuration: INI-style config files with a strict schema, dataset
presets for the four training signals, and run manifests that make every
artifact reproducible from (config hash, seed).
"""

from __future__ import annotations

import configparser
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

from . import soil
from .excitation import (
    SAMPLE_TIME,
    U_MAX_DEFAULT,
    WINDOW,
    PlantConfig,
    PrsSpec,
    ScalingSpec,
    fit_scaler,
)
from .mismatch import CorrectionConfig
from .nn import TrainConfig
from .zmpc import ZmpcConfig, ZoneSpec

__version__ = "1.0.0"


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


# Schema with defaults; value types drive parsing.  Comma-separated floats
# are encoded as tuples.
DEFAULTS = {
    "soil": {
        "ks": 1.23e-5,
        "theta_s": 0.41,
        "theta_r": 0.065,
        "alpha": 7.5,
        "n": 1.89,
        "m": 0.47,
    },
    "excitation": {
        "u_max_mps": U_MAX_DEFAULT,
        "train_noise_frac": 0.10,
        "val_noise_frac": 0.20,
        "gaussian_noise": False,
        "et0_mps": 3.0e-8,
        "window": WINDOW,
        "m1_levels": (1.5e-8, 4.0e-8, 8.0e-8, 1.3e-7, 2.0e-7),
        "m1_min_hold": 10, "m1_max_hold": 60, "m1_length": 30000,
        "m1_y0": 0.17, "m1_mode": "held-levels",
        "m2_levels": (1.0e-7, 2.0e-7, 3.5e-7, 6.0e-7, 9.0e-7),
        "m2_min_hold": 5, "m2_max_hold": 25, "m2_length": 30000,
        "m2_y0": 0.265, "m2_mode": "held-levels",
        "m3_levels": (6.0e-7, 1.2e-6, 2.0e-6, 4.0e-6),
        "m3_min_hold": 5, "m3_max_hold": 25, "m3_length": 30000,
        "m3_y0": 0.34, "m3_mode": "held-levels",
        "agg_levels": (0.0, 2.0e-7, 6.0e-7, 1.2e-6, 2.5e-6, 4.0e-6),
        "agg_min_hold": 3, "agg_max_hold": 16, "agg_length": 100000,
        "agg_y0": 0.26, "agg_mode": "impulse",
    },
    "train": {
        "epochs": 60,
        "batch_size": 64,
        "learning_rate": 2e-3,
        "validation_split": 0.1,
        "hidden": 32,
    },
    "mismatch": {
        "kind": "single_bias",
        "f": 2,
        "horizon": 20,
        "f_values": (1.0, 2.0, 5.0, 10.0, 20.0),
    },
    "zmpc": {
        "q": 4000.0,
        "r": 100.0,
        "horizon": 20,
        "mu": 0.0,
        "zone_init_lo": 0.18,
        "zone_init_hi": 0.23,
        "zone_term_lo": 0.20,
        "zone_term_hi": 0.21,
        "u_max_mps": U_MAX_DEFAULT,
        "restarts": 2,
        "iters": 120,
    },
    "run": {
        "n_sim": 60,
        "y0": 0.266,
        "controller_model": "two_layer",
        "process_noise_frac": 0.02,
        "measurement_noise_frac": 0.0,
        "forecast_error_frac": 0.20,
        "richards_substep_s": 900.0,
        "rain": True,
        "diurnal_et": True,
    },
}

DATASET_NAMES = ("m1", "m2", "m3", "agg")
_DATASET_SEED_OFFSET = {"m1": 1, "m2": 2, "m3": 3, "agg": 4}
_VAL_SEED_SHIFT = 100
_NOISE_SEED_SHIFT = 50


def _parse_value(raw: str, default, where: str):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(v) for v in raw.split(",") if v.strip())
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from exc


def _line_of(text: str, needle: str) -> int:
    for i, line in enumerate(text.splitlines(), start=1):
        if line.strip().startswith(needle):
            return i
    return 0


@dataclass
class AppConfig:
    """Validated configuration; ``values[section][key]`` is fully typed."""

    values: dict
    source: str = "<defaults>"

    def get(self, section: str, key: str):
        return self.values[section][key]

    def canonical(self) -> str:
        return json.dumps(self.values, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    # -- typed accessors ---------------------------------------------------

    def soil_params(self) -> soil.SoilParams:
        s = self.values["soil"]
        return soil.SoilParams(ks=s["ks"], theta_s=s["theta_s"],
                               theta_r=s["theta_r"], alpha=s["alpha"],
                               n=s["n"], m=s["m"])

    def scaler(self) -> ScalingSpec:
        return fit_scaler(u_max=self.get("excitation", "u_max_mps"))

    def prs_spec(self, name: str, seed: int, scale: int = 1,
                 validation: bool = False) -> PrsSpec:
        if name not in DATASET_NAMES:
            raise ConfigError(f"unknown dataset {name!r}")
        e = self.values["excitation"]
        base = seed + _DATASET_SEED_OFFSET[name]
        if validation:
            base += _VAL_SEED_SHIFT
        return PrsSpec(
            levels=e[f"{name}_levels"],
            min_hold=e[f"{name}_min_hold"],
            max_hold=e[f"{name}_max_hold"],
            length=max(e[f"{name}_length"] // max(scale, 1), WINDOW + 25),
            seed=base,
            mode=e[f"{name}_mode"],
        )

    def noise_seed(self, name: str, seed: int, validation: bool = False) -> int:
        base = seed + _DATASET_SEED_OFFSET[name] + _NOISE_SEED_SHIFT
        return base + _VAL_SEED_SHIFT if validation else base

    def noise_frac(self, validation: bool = False) -> float:
        key = "val_noise_frac" if validation else "train_noise_frac"
        return self.get("excitation", key)

    def plant_config(self, name: str) -> PlantConfig:
        e = self.values["excitation"]
        return PlantConfig(params=self.soil_params(), et0=e["et0_mps"],
                           y0=e[f"{name}_y0"])

    def train_config(self, seed: int) -> TrainConfig:
        t = self.values["train"]
        return TrainConfig(epochs=t["epochs"], batch_size=t["batch_size"],
                           learning_rate=t["learning_rate"],
                           validation_split=t["validation_split"], seed=seed)

    def correction_config(self) -> CorrectionConfig | None:
        m = self.values["mismatch"]
        if m["kind"] == "none":
            return None
        return CorrectionConfig(kind=m["kind"], f=m["f"])

    def zone_spec(self) -> ZoneSpec:
        z = self.values["zmpc"]
        return ZoneSpec(lo_init=z["zone_init_lo"], hi_init=z["zone_init_hi"],
                        lo_term=z["zone_term_lo"], hi_term=z["zone_term_hi"],
                        mu=z["mu"], horizon=z["horizon"])

    def zmpc_config(self) -> ZmpcConfig:
        z = self.values["zmpc"]
        return ZmpcConfig(q=z["q"], r=z["r"], horizon=z["horizon"],
                          u_max=z["u_max_mps"], restarts=z["restarts"],
                          iters=z["iters"])


def default_config() -> AppConfig:
    return AppConfig({s: dict(kv) for s, kv in DEFAULTS.items()})


def load_config(path=None) -> AppConfig:
    """Read an INI file over the defaults; unknown sections or keys are
    errors (with the offending line number)."""
    cfg = default_config()
    if path is None:
        return cfg
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(
                f"{path}:{_line_of(text, '[' + section + ']')}: "
                f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in DEFAULTS[section]:
                raise ConfigError(
                    f"{path}:{_line_of(text, key)}: unknown key "
                    f"{key!r} in section [{section}]")
            cfg.values[section][key] = _parse_value(
                raw, DEFAULTS[section][key],
                f"{path}:{_line_of(text, key)} [{section}] {key}")
    cfg.source = str(path)
    return cfg


def dump_default_ini() -> str:
    """The default configuration in INI form (committed as
    configs/default.ini)."""
    lines = []
    for section, kv in DEFAULTS.items():
        lines.append(f"[{section}]")
        for key, val in kv.items():
            if isinstance(val, tuple):
                text = ",".join(repr(v) for v in val)
            elif isinstance(val, bool):
                text = "true" if val else "false"
            elif isinstance(val, str):
                text = val
            else:
                text = repr(val)
            lines.append(f"{key} = {text}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# run manifests


def write_manifest(out_dir, command: str, cfg: AppConfig, seed: int,
                   scale: int, outputs: list) -> Path:
    """Record what produced the artifacts in ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_source": cfg.source,
        "config_sha256_16": cfg.digest(),
        "seed": seed,
        "scale": scale,
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "timestamp_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    path = out_dir / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path
