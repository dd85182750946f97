"""van Genuchten-Mualem constitutive relations and the root water-stress factor.

All functions accept scalars or numpy arrays of capillary potential h [m]
and are vectorized elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import SoilParams


def _check_domain(h, strict: bool):
    h = np.asarray(h, dtype=float)
    bad = h >= 0 if strict else h > 0
    if np.any(bad):
        raise ValueError(
            "capillary potential out of domain "
            f"(need h {'<' if strict else '<='} 0, got max {np.max(h)})"
        )
    return h


def capillary_capacity(h, p: SoilParams):
    """Specific moisture capacity c(h) = d(theta)/dh [1/m], h < 0."""
    h = _check_domain(h, strict=True)
    m = 1.0 - 1.0 / p.n
    ah = -p.alpha * h
    c = (
        (p.theta_s - p.theta_r)
        * p.alpha
        * p.n
        * m
        * ah ** (p.n - 1.0)
        * (1.0 + ah**p.n) ** (1.0 / p.n - 2.0)
    )
    return c if c.ndim else float(c)


def effective_saturation(h, p: SoilParams):
    """S_e(h) in (0, 1], h <= 0."""
    h = _check_domain(h, strict=False)
    m = 1.0 - 1.0 / p.n
    se = (1.0 + (-p.alpha * h) ** p.n) ** (-m)
    return se if se.ndim else float(se)


def hydraulic_conductivity(h, p: SoilParams):
    """Unsaturated hydraulic conductivity K(h) [m/s], h <= 0."""
    h = _check_domain(h, strict=False)
    m = 1.0 - 1.0 / p.n
    se = (1.0 + (-p.alpha * h) ** p.n) ** (-m)
    k = p.ks * np.sqrt(se) * (1.0 - (1.0 - se ** (1.0 / m)) ** m) ** 2
    return k if k.ndim else float(k)


def water_content(h, p: SoilParams):
    """Volumetric water content theta(h) [m3/m3], h <= 0."""
    h = _check_domain(h, strict=False)
    m = 1.0 - 1.0 / p.n
    theta = p.theta_r + (p.theta_s - p.theta_r) * (1.0 + (-p.alpha * h) ** p.n) ** (-m)
    return theta if theta.ndim else float(theta)


def potential_from_water_content(theta, p: SoilParams):
    """Closed-form inverse of the retention curve, theta in (theta_r, theta_s)."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= p.theta_r) or np.any(theta >= p.theta_s):
        raise ValueError(
            f"water content must lie strictly inside ({p.theta_r}, {p.theta_s})"
        )
    m = 1.0 - 1.0 / p.n
    se = (theta - p.theta_r) / (p.theta_s - p.theta_r)
    h = -(se ** (-1.0 / m) - 1.0) ** (1.0 / p.n) / p.alpha
    return h if h.ndim else float(h)


@dataclass(frozen=True)
class StressCurve:
    """Piecewise-linear root water-stress reduction (Feddes shape).

    Transpiration is shut off near saturation (anaerobiosis), full between
    h_wet_full and h_dry_full, and ramps down to zero at wilting.
    """

    h_anaer: float = -0.01      # alpha_w = 0 at and above
    h_wet_full: float = -0.05   # alpha_w = 1 from here ...
    h_dry_full: float = -4.0    # ... down to here
    h_wilt: float = -150.0      # alpha_w = 0 at and below

    def __post_init__(self):
        if not (self.h_wilt < self.h_dry_full < self.h_wet_full < self.h_anaer):
            raise ValueError("stress-curve anchors must be strictly ordered")


DEFAULT_STRESS = StressCurve()


def water_stress(h, curve: StressCurve = DEFAULT_STRESS):
    """Dimensionless transpiration reduction factor alpha_w(h) in [0, 1]."""
    h = np.asarray(h, dtype=float)
    wet_ramp = (h - curve.h_anaer) / (curve.h_wet_full - curve.h_anaer)
    dry_ramp = (h - curve.h_wilt) / (curve.h_dry_full - curve.h_wilt)
    a = np.minimum(np.clip(wet_ramp, 0.0, 1.0), np.clip(dry_ramp, 0.0, 1.0))
    return a if a.ndim else float(a)
