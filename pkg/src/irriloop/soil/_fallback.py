"""Pure-numpy implementation of the implicit column stepper.

Mirrors the compiled kernel in ``_kernel.pyx``; used when the extension is
unavailable or when IRRILOOP_PURE_PYTHON is set.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"

_H_FLOOR = -1.0e6
_H_CEIL = -1.0e-8
_H_GUARD = -1.0e-9  # iterate safeguard inside Newton


class IntegrationError(RuntimeError):
    """Raised when the adaptive substep underflows without convergence."""


def _vg(h, ks, theta_s, theta_r, alpha, n):
    """theta(h) and K(h) for h < 0."""
    m = 1.0 - 1.0 / n
    ah = (-alpha * h) ** n
    se = (1.0 + ah) ** (-m)
    theta = theta_r + (theta_s - theta_r) * se
    k = ks * np.sqrt(se) * (1.0 - (1.0 - se ** (1.0 / m)) ** m) ** 2
    return theta, k


def _stress(h, a1, a2, a3, a4):
    wet = np.clip((h - a1) / (a2 - a1), 0.0, 1.0)
    dry = np.clip((h - a4) / (a3 - a4), 0.0, 1.0)
    return np.minimum(wet, dry)


def _residual(h_new, theta_old, dt, infil, et_kc, soil, dz, n_root, root_depth,
              stress_anchors, geometric_mean):
    """(theta(h_new) - theta_old)/dt - divergence(flux) + sink, in theta/s."""
    ks, theta_s, theta_r, alpha, n = soil
    theta, k = _vg(h_new, ks, theta_s, theta_r, alpha, n)
    if geometric_mean:
        kf = np.sqrt(k[:-1] * k[1:])
    else:
        kf = 0.5 * (k[:-1] + k[1:])
    # downward-positive face fluxes; q[0] is the surface, q[-1] the bottom
    q = np.empty(h_new.size + 1)
    q[0] = infil
    q[1:-1] = kf * ((h_new[:-1] - h_new[1:]) / dz + 1.0)
    q[-1] = k[-1]  # free drainage: unit gravity gradient
    sink = np.zeros_like(h_new)
    if et_kc > 0.0:
        sink[:n_root] = _stress(h_new[:n_root], *stress_anchors) * et_kc / root_depth
    div = (q[:-1] - q[1:]) / dz
    return (theta - theta_old) / dt - div + sink, q, sink


def advance(h, dt, infil, et_kc, soil, dz, n_root, root_depth, stress_anchors,
            substep_init=60.0, newton_tol=1e-8, max_newton=15, min_substep=1e-3,
            geometric_mean=False):
    """Advance the column by dt [s] with adaptive implicit-Euler substeps.

    Returns (h_new, n_substeps, n_clamps, inflow_m, drainage_m, transp_m)
    with the boundary fluxes accumulated over the step.
    """
    h = np.array(h, dtype=float)
    nn = h.size
    ks, theta_s, theta_r, alpha, n = soil
    n_sub = 0
    n_clamp = 0
    inflow = 0.0
    drainage = 0.0
    transp = 0.0
    remaining = float(dt)
    sub = min(substep_init, remaining) if remaining > 0 else substep_init

    while remaining > 1e-12:
        dt_s = min(sub, remaining)
        theta_old, _ = _vg(h, ks, theta_s, theta_r, alpha, n)
        h_try = h.copy()
        converged = False
        for _ in range(max_newton):
            f, _, _ = _residual(h_try, theta_old, dt_s, infil, et_kc, soil, dz,
                                n_root, root_depth, stress_anchors, geometric_mean)
            # tridiagonal Jacobian by finite differences with 3-coloring
            lower = np.zeros(nn)
            diag = np.zeros(nn)
            upper = np.zeros(nn)
            for color in range(3):
                idx = np.arange(color, nn, 3)
                delta = -1e-7 * (1.0 + np.abs(h_try[idx]))
                hp = h_try.copy()
                hp[idx] += delta
                fp, _, _ = _residual(hp, theta_old, dt_s, infil, et_kc, soil, dz,
                                     n_root, root_depth, stress_anchors,
                                     geometric_mean)
                for j, d in zip(idx, delta):
                    diag[j] = (fp[j] - f[j]) / d
                    if j > 0:
                        lower[j] = (fp[j - 1] - f[j - 1]) / d
                    if j < nn - 1:
                        upper[j] = (fp[j + 1] - f[j + 1]) / d
            step = _thomas(lower, diag, upper, -f)
            # keep the iterate strictly unsaturated
            scale = 1.0
            cand = h_try + step
            while np.any(cand >= _H_GUARD) and scale > 1e-6:
                scale *= 0.5
                cand = h_try + scale * step
            cand = np.clip(cand, _H_FLOOR, _H_GUARD)
            moved = np.max(np.abs(cand - h_try))
            h_try = cand
            if moved < newton_tol:
                converged = True
                break
        if not converged:
            sub *= 0.5
            if sub < min_substep:
                raise IntegrationError(
                    f"Newton failed to converge with substep below {min_substep} s"
                )
            continue
        # accept; account boundary fluxes at the new state (implicit scheme)
        _, q, sink = _residual(h_try, theta_old, dt_s, infil, et_kc, soil, dz,
                               n_root, root_depth, stress_anchors, geometric_mean)
        inflow += q[0] * dt_s
        drainage += q[-1] * dt_s
        transp += float(np.sum(sink)) * dz * dt_s
        clamped = h_try > _H_CEIL
        if np.any(clamped):
            n_clamp += int(np.sum(clamped))
            h_try[clamped] = _H_CEIL
        h = h_try
        n_sub += 1
        remaining -= dt_s
        sub = min(sub * 2.0, substep_init)

    return h, n_sub, n_clamp, inflow, drainage, transp


def _thomas(lower, diag, upper, rhs):
    """Solve a tridiagonal system in place; lower[0] and upper[-1] unused."""
    n = diag.size
    c = upper.copy()
    d = rhs.copy()
    b = diag.copy()
    for i in range(1, n):
        w = lower[i] / b[i - 1]
        b[i] -= w * c[i - 1]
        d[i] -= w * d[i - 1]
    x = np.empty(n)
    x[-1] = d[-1] / b[-1]
    for i in range(n - 2, -1, -1):
        x[i] = (d[i] - c[i] * x[i + 1]) / b[i]
    return x
