# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implicit-Euler stepper for the soil column.

Semantics match ``_fallback.advance``; keep the two in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt

from ._fallback import IntegrationError

cnp.import_array()

cdef double H_FLOOR = -1.0e6
cdef double H_CEIL = -1.0e-8
cdef double H_GUARD = -1.0e-9


cdef inline double _theta(double h, double ks, double ths, double thr,
                          double alpha, double n) nogil:
    cdef double m = 1.0 - 1.0 / n
    cdef double se = pow(1.0 + pow(-alpha * h, n), -m)
    return thr + (ths - thr) * se


cdef inline double _kcond(double h, double ks, double ths, double thr,
                          double alpha, double n) nogil:
    cdef double m = 1.0 - 1.0 / n
    cdef double se = pow(1.0 + pow(-alpha * h, n), -m)
    cdef double term = 1.0 - pow(1.0 - pow(se, 1.0 / m), m)
    return ks * sqrt(se) * term * term


cdef inline double _stress(double h, double a1, double a2, double a3,
                           double a4) nogil:
    cdef double wet = (h - a1) / (a2 - a1)
    cdef double dry = (h - a4) / (a3 - a4)
    if wet < 0.0:
        wet = 0.0
    elif wet > 1.0:
        wet = 1.0
    if dry < 0.0:
        dry = 0.0
    elif dry > 1.0:
        dry = 1.0
    return wet if wet < dry else dry


cdef void _residual(int nn, double* h, double* theta_old, double dt,
                    double infil, double et_kc, double ks, double ths,
                    double thr, double alpha, double n, double dz,
                    int n_root, double root_depth,
                    double a1, double a2, double a3, double a4,
                    bint geom, double* k, double* th, double* f,
                    double* q_bot, double* sink_total) nogil:
    cdef int i
    cdef double m = 1.0 - 1.0 / n
    cdef double se, term, q_up, q_dn, kf, sink, stot = 0.0
    for i in range(nn):
        se = pow(1.0 + pow(-alpha * h[i], n), -m)
        th[i] = thr + (ths - thr) * se
        term = 1.0 - pow(1.0 - pow(se, 1.0 / m), m)
        k[i] = ks * sqrt(se) * term * term
    q_up = infil
    for i in range(nn):
        if i < nn - 1:
            if geom:
                kf = sqrt(k[i] * k[i + 1])
            else:
                kf = 0.5 * (k[i] + k[i + 1])
            q_dn = kf * ((h[i] - h[i + 1]) / dz + 1.0)
        else:
            q_dn = k[nn - 1]
        sink = 0.0
        if et_kc > 0.0 and i < n_root:
            sink = _stress(h[i], a1, a2, a3, a4) * et_kc / root_depth
        stot += sink
        f[i] = (th[i] - theta_old[i]) / dt - (q_up - q_dn) / dz + sink
        q_up = q_dn
    q_bot[0] = q_up
    sink_total[0] = stot


cdef void _thomas(int nn, double* lower, double* diag, double* upper,
                  double* rhs, double* work, double* x) nogil:
    cdef int i
    cdef double w
    # work holds the modified diagonal; rhs is modified in place
    work[0] = diag[0]
    for i in range(1, nn):
        w = lower[i] / work[i - 1]
        work[i] = diag[i] - w * upper[i - 1]
        rhs[i] -= w * rhs[i - 1]
    x[nn - 1] = rhs[nn - 1] / work[nn - 1]
    for i in range(nn - 2, -1, -1):
        x[i] = (rhs[i] - upper[i] * x[i + 1]) / work[i]


def advance(h_in, double dt, double infil, double et_kc, soil, double dz,
            int n_root, double root_depth, stress_anchors,
            double substep_init=60.0, double newton_tol=1e-8,
            int max_newton=15, double min_substep=1e-3,
            bint geometric_mean=False):
    """See ``_fallback.advance``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] h = \
        np.ascontiguousarray(h_in, dtype=np.float64).copy()
    cdef int nn = h.shape[0]
    cdef double ks = soil[0], ths = soil[1], thr = soil[2]
    cdef double alpha = soil[3], n = soil[4]
    cdef double a1 = stress_anchors[0], a2 = stress_anchors[1]
    cdef double a3 = stress_anchors[2], a4 = stress_anchors[3]

    cdef cnp.ndarray[cnp.float64_t, ndim=1] buf = np.empty(13 * nn)
    cdef double* hp = <double*> buf.data
    cdef double* htry = hp + nn
    cdef double* theta_old = hp + 2 * nn
    cdef double* f = hp + 3 * nn
    cdef double* fp = hp + 4 * nn
    cdef double* lower = hp + 5 * nn
    cdef double* diag = hp + 6 * nn
    cdef double* upper = hp + 7 * nn
    cdef double* rhs = hp + 8 * nn
    cdef double* work = hp + 9 * nn
    cdef double* stepv = hp + 10 * nn
    cdef double* karr = hp + 11 * nn
    cdef double* tharr = hp + 12 * nn
    cdef double* hcur = <double*> h.data

    cdef int n_sub = 0, n_clamp = 0
    cdef double inflow = 0.0, drainage = 0.0, transp = 0.0
    cdef double remaining = dt
    cdef double sub = substep_init if dt <= 0 else min(substep_init, dt)
    cdef double dt_s, delta, moved, scale, cand, q_bot, sink_tot
    cdef int i, j, it, color
    cdef bint converged, bad

    while remaining > 1e-12:
        dt_s = sub if sub < remaining else remaining
        for i in range(nn):
            theta_old[i] = _theta(hcur[i], ks, ths, thr, alpha, n)
            htry[i] = hcur[i]
        converged = False
        for it in range(max_newton):
            _residual(nn, htry, theta_old, dt_s, infil, et_kc, ks, ths, thr,
                      alpha, n, dz, n_root, root_depth, a1, a2, a3, a4,
                      geometric_mean, karr, tharr, f, &q_bot, &sink_tot)
            for i in range(nn):
                lower[i] = 0.0
                diag[i] = 0.0
                upper[i] = 0.0
            for color in range(3):
                for i in range(nn):
                    hp[i] = htry[i]
                j = color
                while j < nn:
                    hp[j] += -1e-7 * (1.0 + fabs(htry[j]))
                    j += 3
                _residual(nn, hp, theta_old, dt_s, infil, et_kc, ks, ths, thr,
                          alpha, n, dz, n_root, root_depth, a1, a2, a3, a4,
                          geometric_mean, karr, tharr, fp, &q_bot, &sink_tot)
                j = color
                while j < nn:
                    delta = hp[j] - htry[j]
                    diag[j] = (fp[j] - f[j]) / delta
                    if j > 0:
                        lower[j] = (fp[j - 1] - f[j - 1]) / delta
                    if j < nn - 1:
                        upper[j] = (fp[j + 1] - f[j + 1]) / delta
                    j += 3
            for i in range(nn):
                rhs[i] = -f[i]
            _thomas(nn, lower, diag, upper, rhs, work, stepv)
            scale = 1.0
            while scale > 1e-6:
                bad = False
                for i in range(nn):
                    if htry[i] + scale * stepv[i] >= H_GUARD:
                        bad = True
                        break
                if not bad:
                    break
                scale *= 0.5
            moved = 0.0
            for i in range(nn):
                cand = htry[i] + scale * stepv[i]
                if cand >= H_GUARD:
                    cand = H_GUARD
                elif cand < H_FLOOR:
                    cand = H_FLOOR
                if fabs(cand - htry[i]) > moved:
                    moved = fabs(cand - htry[i])
                htry[i] = cand
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
        _residual(nn, htry, theta_old, dt_s, infil, et_kc, ks, ths, thr,
                  alpha, n, dz, n_root, root_depth, a1, a2, a3, a4,
                  geometric_mean, karr, tharr, f, &q_bot, &sink_tot)
        inflow += infil * dt_s
        drainage += q_bot * dt_s
        transp += sink_tot * dz * dt_s
        for i in range(nn):
            if htry[i] > H_CEIL:
                n_clamp += 1
                htry[i] = H_CEIL
            hcur[i] = htry[i]
        n_sub += 1
        remaining -= dt_s
        sub = min(sub * 2.0, substep_init)

    return h, n_sub, n_clamp, inflow, drainage, transp
