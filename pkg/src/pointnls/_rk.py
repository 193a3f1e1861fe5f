"""Adaptive Dormand-Prince 5(4) integrator for the radial profile equation.

Integrates  phi'' + (N-1)/r phi' - omega phi - |phi|^(p-1) phi = 0  as a
first-order system, marching through a sorted list of target radii in
either direction.  Steps are capped so that every target is hit exactly
(no dense-output interpolation error at the samples).  Error control is
relative, which keeps resolving exponentially small tails.

Event detection (forward shooting only): the profile crossing zero, or
its derivative turning nonnegative, classifies an over/undershoot of the
singular strength.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_CROSSED_ZERO = 1
STATUS_TURNED_UP = 2
STATUS_STEP_UNDERFLOW = -1
STATUS_MAX_STEPS = -2


@njit(cache=True, fastmath=False)
def _rhs(r, y0, y1, dim, omega, p):
    nl = abs(y0) ** p
    if y0 < 0.0:
        nl = -nl
    return y1, -(dim - 1.0) / r * y1 + omega * y0 + nl


@njit(cache=True, fastmath=False)
def integrate_profile(r0, phi0, dphi0, targets, dim, omega, p, rtol, check_events):
    """March from r0 through `targets` (monotone, first differs from r0).

    Returns (status, r_stop, phi_at_targets, dphi_at_targets, n_done).
    Targets before an event get filled; the rest stay NaN.
    """
    m = targets.shape[0]
    out_phi = np.full(m, np.nan)
    out_dphi = np.full(m, np.nan)
    direction = 1.0 if targets[m - 1] > r0 else -1.0

    r = r0
    y0 = phi0
    y1 = dphi0
    h_ctrl = direction * max(1e-10, abs(r0) * 1e-6)
    tiny = 1e-290
    max_steps = 50_000_000
    k = 0  # next target index
    steps = 0

    # Dormand-Prince coefficients
    a21 = 1.0 / 5.0
    a31 = 3.0 / 40.0
    a32 = 9.0 / 40.0
    a41 = 44.0 / 45.0
    a42 = -56.0 / 15.0
    a43 = 32.0 / 9.0
    a51 = 19372.0 / 6561.0
    a52 = -25360.0 / 2187.0
    a53 = 64448.0 / 6561.0
    a54 = -212.0 / 729.0
    a61 = 9017.0 / 3168.0
    a62 = -355.0 / 33.0
    a63 = 46732.0 / 5247.0
    a64 = 49.0 / 176.0
    a65 = -5103.0 / 18656.0
    b1 = 35.0 / 384.0
    b3 = 500.0 / 1113.0
    b4 = 125.0 / 192.0
    b5 = -2187.0 / 6784.0
    b6 = 11.0 / 84.0
    e1 = b1 - 5179.0 / 57600.0
    e3 = b3 - 7571.0 / 16695.0
    e4 = b4 - 393.0 / 640.0
    e5 = b5 + 92097.0 / 339200.0
    e6 = b6 - 187.0 / 2100.0
    e7 = -1.0 / 40.0

    k10, k11 = _rhs(r, y0, y1, dim, omega, p)
    while k < m:
        if steps >= max_steps:
            return STATUS_MAX_STEPS, r, out_phi, out_dphi, k
        steps += 1
        # do not step past the next target
        remaining = targets[k] - r
        hit_target = False
        h = h_ctrl
        if abs(h) >= abs(remaining):
            h = remaining
            hit_target = True
        rn = r + h
        u0 = y0 + h * a21 * k10
        u1 = y1 + h * a21 * k11
        k20, k21 = _rhs(r + h / 5.0, u0, u1, dim, omega, p)
        u0 = y0 + h * (a31 * k10 + a32 * k20)
        u1 = y1 + h * (a31 * k11 + a32 * k21)
        k30, k31 = _rhs(r + 3.0 * h / 10.0, u0, u1, dim, omega, p)
        u0 = y0 + h * (a41 * k10 + a42 * k20 + a43 * k30)
        u1 = y1 + h * (a41 * k11 + a42 * k21 + a43 * k31)
        k40, k41 = _rhs(r + 4.0 * h / 5.0, u0, u1, dim, omega, p)
        u0 = y0 + h * (a51 * k10 + a52 * k20 + a53 * k30 + a54 * k40)
        u1 = y1 + h * (a51 * k11 + a52 * k21 + a53 * k31 + a54 * k41)
        k50, k51 = _rhs(r + 8.0 * h / 9.0, u0, u1, dim, omega, p)
        u0 = y0 + h * (a61 * k10 + a62 * k20 + a63 * k30 + a64 * k40 + a65 * k50)
        u1 = y1 + h * (a61 * k11 + a62 * k21 + a63 * k31 + a64 * k41 + a65 * k51)
        k60, k61 = _rhs(rn, u0, u1, dim, omega, p)
        y0n = y0 + h * (b1 * k10 + b3 * k30 + b4 * k40 + b5 * k50 + b6 * k60)
        y1n = y1 + h * (b1 * k11 + b3 * k31 + b4 * k41 + b5 * k51 + b6 * k61)
        k70, k71 = _rhs(rn, y0n, y1n, dim, omega, p)
        err0 = h * (e1 * k10 + e3 * k30 + e4 * k40 + e5 * k50 + e6 * k60 + e7 * k70)
        err1 = h * (e1 * k11 + e3 * k31 + e4 * k41 + e5 * k51 + e6 * k61 + e7 * k71)
        sc0 = rtol * (abs(y0) + abs(y0n)) * 0.5 + tiny
        sc1 = rtol * (abs(y1) + abs(y1n)) * 0.5 + tiny
        err = np.sqrt(0.5 * ((err0 / sc0) ** 2 + (err1 / sc1) ** 2))
        if err > 1e-30:
            fac = 0.9 * err ** (-0.2)
            if fac < 0.2:
                fac = 0.2
            elif fac > 5.0:
                fac = 5.0
        else:
            fac = 5.0
        if err <= 1.0:
            r = rn
            y0 = y0n
            y1 = y1n
            k10, k11 = k70, k71  # FSAL
            if hit_target:
                out_phi[k] = y0
                out_dphi[k] = y1
                k += 1
                # a capped step must not shrink the controller memory
                if abs(h * fac) > abs(h_ctrl):
                    h_ctrl = h * fac
            else:
                h_ctrl = h * fac
            if check_events:
                if y0 <= 0.0:
                    return STATUS_CROSSED_ZERO, r, out_phi, out_dphi, k
                if y1 >= 0.0:
                    return STATUS_TURNED_UP, r, out_phi, out_dphi, k
        else:
            h_ctrl = h * fac
        if abs(h_ctrl) < abs(r) * 1e-15 + 1e-300:
            return STATUS_STEP_UNDERFLOW, r, out_phi, out_dphi, k
    return STATUS_OK, r, out_phi, out_dphi, k
