"""Ground-state profiles by action minimization and by ODE shooting.

Two independent routes to the unique positive radial profile:

* ``minimize_action`` -- preconditioned limited-memory quasi-Newton descent
  on the discrete action over the samples and the singular coefficient;
* ``shoot_profile`` -- integrate the radial profile equation outward from
  the origin expansion ``phi ~ A (s_N(r) + alpha)`` (the reference-free form
  of the boundary condition ``f(0) = (alpha + beta(lam)) c``) and inward
  from a decay ansatz at the outer radius, matching value and derivative
  in the middle; the singular strength A is bracketed by the over/undershoot
  classification of the forward shot and polished by secant on the
  derivative mismatch.

Uniqueness of the positive solution makes the two solvers oracles for each
other.  The module also carries the zero-mass decay toolkit: tail-exponent
fits, the exact algebraic solution of the free equation and its residual,
the two-profile comparison check, and the truncated-mass experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import solve_banded

from ._rk import (
    STATUS_CROSSED_ZERO,
    STATUS_OK,
    STATUS_TURNED_UP,
    integrate_profile,
)
from .errors import (
    BracketFailureError,
    InvariantViolation,
    NoDescentError,
    SolverError,
    WindowTooSmallError,
)
from .forms import FormAssembly, canonical_lambda
from .grid import DecomposedField, RadialGrid, default_grid, field_from_values
from .special import InteractionParams, _green, beta, bessel_k0, bessel_k1, green_l2_norm_sq

_GL16_X, _GL16_W = np.polynomial.legendre.leggauss(16)


# ---------------------------------------------------------------------------
# Options and results
# ---------------------------------------------------------------------------


@dataclass
class SolverOptions:
    tol: float = 5e-9            # residual target: converge at tol*(1+|S|)
    max_iter: int = 4000
    memory: int = 25             # quasi-Newton curvature pairs
    r_start: float = 1e-6        # origin expansion radius (shooting)
    ode_rtol: float = 1e-10
    check_invariants: bool = True
    verbose: bool = False


@dataclass
class SolveResult:
    profile: DecomposedField
    omega: float
    d_omega: float
    residual: float
    method: str                  # "minimize" | "shoot"
    iterations: int
    boundary_defect: float
    tail_exponent: float | None = None
    diagnostics: dict = dc_field(default_factory=dict)

    def summary(self) -> dict:
        c = self.profile.singular_coeff
        return {
            "omega": self.omega,
            "d_omega": self.d_omega,
            "residual": self.residual,
            "boundary_defect": self.boundary_defect,
            "tail_exponent": self.tail_exponent,
            "method": self.method,
            "iterations": self.iterations,
            "c_re": c.real,
            "c_im": c.imag,
            "sup_phi": float(np.abs(self.profile.values()).max()),
        }


# ---------------------------------------------------------------------------
# Origin expansion with one Picard correction
# ---------------------------------------------------------------------------


def _singular_kernel(dim: int, r):
    return 1.0 / (4.0 * math.pi * r) if dim == 3 else -np.log(r) / (2.0 * math.pi)


def _singular_kernel_deriv(dim: int, r):
    return -1.0 / (4.0 * math.pi * r**2) if dim == 3 else -1.0 / (2.0 * math.pi * r)


def origin_state(params: InteractionParams, omega: float, amplitude: float, r0: float):
    """(phi, phi') at r0 from the two-term expansion plus one Picard sweep.

    The leading behaviour is A (s_N(r) + alpha); the correction integrates
    the source omega phi0 + phi0^p through the radial Green kernel of the
    Laplacian, which captures the r^(2-p) (3D) and r^2 log^p r (2D) terms
    that a plain power expansion misses.
    """
    dim, p, alpha = params.dim, params.p, params.alpha
    A = amplitude

    def source(tau):
        phi0 = A * (_singular_kernel(dim, tau) + alpha)
        return omega * phi0 + np.abs(phi0) ** (p - 1.0) * phi0

    # geometric panels down from r0; the integrand is integrable at 0
    edges = r0 * 0.5 ** np.arange(0, 60)
    h_val = 0.0
    h_der = 0.0
    for hi, lo in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        tau = mid + half * _GL16_X
        g = source(tau) * tau ** (dim - 1)
        if dim == 3:
            kern = 1.0 / tau - 1.0 / r0
        else:
            kern = np.log(r0 / tau)
        h_val += float((_GL16_W * half) @ (g * kern))
        h_der += float((_GL16_W * half) @ g)
    h_der *= r0 ** (1 - dim)
    phi = A * (_singular_kernel(dim, r0) + alpha) + h_val
    dphi = A * _singular_kernel_deriv(dim, r0) + h_der
    return phi, dphi


# ---------------------------------------------------------------------------
# Zero-mass tail structure (free-equation algebra)
# ---------------------------------------------------------------------------


def veron_constant(p: float, dim: int) -> float:
    """Amplitude of the exact algebraic solution l r^(-2/(p-1)) of the free equation."""
    if not 1.0 < p and (dim == 2 or p < dim / (dim - 2.0)):
        raise ValueError("need 1 < p < N/(N-2)")
    k = 2.0 / (p - 1.0)
    c = k * (2.0 * p / (p - 1.0) - dim)
    return c ** (1.0 / (p - 1.0))


def veron_exact_residual(p: float, dim: int, r_samples) -> float:
    """Max relative residual of the exact algebraic solution in the free equation."""
    r = np.asarray(r_samples, dtype=float)
    if np.any(r <= 0.0):
        raise ValueError("samples must be positive")
    ell = veron_constant(p, dim)
    k = 2.0 / (p - 1.0)
    u = ell * r**-k
    d2 = ell * k * (k + 1.0) * r ** (-k - 2.0)
    d1 = -ell * k * r ** (-k - 1.0)
    res = d2 + (dim - 1.0) / r * d1 - u**p
    return float(np.max(np.abs(res) / u**p))


def _tail_exponents(p: float, dim: int) -> tuple[float, float]:
    """Growth/decay powers of perturbations around the algebraic tail."""
    k = 2.0 / (p - 1.0)
    b = dim - 2.0 - 2.0 * k
    disc = b * b + 4.0 * (p - 1.0) * k * (k + 2.0 - dim)
    root = math.sqrt(disc)
    return (-b + root) / 2.0, (-b - root) / 2.0


def comparison_sandwich_check(r_samples, u_vals, v_vals, epsilon: float) -> bool:
    """True iff u >= epsilon*v - 1e-10 at every sample with r >= 1.

    u must solve the free tail equation and epsilon*v the stretched one
    (0 < epsilon <= 1), with the ordering holding at r = 1; under those
    hypotheses the ordering propagates to all larger radii.
    """
    if not 0.0 < epsilon <= 1.0:
        raise ValueError("epsilon must be in (0, 1]")
    r = np.asarray(r_samples, dtype=float)
    u = np.asarray(u_vals, dtype=float)
    v = np.asarray(v_vals, dtype=float)
    sel = r >= 1.0
    if not np.any(sel):
        raise ValueError("no samples with r >= 1")
    u, v = u[sel], v[sel]
    if u[0] < epsilon * v[0] - 1e-10:
        raise ValueError("ordering must hold at the left end of the window")
    return bool(np.all(u >= epsilon * v - 1e-10))


@dataclass(frozen=True)
class TailFit:
    exponent: float
    rms_residual: float
    n_nodes: int
    window: tuple


def fit_tail_exponent(result_or_field, window=None) -> TailFit:
    """Least-squares slope of log phi vs log r over a far-field window."""
    if isinstance(result_or_field, SolveResult):
        fld = result_or_field.profile
    else:
        fld = result_or_field
    r = fld.grid.nodes
    vals = np.abs(fld.values().real)
    R = fld.grid.r_max
    if window is None:
        window = (0.6 * R, 0.9 * R)
    lo, hi = window
    if lo < R / 4.0 - 1e-9 or hi > 0.9 * R + 1e-9:
        raise ValueError("fit window must lie within [R/4, 0.9 R]")
    sel = (r >= lo) & (r <= hi) & (vals > 0.0)
    if int(sel.sum()) < 20:
        raise WindowTooSmallError("fewer than 20 nodes in the fit window")
    x = np.log(r[sel])
    y = np.log(vals[sel])
    slope, intercept = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return TailFit(float(slope), rms, int(sel.sum()), (float(lo), float(hi)))


def log_derivative_at(result: SolveResult, r_eval: float) -> float:
    """d log phi / dr near r_eval, from the stored profile derivative."""
    r = result.profile.grid.nodes
    dphi = result.diagnostics.get("dphi_nodes")
    vals = result.profile.values().real
    i = int(np.argmin(np.abs(r - r_eval)))
    if dphi is not None and np.isfinite(dphi[i]):
        return float(dphi[i] / vals[i])
    j = min(max(i, 1), len(r) - 2)
    return float((vals[j + 1] - vals[j - 1]) / (r[j + 1] - r[j - 1]) / vals[j])


# ---------------------------------------------------------------------------
# Shooting solver
# ---------------------------------------------------------------------------


def _forward_shot(params, omega, A, r0, targets, rtol, events=True):
    phi0, dphi0 = origin_state(params, omega, A, r0)
    return integrate_profile(
        r0, phi0, dphi0, np.asarray(targets, dtype=float), params.dim, omega, params.p, rtol, events
    )


def _inward_ic(params, omega, R_in, q):
    """State (phi, phi') at R_in of the decaying branch with inner parameter q.

    For omega > 0, q is the amplitude of the linear far field; for the
    zero-mass case the amplitude is pinned to the universal algebraic tail
    and q is the coefficient of its leading correction mode.
    """
    dim, p = params.dim, params.p
    if omega > 0.0:
        s = math.sqrt(omega)
        if dim == 3:
            return q, q * (-s - 1.0 / R_in)
        x = s * R_in
        k0, k1 = bessel_k0(x), bessel_k1(x)
        return q, q * (-s * k1 / k0)
    ell = veron_constant(p, dim)
    k = 2.0 / (p - 1.0)
    mu_minus = _tail_exponents(p, dim)[1]
    phi = ell * R_in**-k + q * R_in ** (mu_minus - k)
    dphi = -k * ell * R_in ** (-k - 1.0) + q * (mu_minus - k) * R_in ** (mu_minus - k - 1.0)
    return phi, dphi


def _inward_shot(params, omega, R_in, q, targets, rtol):
    phi0, dphi0 = _inward_ic(params, omega, R_in, q)
    return integrate_profile(
        R_in, phi0, dphi0, np.asarray(targets, dtype=float), params.dim, omega, params.p, rtol, False
    )


def _match_inner(params, omega, R_in, r_m, value_target, rtol):
    """Find the inner parameter whose backward solution hits value_target at r_m."""
    def shot(q):
        status, _, ph, dph, done = _inward_shot(params, omega, R_in, q, [r_m], rtol)
        if status != STATUS_OK or done < 1 or not np.isfinite(ph[0]) or ph[0] == 0.0:
            return None
        return float(ph[0]), float(dph[0])

    if omega > 0.0:
        # seed from the closed linear far field; the map q -> phi(r_m) is
        # nearly linear through the origin
        s = math.sqrt(omega)
        if params.dim == 3:
            g_ratio = (R_in / r_m) * math.exp(-s * (r_m - R_in))
        else:
            g_ratio = bessel_k0(s * r_m) / bessel_k0(s * R_in)
        q = value_target / g_ratio
        res = shot(q)
        if res is None:
            raise SolverError("inward integration failed")
        for _ in range(8):
            ph, dph = res
            if abs(ph - value_target) <= 1e-13 * abs(value_target):
                break
            q = q * value_target / ph
            res = shot(q)
            if res is None:
                raise SolverError("inward integration failed")
        return q, res
    # zero-mass: secant on the correction coefficient
    ell = veron_constant(params.p, params.dim)
    mu_minus = _tail_exponents(params.p, params.dim)[1]
    qa = 0.0
    ra = shot(qa)
    if ra is None:
        raise SolverError("inward integration failed")
    qb = 0.2 * ell * r_m ** (-mu_minus)
    rb = shot(qb)
    if rb is None:
        qb = -qb
        rb = shot(qb)
        if rb is None:
            raise SolverError("inward integration failed")
    for _ in range(60):
        fa, fb = ra[0] - value_target, rb[0] - value_target
        if fb == fa:
            break
        qn = qb - fb * (qb - qa) / (fb - fa)
        rn = shot(qn)
        if rn is None:
            qn = 0.5 * (qa + qb)
            rn = shot(qn)
            if rn is None:
                raise SolverError("inward integration failed")
        qa, ra, qb, rb = qb, rb, qn, rn
        if abs(rb[0] - value_target) <= 1e-13 * abs(value_target):
            break
    return qb, rb


def _defect_radii(unit: float, r0: float) -> np.ndarray:
    # several decades help the fit separate nearby fractional powers
    base = np.geomspace(1e-7, 3e-3, 16) * unit
    return base[base > 2.0 * r0]


def _fit_f_origin(params: InteractionParams, lam: float, radii, f_vals) -> float:
    """Extrapolate the regular part to r = 0 with the structure-aware basis.

    In 3D the regular part behaves like f(0) + c1 r^(2-p) + ... with the
    iterated fractional powers 2(2-p), 3-p, ... below the quadratic order;
    a plain polynomial fit cannot see past them, so the basis includes
    them explicitly (2D: r^2 log-power terms).  The kernel shape is also
    included: it absorbs any residual mismatch between the field's stored
    coefficient and the profile's actual singular strength, which would
    otherwise leak into the extrapolated value.
    """
    r = np.asarray(radii, dtype=float)
    p = params.p
    if params.dim == 3:
        exps = []
        for e in (2.0 - p, 2.0 * (2.0 - p), 1.0, 3.0 - p, 2.0):
            if all(abs(e - e0) > 0.05 for e0 in exps):
                exps.append(e)
        cols = [np.ones_like(r)] + [r**e for e in sorted(exps)]
    else:
        L = -np.log(r)
        cols = [np.ones_like(r), r**2 * L**p, r**2 * L, r**2]
    cols.append(_green(params.dim, lam, r))
    B = np.column_stack(cols)
    scale = np.abs(B).max(axis=0)
    coef, *_ = np.linalg.lstsq(B / scale, np.asarray(f_vals, dtype=float), rcond=None)
    return float(coef[0] / scale[0])


def boundary_defect_from_dense(params, lam, c, radii, phi_vals) -> float:
    """|f(0) - (alpha + beta(lam)) c| / |c| from dense profile samples."""
    f_vals = np.asarray(phi_vals, dtype=float) - c * _green(params.dim, lam, np.asarray(radii))
    f0 = _fit_f_origin(params, lam, radii, f_vals)
    target = (params.alpha + beta(params, lam)) * c
    return abs(f0 - target) / abs(c)


def shoot_profile(
    params: InteractionParams,
    omega: float,
    grid: RadialGrid | None = None,
    opts: SolverOptions | None = None,
) -> SolveResult:
    """Profile by two-sided shooting on the radial equation.

    Forward from the origin expansion (parameter: singular strength A),
    backward from the outer decay ansatz; A is bracketed by the forward
    over/undershoot classification, bisected to 1e-12 relative, and
    polished by secant on the derivative mismatch at the matching radius.
    """
    opts = opts or SolverOptions()
    _check_omega(params, omega)
    if grid is None:
        grid = default_grid(params, omega)
    unit = 1.0 / math.sqrt(params.omega_alpha)
    r0 = opts.r_start * unit
    R = grid.r_max
    rtol = opts.ode_rtol

    if omega > 0.0:
        # the forward leg amplifies noise like exp(2 sqrt(omega) r_m); keep
        # the matching radius where that stays ~1e3 of the ODE tolerance
        r_m = 4.5 / math.sqrt(omega)
        R_in = min(R, r_m + 35.0 / math.sqrt(omega))
        r_m = min(r_m, 0.45 * R_in)
    else:
        mu_plus = _tail_exponents(params.p, params.dim)[0]
        r_m = min(0.45 * R, max(10.0 * unit, 0.5 * 10.0 ** (10.0 / mu_plus)))
        R_in = R

    n_solves = 0

    def classify(A):
        nonlocal n_solves
        n_solves += 1
        status, r_stop, _, _, _ = _forward_shot(params, omega, A, r0, [R_in], rtol, events=True)
        return status

    # geometric bracket on the over/undershoot classification
    A0 = 0.5 * _bifurcation_amplitude(params, omega)
    s0 = classify(A0)
    span = None
    if s0 == STATUS_OK:
        # already inside the event-free band around the true strength
        A1 = A2 = A0
        span = 0.1 * abs(A0)
    else:
        event_statuses = (STATUS_CROSSED_ZERO, STATUS_TURNED_UP)
        if s0 not in event_statuses:
            raise BracketFailureError(f"unclassifiable shot at the seed strength {A0:g}")
        bracket = None
        for factor in (3.0, 1.0 / 3.0):
            Aa, sa = A0, s0
            for _ in range(40):
                Ab = Aa * factor
                sb = classify(Ab)
                if sb not in event_statuses:
                    break  # integration broke down at extreme strengths
                if sb != sa:
                    bracket = (Aa, sa, Ab, sb)
                    break
                Aa = Ab
            if bracket is not None:
                break
        if bracket is None:
            raise BracketFailureError(
                f"no sign change of the shooting classification around A ~ {A0:g}"
            )
        A1, s1, A2, s2 = bracket
        for _ in range(200):
            if abs(A2 - A1) <= 1e-12 * max(abs(A1), abs(A2)):
                break
            span = abs(A2 - A1)
            Am = 0.5 * (A1 + A2)
            sm = classify(Am)
            if sm == s1:
                A1 = Am
            elif sm == s2:
                A2 = Am
            elif sm == STATUS_OK:
                # event-free: inside the resolution band of the classification
                A1 = A2 = Am
                break
            else:
                raise SolverError("shot integration broke down during bisection")
        if span is None:
            span = abs(A2 - A1)

    # secant polish on the derivative mismatch of the matched two-sided shot
    def mismatch(A):
        nonlocal n_solves
        n_solves += 1
        status, _, ph, dph, done = _forward_shot(params, omega, A, r0, [r_m], rtol, events=False)
        if status != STATUS_OK or done < 1 or ph[0] <= 0.0:
            return None
        q, (phi_in, dphi_in) = _match_inner(params, omega, R_in, r_m, float(ph[0]), rtol)
        return (dphi_in - float(dph[0])) / (abs(float(dph[0])) + 1e-300), q

    A_best = 0.5 * (A1 + A2)
    span = max(span or 0.0, 1e-9 * abs(A_best))
    best = mismatch(A_best)
    if best is None:
        raise SolverError("matched shot failed at the bisection result")
    A_prev = A_best * (1.0 + 1e-9)
    res_prev = mismatch(A_prev)
    if res_prev is not None:
        W_prev = res_prev[0]
        A_cur, W_cur = A_best, best[0]
        for _ in range(8):
            if W_prev == W_cur:
                break
            A_next = A_cur - W_cur * (A_cur - A_prev) / (W_cur - W_prev)
            if not np.isfinite(A_next) or abs(A_next - A_best) > 20.0 * span:
                break
            res = mismatch(A_next)
            if res is None:
                break
            A_prev, W_prev = A_cur, W_cur
            A_cur, W_cur = A_next, res[0]
            if abs(W_cur) < abs(best[0]):
                A_best, best = A_cur, res
            if abs(W_cur) < 1e-12:
                break

    A = A_best
    q_inner = best[1]

    # final assembly on the grid
    nodes = grid.nodes
    fwd_mask = nodes <= r_m
    fwd_targets = np.unique(np.concatenate([nodes[fwd_mask], [r_m]]))
    status, _, ph_f, dph_f, done = _forward_shot(params, omega, A, r0, fwd_targets, rtol, events=False)
    if status != STATUS_OK or done < len(fwd_targets):
        raise SolverError("final forward integration failed")
    # dedicated short pass for the boundary-condition samples: started closer
    # to the origin (where the expansion is more accurate) and integrated
    # tighter, since the ~1/r kernel there amplifies integrator noise in the
    # extracted f(0)
    r0d = min(r0, 1e-8 * unit)
    tiny = _defect_radii(unit, r0d)
    status, _, ph_tiny, _, done = _forward_shot(
        params, omega, A, r0d, tiny, min(rtol, 1e-12), events=False
    )
    if status != STATUS_OK or done < len(tiny):
        raise SolverError("boundary-sample integration failed")
    mid_mask = (nodes > r_m) & (nodes <= R_in)
    in_targets = np.concatenate([nodes[mid_mask][::-1], [r_m]])
    status, _, ph_i, dph_i, done = _inward_shot(params, omega, R_in, q_inner, in_targets, rtol)
    if status != STATUS_OK or done < len(in_targets):
        raise SolverError("final inward integration failed")

    vals = np.empty(grid.n)
    dvals = np.empty(grid.n)
    pos = np.searchsorted(fwd_targets, nodes[fwd_mask])
    vals[fwd_mask] = ph_f[pos]
    dvals[fwd_mask] = dph_f[pos]
    vals[mid_mask] = ph_i[:-1][::-1]
    dvals[mid_mask] = dph_i[:-1][::-1]
    far_mask = nodes > R_in
    if np.any(far_mask):
        r_far = nodes[far_mask]
        s = math.sqrt(omega)
        if params.dim == 3:
            g = (R_in / r_far) * np.exp(-s * (r_far - R_in))
            dg = g * (-s - 1.0 / r_far)
        else:
            x = s * r_far
            k0R = bessel_k0(s * R_in)
            g = bessel_k0(x) / k0R
            dg = -s * bessel_k1(x) / k0R
        vals[far_mask] = q_inner * g
        dvals[far_mask] = q_inner * dg

    lam = canonical_lambda(params)
    profile = field_from_values(grid, vals.astype(complex), complex(A), lam)

    # boundary condition defect from the dense near-origin samples
    defect = boundary_defect_from_dense(params, lam, A, tiny, ph_tiny)

    asm = FormAssembly(params, grid)
    d_omega = asm.action(profile, omega).action
    mismatch_rel = abs(best[0])
    tail = None
    if omega == 0.0:
        tail = fit_tail_exponent(profile).exponent

    result = SolveResult(
        profile=profile,
        omega=omega,
        d_omega=d_omega,
        residual=max(mismatch_rel, rtol),
        method="shoot",
        iterations=n_solves,
        boundary_defect=defect,
        tail_exponent=tail,
        diagnostics={
            "matching_radius": r_m,
            "inward_start": R_in,
            "derivative_mismatch": mismatch_rel,
            "dphi_nodes": dvals,
            "amplitude": A,
            "defect_radii": tiny,
            "defect_phi": ph_tiny,
        },
    )
    if opts.check_invariants:
        check_profile_invariants(params, result)
    return result


def _bifurcation_amplitude(params: InteractionParams, omega: float) -> float:
    """Amplitude scale at which the eigen-direction makes the action negative."""
    # closed-form surrogate of ||chi||_{p+1}^{p+1} is not available; a fixed
    # O(1) grid-free estimate is enough for a bracket seed
    w = params.omega_alpha
    c_chi = 1.0 / math.sqrt(green_l2_norm_sq(params, w))
    return max((params.omega_alpha - omega), 0.05) ** (1.0 / (params.p - 1.0)) * c_chi * 0.5


def _check_omega(params: InteractionParams, omega: float):
    if not 0.0 <= omega < params.omega_alpha:
        raise ValueError(
            f"omega must lie in [0, omega_alpha) = [0, {params.omega_alpha:g}), got {omega:g}"
        )


# ---------------------------------------------------------------------------
# Action minimization
# ---------------------------------------------------------------------------


def gauge_fix(field: DecomposedField) -> DecomposedField:
    """Rotate a global phase so the singular coefficient is real positive."""
    c = field.singular_coeff
    if c == 0.0:
        return field
    phase = cmath_exp_neg_arg(c)
    return field.scaled(phase)


def cmath_exp_neg_arg(c: complex) -> complex:
    theta = -math.atan2(c.imag, c.real)
    return complex(math.cos(theta), math.sin(theta))


class _Metric:
    """Arrow solver for A + omega M + p diag(w |u|^(p-1)) + delta M.

    For real iterates this is the exact Hessian of the discrete action on
    the real subspace (plus Levenberg damping delta), so using it as the
    inverse metric of the quasi-Newton iteration gives Newton-quality steps
    at tridiagonal cost.
    """

    def __init__(self, asm: FormAssembly, omega: float, u_abs: np.ndarray, c_abs: float, delta: float):
        p = asm.params.p
        shift = omega + delta
        nl = p * asm.w * u_abs ** (p - 1.0)
        diag = asm.a_diag + shift * asm.w + nl
        off = asm.a_off
        self.border = asm.a_border + shift * asm.W + nl * asm.g_nodes
        self.corner = (
            asm.a_corner
            + shift * asm.g2
            + float(nl @ asm.g_nodes**2)
            + p * asm.lp1_corr * c_abs ** (p - 1.0)
        )
        n = diag.shape[0]
        ab = np.zeros((3, n))
        ab[0, 1:] = off
        ab[1, :] = diag
        ab[2, :-1] = off
        self.ab = ab
        self.zvec = solve_banded((1, 1), ab, self.border)
        self.denom = self.corner - float(self.border @ self.zvec)

    @property
    def positive(self) -> bool:
        return self.denom > 0.0

    def apply(self, gf: np.ndarray, gc: complex) -> tuple[np.ndarray, complex]:
        rhs = np.column_stack([gf.real, gf.imag])
        y = solve_banded((1, 1), self.ab, rhs)
        c_re = (gc.real - float(self.border @ y[:, 0])) / self.denom
        c_im = (gc.imag - float(self.border @ y[:, 1])) / self.denom
        f = (y[:, 0] - self.zvec * c_re) + 1j * (y[:, 1] - self.zvec * c_im)
        return f, complex(c_re, c_im)


def minimize_action(
    params: InteractionParams,
    omega: float,
    grid: RadialGrid | None = None,
    opts: SolverOptions | None = None,
) -> SolveResult:
    """Direct minimization of the discrete action over samples and coefficient.

    Limited-memory quasi-Newton descent (two-loop recursion preconditioned
    by the positive operator of the H1_alpha norm, solved exactly as a
    tridiagonal-plus-border system) with Armijo backtracking.  The iterate
    is started on the eigen-direction at the amplitude that makes the
    action negative, gauge-fixed at the end, and polished with imaginary
    parts pinned to zero.
    """
    opts = opts or SolverOptions()
    _check_omega(params, omega)
    if grid is None:
        grid = default_grid(params, omega)
    asm = FormAssembly(params, grid)
    n = grid.n
    w_alpha = params.omega_alpha

    # eigen-direction initializer at half the zero-crossing amplitude
    c_chi = 1.0 / math.sqrt(green_l2_norm_sq(params, w_alpha))
    chi = DecomposedField(grid, np.zeros(n), c_chi, w_alpha)
    f_chi, cc_chi = asm.canonical_parts(chi)
    chi_lp1 = asm.lp1_parts(f_chi, cc_chi)
    t_star = ((params.p + 1.0) * (w_alpha - omega) / (2.0 * chi_lp1)) ** (1.0 / (params.p - 1.0))
    t0 = 0.5 * t_star
    fstar = (t0 * f_chi).astype(complex)
    c = complex(t0 * cc_chi)

    S = asm.action_value(fstar, c, omega)
    if not S < 0.0:
        raise NoDescentError(
            f"initializer failed to make the action negative (S = {S:g}); "
            "omega too close to omega_alpha for this grid"
        )

    mem_s: list[tuple[np.ndarray, complex]] = []
    mem_y: list[tuple[np.ndarray, complex]] = []
    mem_rho: list[float] = []

    def dot(a, b):
        return float(np.sum(a[0].real * b[0].real + a[0].imag * b[0].imag)) + (
            a[1].real * b[1].real + a[1].imag * b[1].imag
        )

    def two_loop(gf, gc, metric):
        q = (gf.copy(), gc)
        alphas = []
        for s_i, y_i, rho_i in zip(reversed(mem_s), reversed(mem_y), reversed(mem_rho)):
            a_i = rho_i * dot(s_i, q)
            q = (q[0] - a_i * y_i[0], q[1] - a_i * y_i[1])
            alphas.append(a_i)
        z = metric.apply(q[0], q[1])
        for (s_i, y_i, rho_i), a_i in zip(zip(mem_s, mem_y, mem_rho), reversed(alphas)):
            b_i = rho_i * dot(y_i, z)
            z = (z[0] + (a_i - b_i) * s_i[0], z[1] + (a_i - b_i) * s_i[1])
        return z

    gf, gc = asm.gradient_parts(fstar, c, omega)
    eta = asm.residual_from_parts(gf, gc)
    iterations = 0
    pinned = False
    delta = 0.0
    w_floor = 1e-4 * params.omega_alpha
    best_S, stall = S, 0
    while iterations < opts.max_iter:
        # rounding floor: the action stopped improving but the residual sits
        # at the evaluation noise level; accept if it meets the contract
        if S < best_S - 1e-15 * (1.0 + abs(S)):
            best_S, stall = S, 0
        else:
            stall += 1
        if stall > 40 and eta <= max(2.0 * opts.tol, 1e-8):
            if pinned or abs(c.imag) + float(np.abs(fstar.imag).max()) == 0.0:
                break
        if eta <= opts.tol * (1.0 + abs(S)):
            if pinned or abs(c.imag) + float(np.abs(fstar.imag).max()) == 0.0:
                break
            # gauge fix, pin imaginary parts, continue to re-converge
            phase = cmath_exp_neg_arg(c)
            fstar = (phase * fstar).real.astype(complex)
            c = complex((phase * c).real)
            S = asm.action_value(fstar, c, omega)
            gf, gc = asm.gradient_parts(fstar, c, omega)
            gf, gc = gf.real.astype(complex), complex(gc.real)
            eta = asm.residual_from_parts(gf, gc)
            mem_s.clear(); mem_y.clear(); mem_rho.clear()
            pinned = True
            continue
        iterations += 1
        u_abs = np.abs(asm.values(fstar, c))
        d = None
        for _ in range(12):
            metric = _Metric(asm, omega, u_abs, abs(c), delta)
            if metric.positive:
                cand = two_loop(gf, gc, metric)
                cand = (-cand[0], -cand[1])
                if pinned:
                    cand = (cand[0].real.astype(complex), complex(cand[1].real))
                slope = dot(cand, (gf, gc))
                if slope < 0.0:
                    d = cand
                    break
                # memory may be stale against the refreshed metric
                mem_s.clear(); mem_y.clear(); mem_rho.clear()
                pf, pc = metric.apply(gf, gc)
                cand = (-pf, -pc)
                if pinned:
                    cand = (cand[0].real.astype(complex), complex(cand[1].real))
                slope = dot(cand, (gf, gc))
                if slope < 0.0:
                    d = cand
                    break
            delta = max(4.0 * delta, w_floor)
        if d is None:
            raise SolverError("no descent direction (metric breakdown)")
        step = 1.0
        S_new = None
        for _ in range(60):
            f_try = fstar + step * d[0]
            c_try = c + step * d[1]
            S_try = asm.action_value(f_try, c_try, omega)
            if S_try <= S + 1e-4 * step * slope:
                S_new = S_try
                break
            step *= 0.5
        if S_new is None:
            raise SolverError("line search failed to make progress")
        if step == 1.0:
            delta *= 0.25
            if delta < w_floor:
                delta = 0.0
        gf_new, gc_new = asm.gradient_parts(f_try, c_try, omega)
        if pinned:
            gf_new, gc_new = gf_new.real.astype(complex), complex(gc_new.real)
        s_pair = (f_try - fstar, c_try - c)
        y_pair = (gf_new - gf, gc_new - gc)
        sy = dot(s_pair, y_pair)
        if sy > 1e-12 * math.sqrt(max(dot(s_pair, s_pair), 1e-300)) * math.sqrt(
            max(dot(y_pair, y_pair), 1e-300)
        ):
            mem_s.append(s_pair)
            mem_y.append(y_pair)
            mem_rho.append(1.0 / sy)
            if len(mem_s) > opts.memory:
                mem_s.pop(0); mem_y.pop(0); mem_rho.pop(0)
        fstar, c, S, gf, gc = f_try, c_try, S_new, gf_new, gc_new
        eta = asm.residual_from_parts(gf, gc)
        if opts.verbose and iterations % 25 == 0:
            print(f"  iter {iterations}: S = {S:.12g}, residual = {eta:.3e}")
    else:
        raise SolverError(f"minimizer did not converge in {opts.max_iter} iterations")

    # final gauge fix (idempotent once pinned)
    phase = cmath_exp_neg_arg(c)
    fstar = (phase * fstar).real.astype(complex)
    c = complex((phase * c).real)
    profile = asm.field_from_parts(fstar, c)
    eval_final = asm.action(profile, omega)
    gf, gc = asm.gradient_parts(fstar, c, omega)
    eta = asm.residual_from_parts(gf, gc)

    defect = boundary_defect_from_profile(params, profile, omega)
    tail = None
    if omega == 0.0:
        tail = fit_tail_exponent(profile).exponent

    result = SolveResult(
        profile=profile,
        omega=omega,
        d_omega=eval_final.action,
        residual=eta,
        method="minimize",
        iterations=iterations,
        boundary_defect=defect,
        tail_exponent=tail,
        diagnostics={"form": eval_final.as_dict()},
    )
    if opts.check_invariants:
        check_profile_invariants(params, result)
    return result


# ---------------------------------------------------------------------------
# Boundary defect for grid-only profiles: continue the profile toward the
# origin with the radial equation itself, seeded by a two-parameter fit on
# a mid-range collocation window, then extrapolate the regular part.
# ---------------------------------------------------------------------------


def boundary_defect_from_profile(
    params: InteractionParams,
    field: DecomposedField,
    omega: float,
    lam: float | None = None,
    rtol: float = 1e-11,
) -> float:
    lam = field.lam if lam is None else lam
    unit = 1.0 / math.sqrt(params.omega_alpha)
    r = field.grid.nodes
    vals = field.values().real
    sel = np.where((r >= 0.3 * unit) & (r <= 0.9 * unit))[0]
    if len(sel) < 8:
        raise SolverError("grid too coarse for the boundary-defect window")
    if len(sel) > 48:
        sel = sel[np.linspace(0, len(sel) - 1, 48).astype(int)]
    r_w = r[sel]
    v_w = vals[sel]
    r_b = r_w[-1]
    targets = r_w[:-1][::-1]

    def predict(phi_b, dphi_b):
        status, _, ph, _, done = integrate_profile(
            r_b, phi_b, dphi_b, targets, params.dim, omega, params.p, rtol, False
        )
        if status != STATUS_OK or done < len(targets):
            return None
        return np.concatenate([ph[::-1], [phi_b]])

    phi_b = float(v_w[-1])
    dphi_b = float((v_w[-1] - v_w[-2]) / (r_w[-1] - r_w[-2]))
    x = np.array([phi_b, dphi_b])
    for _ in range(4):
        base = predict(x[0], x[1])
        if base is None:
            raise SolverError("inward continuation failed in defect estimation")
        res = base - v_w
        J = np.empty((len(v_w), 2))
        for j in range(2):
            h = 1e-7 * (abs(x[j]) + abs(x[0]))
            xp = x.copy()
            xp[j] += h
            pred = predict(xp[0], xp[1])
            if pred is None:
                raise SolverError("inward continuation failed in defect estimation")
            J[:, j] = (pred - base) / h
        dx, *_ = np.linalg.lstsq(J, -res, rcond=None)
        x = x + dx
        if np.linalg.norm(dx) <= 1e-13 * (abs(x[0]) + abs(x[1])):
            break

    tiny = _defect_radii(unit, 1e-7 * unit)
    status, _, ph, _, done = integrate_profile(
        r_b, x[0], x[1], tiny[::-1], params.dim, omega, params.p, rtol, False
    )
    if status != STATUS_OK or done < len(tiny):
        raise SolverError("inward continuation failed in defect estimation")
    c = field.singular_coeff.real
    return boundary_defect_from_dense(params, lam, c, tiny, ph[::-1])


def discrete_ground_pair(
    params: InteractionParams, grid: RadialGrid, asm: FormAssembly | None = None
) -> tuple[float, DecomposedField]:
    """Bottom eigenpair of the discrete quadratic form (inverse iteration).

    Returns (theta0, eigenfield) with the eigenfield mass-normalized; theta0
    approximates e_alpha to discretization accuracy, and the eigenfield is
    the exact rotation mode of the discrete linear flow.
    """
    asm = asm or FormAssembly(params, grid)
    sigma = params.e_alpha - 0.5 * params.omega_alpha
    shifted = _Metric(asm, -sigma, np.zeros(grid.n), 0.0, 0.0)
    if not shifted.positive:
        raise SolverError("eigen shift lost definiteness")
    c_chi = 1.0 / math.sqrt(green_l2_norm_sq(params, params.omega_alpha))
    x = asm.canonical_parts(DecomposedField(grid, np.zeros(grid.n), c_chi, params.omega_alpha))
    f, c = x[0].real, x[1].real
    theta = params.e_alpha
    for _ in range(40):
        mf, mc = asm.apply_mass_matrix(f, c)
        y_f, y_c = shifted.apply(mf.astype(complex), complex(mc))
        f, c = y_f.real, y_c.real
        nrm = math.sqrt(asm.mass_parts(f, c))
        f, c = f / nrm, c / nrm
        gf, gc = asm.apply_form_matrix(f, c)
        theta_new = float((f @ gf).real + (c * gc).real)
        if abs(theta_new - theta) <= 1e-14 * abs(theta_new):
            theta = theta_new
            break
        theta = theta_new
    if c < 0.0:
        f, c = -f, -c
    return theta, asm.field_from_parts(f.astype(complex), complex(c))


# ---------------------------------------------------------------------------
# Structural checks shared by both solvers
# ---------------------------------------------------------------------------


def check_profile_invariants(params: InteractionParams, result: SolveResult):
    """Least action negative, nonzero coefficient, positive decreasing profile."""
    if not result.d_omega < 0.0:
        raise InvariantViolation(f"least action {result.d_omega:g} is not negative")
    c = result.profile.singular_coeff
    if abs(c) == 0.0:
        raise InvariantViolation("singular coefficient vanished")
    vals = result.profile.values().real
    sup = float(vals.max())
    floor = sup * 1e-11
    if np.any(vals < -floor):
        raise InvariantViolation("profile has negative values")
    diffs = np.diff(vals)
    live = np.maximum(vals[:-1], vals[1:]) > floor
    if np.any(diffs[live] >= 0.0):
        raise InvariantViolation("profile is not strictly decreasing")


def cross_validate(
    params: InteractionParams,
    omega: float,
    grid: RadialGrid | None = None,
    opts: SolverOptions | None = None,
) -> dict:
    """Run both solvers on one grid and report their disagreement."""
    if grid is None:
        grid = default_grid(params, omega)
    mini = minimize_action(params, omega, grid, opts)
    shot = shoot_profile(params, omega, grid, opts)
    v1 = mini.profile.values().real
    v2 = shot.profile.values().real
    sup = float(np.abs(v2).max())
    sup_diff = float(np.abs(v1 - v2).max()) / sup
    d_rel = abs(mini.d_omega - shot.d_omega) / abs(shot.d_omega)
    return {
        "minimize": mini,
        "shoot": shot,
        "sup_rel_diff": sup_diff,
        "d_rel_diff": d_rel,
    }


# ---------------------------------------------------------------------------
# Truncated-mass experiment for the square-integrability threshold
# ---------------------------------------------------------------------------


def l2_threshold_experiment(
    params: InteractionParams,
    r_list,
    opts: SolverOptions | None = None,
) -> list[tuple[float, float]]:
    """Truncated squared L2 mass of the zero-mass profile at increasing radii."""
    from .grid import build_grid, kernel_power_correction

    r_list = sorted(float(R) for R in r_list)
    unit = 1.0 / math.sqrt(params.omega_alpha)
    R_max = 1.1 * r_list[-1]
    grid = build_grid(params.dim, 1e-4 * unit, R_max, 8192, 2.5)
    shot = shoot_profile(params, 0.0, grid, opts)
    vals = shot.profile.values().real
    cum = np.cumsum(grid.weights * vals**2)
    c = shot.profile.singular_coeff.real
    head = c**2 * (
        kernel_power_correction(grid, shot.profile.lam, 2.0)
    )
    out = []
    for R in r_list:
        i = int(np.searchsorted(grid.edges[1:], R))
        i = min(i, grid.n - 1)
        out.append((R, float(cum[i] + head)))
    return out
