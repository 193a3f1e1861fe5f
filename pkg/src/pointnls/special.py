"""Spectral constants and Green kernels for the point-interaction Laplacian.

The operator is the self-adjoint extension of -Laplace restricted to
functions vanishing at the origin, with strength parameter alpha.  All
closed forms live here:

* ``G_lam`` -- fundamental solution of (lam - Laplace), i.e.
  ``K0(sqrt(lam) r) / (2 pi)`` in 2D and ``exp(-sqrt(lam) r) / (4 pi r)``
  in 3D,
* ``beta(lam)`` -- the scalar entering the boundary condition
  ``f(0) = (alpha + beta(lam)) c``,
* ``e_alpha`` -- the unique negative eigenvalue, and ``omega_alpha`` its
  absolute value (standing waves exist for ``0 <= omega < omega_alpha``),
* closed-form L2 norms and mutual inner products of the kernels.

Everything is a pure function of its arguments; no global state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Euler-Mascheroni constant
EULER_GAMMA = 0.5772156649015328606

# values smaller than this are flushed to exactly zero in the kernel tails
UNDERFLOW_FLOOR = 1e-300

_TWO_PI = 2.0 * math.pi
_FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class InteractionParams:
    """Problem definition: dimension, interaction strength, nonlinearity power.

    Admissibility: ``dim`` is 2 or 3; ``alpha`` is any real in 2D but must be
    strictly negative in 3D (otherwise there is no bound state); the power
    ``p`` satisfies ``p > 1`` in 2D and ``1 < p < 2`` in 3D.
    """

    dim: int
    alpha: float
    p: float

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.dim == 3 and not self.alpha < 0.0:
            raise ValueError("alpha must be negative for dim 3")
        if not self.p > 1.0:
            raise ValueError(f"p must be > 1, got {self.p}")
        if self.dim == 3 and not self.p < 2.0:
            raise ValueError(f"p must be < 2 for dim 3, got {self.p}")
        if not (math.isfinite(self.alpha) and math.isfinite(self.p)):
            raise ValueError("alpha and p must be finite")

    @property
    def e_alpha(self) -> float:
        return e_alpha(self)

    @property
    def omega_alpha(self) -> float:
        return omega_alpha(self)

    @property
    def lambda_default(self) -> float:
        """Canonical spectral parameter 1 + omega_alpha used for norms."""
        return 1.0 + omega_alpha(self)

    @property
    def surface_measure(self) -> float:
        """sigma_N: 2 pi in 2D, 4 pi in 3D (the angular factor of the measure)."""
        return _TWO_PI if self.dim == 2 else _FOUR_PI


def e_alpha(params: InteractionParams) -> float:
    """The unique negative eigenvalue of the point-interaction Laplacian."""
    if params.dim == 2:
        return -4.0 * math.exp(-4.0 * math.pi * params.alpha - 2.0 * EULER_GAMMA)
    return -((_FOUR_PI * params.alpha) ** 2)


def omega_alpha(params: InteractionParams) -> float:
    """|e_alpha|; the standing-wave frequency window is [0, omega_alpha)."""
    return -e_alpha(params)


def alpha_for_omega(dim: int, omega_target: float) -> float:
    """Interaction strength alpha such that omega_alpha equals omega_target."""
    if not omega_target > 0.0:
        raise ValueError("omega_target must be positive")
    if dim == 2:
        # -4 pi alpha - 2 gamma = log(omega/4)
        return -(math.log(omega_target / 4.0) + 2.0 * EULER_GAMMA) / (4.0 * math.pi)
    if dim == 3:
        return -math.sqrt(omega_target) / _FOUR_PI
    raise ValueError(f"dim must be 2 or 3, got {dim}")


def beta(params: InteractionParams, lam) -> float:
    """Boundary-condition scalar beta(lam); strictly increasing in lam."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0.0):
        raise ValueError("lam must be positive")
    if params.dim == 2:
        out = (EULER_GAMMA + np.log(np.sqrt(lam) / 2.0)) / _TWO_PI
    else:
        out = np.sqrt(lam) / _FOUR_PI
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Modified Bessel functions K0, K1 (needed for the 2D kernel).
#
# Ascending series below X_SWITCH, exponentially-scaled asymptotic series
# above.  The naive switch point 2 is far too low: the asymptotic series
# truncates at ~5e-4 absolute there, while the ascending series only loses
# digits to cancellation around x ~ 10 where the asymptotic side is already
# below 1e-12.  Both branches meet the 1e-12 absolute target at 10.5.
# ---------------------------------------------------------------------------

_X_SWITCH = 10.5
_SERIES_TERMS = 64
_ASYMPT_TERMS = 30


# The log term cancels against the series up to ~8 digits near the switch
# point, so the series branch runs in extended precision (80-bit on x86;
# falls back to double elsewhere) before rounding the result to float64.
_LD = np.longdouble
_EULER_GAMMA_LD = _LD("0.57721566490153286060651209008240243104")


def _k0_series(x):
    x = x.astype(_LD)
    q = x * x / 4
    lg = -(np.log(x / 2) + _EULER_GAMMA_LD)
    i0 = np.ones_like(x)
    acc = np.zeros_like(x)
    term = np.ones_like(x)
    hk = _LD(0)
    for k in range(1, _SERIES_TERMS + 1):
        term = term * q / (k * k)
        hk += _LD(1) / k
        i0 = i0 + term
        acc = acc + term * hk
    return (lg * i0 + acc).astype(float)


def _k1_series(x):
    # K1 = 1/x + log(x/2) I1(x) - (x/4) sum [psi(k+1)+psi(k+2)] q^k/(k!(k+1)!)
    x = x.astype(_LD)
    q = x * x / 4
    i1 = np.ones_like(x)
    term = np.ones_like(x)
    acc = np.zeros_like(x)
    hk = _LD(0)  # harmonic number H_k
    acc = acc + (-2 * _EULER_GAMMA_LD + 1) * term  # psi(1) + psi(2)
    for k in range(1, _SERIES_TERMS + 1):
        term = term * q / (k * (k + 1))
        i1 = i1 + term
        hk += _LD(1) / k
        psi = -2 * _EULER_GAMMA_LD + 2 * hk + _LD(1) / (k + 1)
        acc = acc + psi * term
    i1 = i1 * (x / 2)
    return (1 / x + np.log(x / 2) * i1 - (x / 4) * acc).astype(float)


def _k_asympt(x, nu2x4):
    # e^{-x} sqrt(pi/2x) * sum of the divergent tail, truncated at its
    # smallest term; nu2x4 = 4 nu^2.
    s = np.ones_like(x)
    term = np.ones_like(x)
    alive = np.ones_like(x, dtype=bool)
    for k in range(1, _ASYMPT_TERMS + 1):
        factor = (nu2x4 - (2 * k - 1) ** 2) / (8.0 * k * x)
        new_term = term * factor
        alive = alive & (np.abs(new_term) < np.abs(term))
        s = np.where(alive, s + new_term, s)
        term = np.where(alive, new_term, term)
    pref = np.exp(-x) * np.sqrt(math.pi / (2.0 * x))
    return pref * s


def _bessel_k(x, order: int):
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if np.any(~np.isfinite(x)) or np.any(x <= 0.0):
        raise ValueError("bessel_k argument must be positive and finite")
    out = np.empty_like(x)
    small = x <= _X_SWITCH
    if np.any(small):
        xs = x[small]
        out[small] = _k0_series(xs) if order == 0 else _k1_series(xs)
    if np.any(~small):
        xl = x[~small]
        out[~small] = _k_asympt(xl, 0.0 if order == 0 else 4.0)
    out[np.abs(out) < UNDERFLOW_FLOOR] = 0.0
    return float(out[0]) if scalar else out


def bessel_k0(x):
    """Modified Bessel function K0; absolute accuracy <= 1e-12 on [1e-8, 700]."""
    return _bessel_k(x, 0)


def bessel_k1(x):
    """Modified Bessel function K1 (used for 2D far-field derivatives)."""
    return _bessel_k(x, 1)


# ---------------------------------------------------------------------------
# Green kernels and their exact integrals
# ---------------------------------------------------------------------------


def _green(dim: int, lam: float, r):
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    if np.any(r <= 0.0):
        raise ValueError("r must be positive")
    s = math.sqrt(lam)
    if dim == 2:
        out = _bessel_k(s * r, 0) / _TWO_PI
        out = np.atleast_1d(out)
    else:
        out = np.exp(-s * r) / (_FOUR_PI * r)
        out[out < UNDERFLOW_FLOOR] = 0.0
    return float(out[0]) if scalar else out


def green_value(params: InteractionParams, lam: float, r):
    """G_lam(r): positive, strictly decreasing fundamental solution of (lam - Laplace)."""
    return _green(params.dim, lam, r)


def _green_l2_norm_sq(dim: int, lam: float) -> float:
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    if dim == 2:
        return 1.0 / (_FOUR_PI * lam)
    return 1.0 / (8.0 * math.pi * math.sqrt(lam))


def green_l2_norm_sq(params: InteractionParams, lam: float) -> float:
    """Closed form of ||G_lam||_{L2}^2: 1/(4 pi lam) in 2D, 1/(8 pi sqrt(lam)) in 3D."""
    return _green_l2_norm_sq(params.dim, lam)


def green_inner(params: InteractionParams, lam: float, mu: float) -> float:
    """L2 pairing <G_lam, G_mu> = (beta(lam) - beta(mu)) / (lam - mu).

    Continuous at lam == mu where it equals ``green_l2_norm_sq``; satisfies
    the resolvent identity (lam - mu) <G_lam, G_mu> + beta(mu) = beta(lam)
    to rounding.  Argument order is symmetrized so the result is bitwise
    symmetric.
    """
    if lam <= 0.0 or mu <= 0.0:
        raise ValueError("lam and mu must be positive")
    if lam == mu:
        return green_l2_norm_sq(params, lam)
    lo, hi = (lam, mu) if lam < mu else (mu, lam)
    if params.dim == 3:
        return 1.0 / (_FOUR_PI * (math.sqrt(lo) + math.sqrt(hi)))
    # (1/4pi) log(hi/lo) / (hi - lo), stable for nearby arguments
    return math.log1p((hi - lo) / lo) / (_FOUR_PI * (hi - lo))


def chi_alpha_value(params: InteractionParams, r):
    """Normalized eigenfunction G_{omega_alpha} / ||G_{omega_alpha}||."""
    w = omega_alpha(params)
    return _green(params.dim, w, r) / math.sqrt(green_l2_norm_sq(params, w))
