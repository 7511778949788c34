"""Reduced diffusion on the coexistence line Gamma = {d = 2q - 1}.

The mean flow carries every interior point (d, m) onto Gamma at m* = g(C(d, m)),
where C(d, m) = (-1 + 2m + d^2) / m^2 is constant along flow lines and
g(C) = A / (1 + sqrt(1 - A C)), A = 4q(1 - q). Ito's formula applied to m*
with the two-dimensional moments gives the drift beta (second-order terms
only; the first-order term cancels) and the variance alpha of the limit.
"""
from __future__ import annotations

from typing import Tuple

import numpy as np
from numba import njit

from moran_coexist.errors import DomainError, NearSingularError, SingularPointError
from moran_coexist.schemas.models import CPartials, GammaCoeffs, MstarPartials
from moran_coexist.tools.rates import scaled_moments_raw

NEAR_SINGULAR = 1e-10


@njit(cache=True)
def trajectory_constant_raw(d, m):
    return (-1.0 + 2.0 * m + d * d) / (m * m)


@njit(cache=True)
def mstar_raw(d, m, q):
    a = 4.0 * q * (1.0 - q)
    rad = np.maximum(1.0 - a * trajectory_constant_raw(d, m), 0.0)
    return a / (1.0 + np.sqrt(rad))


@njit(cache=True)
def c_partials_raw(d, m):
    m2 = m * m
    m3 = m2 * m
    return (
        2.0 * d / m2,
        2.0 * (1.0 - d * d - m) / m3,
        2.0 / m2,
        -2.0 * (3.0 - 3.0 * d * d - 2.0 * m) / (m2 * m2),
        -4.0 * d / m3,
    )


@njit(cache=True)
def mstar_partials_raw(d, m, q):
    """(m_d, m_m, m_dd, m_mm, m_dm) by the chain rule through g(C)."""
    a = 4.0 * q * (1.0 - q)
    ms = mstar_raw(d, m, q)
    gap = a - ms
    g1 = ms**3 / (2.0 * gap)
    g2 = ms**5 * (3.0 * a - 2.0 * ms) / (4.0 * gap**3)
    c_d, c_m, c_dd, c_mm, c_dm = c_partials_raw(d, m)
    return (
        g1 * c_d,
        g1 * c_m,
        g2 * c_d * c_d + g1 * c_dd,
        g2 * c_m * c_m + g1 * c_mm,
        g2 * c_d * c_m + g1 * c_dm,
    )


@njit(cache=True)
def ito_raw(d, m, q):
    m_d, m_m, m_dd, m_mm, m_dm = mstar_partials_raw(d, m, q)
    _, _, a_dd, a_dm, a_mm = scaled_moments_raw(d, m, q)
    beta = 0.5 * m_dd * a_dd + 0.5 * m_mm * a_mm + m_dm * a_dm
    alpha = m_d * m_d * a_dd + 2.0 * m_d * m_m * a_dm + m_m * m_m * a_mm
    return beta, alpha


@njit(cache=True)
def gamma_coefficients_raw(x, q):
    return ito_raw(2.0 * q - 1.0, x, q)


def gamma_upper_boundary(q: float) -> float:
    """m-coordinate where Gamma meets the edge of S; one specialist is absent there."""
    return 1.0 - abs(2.0 * q - 1.0)


def _check_interior(d: float, m: float) -> None:
    if m <= 0.0:
        raise SingularPointError(f"m* derivatives undefined at m={m}")
    if abs(d) >= 1.0:
        raise SingularPointError(f"m* derivatives undefined at |d|={abs(d)}")


def _check_gap(d: float, m: float, q: float) -> None:
    a = 4.0 * q * (1.0 - q)
    if abs(a - mstar_raw(d, m, q)) < NEAR_SINGULAR:
        raise NearSingularError(f"m* within {NEAR_SINGULAR} of A={a} at ({d}, {m}), q={q}")


def c_partials(d: float, m: float) -> CPartials:
    if m <= 0.0:
        raise SingularPointError(f"C(d, m) undefined at m={m}")
    c_d, c_m, c_dd, c_mm, c_dm = c_partials_raw(d, m)
    return CPartials(dC_dd=c_d, dC_dm=c_m, d2C_dd2=c_dd, d2C_dm2=c_mm, d2C_dddm=c_dm)


def mstar_partials(d: float, m: float, q: float) -> MstarPartials:
    _check_interior(d, m)
    _check_gap(d, m, q)
    m_d, m_m, m_dd, m_mm, m_dm = mstar_partials_raw(d, m, q)
    return MstarPartials(dm_dd=m_d, dm_dm=m_m, d2m_dd2=m_dd, d2m_dm2=m_mm, d2m_dddm=m_dm)


def _as_coeffs(beta: float, alpha: float) -> GammaCoeffs:
    # the quadratic form can dip below zero by roundoff
    return GammaCoeffs(beta=float(beta), alpha=max(float(alpha), 0.0))


def ito_coefficients(d: float, m: float, q: float) -> GammaCoeffs:
    _check_interior(d, m)
    _check_gap(d, m, q)
    return _as_coeffs(*ito_raw(d, m, q))


def drift_cancellation_terms(d: float, m: float, q: float) -> Tuple[float, float]:
    """(dm*/dd * b_d, dm*/dm * b_m); the two cancel on the whole interior."""
    _check_interior(d, m)
    m_d, m_m, *_ = mstar_partials_raw(d, m, q)
    b_d, b_m, *_ = scaled_moments_raw(d, m, q)
    return float(m_d * b_d), float(m_m * b_m)


def drift_cancellation_residual(d: float, m: float, q: float) -> float:
    t_d, t_m = drift_cancellation_terms(d, m, q)
    return t_d + t_m


def gamma_coefficients(x: float, q: float) -> GammaCoeffs:
    if not 0.0 < x < 1.0:
        raise SingularPointError(f"Gamma coefficients need x in (0, 1), got {x}")
    top = gamma_upper_boundary(q)
    if x > top:
        raise DomainError(f"x={x} lies beyond the top of Gamma at {top} for q={q}")
    return ito_coefficients(2.0 * q - 1.0, x, q)


def gamma_coefficients_grid(xs: np.ndarray, q: float) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized (beta, alpha) on Gamma; no singularity checks."""
    xs = np.asarray(xs, dtype=float)
    beta, alpha = gamma_coefficients_raw(xs, q)
    return np.asarray(beta), np.maximum(np.asarray(alpha), 0.0)


def symmetric_explicit_coeffs(d: float, m: float) -> GammaCoeffs:
    """Closed-form q = 1/2 coefficients as printed in the source derivation.

    Cross-check only. The printed beta does not match the chain-rule beta
    (4 vs 0.5 at (0, 0.5)); the printed alpha agrees with it.
    """
    if m >= 1.0:
        raise SingularPointError("printed symmetric coefficients are undefined at m=1")
    _check_interior(d, m)
    s = np.sqrt(-d * d + (m - 1.0) ** 2)
    denom = 2.0 * (-1.0 + d * d) * s * s**3
    beta = (
        -m * (-2.0 * d**4 - 2.0 * (m - 1.0) * (-2.0 + 3.0 * s + 3.0 * m))
        - m * (d * d * (6.0 - 4.0 * m + 3.0 * m * s + 3.0 * m * m))
    ) / denom
    alpha = -m * (-2.0 + d * d + 2.0 * m) / (s + m) ** 4
    return _as_coeffs(beta, alpha)


def dstar_coefficients(d: float, q: float, N: int) -> GammaCoeffs:
    """Fixation-phase diffusion on the M = 0 edge; alpha already carries 1/N."""
    centre = 2.0 * q - 1.0
    return _as_coeffs(-(d - centre), (2.0 - 2.0 * d * centre) / N)
