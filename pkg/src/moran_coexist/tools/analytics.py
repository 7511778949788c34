"""Scale function, hitting probability and Green's function of the diffusion on Gamma.

phi(x)  = int^x exp( int_{z0}^y -2 beta(z) / alpha(z) dz ) dy
p_M(x)  = (phi(top) - phi(x)) / (phi(top) - phi(0))
G(x, y) = 2 (phi(top) - phi(x)) (phi(y) - phi(0)) / (phi(top) - phi(0)) / (phi'(y) alpha(y)),  y <= x
        = 2 (phi(x) - phi(0)) (phi(top) - phi(y)) / (phi(top) - phi(0)) / (phi'(y) alpha(y)),  y > x
E_x[tau] = int G(x, y) dy
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.integrate import IntegrationWarning, cumulative_simpson, quad, simpson
from scipy.interpolate import CubicHermiteSpline

from moran_coexist.errors import ConfigError, QuadratureError
from moran_coexist.schemas.experiment_models import AbsorptionReport
from moran_coexist.schemas.models import Params, ScaledPoint
from moran_coexist.tools.flow import project_mstar
from moran_coexist.tools.reduction import gamma_coefficients_grid, gamma_upper_boundary

Coefficients = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class ScaleTable:
    grid: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    q: float
    coefficients: Coefficients = field(repr=False, compare=False)
    lower: float = 0.0
    upper: float = 1.0

    @property
    def lo(self) -> float:
        return float(self.grid[0])

    @property
    def hi(self) -> float:
        return float(self.grid[-1])

    @cached_property
    def _spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.grid, self.phi, self.dphi)

    @cached_property
    def alpha(self) -> np.ndarray:
        return np.asarray(self.coefficients(self.grid)[1], dtype=float)

    def phi_at(self, x: float) -> float:
        """phi with linear continuation past the grid ends."""
        if x < self.lo:
            return float(self.phi[0] + (x - self.lo) * self.dphi[0])
        if x > self.hi:
            return float(self.phi[-1] + (x - self.hi) * self.dphi[-1])
        return float(self._spline(x))

    def dphi_at(self, x: float) -> float:
        x = min(max(x, self.lo), self.hi)
        return float(self._spline(x, 1))

    def alpha_at(self, x: float) -> float:
        return float(np.asarray(self.coefficients(np.array([x]))[1])[0])

    @cached_property
    def phi_lower(self) -> float:
        return self.phi_at(self.lower)

    @cached_property
    def phi_upper(self) -> float:
        return self.phi_at(self.upper)


def _gamma_coeffs(q: float) -> Coefficients:
    return lambda xs: gamma_coefficients_grid(xs, q)


def build_scale_table(
    q: float,
    n_grid: int = 1000,
    eps: float = 1e-6,
    coefficients: Optional[Coefficients] = None,
    upper: Optional[float] = None,
) -> ScaleTable:
    """Tabulate phi and phi' on n_grid + 1 uniform points of [eps, upper - eps].

    Without `coefficients` the Gamma diffusion for q is used and `upper`
    defaults to the top of Gamma; injected coefficients default to [0, 1].
    """
    if n_grid < 100:
        raise ConfigError(f"n_grid must be >= 100, got {n_grid}")
    if not 0.0 < eps <= 0.01:
        raise ConfigError(f"eps must lie in (0, 0.01], got {eps}")
    started = time.perf_counter()
    if coefficients is None:
        coefficients = _gamma_coeffs(q)
        upper = gamma_upper_boundary(q) if upper is None else upper
    upper = 1.0 if upper is None else upper

    grid = np.linspace(eps, upper - eps, n_grid + 1)
    beta, alpha = (np.asarray(v, dtype=float) for v in coefficients(grid))
    bad = ~np.isfinite(beta) | ~np.isfinite(alpha) | (alpha <= 0.0)
    if np.any(bad):
        raise QuadratureError("non-finite or non-positive coefficients", float(grid[np.argmax(bad)]))

    def ratio(z: float) -> float:
        b, a = coefficients(np.array([z]))
        return float(-2.0 * np.asarray(b)[0] / np.asarray(a)[0])

    # per-cell adaptive quadrature resolves the 1/(top - z) growth at the upper end
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IntegrationWarning)
        increments = np.array(
            [
                quad(ratio, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
                for a, b in zip(grid[:-1], grid[1:])
            ]
        )
    notes = [w for w in caught if issubclass(w.category, IntegrationWarning)]
    if notes:
        logger.debug(f"quad flagged {len(notes)} of {n_grid} cells (q={q}): {notes[0].message}")
    for w in caught:
        if not issubclass(w.category, IntegrationWarning):
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    inner = np.concatenate(([0.0], np.cumsum(increments)))
    inner -= inner[n_grid // 2]
    if not np.all(np.isfinite(inner)):
        raise QuadratureError("inner scale integral diverged", float(grid[np.argmax(~np.isfinite(inner))]))

    dphi = np.exp(inner)
    phi = cumulative_simpson(dphi, x=grid, initial=0.0)
    if not np.all(np.diff(phi) > 0.0):
        raise QuadratureError("scale function is not strictly increasing", float(grid[np.argmin(np.diff(phi))]))
    logger.info(
        f"Scale table q={q} n_grid={n_grid} on [{grid[0]:.3g}, {grid[-1]:.6g}] "
        f"in {time.perf_counter() - started:.2f}s"
    )
    return ScaleTable(grid=grid, phi=phi, dphi=dphi, q=q, coefficients=coefficients, upper=upper)


def hit_prob_pM(x: float, table: ScaleTable) -> float:
    """Probability that the diffusion from x is absorbed at 0 (generalist lost first)."""
    if x <= table.lower:
        return 1.0
    if x >= table.upper:
        return 0.0
    span = table.phi_upper - table.phi_lower
    p = (table.phi_upper - table.phi_at(x)) / span
    return float(min(max(p, 0.0), 1.0))


def greens(x: float, y: float, table: ScaleTable) -> float:
    span = table.phi_upper - table.phi_lower
    phi_x = table.phi_at(x)
    phi_y = table.phi_at(y)
    density = 1.0 / (table.dphi_at(y) * table.alpha_at(y))
    if y <= x:
        g = 2.0 * (table.phi_upper - phi_x) * (phi_y - table.phi_lower) / span
    else:
        g = 2.0 * (phi_x - table.phi_lower) * (table.phi_upper - phi_y) / span
    return float(max(g, 0.0) * density)


def _simpson(values: np.ndarray, nodes: np.ndarray) -> float:
    if len(nodes) < 2:
        return 0.0
    return float(simpson(values, x=nodes))


def expected_tau(x: float, table: ScaleTable) -> float:
    """Mean absorption time from x in Gamma time units."""
    if x <= table.lo or x >= table.hi:
        return 0.0
    grid = table.grid
    h = grid[1] - grid[0]
    keep = np.abs(grid - x) > 1e-3 * h
    left = keep & (grid < x)
    right = keep & (grid > x)

    span = table.phi_upper - table.phi_lower
    phi_x = table.phi_at(x)
    density_x = 1.0 / (table.dphi_at(x) * table.alpha_at(x))
    density = 1.0 / (table.dphi * table.alpha)

    y_left = np.append(grid[left], x)
    g_left = np.append(
        2.0 * (table.phi_upper - phi_x) * (table.phi[left] - table.phi_lower) / span * density[left],
        2.0 * (table.phi_upper - phi_x) * (phi_x - table.phi_lower) / span * density_x,
    )
    y_right = np.insert(grid[right], 0, x)
    g_right = np.insert(
        2.0 * (phi_x - table.phi_lower) * (table.phi_upper - table.phi[right]) / span * density[right],
        0,
        2.0 * (phi_x - table.phi_lower) * (table.phi_upper - phi_x) / span * density_x,
    )
    total = _simpson(g_left, y_left) + _simpson(g_right, y_right)
    return float(max(total, 0.0))


def extinction_report(y0: ScaledPoint, p: Params, table: ScaleTable) -> AbsorptionReport:
    # a start with no generalists is already absorbed at 0
    x = 0.0 if y0.m == 0.0 else project_mstar(y0, p.q)
    e_tau = expected_tau(x, table)
    return AbsorptionReport(
        x_start=x,
        p_M=hit_prob_pM(x, table),
        expected_tau_gamma_units=e_tau,
        expected_tau_chain_units=p.N**2 * e_tau,
        q=p.q,
        N=p.N,
    )
