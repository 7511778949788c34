"""Deterministic mean flow dy/dt = b(y) on the triangle S and its projection onto Gamma."""
from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
from loguru import logger

from moran_coexist.errors import (
    DomainError,
    FixedPointError,
    IntegrationError,
    SingularPointError,
)
from moran_coexist.schemas.models import FlowOptions, PathSample, ScaledPoint, Trajectory
from moran_coexist.tools import kernels
from moran_coexist.tools.rates import scaled_moments_raw

_REASONS = {
    kernels.FLOW_GAMMA: "gamma_reached",
    kernels.FLOW_CORNER: "corner_neighborhood",
    kernels.FLOW_TMAX: "t_max",
}


def drift(y: ScaledPoint, q: float) -> Tuple[float, float]:
    if abs(y.d) >= 1.0:
        raise SingularPointError(f"drift undefined at |d|=1 (y={y})")
    b_d, b_m, *_ = scaled_moments_raw(y.d, y.m, q)
    return float(b_d), float(b_m)


def integrate_flow(y0: ScaledPoint, q: float, opts: Optional[FlowOptions] = None) -> Trajectory:
    opts = opts or FlowOptions()
    if y0.is_corner():
        raise FixedPointError(f"{y0} is an absorbing corner of S")
    ts, ds, ms, count, status = kernels.rk4_flow(
        y0.d, y0.m, q, opts.dt, opts.gamma_tol, opts.t_max, opts.corner_tol, opts.record
    )
    if status == kernels.FLOW_LEFT_S:
        raise IntegrationError(
            f"flow from {y0} left S by more than 1e-12 near t={ts[count - 1]:.6g} (dt={opts.dt})"
        )
    if status == kernels.FLOW_TMAX:
        logger.warning(f"flow from {y0} stopped at t_max={opts.t_max} before reaching Gamma")
    return Trajectory(
        t=np.asarray(ts[:count]).copy(),
        d=np.asarray(ds[:count]).copy(),
        m=np.asarray(ms[:count]).copy(),
        terminal_reason=_REASONS[int(status)],
        q=q,
    )


def trajectory_constant(y: ScaledPoint) -> float:
    if y.m <= 0.0:
        raise SingularPointError(f"trajectory constant undefined at m=0 (y={y})")
    return (-1.0 + 2.0 * y.m + y.d * y.d) / (y.m * y.m)


def project_mstar(y0: ScaledPoint, q: float) -> float:
    """m-coordinate where the flow line through y0 meets Gamma."""
    if y0.is_corner():
        raise FixedPointError(f"{y0} is an absorbing corner of S")
    a = 4.0 * q * (1.0 - q)
    rad = 1.0 - trajectory_constant(y0) * a
    if rad < -1e-12:
        raise DomainError(f"projection radicand {rad:.3g} < 0 at {y0}: point outside S")
    if rad < 0.0:
        logger.warning(f"clamping projection radicand {rad:.3g} to 0 at {y0}")
        rad = 0.0
    return a / (1.0 + np.sqrt(rad))


def project_mstar_numeric(y0: ScaledPoint, q: float, opts: Optional[FlowOptions] = None) -> float:
    base = opts or FlowOptions()
    traj = integrate_flow(y0, q, base.model_copy(update={"record": False}))
    return float(traj.m[-1])


def lyapunov_dissipation(y: ScaledPoint, q: float) -> float:
    """grad((d - 2q + 1)^2) . b, never positive on S."""
    if abs(y.d) >= 1.0:
        raise SingularPointError(f"dissipation undefined at |d|=1 (y={y})")
    d, m = y.d, y.m
    return -2.0 * (1.0 - m - d * d) * (1.0 + d - 2.0 * q) ** 2 / ((1.0 - d) * (1.0 + d))


def gamma_jacobian_eigenvalue(m: float, q: float) -> float:
    d = 2.0 * q - 1.0
    return -(1.0 - m - d * d) / (1.0 - d * d)


def drift_jacobian(y: ScaledPoint, q: float, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of b at y; rows (b_d, b_m), columns (d, m)."""
    d, m = y.d, y.m
    jac = np.empty((2, 2))
    for col, (ed, em) in enumerate(((h, 0.0), (0.0, h))):
        plus = np.array(scaled_moments_raw(d + ed, m + em, q)[:2])
        minus = np.array(scaled_moments_raw(d - ed, m - em, q)[:2])
        jac[:, col] = (plus - minus) / (2.0 * h)
    return jac


def path_flow_distance(path: PathSample, N: int, traj: Trajectory) -> float:
    """Sup-norm gap between a chain path on the flow clock (t/N) and the flow, up to the flow's end."""
    t = path.t / N
    keep = t <= traj.t[-1]
    if not np.any(keep):
        return 0.0
    t = t[keep]
    d_flow = np.interp(t, traj.t, traj.d)
    m_flow = np.interp(t, traj.t, traj.m)
    gap = np.maximum(np.abs(path.D[keep] / N - d_flow), np.abs(path.M[keep] / N - m_flow))
    return float(gap.max())
