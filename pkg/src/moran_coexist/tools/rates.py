"""Jump-rate table and moment formulas of the (D, M) chain.

D = C - H and M count the specialists' difference and the generalists in a
population of constant size N. Every event is one death and one birth; the
seven outcomes (six jumps plus hold) have rates summing to 1, so chain time
is the unit-rate event clock.

The scalar formulas are numba-compiled so the simulation kernels can share
them; they also accept numpy arrays.
"""
from __future__ import annotations

import math
from typing import Tuple

import numpy as np
from numba import njit
from pydantic import ValidationError

from moran_coexist.errors import InvalidStateError, SingularPointError
from moran_coexist.schemas.models import (
    JUMPS,
    Composition,
    DMState,
    JumpKind,
    MomentSet,
    Params,
    RateVector,
    ScaledPoint,
    dm_state_problem,
)

# Row i of JUMP_DELTAS is JUMPS[i] as (dD, dM).
JUMP_DELTAS = np.array([k.value for k in JUMPS], dtype=np.int64)


@njit(cache=True)
def is_absorbing_dm(n, D, M):
    return (M == 0 and (D == n or D == -n)) or (M == n and D == 0)


@njit(cache=True)
def fill_jump_rates(n, q, D, M, out):
    """Write the six jump rates (JUMPS order) into `out`; return their sum.

    Caller guarantees (D, M) is valid and not absorbing.
    """
    nf = float(n)
    npd = nf + D
    nmd = nf - D
    c2 = npd - M  # 2C
    h2 = nmd - M  # 2H
    m_weight = M * (npd - 2.0 * q * D) / (2.0 * nf * npd * nmd)
    out[0] = q * M * c2 / (nf * npd)
    out[1] = q * c2 * h2 / (2.0 * nf * npd)
    out[2] = (1.0 - q) * M * h2 / (nf * nmd)
    out[3] = (1.0 - q) * c2 * h2 / (2.0 * nf * nmd)
    out[4] = m_weight * h2
    out[5] = m_weight * c2
    return out[0] + out[1] + out[2] + out[3] + out[4] + out[5]


@njit(cache=True)
def hold_rate(n, q, D, M):
    nf = float(n)
    c2 = nf + D - M
    h2 = nf - D - M
    return (
        q * (c2 * c2 + 2.0 * M * M) / (2.0 * nf * (nf + D))
        + (1.0 - q) * (h2 * h2 + 2.0 * M * M) / (2.0 * nf * (nf - D))
    )


@njit(cache=True)
def scaled_moments_raw(d, m, q):
    """Drift (b_d, b_m) and covariance (a_dd, a_dm, a_mm) at scaled (d, m)."""
    up = 1.0 + d
    dn = 1.0 - d
    skew = up - 2.0 * q
    b_d = -(1.0 - m - d * d) * skew / (up * dn)
    b_m = d * m * skew / (up * dn)
    a_dd = q * (m * d + 2.0 - 2.0 * d * d - 2.0 * m) / up + (1.0 - q) * (
        -m * d + 2.0 - 2.0 * d * d - 2.0 * m
    ) / dn
    a_mm = q * m * (2.0 + d - 2.0 * m) / up + (1.0 - q) * m * (2.0 - d - 2.0 * m) / dn
    a_dm = q * m * (-1.0 - 2.0 * d + m) / up + (1.0 - q) * m * (1.0 - 2.0 * d - m) / dn
    return b_d, b_m, a_dd, a_dm, a_mm


def validate_state(s: DMState, p: Params) -> DMState:
    problem = dm_state_problem(s.D, s.M, p.N)
    if problem:
        raise InvalidStateError(f"invalid state (D={s.D}, M={s.M}) for N={p.N}: {problem}")
    return s


def make_state(D: int, M: int, p: Params) -> DMState:
    try:
        s = DMState(D=D, M=M)
    except ValidationError as exc:
        raise InvalidStateError(str(exc)) from exc
    return validate_state(s, p)


def lattice_state(d0: float, m0: float, N: int) -> DMState:
    """Nearest valid lattice state to the scaled point (d0, m0).

    A parity mismatch is repaired by moving M one step toward m0 * N (so
    starts on d = 0 stay there), or D when m0 = 0.
    """
    M = min(max(int(math.floor(m0 * N + 0.5)), 0), N)
    D = min(max(int(math.floor(d0 * N + 0.5)), -N), N)
    if M + abs(D) > N:
        M = N - abs(D)
    if (D + M - N) % 2 != 0:
        step_m = 1 if m0 * N >= M else -1
        step_d = 1 if d0 * N >= D else -1
        moves = [(D, M + step_m), (D, M - step_m)] if m0 > 0.0 else []
        moves += [(D + step_d, M), (D - step_d, M)]
        D, M = next((d, m) for d, m in moves if dm_state_problem(d, m, N) is None)
    return make_state(D, M, Params(N=N, q=0.5))


def composition_to_dm(c: Composition) -> DMState:
    return DMState(D=c.C - c.H, M=c.M)


def dm_to_composition(s: DMState, p: Params) -> Composition:
    validate_state(s, p)
    rest = p.N - s.M
    return Composition(C=(rest + s.D) // 2, H=(rest - s.D) // 2, M=s.M)


def is_absorbing(s: DMState, p: Params) -> bool:
    return bool(is_absorbing_dm(p.N, s.D, s.M))


def jump_rates(s: DMState, p: Params) -> RateVector:
    validate_state(s, p)
    if is_absorbing(s, p):
        return RateVector(jumps=(0.0,) * 6, hold=1.0, absorbing=True)
    out = np.empty(6)
    fill_jump_rates(p.N, p.q, s.D, s.M, out)
    return RateVector(jumps=tuple(float(r) for r in out), hold=float(hold_rate(p.N, p.q, s.D, s.M)))


def composition_jump_rates(c: Composition, q: float) -> RateVector:
    """Rates built from species birth and death rates, lambda_X * mu_Y."""
    n = c.N
    p = Params(N=n, q=q)
    s = composition_to_dm(c)
    if is_absorbing(s, p):
        return RateVector(jumps=(0.0,) * 6, hold=1.0, absorbing=True)
    mu_c, mu_h, mu_m = c.death_rates()
    npd, nmd = n + s.D, n - s.D
    lam_c = 2.0 * q * c.C / npd
    lam_h = 2.0 * (1.0 - q) * c.H / nmd
    lam_m = c.M * (q / npd + (1.0 - q) / nmd)
    by_kind = {
        JumpKind.C_REPLACES_M: lam_c * mu_m,
        JumpKind.C_REPLACES_H: lam_c * mu_h,
        JumpKind.H_REPLACES_M: lam_h * mu_m,
        JumpKind.H_REPLACES_C: lam_h * mu_c,
        JumpKind.M_REPLACES_H: lam_m * mu_h,
        JumpKind.M_REPLACES_C: lam_m * mu_c,
    }
    hold = lam_c * mu_c + lam_h * mu_h + lam_m * mu_m
    return RateVector(jumps=tuple(by_kind[k] for k in JUMPS), hold=hold)


def dm_drift(s: DMState, p: Params) -> Tuple[float, float]:
    validate_state(s, p)
    if is_absorbing(s, p):
        return 0.0, 0.0
    n, D, M, q = float(p.N), float(s.D), float(s.M), p.q
    denom = n * (n + D) * (n - D)
    skew = n + D - 2.0 * q * n
    return -(n * n - n * M - D * D) * skew / denom, D * M * skew / denom


def dm_second_moments(s: DMState, p: Params) -> Tuple[float, float, float]:
    """(E[dD^2], E[dM^2], E[dD dM]) per event."""
    validate_state(s, p)
    if is_absorbing(s, p):
        return 0.0, 0.0, 0.0
    n, D, M, q = float(p.N), float(s.D), float(s.M), p.q
    up = n * (n + D)
    dn = n * (n - D)
    e_dd = q * (2 * n * n - 2 * n * M + M * D - 2 * D * D) / up + (1 - q) * (
        2 * n * n - 2 * n * M - M * D - 2 * D * D
    ) / dn
    e_mm = q * M * (2 * n + D - 2 * M) / up + (1 - q) * M * (2 * n - D - 2 * M) / dn
    e_dm = q * M * (-n - 2 * D + M) / up + (1 - q) * M * (n - 2 * D - M) / dn
    return e_dd, e_mm, e_dm


def moments_from_rates(
    s: DMState, p: Params
) -> Tuple[Tuple[float, float], Tuple[float, float, float]]:
    """Sum rate * jump and rate * jump (x) jump over the table."""
    rates = np.asarray(jump_rates(s, p).jumps)
    dD = JUMP_DELTAS[:, 0].astype(float)
    dM = JUMP_DELTAS[:, 1].astype(float)
    drift = (float(rates @ dD), float(rates @ dM))
    second = (float(rates @ dD**2), float(rates @ dM**2), float(rates @ (dD * dM)))
    return drift, second


def scaled_moments(y: ScaledPoint, q: float) -> MomentSet:
    if abs(y.d) >= 1.0:
        raise SingularPointError(f"scaled moments undefined at |d|=1 (y={y})")
    b_d, b_m, a_dd, a_dm, a_mm = scaled_moments_raw(y.d, y.m, q)
    return MomentSet(b_d=b_d, b_m=b_m, a_dd=a_dd, a_dm=a_dm, a_mm=a_mm)
