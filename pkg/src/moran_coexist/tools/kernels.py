"""JIT-compiled inner loops.

Each kernel takes a `np.random.Generator` (numba >= 0.56) and releases the GIL,
so batches run on a thread pool with one generator per replicate.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from moran_coexist.tools.rates import fill_jump_rates, is_absorbing_dm, scaled_moments_raw
from moran_coexist.tools.reduction import gamma_coefficients_raw

# Species codes shared with tools.ctmc.
NONE, SP_C, SP_H, SP_M, SP_CH, SP_CM, SP_HM = -1, 0, 1, 2, 3, 4, 5

_DD = np.array([1, 2, -1, -2, 1, -1], dtype=np.int64)
_DM = np.array([-1, 0, -1, 0, 1, 1], dtype=np.int64)

# Flow stop codes.
FLOW_GAMMA, FLOW_CORNER, FLOW_TMAX, FLOW_LEFT_S = 0, 1, 2, 3


@njit(cache=True)
def extinct_code(n, D, M):
    c_gone = D == M - n
    h_gone = D == n - M
    m_gone = M == 0
    if c_gone and h_gone:
        return SP_CH
    if c_gone and m_gone:
        return SP_CM
    if h_gone and m_gone:
        return SP_HM
    if c_gone:
        return SP_C
    if h_gone:
        return SP_H
    if m_gone:
        return SP_M
    return NONE


@njit(cache=True)
def fixed_code(n, D, M):
    if M == n:
        return SP_M
    if M == 0 and D == n:
        return SP_C
    if M == 0 and D == -n:
        return SP_H
    return NONE


@njit(cache=True)
def gamma_hit(D, target, tol):
    gap = abs(D - target)
    # gap == 1 only when target has the wrong parity for the current M
    return gap <= tol or gap == 1


@njit(cache=True)
def _pick(rates, total, u):
    acc = 0.0
    x = u * total
    for k in range(6):
        acc += rates[k]
        if x < acc and rates[k] > 0.0:
            return k
    for k in range(5, -1, -1):
        if rates[k] > 0.0:
            return k
    return -1


@njit(cache=True, nogil=True)
def ssa_run(rg, n, q, d0, m0, to_fixation, target, tol, max_events, skip_holds, stride, record):
    """Simulate one replicate.

    Returns (tau_gamma, tau_e, first, tau_f, fixed, events, truncated, t, D, M,
    path_t, path_D, path_M, path_len). Absent times are -1.
    """
    D = d0
    M = m0
    t = 0.0
    events = 0
    rates = np.empty(6)

    cap = 1024 if record else 1
    path_t = np.empty(cap)
    path_D = np.empty(cap, dtype=np.int64)
    path_M = np.empty(cap, dtype=np.int64)
    path_len = 0
    if record:
        path_t[0] = 0.0
        path_D[0] = D
        path_M[0] = M
        path_len = 1

    tau_gamma = 0.0 if gamma_hit(D, target, tol) else -1.0
    first = extinct_code(n, D, M)
    tau_e = 0.0 if first != NONE else -1.0
    fixed = fixed_code(n, D, M)
    tau_f = 0.0 if fixed != NONE else -1.0
    truncated = False

    while True:
        if fixed != NONE:
            break
        if first != NONE and not to_fixation:
            break
        if events >= max_events:
            truncated = True
            break
        total = fill_jump_rates(n, q, D, M, rates)
        if skip_holds:
            t += rg.exponential(1.0 / total)
            k = _pick(rates, total, rg.random())
        else:
            t += rg.exponential(1.0)
            u = rg.random()
            if u >= total:
                events += 1
                continue
            k = _pick(rates, total, u / total)
        D += _DD[k]
        M += _DM[k]
        events += 1

        if tau_gamma < 0.0 and gamma_hit(D, target, tol):
            tau_gamma = t
        if first == NONE:
            first = extinct_code(n, D, M)
            if first != NONE:
                tau_e = t
        if is_absorbing_dm(n, D, M):
            fixed = fixed_code(n, D, M)
            tau_f = t

        if record and (events % stride == 0 or fixed != NONE or (first != NONE and not to_fixation)):
            if path_len == path_t.shape[0]:
                grow = path_t.shape[0] * 2
                nt = np.empty(grow)
                nD = np.empty(grow, dtype=np.int64)
                nM = np.empty(grow, dtype=np.int64)
                nt[:path_len] = path_t
                nD[:path_len] = path_D
                nM[:path_len] = path_M
                path_t, path_D, path_M = nt, nD, nM
            if path_t[path_len - 1] < t:
                path_t[path_len] = t
                path_D[path_len] = D
                path_M[path_len] = M
                path_len += 1

    return (
        tau_gamma, tau_e, first, tau_f, fixed, events, truncated, t, D, M,
        path_t, path_D, path_M, path_len,
    )


@njit(cache=True)
def _flow_drift(d, m, q):
    b_d, b_m, _, _, _ = scaled_moments_raw(d, m, q)
    return b_d, b_m


@njit(cache=True)
def _near_corner(d, m, tol):
    return (
        math.hypot(d - 1.0, m) <= tol
        or math.hypot(d + 1.0, m) <= tol
        or math.hypot(d, m - 1.0) <= tol
    )


@njit(cache=True)
def _excess(d, m):
    """How far (d, m) lies outside S; <= 0 inside."""
    return max(-m, m + d - 1.0, m - d - 1.0)


@njit(cache=True, nogil=True)
def rk4_flow(d0, m0, q, dt, gamma_tol, t_max, corner_tol, record):
    """Fixed-step RK4 of the mean flow. Returns (ts, ds, ms, count, status)."""
    target = 2.0 * q - 1.0
    n_max = int(np.ceil(t_max / dt)) + 1
    size = n_max + 1 if record else 1
    ts = np.empty(size)
    ds = np.empty(size)
    ms = np.empty(size)
    d = d0
    m = m0
    t = 0.0
    ts[0] = t
    ds[0] = d
    ms[0] = m
    count = 1
    status = FLOW_TMAX
    step = 0
    while True:
        if abs(d - target) <= gamma_tol:
            status = FLOW_GAMMA
            break
        if _near_corner(d, m, corner_tol):
            status = FLOW_CORNER
            break
        if step >= n_max - 1 or t >= t_max:
            status = FLOW_TMAX
            break
        k1d, k1m = _flow_drift(d, m, q)
        k2d, k2m = _flow_drift(d + 0.5 * dt * k1d, m + 0.5 * dt * k1m, q)
        k3d, k3m = _flow_drift(d + 0.5 * dt * k2d, m + 0.5 * dt * k2m, q)
        k4d, k4m = _flow_drift(d + dt * k3d, m + dt * k3m, q)
        d = d + dt / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
        m = m + dt / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)
        t += dt
        step += 1
        over = _excess(d, m)
        if over > 1e-12:
            status = FLOW_LEFT_S
            break
        if over > 0.0:
            m = min(max(m, 0.0), 1.0 - abs(d))
        if record:
            ts[count] = t
            ds[count] = d
            ms[count] = m
            count += 1
        else:
            ts[0] = t
            ds[0] = d
            ms[0] = m
    return ts, ds, ms, count, status


@njit(cache=True, nogil=True)
def em_mstar(rg, x0, q, dt, x_top, max_steps):
    """Euler-Maruyama on Gamma. Returns (absorbed_at, tau, steps); -1 when capped."""
    if x0 <= 0.0:
        return 0, 0.0, 0
    if x0 >= x_top:
        return 1, 0.0, 0
    x = x0
    t = 0.0
    steps = 0
    # g' blows up at A = x_top when q = 1/2
    top = x_top - 1e-10
    while steps < max_steps:
        beta, alpha = gamma_coefficients_raw(x, q)
        h = dt
        while abs(beta) * h > 1e-3:
            h *= 0.5
        x += beta * h + np.sqrt(max(alpha, 0.0) * h) * rg.standard_normal()
        t += h
        steps += 1
        if x <= 0.0:
            return 0, t, steps
        if x >= top:
            return 1, t, steps
    return -1, t, steps


@njit(cache=True, nogil=True)
def em_dstar(rg, d0, q, n, dt, max_steps):
    """Euler-Maruyama on the M = 0 edge. Returns (fixed, tau, steps): +1 C, -1 H, 0 capped."""
    if d0 >= 1.0:
        return 1, 0.0, 0
    if d0 <= -1.0:
        return -1, 0.0, 0
    centre = 2.0 * q - 1.0
    d = d0
    t = 0.0
    steps = 0
    while steps < max_steps:
        alpha = (2.0 - 2.0 * d * centre) / n
        d += -(d - centre) * dt + np.sqrt(max(alpha, 0.0) * dt) * rg.standard_normal()
        t += dt
        steps += 1
        if d >= 1.0:
            return 1, t, steps
        if d <= -1.0:
            return -1, t, steps
    return 0, t, steps


@njit(cache=True, nogil=True)
def em_dstar_path(rg, d0, q, n, dt, n_steps):
    centre = 2.0 * q - 1.0
    out = np.empty(n_steps + 1)
    out[0] = d0
    d = d0
    for i in range(n_steps):
        alpha = (2.0 - 2.0 * d * centre) / n
        d += -(d - centre) * dt + np.sqrt(max(alpha, 0.0) * dt) * rg.standard_normal()
        out[i + 1] = d
    return out
