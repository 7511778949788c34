"""Euler-Maruyama paths of the reduced diffusions.

m* on Gamma: dx = beta(x) dt + sqrt(alpha(x)) dW, absorbed at 0 (generalist
lost) and at the top of Gamma, x_top = 1 - |2q - 1| (a specialist lost; M
fixation when q = 1/2). Time is in Gamma units, chain time / N^2.

d* on the M = 0 edge: dd = -(d - (2q - 1)) dt + sqrt((2 - 2d(2q - 1)) / N) dW,
absorbed at d = 1 (C fixes) and d = -1 (H fixes).
"""
from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np
from loguru import logger

from moran_coexist.errors import ConfigError, TruncatedRunError
from moran_coexist.schemas.models import Species
from moran_coexist.tools import kernels
from moran_coexist.tools.reduction import gamma_upper_boundary
from moran_coexist.tools.replicates import replicate_rng, replicate_seed, run_indexed

DEFAULT_MAX_STEPS = 10**9


def _check_dt(dt: float) -> None:
    if not dt > 0.0:
        raise ConfigError(f"time step must be positive, got dt={dt}")


def simulate_mstar(
    x0: float,
    q: float,
    dt: float,
    rng: np.random.Generator,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> Tuple[int, float]:
    """Returns (absorbed_at, tau): 0 for the lower end, 1 for the upper end."""
    _check_dt(dt)
    where, tau, steps = kernels.em_mstar(rng, float(x0), q, dt, gamma_upper_boundary(q), max_steps)
    if where < 0:
        raise TruncatedRunError(f"m* path from x0={x0} not absorbed after {steps} steps", partial=tau)
    return int(where), float(tau)


def simulate_dstar(
    d0: float,
    q: float,
    N: int,
    dt: float,
    rng: np.random.Generator,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> Tuple[Species, float]:
    _check_dt(dt)
    fixed, tau, steps = kernels.em_dstar(rng, float(d0), q, float(N), dt, max_steps)
    if fixed == 0:
        raise TruncatedRunError(f"d* path from d0={d0} not absorbed after {steps} steps", partial=tau)
    return (Species.C if fixed > 0 else Species.H), float(tau)


def dstar_path(
    d0: float, q: float, N: int, dt: float, n_steps: int, rng: np.random.Generator
) -> np.ndarray:
    """Unabsorbed d* path of n_steps steps, including the start."""
    _check_dt(dt)
    return kernels.em_dstar_path(rng, float(d0), q, float(N), dt, int(n_steps))


def simulate_mstar_batch(
    x0: float,
    q: float,
    dt: float,
    n_paths: int,
    master_seed: int,
    workers: int = 1,
    stream: Sequence[int] = (),
) -> Tuple[np.ndarray, np.ndarray]:
    """(absorbed_at, tau) arrays over n_paths independent paths."""
    _check_dt(dt)

    def _one(i: int) -> Tuple[int, float]:
        return simulate_mstar(x0, q, dt, replicate_rng(replicate_seed(master_seed, i, stream)))

    logger.info(f"m* batch: x0={x0} q={q} dt={dt} paths={n_paths}")
    out: List[Tuple[int, float]] = run_indexed(_one, n_paths, workers=workers, label="m* paths")
    where = np.array([w for w, _ in out], dtype=np.int64)
    taus = np.array([t for _, t in out])
    return where, taus


def simulate_dstar_batch(
    d0: float,
    q: float,
    N: int,
    dt: float,
    n_paths: int,
    master_seed: int,
    workers: int = 1,
    stream: Sequence[int] = (),
) -> Tuple[List[Species], np.ndarray]:
    _check_dt(dt)

    def _one(i: int) -> Tuple[Species, float]:
        return simulate_dstar(d0, q, N, dt, replicate_rng(replicate_seed(master_seed, i, stream)))

    logger.info(f"d* batch: d0={d0} q={q} N={N} dt={dt} paths={n_paths}")
    out = run_indexed(_one, n_paths, workers=workers, label="d* paths")
    return [f for f, _ in out], np.array([t for _, t in out])
