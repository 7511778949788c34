"""Exact event-by-event simulation of the (D, M) chain.

Holds do not change the state, so by default they are skipped exactly: the
waiting time to the next real jump is Exp(R) with R the summed jump rate.
Times are in table-time units (total event rate 1).
"""
from __future__ import annotations

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from moran_coexist.errors import AbsorbingStateError, TruncatedRunError
from moran_coexist.schemas.experiment_models import SimConfig, SimMode
from moran_coexist.schemas.models import (
    JUMPS,
    DMState,
    JumpKind,
    Params,
    PathSample,
    Species,
    StoppingRecord,
)
from moran_coexist.tools import kernels
from moran_coexist.tools.rates import fill_jump_rates, is_absorbing, validate_state
from moran_coexist.tools.replicates import replicate_rng, replicate_seed, run_indexed

SPECIES_BY_CODE = {
    kernels.SP_C: Species.C,
    kernels.SP_H: Species.H,
    kernels.SP_M: Species.M,
    kernels.SP_CH: Species.CH,
    kernels.SP_CM: Species.CM,
    kernels.SP_HM: Species.HM,
}


def gamma_target(p: Params) -> int:
    """Lattice D closest to N(2q - 1)."""
    return int(math.floor(p.N * (2.0 * p.q - 1.0) + 0.5))


def next_event(s: DMState, p: Params, rng: np.random.Generator) -> Tuple[float, JumpKind]:
    validate_state(s, p)
    if is_absorbing(s, p):
        raise AbsorbingStateError(f"no events leave absorbing state (D={s.D}, M={s.M})")
    rates = np.empty(6)
    total = fill_jump_rates(p.N, p.q, s.D, s.M, rates)
    dt = rng.exponential(1.0 / total)
    k = int(rng.choice(6, p=rates / total))
    return float(dt), JUMPS[k]


def _time_or_none(value: float) -> Optional[float]:
    return None if value < 0.0 else float(value)


def run_to_fixation(
    cfg: SimConfig, rng: np.random.Generator
) -> Tuple[StoppingRecord, Optional[PathSample]]:
    p = cfg.params
    s0 = cfg.init
    if is_absorbing(s0, p):
        logger.warning(f"Run starts on absorbing corner (D={s0.D}, M={s0.M}); stopping at t=0")
    (
        tau_gamma, tau_e, first, tau_f, fixed, events, truncated, t, D, M,
        path_t, path_D, path_M, path_len,
    ) = kernels.ssa_run(
        rng,
        p.N,
        p.q,
        s0.D,
        s0.M,
        cfg.mode is SimMode.TO_FIXATION,
        gamma_target(p),
        cfg.gamma_tolerance,
        cfg.max_events,
        cfg.skip_holds,
        cfg.path_stride,
        cfg.record_path,
    )
    if truncated:
        partial = {
            "tau_gamma": _time_or_none(tau_gamma),
            "tau_e": _time_or_none(tau_e),
            "first_extinct": SPECIES_BY_CODE.get(int(first)),
            "t": float(t),
            "state": (int(D), int(M)),
            "event_count": int(events),
        }
        raise TruncatedRunError(
            f"run hit max_events={cfg.max_events} at t={t:.6g}, state (D={D}, M={M})",
            partial=partial,
        )

    record = StoppingRecord(
        tau_gamma=_time_or_none(tau_gamma),
        tau_e=float(tau_e),
        first_extinct=SPECIES_BY_CODE[int(first)],
        tau_f=_time_or_none(tau_f),
        fixed=SPECIES_BY_CODE.get(int(fixed)),
        event_count=int(events),
    )
    path = None
    if cfg.record_path:
        path = PathSample(
            t=np.asarray(path_t[:path_len]).copy(),
            D=np.asarray(path_D[:path_len]).copy(),
            M=np.asarray(path_M[:path_len]).copy(),
        )
    return record, path


def run_batch(
    cfg: SimConfig,
    n_runs: int,
    master_seed: int,
    workers: int = 1,
    stream: Sequence[int] = (),
) -> List[StoppingRecord]:
    """Independent replicates; replicate i draws from seed (master_seed, *stream, i)."""
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    batch_cfg = cfg.model_copy(update={"record_path": False})

    def _one(i: int) -> StoppingRecord:
        seed = replicate_seed(master_seed, i, stream)
        record, _ = run_to_fixation(batch_cfg, replicate_rng(seed))
        return record.model_copy(update={"seed": seed})

    logger.info(
        f"CTMC batch: N={cfg.params.N} q={cfg.params.q} init=(D={cfg.init.D}, M={cfg.init.M}) "
        f"mode={cfg.mode.value} runs={n_runs}"
    )
    return run_indexed(_one, n_runs, workers=workers, label=f"ctmc N={cfg.params.N}")


def scaled_path(path: PathSample, N: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(t / N, D / N, M / N): chain path on the mean-flow clock."""
    return path.t / N, path.D / N, path.M / N
