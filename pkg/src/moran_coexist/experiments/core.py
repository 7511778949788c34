"""Experiment harness: CTMC batches set against the analytic and reduced-diffusion predictions.

Every kind is deterministic given (config, master_seed). Parameter set j and
start k draw their replicate streams from (master_seed, j, k, i); reduced
diffusion paths add a trailing 1 to the stream.
"""
from __future__ import annotations

import math
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from moran_coexist.errors import ConfigError
from moran_coexist.experiments import stats
from moran_coexist.schemas.experiment_models import (
    AbsorptionReport,
    ComparisonRow,
    ExperimentConfig,
    ExperimentResult,
    SimConfig,
    SimMode,
    SummaryStats,
)
from moran_coexist.schemas.models import Params, ScaledPoint, Species, StoppingRecord
from moran_coexist.tools import export
from moran_coexist.tools.analytics import ScaleTable, build_scale_table, extinction_report
from moran_coexist.tools.ctmc import run_batch
from moran_coexist.tools.flow import project_mstar
from moran_coexist.tools.rates import lattice_state
from moran_coexist.tools.sde import simulate_mstar_batch

Start = Tuple[float, float]

# =============================================================================
# Default starting points
# =============================================================================

M0_GRID: Tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(10))

GAMMA_HIT_STARTS: Tuple[Start, ...] = (
    (0.334, 0.334),
    (0.48, 0.48),
    (0.495, 0.495),
    (0.5, 0.5),
    (0.5, 0.02),
    (0.5, 0.01),
    (0.97, 0.01),
    (0.985, 0.005),
)

DEFAULT_INITS: Dict[str, Tuple[Start, ...]] = {
    "tau_hist": ((0.0, 1.0 / 3.0),),
    "gamma_hit": GAMMA_HIT_STARTS,
    "pm_curve": tuple((0.0, m0) for m0 in M0_GRID),
    "etau_curve": tuple((0.0, m0) for m0 in M0_GRID),
    "reduced_vs_ctmc": ((0.0, 1.0 / 3.0),),
    "fixation": tuple((0.0, m0) for m0 in M0_GRID),
}

FIGURE_KINDS = {"fig3": "tau_hist", "fig4": "gamma_hit", "fig5": "pm_curve", "fig6": "etau_curve"}
FIGURE_INITS: Dict[str, Tuple[Start, ...]] = {
    "fig3": ((0.0, 1.0 / 3.0),),
    "fig4": ((1.0 / 3.0, 1.0 / 3.0),),
    "fig5": DEFAULT_INITS["pm_curve"],
    "fig6": DEFAULT_INITS["etau_curve"],
}


def resolve_inits(cfg: ExperimentConfig) -> List[Start]:
    return list(cfg.inits) if cfg.inits else list(DEFAULT_INITS[cfg.kind])


# =============================================================================
# Shared plumbing
# =============================================================================


def _dataset_path(cfg: ExperimentConfig, stem: str, p: Params) -> Path:
    """<stem>.csv for a single parameter set, <stem>_N<N>_q<q>.csv otherwise."""
    if len(cfg.params) == 1:
        return cfg.out_dir / f"{stem}.csv"
    return cfg.out_dir / f"{stem}_N{p.N}_q{p.q:g}.csv"


def _ctmc_records(
    cfg: ExperimentConfig,
    p: Params,
    start: Start,
    stream: Sequence[int],
    mode: SimMode = SimMode.TO_FIRST_EXTINCTION,
) -> List[StoppingRecord]:
    sim = SimConfig(
        params=p,
        init=lattice_state(start[0], start[1], p.N),
        mode=mode,
        gamma_tolerance=cfg.gamma_tolerance,
        max_events=cfg.max_events,
    )
    return run_batch(sim, cfg.runs, cfg.master_seed, workers=cfg.workers, stream=stream)


def _write_outcomes(cfg: ExperimentConfig, p: Params, k: int, records: List[StoppingRecord]) -> Path:
    folder = cfg.out_dir / f"N{p.N}_q{p.q:g}" / f"start_{k}"
    return export.write_outcomes_csv(folder / "outcomes.csv", records)


def _lattice_point(start: Start, N: int) -> ScaledPoint:
    s = lattice_state(start[0], start[1], N)
    return ScaledPoint(d=s.D / N, m=s.M / N)


def _mean_se(values: np.ndarray) -> Tuple[float, float]:
    n = values.size
    sd = float(values.std(ddof=1)) if n > 1 else 0.0
    return float(values.mean()), sd / math.sqrt(n)


class _TableCache:
    """One scale table per q for the lifetime of an experiment."""

    def __init__(self, cfg: ExperimentConfig):
        self._cfg = cfg
        self._tables: Dict[float, ScaleTable] = {}

    def report(self, start: Start, p: Params) -> AbsorptionReport:
        if p.q not in self._tables:
            self._tables[p.q] = build_scale_table(p.q, n_grid=self._cfg.n_grid, eps=self._cfg.eps)
        return extinction_report(_lattice_point(start, p.N), p, self._tables[p.q])


def extinct_before_gamma(r: StoppingRecord) -> bool:
    """tau_e < tau_Gamma, counting runs that never reach Gamma."""
    return r.tau_gamma is None or r.tau_e < r.tau_gamma


# =============================================================================
# Experiment kinds
# =============================================================================


def _tau_hist(cfg: ExperimentConfig) -> ExperimentResult:
    start = resolve_inits(cfg)[0]
    result = ExperimentResult(kind=cfg.kind)
    samples: List[np.ndarray] = []
    rows = []
    for j, p in enumerate(cfg.params):
        records = _ctmc_records(cfg, p, start, (j, 0))
        result.artifacts.append(_write_outcomes(cfg, p, 0, records))
        scaled = np.array([r.tau_e for r in records]) / p.N**2
        samples.append(scaled)
        result.stats.append(stats.summarize(scaled, label=f"tau_e/N^2 N={p.N}", bins=cfg.bins))
        rows.extend((p.N, i, t) for i, t in enumerate(scaled))
    result.artifacts.append(export.write_rows(cfg.out_dir / "fig3.csv", export.FIG3_HEADER, rows))
    if len(samples) > 1:
        result.ks_statistic, result.ks_pvalue = stats.ks_two_sample(samples[0], samples[-1])
    return result


def _gamma_hit(cfg: ExperimentConfig) -> ExperimentResult:
    result = ExperimentResult(kind=cfg.kind)
    for j, p in enumerate(cfg.params):
        rows = []
        for k, start in enumerate(resolve_inits(cfg)):
            records = _ctmc_records(cfg, p, start, (j, k))
            result.artifacts.append(_write_outcomes(cfg, p, k, records))
            n = len(records)
            before = sum(extinct_before_gamma(r) for r in records)
            summary = stats.proportion(
                before, n, label=f"P(tau_e < tau_Gamma) N={p.N} start={start}"
            )
            result.stats.append(summary)
            rows.append((start[0], start[1], before / n, (n - before) / n, summary.proportion_se))
            if j == 0 and k == 0:
                result.artifacts.append(
                    export.write_rows(
                        cfg.out_dir / "fig4.csv",
                        export.FIG4_HEADER,
                        ((i, r.tau_gamma) for i, r in enumerate(records)),
                    )
                )
        result.artifacts.append(
            export.write_rows(_dataset_path(cfg, "gamma_hit", p), export.GAMMA_HIT_HEADER, rows)
        )
    return result


def _curve(
    cfg: ExperimentConfig, j: int, p: Params, tables: _TableCache
) -> Tuple[List[ComparisonRow], List[Tuple[float, float, float, float]]]:
    """Comparison rows plus (m0, analytic, mc, se) dataset rows for one parameter set."""
    comparisons: List[ComparisonRow] = []
    rows = []
    for k, start in enumerate(resolve_inits(cfg)):
        report = tables.report(start, p)
        records = _ctmc_records(cfg, p, start, (j, k))
        if cfg.kind == "pm_curve":
            n = len(records)
            mc = sum(r.first_extinct is Species.M for r in records) / n
            se = stats.binomial_se(mc, n)
            analytic = report.p_M
        else:
            mc, se = _mean_se(np.array([r.tau_e for r in records]) / p.N**2)
            analytic = report.expected_tau_gamma_units
        row = stats.compare(report.x_start, analytic, mc, se)
        if row.flagged:
            logger.warning(
                f"{cfg.kind} N={p.N} m0={start[1]}: MC {mc:.4g} vs analytic {analytic:.4g} (z={row.z:.2f})"
            )
        comparisons.append(row)
        rows.append((start[1], analytic, mc, se))
    return comparisons, rows


def compare_analytic_mc(cfg: ExperimentConfig) -> List[ComparisonRow]:
    """(x, analytic, mc, se, z) rows for every parameter set and start, |z| > 3 flagged."""
    if cfg.kind not in ("pm_curve", "etau_curve"):
        raise ConfigError(f"compare_analytic_mc needs kind pm_curve or etau_curve, got {cfg.kind}")
    tables = _TableCache(cfg)
    out: List[ComparisonRow] = []
    for j, p in enumerate(cfg.params):
        out.extend(_curve(cfg, j, p, tables)[0])
    return out


def _analytic_curve(cfg: ExperimentConfig) -> ExperimentResult:
    stem, header = (
        ("fig5", export.FIG5_HEADER) if cfg.kind == "pm_curve" else ("fig6", export.FIG6_HEADER)
    )
    tables = _TableCache(cfg)
    result = ExperimentResult(kind=cfg.kind)
    for j, p in enumerate(cfg.params):
        comparisons, rows = _curve(cfg, j, p, tables)
        result.comparisons.extend(comparisons)
        result.artifacts.append(export.write_rows(_dataset_path(cfg, stem, p), header, rows))
    return result


def _reduced_vs_ctmc(cfg: ExperimentConfig) -> ExperimentResult:
    start = resolve_inits(cfg)[0]
    result = ExperimentResult(kind=cfg.kind)
    for j, p in enumerate(cfg.params):
        records = _ctmc_records(cfg, p, start, (j, 0))
        result.artifacts.append(_write_outcomes(cfg, p, 0, records))
        ctmc = np.array([r.tau_e for r in records]) / p.N**2
        y0 = _lattice_point(start, p.N)
        x0 = 0.0 if y0.m == 0.0 else project_mstar(y0, p.q)
        _, reduced = simulate_mstar_batch(
            x0, p.q, cfg.dt, cfg.runs, cfg.master_seed, workers=cfg.workers, stream=(j, 0, 1)
        )
        result.stats.append(stats.summarize(ctmc, label=f"CTMC tau_e/N^2 N={p.N}", bins=cfg.bins))
        result.stats.append(stats.summarize(reduced, label=f"reduced tau x0={x0:.4g}", bins=cfg.bins))
        ctmc_mean, ctmc_se = _mean_se(ctmc)
        reduced_mean, reduced_se = _mean_se(reduced)
        result.comparisons.append(
            stats.compare(x0, reduced_mean, ctmc_mean, math.hypot(ctmc_se, reduced_se))
        )
        ks, pvalue = stats.ks_two_sample(ctmc, reduced)
        if j == 0:
            result.ks_statistic, result.ks_pvalue = ks, pvalue
        gap = stats.relative_gap(ctmc_mean, reduced_mean)
        logger.info(f"N={p.N}: mean gap {gap if gap is None else f'{gap:.3%}'}, KS {ks:.4f}")
        result.artifacts.append(
            export.write_rows(
                _dataset_path(cfg, "reduced_vs_ctmc", p),
                export.REDUCED_HEADER,
                ((i, a, b) for i, (a, b) in enumerate(zip(ctmc, reduced))),
            )
        )
    return result


def _fixation(cfg: ExperimentConfig) -> ExperimentResult:
    result = ExperimentResult(kind=cfg.kind)
    tables = _TableCache(cfg)
    for j, p in enumerate(cfg.params):
        symmetric = p.q == 0.5
        if not symmetric:
            logger.warning(f"q={p.q}: no analytic M-fixation probability off q=1/2; column left empty")
        rows = []
        for k, start in enumerate(resolve_inits(cfg)):
            records = _ctmc_records(cfg, p, start, (j, k), mode=SimMode.TO_FIXATION)
            result.artifacts.append(_write_outcomes(cfg, p, k, records))
            n = len(records)
            counts = {sp: sum(r.fixed is sp for r in records) for sp in (Species.C, Species.H, Species.M)}
            pf = {sp: c / n for sp, c in counts.items()}
            se_m = stats.binomial_se(pf[Species.M], n)
            mean_tau_f = float(np.mean([r.tau_f for r in records])) / p.N**2
            analytic: Optional[float] = None
            if symmetric:
                report = tables.report(start, p)
                analytic = 1.0 - report.p_M
                result.comparisons.append(stats.compare(report.x_start, analytic, pf[Species.M], se_m))
            result.stats.append(
                stats.proportion(counts[Species.M], n, label=f"P(M fixes) N={p.N} start={start}")
            )
            rows.append(
                (start[1], pf[Species.C], pf[Species.H], pf[Species.M], analytic, se_m, mean_tau_f)
            )
        result.artifacts.append(
            export.write_rows(_dataset_path(cfg, "fixation", p), export.FIXATION_HEADER, rows)
        )
    return result


_RUNNERS: Dict[str, Callable[[ExperimentConfig], ExperimentResult]] = {
    "tau_hist": _tau_hist,
    "gamma_hit": _gamma_hit,
    "pm_curve": _analytic_curve,
    "etau_curve": _analytic_curve,
    "reduced_vs_ctmc": _reduced_vs_ctmc,
    "fixation": _fixation,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    started = time.perf_counter()
    logger.info(
        f"Experiment {cfg.kind}: params={[(p.N, p.q) for p in cfg.params]} "
        f"runs={cfg.runs} seed={cfg.master_seed} -> {cfg.out_dir}"
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    result = _RUNNERS[cfg.kind](cfg)
    logger.info(
        f"Experiment {cfg.kind} done in {time.perf_counter() - started:.1f}s, "
        f"{len(result.artifacts)} artifacts"
    )
    return result


# =============================================================================
# Figure datasets
# =============================================================================


def figure_config(
    figure: str,
    ns: Sequence[int],
    q: float = 0.5,
    **fields,
) -> ExperimentConfig:
    """ExperimentConfig reproducing one figure dataset; extra fields pass through."""
    if figure not in FIGURE_KINDS:
        raise ConfigError(f"unknown figure {figure!r}; expected one of {sorted(FIGURE_KINDS)}")
    return ExperimentConfig(
        kind=FIGURE_KINDS[figure],
        params=[Params(N=n, q=q) for n in ns],
        inits=list(FIGURE_INITS[figure]),
        **{k: v for k, v in fields.items() if v is not None},
    )


def fig3(ns: Sequence[int] = (100, 1000), **fields) -> ExperimentResult:
    """tau_e / N^2 samples from (0, 1/3) for each N."""
    return run_experiment(figure_config("fig3", ns, **fields))


def fig4(N: int = 1000, **fields) -> ExperimentResult:
    """tau_Gamma samples from (1/3, 1/3)."""
    return run_experiment(figure_config("fig4", [N], **fields))


def fig5(N: int = 1000, **fields) -> ExperimentResult:
    return run_experiment(figure_config("fig5", [N], **fields))


def fig6(N: int = 1000, **fields) -> ExperimentResult:
    return run_experiment(figure_config("fig6", [N], **fields))


def summary_rows(stats_list: Sequence[SummaryStats]) -> List[Tuple[str, ...]]:
    """Flattened (label, n, mean, se, proportion) strings for table display."""

    def _g(v: Optional[float]) -> str:
        return "" if v is None else f"{v:.5g}"

    return [(s.label, str(s.n), _g(s.mean), _g(s.se), _g(s.proportion)) for s in stats_list]
