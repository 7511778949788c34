from __future__ import annotations

import csv
import math

import pytest
from pydantic import ValidationError

from moran_coexist.errors import ConfigError
from moran_coexist.experiments import stats
from moran_coexist.experiments.core import (
    GAMMA_HIT_STARTS,
    M0_GRID,
    compare_analytic_mc,
    extinct_before_gamma,
    fig3,
    fig4,
    fig5,
    fig6,
    figure_config,
    resolve_inits,
    run_experiment,
    summary_rows,
)
from moran_coexist.schemas.experiment_models import ExperimentConfig
from moran_coexist.schemas.models import Params, Species, StoppingRecord
from moran_coexist.tools import export


def _rows(path):
    with path.open(newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


def _cfg(tmp_path, kind, ns=(20,), q=0.5, **kw) -> ExperimentConfig:
    fields = dict(runs=200, master_seed=11, n_grid=200, workers=2, out_dir=tmp_path)
    fields.update(kw)
    return ExperimentConfig(kind=kind, params=[Params(N=n, q=q) for n in ns], **fields)


# =============================================================================
# stats
# =============================================================================


def test_summarize_histogram_accounts_for_every_sample():
    s = stats.summarize([1.0, 2.0, 2.5, 4.0, 7.0], label="x")
    assert s.n == 5
    assert sum(s.counts) == 5
    assert len(s.bin_edges) == len(s.counts) + 1
    assert s.mean == pytest.approx(3.3)
    assert s.se == pytest.approx(s.sd / math.sqrt(5))


def test_summarize_empty():
    assert stats.summarize([]).mean is None


def test_proportion_and_se():
    s = stats.proportion(30, 120)
    assert s.proportion == pytest.approx(0.25)
    assert s.proportion_se == pytest.approx(math.sqrt(0.25 * 0.75 / 120))


def test_z_score_edges():
    assert stats.z_score(1.0, 1.0, 0.0) == 0.0
    assert stats.z_score(1.0, 0.5, 0.0) == -math.inf
    row = stats.compare(0.3, 0.5, 0.8, 0.05)
    assert row.z == pytest.approx(6.0)
    assert row.flagged
    assert not stats.compare(0.3, 0.5, 0.52, 0.05).flagged


def test_two_sample_ks():
    d, p = stats.ks_two_sample([0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
    assert d == 0.0 and p == pytest.approx(1.0)
    assert stats.relative_gap(1.0, 0.0) is None
    assert stats.relative_gap(1.1, 1.0) == pytest.approx(0.1)


def test_extinct_before_gamma_counts_misses_and_ties():
    base = dict(seed=0, first_extinct=Species.M, tau_e=2.0, event_count=3)
    assert extinct_before_gamma(StoppingRecord(tau_gamma=None, **base))
    assert extinct_before_gamma(StoppingRecord(tau_gamma=3.0, **base))
    assert not extinct_before_gamma(StoppingRecord(tau_gamma=2.0, **base))


# =============================================================================
# config
# =============================================================================


def test_config_rejects_unknown_fields(tmp_path):
    with pytest.raises(ValidationError):
        ExperimentConfig(kind="pm_curve", params=[Params(N=20, q=0.5)], colour="red")


def test_config_rejects_start_outside_triangle():
    with pytest.raises(ValidationError):
        ExperimentConfig(kind="pm_curve", params=[Params(N=20, q=0.5)], inits=[(0.8, 0.5)])


def test_config_needs_params():
    with pytest.raises(ValidationError):
        ExperimentConfig(kind="tau_hist", params=[])
    single = ExperimentConfig(kind="tau_hist", params={"N": 30, "q": 0.4})
    assert single.params == [Params(N=30, q=0.4)]


def test_default_starts():
    cfg = ExperimentConfig(kind="pm_curve", params=[Params(N=20, q=0.5)])
    starts = resolve_inits(cfg)
    assert [m for _, m in starts] == [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    assert len(resolve_inits(ExperimentConfig(kind="gamma_hit", params=[Params(N=20, q=0.5)]))) == 8


def test_figure_config():
    cfg = figure_config("fig5", [50], runs=10, workers=None)
    assert cfg.kind == "pm_curve"
    assert cfg.workers == 4
    assert cfg.runs == 10
    with pytest.raises(ConfigError):
        figure_config("fig9", [50])


# =============================================================================
# experiment kinds
# =============================================================================


def test_pm_curve_dataset(tmp_path):
    cfg = _cfg(tmp_path, "pm_curve", inits=[(0.0, 0.0), (0.0, 0.3)])
    result = run_experiment(cfg)
    rows = _rows(tmp_path / "fig5.csv")
    assert rows[0] == export.FIG5_HEADER
    assert rows[1] == ["0.0", "1.0", "1.0", "0.0"]
    assert len(rows) == 3
    assert len(result.comparisons) == 2
    assert 0.0 < float(rows[2][2]) < 1.0
    assert (tmp_path / "N20_q0.5" / "start_1" / "outcomes.csv").exists()


def test_curve_datasets_are_reproducible(tmp_path):
    a = run_experiment(_cfg(tmp_path / "a", "etau_curve", inits=[(0.0, 0.2), (0.0, 0.5)]))
    b = run_experiment(_cfg(tmp_path / "b", "etau_curve", inits=[(0.0, 0.2), (0.0, 0.5)], workers=1))
    assert (tmp_path / "a" / "fig6.csv").read_bytes() == (tmp_path / "b" / "fig6.csv").read_bytes()
    assert a.comparisons == b.comparisons


def test_compare_analytic_mc_kinds(tmp_path):
    with pytest.raises(ConfigError):
        compare_analytic_mc(_cfg(tmp_path, "tau_hist"))
    rows = compare_analytic_mc(_cfg(tmp_path, "pm_curve", inits=[(0.0, 0.4)]))
    assert len(rows) == 1
    assert rows[0].x == pytest.approx(0.4)


def test_tau_hist_two_sizes(tmp_path):
    result = run_experiment(_cfg(tmp_path, "tau_hist", ns=(20, 40), runs=100))
    rows = _rows(tmp_path / "fig3.csv")
    assert rows[0] == export.FIG3_HEADER
    assert len(rows) == 1 + 2 * 100
    assert {r[0] for r in rows[1:]} == {"20", "40"}
    assert len(result.stats) == 2
    assert result.ks_statistic is not None
    assert 0.0 <= result.ks_pvalue <= 1.0


def test_gamma_hit_edge_start(tmp_path):
    # (1/2, 1/2) has no H individuals, so extinction comes before Gamma
    cfg = _cfg(tmp_path, "gamma_hit", ns=(40,), runs=100, inits=[(0.5, 0.5), (0.2, 0.2)])
    result = run_experiment(cfg)
    assert result.stats[0].proportion == 1.0
    rows = _rows(tmp_path / "gamma_hit.csv")
    assert rows[0] == export.GAMMA_HIT_HEADER
    assert rows[1][2:4] == ["1.0", "0.0"]
    assert float(rows[2][2]) + float(rows[2][3]) == pytest.approx(1.0)
    assert _rows(tmp_path / "fig4.csv")[0] == export.FIG4_HEADER


def test_reduced_vs_ctmc(tmp_path):
    result = run_experiment(_cfg(tmp_path, "reduced_vs_ctmc", ns=(30,), runs=100, dt=1e-3))
    (row,) = result.comparisons
    assert row.x == pytest.approx(1 / 3)
    assert 0.1 < row.mc < 1.5
    assert 0.1 < row.analytic < 1.5
    assert result.ks_statistic is not None
    rows = _rows(tmp_path / "reduced_vs_ctmc.csv")
    assert rows[0] == export.REDUCED_HEADER
    assert len(rows) == 101


def test_fixation_probabilities_sum_to_one(tmp_path):
    cfg = _cfg(tmp_path, "fixation", ns=(10,), inits=[(0.0, 0.2), (0.0, 0.6)])
    result = run_experiment(cfg)
    rows = _rows(tmp_path / "fixation.csv")
    assert rows[0] == export.FIXATION_HEADER
    for row in rows[1:]:
        assert sum(float(v) for v in row[1:4]) == pytest.approx(1.0)
        assert row[4] != ""
        assert float(row[6]) > 0.0
    assert len(result.comparisons) == 2


def test_fixation_off_symmetry_leaves_analytic_empty(tmp_path):
    run_experiment(_cfg(tmp_path, "fixation", ns=(10,), q=0.7, runs=50, inits=[(0.0, 0.4)]))
    (row,) = _rows(tmp_path / "fixation.csv")[1:]
    assert row[4] == ""


def test_multiple_parameter_sets_get_their_own_files(tmp_path):
    cfg = _cfg(tmp_path, "pm_curve", ns=(20, 30), runs=50, inits=[(0.0, 0.3)])
    run_experiment(cfg)
    assert (tmp_path / "fig5_N20_q0.5.csv").exists()
    assert (tmp_path / "fig5_N30_q0.5.csv").exists()


def test_summary_rows_format(tmp_path):
    rows = summary_rows([stats.summarize([1.0, 2.0], label="a"), stats.proportion(1, 4, label="b")])
    assert rows[0][:3] == ("a", "2", "1.5")
    assert rows[1][4] == "0.25"


# =============================================================================
# desk-scale reproductions
# =============================================================================


# finite-N shortfalls beyond 3 SE seen with the default seed; see DESIGN.md
PM_SHORTFALL = {0.9: -4.5}
ETAU_SHORTFALL = {0.5: -4.5}


def _check_curve(comparisons, shortfall):
    for m0, row in zip(M0_GRID, comparisons):
        if m0 in shortfall:
            # specialists die off the line before x reaches the top, so MC sits low
            assert shortfall[m0] <= row.z < 0.0, (m0, row)
        else:
            assert abs(row.z) <= 3.0, (m0, row)


@pytest.mark.slow
def test_large_n_hit_probability_curve(tmp_path):
    result = fig5(N=1000, runs=1000, out_dir=tmp_path)
    assert len(result.comparisons) == len(M0_GRID)
    for m0, row in zip(M0_GRID, result.comparisons):
        assert row.analytic == pytest.approx((1 - m0) ** 2, abs=1e-3)
    _check_curve(result.comparisons, PM_SHORTFALL)


@pytest.mark.slow
def test_large_n_expected_time_curve(tmp_path):
    result = fig6(N=1000, runs=1000, out_dir=tmp_path)
    assert len(result.comparisons) == len(M0_GRID)
    _check_curve(result.comparisons, ETAU_SHORTFALL)


@pytest.mark.slow
def test_extinction_times_scale_with_n_squared(tmp_path):
    result = fig3(ns=(100, 1000), runs=1000, out_dir=tmp_path)
    assert [s.n for s in result.stats] == [1000, 1000]
    assert result.ks_statistic <= 0.1


@pytest.mark.slow
def test_line_is_reached_within_a_small_fraction_of_n_squared(tmp_path):
    N = 1000
    result = fig4(N=N, runs=1000, out_dir=tmp_path)
    assert result.stats[0].proportion <= 0.01
    taus = [r[1] for r in _rows(tmp_path / "fig4.csv")[1:]]
    assert len(taus) == 1000
    hit = [float(t) for t in taus if t != ""]
    assert len(hit) >= 990
    assert max(hit) <= 0.05 * N**2


# (proportion, runs) measured with an independent 400-run batch at N=1000
GAMMA_HIT_REFERENCE = {
    (0.495, 0.495): (0.2325, 400),
    (0.985, 0.005): (0.015, 400),
    (0.5, 0.02): (0.01, 400),
}


@pytest.mark.slow
def test_large_n_gamma_hit_at_every_start(tmp_path):
    cfg = ExperimentConfig(kind="gamma_hit", params=[Params(N=1000, q=0.5)], runs=1000, out_dir=tmp_path)
    result = run_experiment(cfg)
    seen = dict(zip(GAMMA_HIT_STARTS, result.stats))
    assert len(seen) == 8
    # no H individuals at this start
    assert seen[(0.5, 0.5)].proportion == 1.0
    for start in ((0.334, 0.334), (0.48, 0.48), (0.97, 0.01)):
        s = seen[start]
        assert s.proportion <= 0.01 + 3 * stats.binomial_se(0.01, s.n), start
    for start, (expected, n_ref) in GAMMA_HIT_REFERENCE.items():
        s = seen[start]
        se = math.hypot(stats.binomial_se(expected, n_ref), stats.binomial_se(expected, s.n))
        assert abs(s.proportion - expected) <= 3 * se, start
    # fewer generalists at the same d make early loss more likely
    thin, thick = seen[(0.5, 0.01)], seen[(0.5, 0.02)]
    se = math.hypot(thin.proportion_se, thick.proportion_se)
    assert thin.proportion >= thick.proportion - 3 * se


@pytest.mark.slow
def test_reduced_diffusion_matches_chain_at_moderate_n(tmp_path):
    cfg = ExperimentConfig(
        kind="reduced_vs_ctmc", params=[Params(N=300, q=0.5)], runs=1000, dt=1e-4, out_dir=tmp_path
    )
    result = run_experiment(cfg)
    (row,) = result.comparisons
    assert row.x == pytest.approx(1 / 3, abs=5e-3)
    assert stats.relative_gap(row.mc, row.analytic) <= 0.1
    assert result.ks_statistic <= 0.15
