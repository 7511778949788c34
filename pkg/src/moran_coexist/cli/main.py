from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any, List, Optional, Sequence, Tuple

try:  # typer>=0.26 vendors its own click; catch the exceptions it actually raises
    import typer._click as click
except ImportError:  # pragma: no cover
    import click
import numpy as np
import typer
from loguru import logger
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from moran_coexist.errors import ConfigError, InvalidStateError, MoranError
from moran_coexist.experiments import core
from moran_coexist.experiments.stats import summarize
from moran_coexist.schemas.experiment_models import (
    AbsorptionReport,
    ExperimentConfig,
    ExperimentResult,
    SimConfig,
    SimMode,
)
from moran_coexist.schemas.models import FlowOptions, Params, ScaledPoint
from moran_coexist.settings import MoranSettings, load_settings
from moran_coexist.tools import export
from moran_coexist.tools.analytics import (
    build_scale_table,
    expected_tau,
    extinction_report,
    hit_prob_pM,
)
from moran_coexist.tools.ctmc import run_batch, run_to_fixation
from moran_coexist.tools.flow import integrate_flow, project_mstar
from moran_coexist.tools.rates import lattice_state
from moran_coexist.tools.reduction import (
    gamma_coefficients,
    gamma_coefficients_grid,
    gamma_upper_boundary,
)
from moran_coexist.tools.replicates import replicate_rng, replicate_seed

app = typer.Typer(help="Three-species Moran model in a random environment", no_args_is_help=True)
figures_app = typer.Typer(help="Reproduce the simulation-study figure datasets", no_args_is_help=True)
app.add_typer(figures_app, name="figures")

# stdout carries JSON results only
console = Console(stderr=True)


def _configure_logging(level: str) -> None:
    logger.remove()
    logger.add(sys.stderr, level=level.upper())


def _settings(ctx: typer.Context) -> MoranSettings:
    return ctx.obj


def _emit(payload: Any) -> None:
    typer.echo(json.dumps(payload, indent=2))


def _parse_point(value: Optional[str]) -> Optional[Tuple[float, float]]:
    if value is None:
        return None
    try:
        d, m = (float(part) for part in value.split(","))
    except ValueError:
        raise typer.BadParameter(f"expected 'd,m', got {value!r}")
    try:
        ScaledPoint(d=d, m=m)
    except ValidationError as exc:
        raise typer.BadParameter(f"({d}, {m}) is not in the triangle S: {exc.errors()[0]['msg']}")
    return d, m


def _print_result(result: ExperimentResult) -> None:
    if result.stats:
        table = Table(title=f"{result.kind} summary")
        for col in ("label", "n", "mean", "se", "proportion"):
            table.add_column(col)
        for row in core.summary_rows(result.stats):
            table.add_row(*row)
        console.print(table)
    if result.comparisons:
        table = Table(title=f"{result.kind} analytic vs Monte Carlo")
        for col in ("x", "analytic", "mc", "se", "z"):
            table.add_column(col)
        for c in result.comparisons:
            style = "red" if c.flagged else None
            table.add_row(
                f"{c.x:.4g}", f"{c.analytic:.5g}", f"{c.mc:.5g}", f"{c.se:.3g}", f"{c.z:.2f}", style=style
            )
        console.print(table)
    if result.ks_statistic is not None:
        console.print(f"KS statistic {result.ks_statistic:.4f} (p={result.ks_pvalue:.3g})")


def _experiment_defaults(settings: MoranSettings) -> dict[str, Any]:
    return {
        "runs": settings.runs,
        "master_seed": settings.master_seed,
        "n_grid": settings.n_grid,
        "eps": settings.eps,
        "dt": settings.sde_dt,
        "gamma_tolerance": settings.gamma_tolerance,
        "max_events": settings.max_events,
        "workers": settings.workers,
        "out_dir": settings.out_dir,
    }


@app.callback()
def main_callback(
    ctx: typer.Context,
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log at DEBUG level"),
    settings_path: Optional[Path] = typer.Option(
        None, "--settings", help="YAML defaults file (default: config/moran.yaml or $MORAN_CONFIG)"
    ),
):
    """Exact simulation, mean flow, reduced diffusion and extinction analytics."""
    settings = load_settings(settings_path)
    _configure_logging("DEBUG" if verbose else settings.log_level)
    ctx.obj = settings


@app.command("simulate")
def simulate(
    ctx: typer.Context,
    n: int = typer.Option(1000, "--n", help="Population size N"),
    q: float = typer.Option(0.5, "--q", help="Probability of environment state c"),
    init: str = typer.Option("0,0.333", "--init", help="Scaled start 'd,m', rounded to the lattice"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed"),
    runs: int = typer.Option(1, "--runs", help="Replicates; more than one prints a batch summary"),
    mode: SimMode = typer.Option(SimMode.TO_FIRST_EXTINCTION, "--mode", help="Stopping rule"),
    naive: bool = typer.Option(False, "--naive", help="Sample holds explicitly with Exp(1) steps"),
    max_events: Optional[int] = typer.Option(None, "--max-events", help="Event cap per run"),
    path_out: Optional[Path] = typer.Option(None, "--path-out", help="Write the single-run path as t,D,M CSV"),
    out: Optional[Path] = typer.Option(None, "--out", help="Directory for outcomes.csv (batch runs)"),
):
    """Run the exact chain from one start and report stopping times."""
    settings = _settings(ctx)
    d0, m0 = _parse_point(init)
    p = Params(N=n, q=q)
    cfg = SimConfig(
        params=p,
        init=lattice_state(d0, m0, n),
        mode=mode,
        gamma_tolerance=settings.gamma_tolerance,
        max_events=max_events or settings.max_events,
        skip_holds=not naive,
        record_path=path_out is not None,
        path_stride=settings.path_stride,
    )
    if runs < 1:
        raise ConfigError(f"--runs must be >= 1, got {runs}")
    master = settings.master_seed if seed is None else seed
    if runs == 1:
        run_seed = replicate_seed(master, 0)
        record, path = run_to_fixation(cfg, replicate_rng(run_seed))
        record = record.model_copy(update={"seed": run_seed})
        if path is not None:
            export.write_path_csv(path_out, path)
        _emit(record.model_dump(mode="json"))
        return

    records = run_batch(cfg, runs, master, workers=settings.workers)
    if out is not None:
        export.write_outcomes_csv(out / "outcomes.csv", records)
    scaled = np.array([r.tau_e for r in records]) / n**2
    first = {}
    for r in records:
        first[r.first_extinct.value] = first.get(r.first_extinct.value, 0) + 1
    summary = summarize(scaled, label=f"tau_e/N^2 N={n}")
    console.print(f"first extinct: {first}; mean tau_e/N^2 {summary.mean:.5g} ± {summary.se:.2g}")
    _emit(
        {
            "runs": runs,
            "init": {"D": cfg.init.D, "M": cfg.init.M},
            "first_extinct": {k: v / runs for k, v in sorted(first.items())},
            "tau_e_scaled": summary.model_dump(mode="json", exclude={"bin_edges", "counts"}),
        }
    )


@app.command("flow")
def flow(
    q: float = typer.Option(0.5, "--q", help="Probability of environment state c"),
    init: str = typer.Option(..., "--init", help="Scaled start 'd,m'"),
    dt: float = typer.Option(1e-3, "--dt", help="RK4 step"),
    t_max: float = typer.Option(1e3, "--t-max", help="Time cap"),
    out: Optional[Path] = typer.Option(None, "--out", help="Write the trajectory as t,d,m CSV"),
    stride: int = typer.Option(1, "--stride", help="Keep every stride-th step in the CSV"),
):
    """Integrate the mean flow until it reaches the coexistence line."""
    d0, m0 = _parse_point(init)
    y0 = ScaledPoint(d=d0, m=m0)
    traj = integrate_flow(y0, q, FlowOptions(dt=dt, t_max=t_max))
    if out is not None:
        export.write_trajectory_csv(out, traj, stride=stride)
    _emit(
        {
            "terminal_reason": traj.terminal_reason,
            "steps": len(traj),
            "t_end": float(traj.t[-1]),
            "d_end": float(traj.d[-1]),
            "m_end": float(traj.m[-1]),
            "m_star": float(project_mstar(y0, q)) if m0 > 0.0 else 0.0,
        }
    )


@app.command("coeffs")
def coeffs(
    ctx: typer.Context,
    q: float = typer.Option(0.5, "--q", help="Probability of environment state c"),
    x: Optional[float] = typer.Option(None, "--x", help="Single point on the coexistence line"),
    grid: int = typer.Option(101, "--grid", help="Interior points for the table"),
    out: Optional[Path] = typer.Option(None, "--out", help="CSV path for the x,beta,alpha table"),
):
    """Drift and variance of the reduced diffusion along the coexistence line."""
    if x is not None:
        c = gamma_coefficients(x, q)
        _emit({"x": x, "q": q, "beta": c.beta, "alpha": c.alpha})
        return
    top = gamma_upper_boundary(q)
    xs = np.linspace(0.0, top, grid + 2)[1:-1]
    beta, alpha = gamma_coefficients_grid(xs, q)
    path = out or _settings(ctx).out_dir / "coefficients.csv"
    export.write_coefficient_table(path, xs, beta, alpha)
    _emit({"q": q, "x_top": top, "rows": int(xs.size), "path": str(path)})


@app.command("analytic")
def analytic(
    ctx: typer.Context,
    q: float = typer.Option(0.5, "--q", help="Probability of environment state c"),
    grid: Optional[int] = typer.Option(None, "--grid", help="Scale-function grid intervals"),
    x: Optional[float] = typer.Option(None, "--x", help="Start on the coexistence line"),
    init: Optional[str] = typer.Option(None, "--init", help="Scaled start 'd,m', projected onto the line"),
    n: int = typer.Option(1000, "--n", help="Population size for chain-time units"),
    out: Optional[Path] = typer.Option(None, "--out", help="Write x,phi,pm,etau on the grid"),
):
    """Generalist-loss probability and mean extinction time from the scale function."""
    settings = _settings(ctx)
    if x is None and init is None and out is None:
        raise typer.BadParameter("provide --x, --init or --out")
    top = gamma_upper_boundary(q)
    if x is not None and not 0.0 <= x <= top:
        raise typer.BadParameter(f"--x must lie in [0, {top:g}] for q={q}, got {x}")
    p = Params(N=n, q=q)
    table = build_scale_table(q, n_grid=grid or settings.n_grid, eps=settings.eps)

    payload: dict[str, Any] = {}
    if init is not None:
        d0, m0 = _parse_point(init)
        payload = extinction_report(ScaledPoint(d=d0, m=m0), p, table).model_dump(mode="json")
    elif x is not None:
        e_tau = expected_tau(x, table)
        payload = AbsorptionReport(
            x_start=x,
            p_M=hit_prob_pM(x, table),
            expected_tau_gamma_units=e_tau,
            expected_tau_chain_units=n**2 * e_tau,
            q=q,
            N=n,
        ).model_dump(mode="json")
    if out is not None:
        pm = np.array([hit_prob_pM(v, table) for v in table.grid])
        etau = np.array([expected_tau(v, table) for v in table.grid])
        export.write_scale_table_csv(out, table.grid, table.phi, pm, etau)
        payload["path"] = str(out)
    _emit(payload)


@app.command("experiment")
def experiment(
    ctx: typer.Context,
    config: Path = typer.Option(..., "--config", help="JSON file mirroring ExperimentConfig"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override master_seed"),
    out: Optional[Path] = typer.Option(None, "--out", help="Override out_dir"),
    runs: Optional[int] = typer.Option(None, "--runs", help="Override runs"),
    workers: Optional[int] = typer.Option(None, "--workers", help="Override worker threads"),
):
    """Run one experiment kind described by a JSON config."""
    try:
        data = json.loads(config.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{config} must hold a JSON object")
    cli = {"master_seed": seed, "out_dir": out, "runs": runs, "workers": workers}
    merged = {**_experiment_defaults(_settings(ctx)), **data}
    merged.update({k: v for k, v in cli.items() if v is not None})
    cfg = ExperimentConfig.model_validate(merged)
    result = core.run_experiment(cfg)
    _print_result(result)
    _emit(result.model_dump(mode="json"))


def _run_figure(
    ctx: typer.Context,
    figure: str,
    ns: Sequence[int],
    q: float,
    runs: Optional[int],
    seed: Optional[int],
    out: Optional[Path],
    workers: Optional[int],
    grid: Optional[int],
) -> None:
    fields = _experiment_defaults(_settings(ctx))
    cli = {"runs": runs, "master_seed": seed, "out_dir": out, "workers": workers, "n_grid": grid}
    fields.update({k: v for k, v in cli.items() if v is not None})
    result = core.run_experiment(core.figure_config(figure, ns, q=q, **fields))
    _print_result(result)
    _emit(result.model_dump(mode="json"))


_Q = typer.Option(0.5, "--q", help="Probability of environment state c")
_RUNS = typer.Option(None, "--runs", help="Replicates per start")
_SEED = typer.Option(None, "--seed", help="Master seed")
_OUT = typer.Option(None, "--out", help="Output directory")
_WORKERS = typer.Option(None, "--workers", help="Worker threads")
_GRID = typer.Option(None, "--grid", help="Scale-function grid intervals")


@figures_app.command("fig3")
def figure3(
    ctx: typer.Context,
    n: List[int] = typer.Option([100, 1000], "--n", help="Population sizes (repeat the flag)"),
    q: float = _Q,
    runs: Optional[int] = _RUNS,
    seed: Optional[int] = _SEED,
    out: Optional[Path] = _OUT,
    workers: Optional[int] = _WORKERS,
    grid: Optional[int] = _GRID,
):
    """tau_e / N^2 samples from (0, 1/3) for each N."""
    _run_figure(ctx, "fig3", n, q, runs, seed, out, workers, grid)


@figures_app.command("fig4")
def figure4(
    ctx: typer.Context,
    n: int = typer.Option(1000, "--n", help="Population size"),
    q: float = _Q,
    runs: Optional[int] = _RUNS,
    seed: Optional[int] = _SEED,
    out: Optional[Path] = _OUT,
    workers: Optional[int] = _WORKERS,
    grid: Optional[int] = _GRID,
):
    """tau_Gamma samples from (1/3, 1/3)."""
    _run_figure(ctx, "fig4", [n], q, runs, seed, out, workers, grid)


@figures_app.command("fig5")
def figure5(
    ctx: typer.Context,
    n: int = typer.Option(1000, "--n", help="Population size"),
    q: float = _Q,
    runs: Optional[int] = _RUNS,
    seed: Optional[int] = _SEED,
    out: Optional[Path] = _OUT,
    workers: Optional[int] = _WORKERS,
    grid: Optional[int] = _GRID,
):
    """Generalist-loss probability against m0: analytic curve and Monte Carlo points."""
    _run_figure(ctx, "fig5", [n], q, runs, seed, out, workers, grid)


@figures_app.command("fig6")
def figure6(
    ctx: typer.Context,
    n: int = typer.Option(1000, "--n", help="Population size"),
    q: float = _Q,
    runs: Optional[int] = _RUNS,
    seed: Optional[int] = _SEED,
    out: Optional[Path] = _OUT,
    workers: Optional[int] = _WORKERS,
    grid: Optional[int] = _GRID,
):
    """Mean first-extinction time against m0: analytic curve and Monte Carlo points."""
    _run_figure(ctx, "fig6", [n], q, runs, seed, out, workers, grid)


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and map failures to exit codes: 1 for bad input, 2 for runtime errors."""
    command = typer.main.get_command(app)
    args = list(argv) if argv is not None else sys.argv[1:]
    try:
        rv = command.main(args=args, prog_name="moran", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (ConfigError, InvalidStateError, ValidationError) as exc:
        logger.error(f"Configuration error: {exc}")
        return 1
    except (MoranError, OSError) as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return 2
    return rv if isinstance(rv, int) else 0


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
