"""CSV artifacts. Floats are written with repr so reruns are byte-identical."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np
from loguru import logger

from moran_coexist.schemas.models import PathSample, StoppingRecord, Trajectory

OUTCOMES_HEADER = ["run_id", "seed", "tau_gamma", "tau_e", "first_extinct", "tau_f", "fixed"]
PATH_HEADER = ["t", "D", "M"]
TRAJECTORY_HEADER = ["t", "d", "m"]
COEFFICIENT_HEADER = ["x", "beta", "alpha"]
SCALE_HEADER = ["x", "phi", "pm", "etau"]

# experiment datasets
FIG3_HEADER = ["N", "run_id", "tau_e_scaled"]
FIG4_HEADER = ["run_id", "tau_gamma"]
FIG5_HEADER = ["m0", "pm_analytic", "pm_mc", "se"]
FIG6_HEADER = ["m0", "etau_analytic", "etau_mc", "se"]
GAMMA_HIT_HEADER = ["d0", "m0", "p_extinct_before_gamma", "p_gamma_before_extinct", "se"]
REDUCED_HEADER = ["sample", "tau_ctmc_scaled", "tau_reduced"]
FIXATION_HEADER = ["m0", "pf_C", "pf_H", "pf_M", "pf_M_analytic", "se_M", "mean_tau_f_scaled"]


def fmt(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
            count += 1
    logger.info(f"Wrote {count} rows to {path}")
    return path


def write_outcomes_csv(path: Path, records: List[StoppingRecord]) -> Path:
    return write_rows(
        path,
        OUTCOMES_HEADER,
        (
            (i, r.seed, r.tau_gamma, r.tau_e, r.first_extinct, r.tau_f, r.fixed)
            for i, r in enumerate(records)
        ),
    )


def write_path_csv(path: Path, sample: PathSample) -> Path:
    return write_rows(path, PATH_HEADER, zip(sample.t, sample.D, sample.M))


def write_trajectory_csv(path: Path, traj: Trajectory, stride: int = 1) -> Path:
    idx = np.arange(0, len(traj), max(stride, 1))
    if len(traj) and idx[-1] != len(traj) - 1:
        idx = np.append(idx, len(traj) - 1)
    return write_rows(path, TRAJECTORY_HEADER, zip(traj.t[idx], traj.d[idx], traj.m[idx]))


def write_coefficient_table(
    path: Path, xs: np.ndarray, beta: np.ndarray, alpha: np.ndarray
) -> Path:
    return write_rows(path, COEFFICIENT_HEADER, zip(xs, beta, alpha))


def write_scale_table_csv(
    path: Path,
    xs: np.ndarray,
    phi: np.ndarray,
    pm: np.ndarray,
    etau: Optional[np.ndarray] = None,
) -> Path:
    etau = etau if etau is not None else [None] * len(xs)
    return write_rows(path, SCALE_HEADER, zip(xs, phi, pm, etau))
