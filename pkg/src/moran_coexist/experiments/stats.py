from __future__ import annotations

import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from moran_coexist.schemas.experiment_models import ComparisonRow, SummaryStats

Z_FLAG = 3.0


def summarize(
    values: Sequence[float],
    label: str = "",
    bins: int | str = "fd",
) -> SummaryStats:
    """Moments and a histogram; Freedman-Diaconis bins unless overridden."""
    arr = np.asarray(values, dtype=float)
    n = int(arr.size)
    if n == 0:
        return SummaryStats(label=label, n=0)
    sd = float(arr.std(ddof=1)) if n > 1 else 0.0
    counts, edges = np.histogram(arr, bins=bins)
    return SummaryStats(
        label=label,
        n=n,
        mean=float(arr.mean()),
        sd=sd,
        se=sd / math.sqrt(n),
        min=float(arr.min()),
        max=float(arr.max()),
        bin_edges=[float(e) for e in edges],
        counts=[int(c) for c in counts],
    )


def binomial_se(p: float, n: int) -> float:
    if n <= 0:
        return float("nan")
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def proportion(successes: int, n: int, label: str = "") -> SummaryStats:
    p = successes / n if n else float("nan")
    return SummaryStats(label=label, n=n, proportion=p, proportion_se=binomial_se(p, n))


def z_score(analytic: float, mc: float, se: float) -> float:
    diff = mc - analytic
    if se > 0.0:
        return diff / se
    return 0.0 if abs(diff) <= 1e-12 else math.copysign(math.inf, diff)


def compare(x: float, analytic: float, mc: float, se: float) -> ComparisonRow:
    z = z_score(analytic, mc, se)
    return ComparisonRow(x=x, analytic=analytic, mc=mc, se=se, z=z, flagged=abs(z) > Z_FLAG)


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float]:
    res = stats.ks_2samp(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return float(res.statistic), float(res.pvalue)


def relative_gap(a: float, b: float) -> Optional[float]:
    if b == 0.0:
        return None
    return abs(a - b) / abs(b)
