from __future__ import annotations

from enum import Enum
from pathlib import Path
from typing import Any, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from moran_coexist.schemas.models import (
    ROUNDOFF,
    Composition,
    DMState,
    Params,
    dm_state_problem,
)


class SimMode(str, Enum):
    TO_FIRST_EXTINCTION = "to_first_extinction"
    TO_FIXATION = "to_fixation"


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    params: Params
    init: DMState
    mode: SimMode = SimMode.TO_FIRST_EXTINCTION
    gamma_tolerance: int = Field(1, ge=0)
    record_path: bool = False
    path_stride: int = Field(1, ge=1)
    max_events: int = Field(10**10, ge=1)
    # False samples holds explicitly with Exp(1) steps
    skip_holds: bool = True

    @field_validator("init", mode="before")
    @classmethod
    def _from_composition(cls, value: Any) -> Any:
        if isinstance(value, dict) and "C" in value:
            value = Composition.model_validate(value)
        if isinstance(value, Composition):
            return DMState(D=value.C - value.H, M=value.M)
        return value

    @model_validator(mode="after")
    def _valid_init(self) -> "SimConfig":
        problem = dm_state_problem(self.init.D, self.init.M, self.params.N)
        if problem:
            raise ValueError(f"invalid initial state {self.init}: {problem}")
        return self


class AbsorptionReport(BaseModel):
    x_start: float = Field(..., ge=0.0)
    p_M: float = Field(..., ge=0.0, le=1.0)
    expected_tau_gamma_units: float = Field(..., ge=0.0)
    expected_tau_chain_units: float = Field(..., ge=0.0)
    q: float
    N: int


ExperimentKind = Literal[
    "tau_hist", "gamma_hit", "pm_curve", "etau_curve", "reduced_vs_ctmc", "fixation"
]


class ExperimentConfig(BaseModel):
    """JSON config for `moran experiment --config`; field names mirror the file."""

    model_config = ConfigDict(extra="forbid")

    kind: ExperimentKind
    params: List[Params]
    inits: List[Tuple[float, float]] = Field(default_factory=list)
    runs: int = Field(1000, ge=1)
    master_seed: int = Field(7, ge=0)
    dt: float = Field(1e-4, gt=0.0)
    n_grid: int = Field(1000, ge=100)
    eps: float = Field(1e-6, gt=0.0, le=0.01)
    gamma_tolerance: int = Field(1, ge=0)
    max_events: int = Field(10**10, ge=1)
    workers: int = Field(4, ge=1)
    bins: int | Literal["fd", "auto", "sturges"] = "fd"
    out_dir: Path = Path("output")

    @field_validator("params", mode="before")
    @classmethod
    def _single_params(cls, value: Any) -> Any:
        if isinstance(value, (dict, Params)):
            return [value]
        return value

    @field_validator("params")
    @classmethod
    def _nonempty(cls, value: List[Params]) -> List[Params]:
        if not value:
            raise ValueError("at least one parameter set is required")
        return value

    @field_validator("inits")
    @classmethod
    def _inits_in_triangle(cls, value: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        for d, m in value:
            if m < 0.0 or abs(d) > 1.0 or m + abs(d) > 1.0 + ROUNDOFF:
                raise ValueError(f"init ({d}, {m}) lies outside the triangle S")
        return value


class SummaryStats(BaseModel):
    label: str = ""
    n: int = Field(..., ge=0)
    mean: Optional[float] = None
    sd: Optional[float] = None
    se: Optional[float] = None
    min: Optional[float] = None
    max: Optional[float] = None
    bin_edges: List[float] = Field(default_factory=list)
    counts: List[int] = Field(default_factory=list)
    proportion: Optional[float] = None
    proportion_se: Optional[float] = None

    @model_validator(mode="after")
    def _counts_match(self) -> "SummaryStats":
        if self.counts and sum(self.counts) != self.n:
            raise ValueError(f"histogram counts sum to {sum(self.counts)}, expected {self.n}")
        return self


class ComparisonRow(BaseModel):
    x: float
    analytic: float
    mc: float
    se: float = Field(..., ge=0.0)
    z: float
    flagged: bool


class ExperimentResult(BaseModel):
    kind: ExperimentKind
    stats: List[SummaryStats] = Field(default_factory=list)
    comparisons: List[ComparisonRow] = Field(default_factory=list)
    ks_statistic: Optional[float] = None
    ks_pvalue: Optional[float] = None
    artifacts: List[Path] = Field(default_factory=list)
