from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


# Slack allowed on the triangle S and on rate/moment identities.
ROUNDOFF = 1e-12


class Params(BaseModel):
    model_config = ConfigDict(frozen=True)

    N: int = Field(..., ge=2, description="population size")
    q: float = Field(..., gt=0.0, lt=1.0, description="probability of environment state c")


class Composition(BaseModel):
    model_config = ConfigDict(frozen=True)

    C: int = Field(..., ge=0)
    H: int = Field(..., ge=0)
    M: int = Field(..., ge=0)

    @property
    def N(self) -> int:
        return self.C + self.H + self.M

    def death_rates(self) -> Tuple[float, float, float]:
        n = self.N
        return self.C / n, self.H / n, self.M / n


class DMState(BaseModel):
    model_config = ConfigDict(frozen=True)

    D: int
    M: int = Field(..., ge=0)


def dm_state_problem(D: int, M: int, N: int) -> Optional[str]:
    """Return why (D, M) is not a valid state for population N, or None."""
    if M < 0 or M > N:
        return f"M={M} outside [0, {N}]"
    if abs(D) > N:
        return f"|D|={abs(D)} exceeds N={N}"
    if M + abs(D) > N:
        return f"M + |D| = {M + abs(D)} exceeds N={N}"
    if (D + M - N) % 2 != 0:
        return f"parity: D + M = {D + M} not congruent to N={N} mod 2"
    return None


class JumpKind(Enum):
    """Change in (D, M) for one birth-death event, named birth-first."""

    C_REPLACES_M = (1, -1)
    C_REPLACES_H = (2, 0)
    H_REPLACES_M = (-1, -1)
    H_REPLACES_C = (-2, 0)
    M_REPLACES_H = (1, 1)
    M_REPLACES_C = (-1, 1)
    HOLD = (0, 0)

    @property
    def dD(self) -> int:
        return self.value[0]

    @property
    def dM(self) -> int:
        return self.value[1]


# Order shared with the numba kernels.
JUMPS: Tuple[JumpKind, ...] = tuple(k for k in JumpKind if k is not JumpKind.HOLD)


class RateVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    jumps: Tuple[float, float, float, float, float, float]
    hold: float
    absorbing: bool = False

    @model_validator(mode="after")
    def _normalized(self) -> "RateVector":
        if min(self.jumps) < -ROUNDOFF or self.hold < -ROUNDOFF:
            raise ValueError(f"negative rate in {self.jumps}, hold={self.hold}")
        total = sum(self.jumps) + self.hold
        if abs(total - 1.0) > ROUNDOFF:
            raise ValueError(f"rates sum to {total!r}, expected 1")
        return self

    def rate(self, kind: JumpKind) -> float:
        if kind is JumpKind.HOLD:
            return self.hold
        return self.jumps[JUMPS.index(kind)]

    @property
    def total_jump_rate(self) -> float:
        return float(sum(self.jumps))

    def as_dict(self) -> dict[JumpKind, float]:
        out = dict(zip(JUMPS, self.jumps))
        out[JumpKind.HOLD] = self.hold
        return out


class ScaledPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    d: float = Field(..., ge=-1.0, le=1.0)
    m: float = Field(..., ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _in_triangle(self) -> "ScaledPoint":
        if self.m + self.d > 1.0 + ROUNDOFF or self.m - self.d > 1.0 + ROUNDOFF:
            raise ValueError(f"({self.d}, {self.m}) lies outside the triangle S")
        return self

    def is_corner(self, tol: float = 0.0) -> bool:
        return any(
            np.hypot(self.d - cd, self.m - cm) <= tol for cd, cm in CORNERS
        )


CORNERS: Tuple[Tuple[float, float], ...] = ((1.0, 0.0), (-1.0, 0.0), (0.0, 1.0))


class MomentSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    b_d: float
    b_m: float
    a_dd: float
    a_dm: float
    a_mm: float

    @model_validator(mode="after")
    def _psd(self) -> "MomentSet":
        if self.a_dd < -ROUNDOFF or self.a_mm < -ROUNDOFF:
            raise ValueError(f"negative diagonal a_dd={self.a_dd}, a_mm={self.a_mm}")
        if self.a_dd * self.a_mm - self.a_dm**2 < -1e-9:
            raise ValueError("covariance matrix is not positive semidefinite")
        return self

    @property
    def a(self) -> np.ndarray:
        return np.array([[self.a_dd, self.a_dm], [self.a_dm, self.a_mm]])


class Species(str, Enum):
    C = "C"
    H = "H"
    M = "M"
    # joint extinctions, only possible when a run starts on a corner
    CH = "C+H"
    CM = "C+M"
    HM = "H+M"


class StoppingRecord(BaseModel):
    tau_gamma: Optional[float] = Field(default=None, ge=0.0)
    tau_e: float = Field(..., ge=0.0)
    first_extinct: Species
    tau_f: Optional[float] = Field(default=None, ge=0.0)
    fixed: Optional[Species] = None
    event_count: int = Field(..., ge=0)
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _ordered(self) -> "StoppingRecord":
        if self.tau_f is not None and self.tau_f < self.tau_e:
            raise ValueError(f"tau_f={self.tau_f} precedes tau_e={self.tau_e}")
        if (self.tau_f is None) != (self.fixed is None):
            raise ValueError("tau_f and fixed must be both present or both absent")
        return self


@dataclass(frozen=True)
class PathSample:
    t: np.ndarray
    D: np.ndarray
    M: np.ndarray

    def __post_init__(self) -> None:
        if not (len(self.t) == len(self.D) == len(self.M)):
            raise ValueError("path columns differ in length")
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0.0):
            raise ValueError("path times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.t)


TerminalReason = Literal["gamma_reached", "corner_neighborhood", "t_max"]


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    d: np.ndarray
    m: np.ndarray
    terminal_reason: TerminalReason
    q: float = field(default=0.5)

    @property
    def terminal(self) -> ScaledPoint:
        return ScaledPoint(d=float(self.d[-1]), m=float(self.m[-1]))

    def __len__(self) -> int:
        return len(self.t)


class FlowOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    dt: float = Field(1e-3, gt=0.0)
    gamma_tol: float = Field(1e-8, gt=0.0)
    t_max: float = Field(1e3, gt=0.0)
    corner_tol: float = Field(1e-6, gt=0.0)
    record: bool = True


class CPartials(BaseModel):
    model_config = ConfigDict(frozen=True)

    dC_dd: float
    dC_dm: float
    d2C_dd2: float
    d2C_dm2: float
    d2C_dddm: float


class MstarPartials(BaseModel):
    model_config = ConfigDict(frozen=True)

    dm_dd: float
    dm_dm: float
    d2m_dd2: float
    d2m_dm2: float
    d2m_dddm: float

    def first(self) -> Tuple[float, float]:
        return self.dm_dd, self.dm_dm

    def second(self) -> Tuple[float, float, float]:
        return self.d2m_dd2, self.d2m_dm2, self.d2m_dddm


class GammaCoeffs(BaseModel):
    """Drift `beta` and infinitesimal variance `alpha` of a 1D reduced diffusion."""

    model_config = ConfigDict(frozen=True)

    beta: float
    alpha: float = Field(..., ge=0.0)
