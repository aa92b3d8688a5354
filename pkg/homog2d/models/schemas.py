"""
Pydantic schemas for run configuration and experiment requests.
"""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from homog2d.models.coefficients import CoefficientSet

Command = Literal["cell", "effective", "solve", "green", "rates", "all"]
RateNorm = Literal["L2", "Linf", "L2_interior", "H1", "H1_corrected", "H1_two_scale"]
ALL_RATE_NORMS: tuple[RateNorm, ...] = ("L2", "Linf", "L2_interior", "H1", "H1_corrected", "H1_two_scale")

Point = tuple[float, float]


def _is_dyadic_reciprocal(value: float) -> bool:
    fraction = Fraction(value).limit_denominator(1 << 20)
    n = fraction.denominator
    return fraction.numerator == 1 and n & (n - 1) == 0 and abs(float(fraction) - value) < 1e-15


def parse_eps(value: float | str) -> float:
    """Accept 0.25 or '1/4'."""
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"cannot read ε from '{value}'") from exc
    return float(value)


class RateExperiment(BaseModel):
    """Convergence study over a descending dyadic ε list at P nodes per period."""

    model_config = ConfigDict(extra="forbid")

    eps: list[float] = Field(default_factory=lambda: [0.25, 0.125, 0.0625, 0.03125], min_length=3)
    nodes_per_period: int = Field(16, ge=2)
    rhs: Literal["one", "sine"] = "one"
    boundary: Literal["zero", "affine"] = "zero"
    norms: list[RateNorm] = Field(default_factory=lambda: list(ALL_RATE_NORMS))
    tol: float = Field(1e-10, gt=0, lt=1e-2)
    exact_floor: float = Field(1e-8, ge=0, description="Errors at or below this count as exact")

    @field_validator("eps", mode="before")
    @classmethod
    def _read_eps(cls, value):
        return [parse_eps(v) for v in value] if isinstance(value, (list, tuple)) else value

    @field_validator("eps")
    @classmethod
    def _check_eps(cls, value: list[float]) -> list[float]:
        if any(b >= a for a, b in zip(value, value[1:])):
            raise ValueError("eps must be strictly descending")
        bad = [e for e in value if not _is_dyadic_reciprocal(e)]
        if bad:
            raise ValueError(f"eps values {bad} are not 1/2^k, so the mesh is not commensurate")
        return value


class GreenPair(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x: Point
    y: Point


class RunConfig(BaseModel):
    """Everything a homog2d run needs; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    command: Command = "all"
    preset: str | None = None
    coefficients: CoefficientSet | None = None
    torus_N: int = Field(256, ge=4)
    nodes_per_period: int = Field(16, ge=2)
    eps: list[float] = Field(default_factory=lambda: [0.25, 0.125, 0.0625, 0.03125], min_length=1)
    lambda_policy: float | Literal["auto"] | None = Field(None, alias="lambda")
    tol: float = Field(1e-10, gt=0, lt=1e-2)
    seed: int = 42
    output_dir: Path = Path("homog2d-out")
    cache_dir: Path | None = None
    threads: int | None = Field(None, ge=1)
    rhs: Literal["one", "sine"] = "one"
    boundary: Literal["zero", "affine"] = "zero"
    rate_norms: list[RateNorm] = Field(default_factory=lambda: list(ALL_RATE_NORMS))
    green_pairs: list[GreenPair] = Field(
        default_factory=lambda: [GreenPair(x=(0.25, 0.5), y=(0.75, 0.5))]
    )
    green_nodes_per_period: int = Field(8, ge=2)
    green_poles: list[Point] = Field(default_factory=lambda: [(0.5, 0.5), (0.3, 0.6), (0.65, 0.35)])
    sigmas: tuple[float, float, float, float, float] = (0.5, 0.5, 0.5, 0.5, 0.5)
    mms_levels: list[int] = Field(default_factory=lambda: [32, 64, 128, 256], min_length=2)
    expansion_resolutions: tuple[int, int] = (8, 16)

    @field_validator("eps", mode="before")
    @classmethod
    def _read_eps(cls, value):
        return [parse_eps(v) for v in value] if isinstance(value, (list, tuple)) else value

    @field_validator("eps")
    @classmethod
    def _check_eps(cls, value: list[float]) -> list[float]:
        bad = [e for e in value if not _is_dyadic_reciprocal(e)]
        if bad:
            raise ValueError(f"eps values {bad} are not 1/2^k, so the mesh is not commensurate")
        return sorted(value, reverse=True)

    @field_validator("sigmas")
    @classmethod
    def _check_sigmas(cls, value):
        if any(not 0.0 < s < 1.0 for s in value):
            raise ValueError("every σ must lie in (0, 1)")
        return value

    @model_validator(mode="after")
    def _one_coefficient_source(self) -> "RunConfig":
        if (self.preset is None) == (self.coefficients is None):
            raise ValueError("give exactly one of 'preset' or an inline [coefficients] table")
        if self.command in ("rates", "all") and len(self.eps) < 3:
            raise ValueError(f"a rate study needs at least three eps values, got {len(self.eps)}")
        return self

    def rate_experiment(self) -> RateExperiment:
        return RateExperiment(
            eps=self.eps,
            nodes_per_period=self.nodes_per_period,
            rhs=self.rhs,
            boundary=self.boundary,
            norms=self.rate_norms,
            tol=self.tol,
        )


CheckStatus = Literal["PASS", "FLAG", "FAIL"]


class CheckRecord(BaseModel):
    """One verified property; FAIL marks an invariant violation, FLAG a drifting ratio."""

    stage: str
    check_id: str
    value: float
    threshold: float
    status: CheckStatus

    @classmethod
    def at_most(cls, stage: str, check_id: str, value: float, threshold: float, *, hard: bool = True) -> "CheckRecord":
        ok = value <= threshold
        return cls(stage=stage, check_id=check_id, value=value, threshold=threshold, status=_status(ok, hard))

    @classmethod
    def at_least(cls, stage: str, check_id: str, value: float, threshold: float, *, hard: bool = False) -> "CheckRecord":
        ok = value >= threshold
        return cls(stage=stage, check_id=check_id, value=value, threshold=threshold, status=_status(ok, hard))

    def line(self) -> str:
        return f"[{self.status}] {self.stage}/{self.check_id}: value={self.value:.6g} threshold={self.threshold:.6g}"


def _status(ok: bool, hard: bool) -> CheckStatus:
    if ok:
        return "PASS"
    return "FAIL" if hard else "FLAG"
