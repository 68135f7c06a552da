import json
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from erwlab.exceptions import InvalidEnvironmentError, ValidationError

SCHEMA_VERSION = 1

# Ellipticity margin: every stored cookie lies in [ELLIPTICITY_EPS, 1 - ELLIPTICITY_EPS].
ELLIPTICITY_EPS = 1e-12

DEFAULT_GUARD = 50
DEFAULT_BOOTSTRAP_RESAMPLES = 2000


class EnvironmentForm(str, Enum):
    FINITE = "finite"
    PERIODIC = "periodic"


class Classification(str, Enum):
    RECURRENT_OR_LEFT = "RecurrentOrLeft"
    TRANSIENT_ZERO_SPEED = "TransientZeroSpeed"
    TRANSIENT_POSITIVE_SPEED = "TransientPositiveSpeed"
    TRANSIENT_RIGHT_UNKNOWN_SPEED = "TransientRightUnknownSpeed"


class Construction(str, Enum):
    IDENTITY = "identity"
    POINTWISE = "pointwise"
    SWAP = "swap"
    COMPOSE = "compose"


class SpeedMethod(str, Enum):
    REGENERATION = "regeneration-ratio"
    NAIVE = "naive"
    PAIRED = "paired-difference"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


def check_probabilities(probs: List[float]) -> List[float]:
    """Reject empty or non-elliptic cookie sequences."""
    if not probs:
        raise InvalidEnvironmentError(message="Cookie sequence cannot be empty")
    for index, value in enumerate(probs, start=1):
        if not (ELLIPTICITY_EPS <= value <= 1.0 - ELLIPTICITY_EPS):
            raise InvalidEnvironmentError(
                message="Cookie probabilities must lie strictly inside (0, 1)",
                details={"index": index, "value": value},
            )
    return [float(p) for p in probs]


class EnvironmentSpec(BaseModel):
    form: EnvironmentForm = Field(
        default=EnvironmentForm.FINITE,
        description="finite: cookies p_1..p_M then 1/2 forever; periodic: p_1..p_M repeated",
    )
    probs: List[float] = Field(
        ..., description="Right-step probabilities on the 1st, 2nd, ... departure from a site"
    )

    @field_validator("probs")
    @classmethod
    def validate_probs(cls, value: List[float]) -> List[float]:
        return check_probabilities(value)


class KernelSpec(BaseModel):
    construction: Optional[Construction] = Field(
        default=None, description="identity, pointwise, swap or compose"
    )
    q: Optional[EnvironmentSpec] = Field(
        default=None, description="Target environment of a pointwise increase"
    )
    swap: Optional[Tuple[int, int]] = Field(
        default=None, description="1-based cookie indices (i, j) of a favorable swap"
    )
    compose: Optional[List["KernelSpec"]] = Field(
        default=None, description="Stages applied in order, each feeding the next"
    )

    @model_validator(mode="after")
    def infer_construction(self) -> "KernelSpec":
        if self.construction is None:
            if self.compose is not None:
                self.construction = Construction.COMPOSE
            else:
                raise ValueError("Kernel spec needs a construction")
        if self.construction == Construction.POINTWISE and self.q is None:
            raise ValueError("Pointwise kernel needs a target environment 'q'")
        if self.construction == Construction.SWAP and self.swap is None:
            raise ValueError("Swap kernel needs 'swap': [i, j]")
        if self.construction == Construction.COMPOSE and not self.compose:
            raise ValueError("Composed kernel needs at least one stage")
        return self


class KernelValidation(BaseModel):
    ok: bool = Field(..., description="Whether every structural precondition holds")
    violation: Optional[str] = Field(
        default=None, description="Description of the first failing precondition"
    )
    stage: Optional[int] = Field(
        default=None, description="0-based stage of a composed kernel that failed"
    )
    index: Optional[int] = Field(
        default=None, description="First failing cookie index (1-based)"
    )


class EnvDiagnostics(BaseModel):
    form: EnvironmentForm
    probs: List[float]
    delta: Optional[float] = Field(
        default=None, description="Sum of 2p_k - 1 (finite-excitation environments)"
    )
    delta_divergence: Optional[str] = Field(
        default=None, description="+inf, -inf or oscillating when the delta series diverges"
    )
    pbar: Optional[float] = Field(default=None, description="Mean cookie over one period")
    theta: Optional[float] = Field(default=None, description="Periodic transience statistic")
    classification: Classification
    boundary: bool = Field(
        default=False, description="The environment sits on a criterion threshold"
    )
    caveat: Optional[str] = Field(default=None, description="Why the label is tentative")

    @property
    def label(self) -> str:
        if self.boundary:
            return f"{self.classification.value}-boundary"
        return self.classification.value


class ConfidenceInterval(BaseModel):
    level: float
    low: float
    high: float

    def contains(self, value: float) -> bool:
        return self.low <= value <= self.high

    def excludes_zero(self) -> bool:
        return self.low > 0.0 or self.high < 0.0


class SpeedEstimate(BaseModel):
    value: float = Field(..., description="Point estimate of the speed")
    ci95: ConfidenceInterval
    ci99: ConfidenceInterval
    method: SpeedMethod
    block_count: int = Field(default=0, description="Interior regeneration blocks pooled")
    replica_count: int = Field(default=0, description="Replicas simulated")
    guard: Optional[int] = Field(default=None, description="Censoring guard buffer")
    caveats: List[str] = Field(default=[], description="Regime warnings")


class PairedSpeedEstimate(BaseModel):
    speed_p: SpeedEstimate
    speed_q: SpeedEstimate
    paired_diff: SpeedEstimate


class ProportionEstimate(BaseModel):
    value: float
    ci95: ConfidenceInterval
    ci99: ConfidenceInterval
    count: int
    trials: int


class RegenProbabilityEstimate(BaseModel):
    epsilon_p: ProportionEstimate = Field(
        ..., description="Fraction of replicas with 0 a (censored) regeneration level"
    )
    epsilon_q: Optional[ProportionEstimate] = None
    difference: Optional[ProportionEstimate] = Field(
        default=None, description="Paired estimate of epsilon_q - epsilon_p"
    )
    escape_p: ProportionEstimate = Field(
        ..., description="Fraction of replicas with X_n > 0 for 0 < n <= horizon"
    )
    escape_q: Optional[ProportionEstimate] = None
    indicator_violations: int = Field(
        default=0, description="Replicas with 0 regenerating for L but not for R"
    )
    replicas: int
    guard: int


class WitnessReport(BaseModel):
    m0: int
    frequency: float
    witness_count: int
    replicas: int
    conditional_violations: int
    violating_replicas: List[int] = Field(default=[])


class RegenerationReport(BaseModel):
    """Censored regeneration levels of one path and the blocks between them."""

    levels: List[int] = Field(..., description="Regeneration levels in increasing order")
    hit_times: List[int] = Field(..., description="First hitting time of each level")
    horizon: int
    guard: int = Field(..., description="Steps a level must be cleared by before the horizon")
    discarded_blocks: int = Field(
        ..., description="Edge segments dropped before the first and after the last level"
    )

    @property
    def zero_is_regen(self) -> bool:
        return bool(self.levels) and self.levels[0] == 0

    @property
    def displacements(self) -> np.ndarray:
        return np.diff(np.asarray(self.levels, dtype=np.int64))

    @property
    def durations(self) -> np.ndarray:
        return np.diff(np.asarray(self.hit_times, dtype=np.int64))

    @property
    def block_count(self) -> int:
        return max(0, len(self.levels) - 1)


class PropertyReport(BaseModel):
    counts: Dict[str, int] = Field(default={}, description="Violations per check")
    violations: List[str] = Field(default=[], description="First few violation messages")
    seed: Optional[int] = None
    replica: Optional[int] = None

    @property
    def ok(self) -> bool:
        return not any(self.counts.values())

    @property
    def total(self) -> int:
        return sum(self.counts.values())


class CheckSuiteReport(BaseModel):
    schema_version: int = SCHEMA_VERSION
    samples: int
    horizon: int
    guard: int
    counts: Dict[str, int]
    exact_atoms_checked: int = 0
    replay: List[Dict[str, int]] = Field(
        default=[], description="(seed, replica) of the first failing samples"
    )
    negative_control: bool = False
    witness: Optional[WitnessReport] = None

    @property
    def ok(self) -> bool:
        return not any(self.counts.values())


class ExperimentConfig(BaseModel):
    environment: Optional[EnvironmentSpec] = Field(
        default=None, description="The p-environment (sweeps may use the grid alone)"
    )
    kernel: Optional[KernelSpec] = Field(
        default=None, description="Coupling from the p-environment to a q-environment"
    )
    grid: List[List[float]] = Field(default=[], description="Sweep grid of cookie vectors")
    grid_form: EnvironmentForm = Field(
        default=EnvironmentForm.FINITE, description="Form shared by every grid point"
    )
    horizon: int = Field(default=1000, gt=0, description="Steps simulated per walk")
    replicas: int = Field(default=1000, gt=0, description="Independent replicas")
    guard: int = Field(default=DEFAULT_GUARD, gt=0, description="Regeneration guard buffer")
    seed: int = Field(default=0, ge=0, lt=2**64, description="Master seed (u64)")
    first_replica: int = Field(
        default=0, ge=0, lt=2**32, description="Index of the first replica a check run simulates"
    )
    bootstrap_resamples: int = Field(default=DEFAULT_BOOTSTRAP_RESAMPLES, gt=0)
    guard_sensitivity: List[int] = Field(default=[10, 50, 200])
    negative_control: bool = Field(
        default=False, description="Inject one flipped arrow into every checked sample"
    )
    oracle_horizon: int = Field(default=3, ge=0, description="Horizon for exact enumeration")
    oracle_query: Optional[str] = Field(
        default=None, description="'hit X', 'max X', 'min X', 'end X', 'joint' or 'dominance'"
    )
    sweep_speed: bool = Field(default=False, description="Estimate speeds in a sweep")
    workers: Optional[int] = Field(
        default=None, description="Worker processes; ERW_THREADS caps it"
    )
    out: Optional[str] = Field(default=None, description="Output path (stdout if unset)")
    format: Optional[OutputFormat] = Field(
        default=None, description="Report format; each command has its own default"
    )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        try:
            return cls(**data)
        except PydanticValidationError as e:
            raise ValidationError(e) from e

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        with open(Path(path), "r") as config_file:
            return cls.from_dict(json.load(config_file))

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Return a copy with every non-None override applied and re-validated."""
        data = self.model_dump()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return self.from_dict(data)


class OracleAnswer(BaseModel):
    query: str
    horizon: int
    value: float = Field(..., description="Probability as a float")
    exact: Optional[str] = Field(
        default=None, description="Exact rational value when enumerated in fractions"
    )


class DominanceRow(BaseModel):
    statistic: str = Field(..., description="max (P(max >= level)), min (P(min >= level)) or hit (P(T_level <= time))")
    level: int
    time: Optional[int] = None
    p: float
    q: float
    holds: bool


class DominanceReport(BaseModel):
    horizon: int
    rows: List[DominanceRow] = Field(default=[])

    @property
    def violations(self) -> List[DominanceRow]:
        return [row for row in self.rows if not row.holds]

    @property
    def ok(self) -> bool:
        return not self.violations


class CoupledOracleSummary(BaseModel):
    horizon: int
    support_size: int
    total_mass: float
    diagonal: bool = Field(..., description="Every atom has identical L and R paths")
    violating_atoms: int = Field(
        default=0, description="Positive atoms breaking hitting-time or max/min order"
    )
    marginal_error: float = Field(
        default=0.0, description="Largest per-path gap between marginals and single-walk laws"
    )


class PathAtom(BaseModel):
    path: List[int]
    probability: float
    exact: Optional[str] = None


class OracleDump(BaseModel):
    schema_version: int = SCHEMA_VERSION
    horizon: int
    total_mass: float
    atoms: List[PathAtom] = Field(default=[])


class GuardEstimate(BaseModel):
    guard: int
    estimate: Optional[SpeedEstimate] = None
    error: Optional[str] = None


class SpeedReport(BaseModel):
    schema_version: int = SCHEMA_VERSION
    environment: EnvDiagnostics
    horizon: int
    replicas: int
    seed: int
    naive: SpeedEstimate
    regeneration: Optional[SpeedEstimate] = None
    regeneration_error: Optional[str] = None
    guard_sensitivity: List[GuardEstimate] = Field(default=[])
    paired: Optional[PairedSpeedEstimate] = None
    paired_error: Optional[str] = None
    regen_probability: Optional[RegenProbabilityEstimate] = None

    @property
    def insufficient(self) -> bool:
        return self.regeneration_error is not None or self.paired_error is not None


class SweepRow(BaseModel):
    """One row of the sweep CSV (schema v1)."""

    schema_version: int = SCHEMA_VERSION
    probs: str = Field(..., description="Cookie vector joined with ';'")
    form: EnvironmentForm
    delta: Optional[float] = None
    pbar: Optional[float] = None
    theta: Optional[float] = None
    classification: Optional[str] = Field(
        default=None, description="Classification label, '-boundary' suffixed on thresholds"
    )
    speed: Optional[float] = None
    speed_ci95_low: Optional[float] = None
    speed_ci95_high: Optional[float] = None
    speed_ci99_low: Optional[float] = None
    speed_ci99_high: Optional[float] = None
    blocks: Optional[int] = None
    error: Optional[str] = None
