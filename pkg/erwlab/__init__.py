from erwlab.arrows import ArrowSystem, WalkPath, prefix_dominates, walk_from_arrows
from erwlab.coupling import CouplingKernel, compute_m0, validate_kernel
from erwlab.env import CookieEnvironment, classify
from erwlab.exceptions import (
    CouplingPreconditionError,
    DominationViolationError,
    ErwLabError,
    HorizonGuardError,
    InsufficientRegenerationsError,
    InvalidEnvironmentError,
    KernelValidationError,
    MaterializationCapError,
    UnmaterializedCellError,
    ValidationError,
)
from erwlab.lab import Laboratory
from erwlab.models import (
    Classification,
    EnvDiagnostics,
    EnvironmentSpec,
    ExperimentConfig,
    KernelSpec,
    SpeedEstimate,
)
from erwlab.streams import SeedKey
from erwlab.walk import CoupledSample, simulate_coupled, simulate_erw

__all__ = [
    "ArrowSystem",
    "Classification",
    "CookieEnvironment",
    "CoupledSample",
    "CouplingKernel",
    "CouplingPreconditionError",
    "DominationViolationError",
    "EnvDiagnostics",
    "EnvironmentSpec",
    "ErwLabError",
    "ExperimentConfig",
    "HorizonGuardError",
    "InsufficientRegenerationsError",
    "InvalidEnvironmentError",
    "KernelSpec",
    "KernelValidationError",
    "Laboratory",
    "MaterializationCapError",
    "SeedKey",
    "SpeedEstimate",
    "UnmaterializedCellError",
    "ValidationError",
    "WalkPath",
    "classify",
    "compute_m0",
    "prefix_dominates",
    "simulate_coupled",
    "simulate_erw",
    "validate_kernel",
    "walk_from_arrows",
]
