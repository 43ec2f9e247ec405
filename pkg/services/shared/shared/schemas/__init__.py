"""Shared pydantic schemas."""

from shared.schemas.experiment import (
    EXPERIMENT_KINDS,
    ConvergenceSpec,
    ExperimentConfig,
    ExperimentKind,
    FieldSpec,
    FunnelSpec,
    GrowthSpec,
    KernelSpec,
    LadderSpec,
    MeshSpec,
    PeriodicSpec,
    ProblemSpec,
    SolverConfig,
)
from shared.schemas.reports import ConditionCheck, RunManifest

__all__ = [
    "EXPERIMENT_KINDS",
    "ConditionCheck",
    "ConvergenceSpec",
    "ExperimentConfig",
    "ExperimentKind",
    "FieldSpec",
    "FunnelSpec",
    "GrowthSpec",
    "KernelSpec",
    "LadderSpec",
    "MeshSpec",
    "PeriodicSpec",
    "ProblemSpec",
    "RunManifest",
    "SolverConfig",
]
