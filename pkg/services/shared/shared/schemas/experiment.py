"""Pydantic schemas for experiment configuration files.

An experiment config is a single JSON document with one nested section per
engine module. Inline functions are strings in the closed-form expression
grammar compiled by ``app.catalog.expressions``.
"""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from shared.core.config import settings

ExperimentKind = Literal[
    "solve-eq",
    "funnel",
    "nesting-ladder",
    "periodic-volterra",
    "periodic-hammerstein",
    "check-conditions",
    "convergence-table",
]

EXPERIMENT_KINDS: tuple[str, ...] = (
    "solve-eq",
    "funnel",
    "nesting-ladder",
    "periodic-volterra",
    "periodic-hammerstein",
    "check-conditions",
    "convergence-table",
)


class SolverConfig(BaseModel):
    """Fixed-point iteration controls shared by every solver."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    max_iter: int = Field(
        settings.default_max_iter, gt=0, description="Iteration budget per solve window"
    )
    tol: float = Field(
        settings.default_tol, gt=0, description="Relative sup-norm tolerance (change and residual)"
    )
    damping: float = Field(1.0, gt=0, le=1, description="Relaxation factor of the iteration")
    p: float = Field(settings.default_p, ge=1, description="Integrability exponent of L^p")
    max_splits: int = Field(8, ge=0, description="Maximum interval-splitting depth on stall")
    stall_window: int = Field(
        settings.stall_window, ge=2, description="Iterations without progress before splitting"
    )


class MeshSpec(BaseModel):
    """Uniform time mesh on [0, T] in R^d."""

    model_config = ConfigDict(extra="forbid")

    T: float = Field(1.0, gt=0, description="Horizon")
    N: int = Field(401, ge=2, description="Node count")
    d: int = Field(1, ge=1, le=3, description="State dimension")


class KernelSpec(BaseModel):
    """Catalog kernel reference or inline matrix of expressions in (t, s)."""

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "examples": [
                {"name": "convolution-exp(1)"},
                {"domain": "triangle", "entries": [["exp(-(t-s))"]]},
            ]
        },
    )

    name: str | None = Field(None, description="Catalog name, e.g. 'identity'")
    domain: Literal["triangle", "square"] = Field("triangle", description="Kernel domain")
    entries: list[list[str]] | None = Field(None, description="d x d expressions in t, s")
    dt_entries: list[list[str]] | None = Field(
        None, description="Optional exact time derivative, d x d expressions"
    )

    @model_validator(mode="after")
    def _one_source(self) -> "KernelSpec":
        if (self.name is None) == (self.entries is None):
            raise ValueError("kernel needs exactly one of 'name' or 'entries'")
        return self


class FieldSpec(BaseModel):
    """Right-hand side: catalog name, single-valued function, ball or box field."""

    model_config = ConfigDict(extra="forbid")

    name: str | None = Field(None, description="Catalog field name")
    type: Literal["function", "ball", "box"] | None = Field(None, description="Inline kind")
    components: list[str] | None = Field(None, description="f(t, x) components")
    center: list[str] | None = Field(None, description="Ball center components")
    radius: str | None = Field(None, description="Ball radius expression")
    lower: list[str] | None = Field(None, description="Box lower corner components")
    upper: list[str] | None = Field(None, description="Box upper corner components")
    lipschitz: float | None = Field(None, ge=0, description="Lipschitz modulus in x, if known")

    @model_validator(mode="after")
    def _one_source(self) -> "FieldSpec":
        if (self.name is None) == (self.type is None):
            raise ValueError("field needs exactly one of 'name' or 'type'")
        required = {
            "function": ("components",),
            "ball": ("center", "radius"),
            "box": ("lower", "upper"),
        }
        for key in required.get(self.type or "", ()):
            if getattr(self, key) is None:
                raise ValueError(f"{self.type} field requires '{key}'")
        return self


class GrowthSpec(BaseModel):
    """Growth data c, eta, mu as expressions in t."""

    model_config = ConfigDict(extra="forbid")

    c: str = Field("0", description="Growth bound c(t)")
    eta: str = Field("0", description="Contraction density eta(t)")
    mu: str = Field("0", description="Uniform bound mu(t)")


class ProblemSpec(BaseModel):
    """Catalog problem name, optionally overridden piece by piece."""

    model_config = ConfigDict(extra="forbid")

    name: str | None = Field(None, description="Catalog problem name, e.g. 'exp-growth'")
    kernel: KernelSpec | None = None
    rhs: FieldSpec | None = None
    h: list[str] | None = Field(None, description="Inhomogeneity components in t")
    growth: GrowthSpec | None = None
    exact: list[str] | None = Field(None, description="Closed-form solution components in t")


class FunnelSpec(BaseModel):
    """Funnel sampling and diagnostics."""

    model_config = ConfigDict(extra="forbid")

    n_samples: int = Field(50, ge=1, description="Number of sampled selections")
    strategy: Literal["extremal", "project-relax"] = Field("extremal")
    eps_ladder: list[float] | None = Field(None, description="Covering-number radii")


class LadderSpec(BaseModel):
    """Approximation ladder r_n = 3^-n for n = 1..levels."""

    model_config = ConfigDict(extra="forbid")

    levels: int = Field(4, ge=2, le=10)


class PeriodicSpec(BaseModel):
    """Stable family and finder options for periodic experiments."""

    model_config = ConfigDict(extra="forbid")

    generator: list[list[float]] | None = Field(None, description="Matrix A of U(t) = exp(tA)")
    omega: float = Field(1.0, gt=0, description="Claimed decay rate")
    strict: bool = Field(True, description="Fail when the contraction condition fails")
    directions: list[list[float]] | None = Field(
        None, description="Extremal directions, one branch each (set-valued fields)"
    )
    probe_pairs: int = Field(20, ge=1, description="Random pairs for the contraction probe")


class ConvergenceSpec(BaseModel):
    """Doubling ladder of node counts."""

    model_config = ConfigDict(extra="forbid")

    nodes: list[int] = Field(default_factory=lambda: [51, 101, 201, 401])

    @model_validator(mode="after")
    def _ladder(self) -> "ConvergenceSpec":
        if len(self.nodes) < 2 or any(n < 2 for n in self.nodes):
            raise ValueError("convergence ladder needs at least two node counts >= 2")
        return self


class ExperimentConfig(BaseModel):
    """Root of an experiment config file."""

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "kind": "solve-eq",
                "problem": {"name": "exp-growth"},
                "mesh": {"T": 1.0, "N": 401, "d": 1},
                "solver": {"tol": 1e-10, "max_iter": 500, "damping": 1.0, "p": 2.0},
                "seed": 7,
            }
        },
    )

    kind: ExperimentKind | None = Field(None, description="Experiment kind")
    problem: ProblemSpec
    mesh: MeshSpec = Field(default_factory=MeshSpec)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    seed: int = Field(0, ge=0, lt=2**64, description="Root seed of every random stream")
    threads: int = Field(settings.threads, ge=1, description="Worker threads")
    output_dir: str | None = Field(None, description="Artefact directory")
    funnel: FunnelSpec = Field(default_factory=FunnelSpec)
    ladder: LadderSpec = Field(default_factory=LadderSpec)
    periodic: PeriodicSpec = Field(default_factory=PeriodicSpec)
    convergence: ConvergenceSpec = Field(default_factory=ConvergenceSpec)
