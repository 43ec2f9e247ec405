"""Named problems: kernel, right-hand side, inhomogeneity and closed form."""

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from shared.exceptions import ConfigurationError
from shared.schemas import FieldSpec, ProblemSpec

from app.catalog.expressions import state_functions
from app.catalog.fields import field_from_spec, growth_from_spec
from app.catalog.kernels import build_kernel, kernel_from_spec
from app.services.inclusion_funnel import SetField
from app.services.kernels import Kernel
from app.services.mesh_paths import Path, TimeMesh


@dataclass(frozen=True)
class ProblemEntry:
    kernel: str
    field: str
    h: str
    exact: str | None = None
    description: str = ""


PROBLEMS: dict[str, ProblemEntry] = {
    "exp-growth": ProblemEntry("identity", "linear", "1", "exp(t)", "x = 1 + int x"),
    "exp-decay": ProblemEntry("identity", "negative-linear", "1", "exp(-t)", "x = 1 - int x"),
    "cosh": ProblemEntry("ramp", "linear", "1", "cosh(t)", "x = 1 + int (t - s) x"),
    "zero-forcing": ProblemEntry("identity", "zero", "1 + t", "1 + t", "f = 0, x = h"),
    "relaxation": ProblemEntry(
        "convolution-exp(1)", "unit", "0", "1 - exp(-t)", "x = int exp(-(t - s)) ds"
    ),
    "unit-interval": ProblemEntry("identity", "unit-interval", "0", None, "x' in [-1, 1]"),
    "affine-interval": ProblemEntry(
        "identity", "affine-interval", "0", None, "x' in [0.1x - 1, 0.1x + 1]"
    ),
    "periodic-relaxation": ProblemEntry(
        "convolution-exp(1)", "unit", "0", None, "periodic search with f = 1"
    ),
    "periodic-band": ProblemEntry(
        "convolution-exp(1)", "band", "0", None, "periodic search with F = [0.9, 1.1]"
    ),
    "hammerstein-affine": ProblemEntry(
        "separable-cos",
        "half",
        "cos(2*pi*t/T)",
        "cos(2*pi*t/T) + 0.5*T*(1 + cos(2*pi*t/T)/2)",
        "constant forcing on a separable periodic kernel",
    ),
    "hammerstein-sine": ProblemEntry(
        "separable-cos", "sine", "cos(2*pi*t/T)", None, "f = 0.2 sin(x)"
    ),
}


def problem_names() -> list[str]:
    return sorted(PROBLEMS)


@dataclass(frozen=True, eq=False)
class ResolvedProblem:
    """Everything an experiment needs, sampled on one mesh."""

    name: str
    kernel: Kernel
    field: SetField
    h: Path
    exact: Callable[[np.ndarray], np.ndarray] | None

    def exact_path(self, mesh: TimeMesh) -> Path | None:
        if self.exact is None:
            return None
        return Path(mesh, self.exact(mesh.nodes))


def _time_path(components: list[str], mesh: TimeMesh) -> Callable[[np.ndarray], np.ndarray]:
    """Components in t, broadcast to d columns when a single one is given."""
    d = mesh.d
    if len(components) not in (1, d):
        raise ConfigurationError(f"Expected 1 or {d} components, got {len(components)}")
    compiled = state_functions(components, mesh.T, d)

    def fn(times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        values = compiled(times, np.zeros(times.shape + (d,)))
        return np.array(np.broadcast_to(values, times.shape + (d,)))

    return fn


def resolve_problem(spec: ProblemSpec, mesh: TimeMesh) -> ResolvedProblem:
    """
    Build the problem of a config section on ``mesh``.

    A catalog name supplies defaults; the kernel, rhs, h, growth and exact
    entries of the section override them piece by piece.

    Raises:
        ConfigurationError: For unknown names, missing pieces or bad expressions
    """
    d = mesh.d
    entry = None
    if spec.name is not None:
        entry = PROBLEMS.get(spec.name)
        if entry is None:
            known = ", ".join(problem_names())
            raise ConfigurationError(f"Unknown problem '{spec.name}'. Known problems: {known}")

    if spec.kernel is not None:
        kernel = kernel_from_spec(spec.kernel, mesh.T, d)
    elif entry is not None:
        kernel = build_kernel(entry.kernel, mesh.T, d)
    else:
        raise ConfigurationError("Problem needs a kernel section or a catalog name")

    growth = growth_from_spec(spec.growth, mesh) if spec.growth is not None else None
    if spec.rhs is not None:
        field = field_from_spec(spec.rhs, mesh, d, growth)
    elif entry is not None:
        field = field_from_spec(FieldSpec(name=entry.field), mesh, d, growth)
    else:
        raise ConfigurationError("Problem needs an rhs section or a catalog name")

    h_text = spec.h if spec.h is not None else ([entry.h] if entry is not None else ["0"])
    h = Path(mesh, _time_path(h_text, mesh)(mesh.nodes))

    exact_text = spec.exact
    if exact_text is None and entry is not None and entry.exact is not None:
        exact_text = [entry.exact]
    exact = _time_path(exact_text, mesh) if exact_text is not None else None
    return ResolvedProblem(name=spec.name or "inline", kernel=kernel, field=field, h=h, exact=exact)
