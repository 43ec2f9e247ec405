"""Named right-hand sides and inline field definitions."""

from dataclasses import dataclass

import numpy as np
from shared.exceptions import ConfigurationError
from shared.schemas import FieldSpec, GrowthSpec

from app.catalog.expressions import state_function, state_functions, time_function
from app.services.convex_sets import Ball, Box, ConvexSet
from app.services.equation_solver import GrowthData, VectorField
from app.services.inclusion_funnel import SetEval, SetField
from app.services.mesh_paths import Path, TimeMesh


def _root(d: int) -> float:
    return float(np.sqrt(d))


@dataclass(frozen=True)
class FieldEntry:
    """Catalog field; growth constants are given for d = 1 and scaled by sqrt(d)."""

    description: str
    point_map: VectorField | None = None
    set_map: SetEval | None = None
    c: float = 0.0
    eta: float = 0.0
    mu: float = 0.0
    mu_offset: float = 0.0
    lipschitz: float | None = None


def _interval(lower: float, upper: float, slope: float = 0.0) -> SetEval:
    return lambda t, x: Box(slope * x + lower, slope * x + upper)


FIELDS: dict[str, FieldEntry] = {
    "linear": FieldEntry(
        "f(t, x) = x", point_map=lambda t, x: np.array(x), c=1.0, eta=1.0, lipschitz=1.0
    ),
    "negative-linear": FieldEntry(
        "f(t, x) = -x", point_map=lambda t, x: -np.asarray(x), c=1.0, eta=1.0, lipschitz=1.0
    ),
    "zero": FieldEntry("f = 0", point_map=lambda t, x: np.zeros(np.shape(x))),
    "unit": FieldEntry(
        "f = 1 componentwise", point_map=lambda t, x: np.ones(np.shape(x)), c=1.0, mu=1.0
    ),
    "half": FieldEntry(
        "f = 0.5 componentwise", point_map=lambda t, x: np.full(np.shape(x), 0.5), c=0.5, mu=0.5
    ),
    "sine": FieldEntry(
        "f(t, x) = 0.2 sin(x)",
        point_map=lambda t, x: 0.2 * np.sin(x),
        c=0.2,
        eta=0.2,
        mu=0.2,
        lipschitz=0.2,
    ),
    "unit-interval": FieldEntry(
        "F = [-1, 1] componentwise", set_map=_interval(-1.0, 1.0), c=1.0, mu=1.0, lipschitz=0.0
    ),
    "affine-interval": FieldEntry(
        "F(t, x) = [0.1x - 1, 0.1x + 1] componentwise",
        set_map=_interval(-1.0, 1.0, 0.1),
        c=1.0,
        eta=0.1,
        mu=1.0,
        mu_offset=0.2,
        lipschitz=0.1,
    ),
    "band": FieldEntry(
        "F = [0.9, 1.1] componentwise", set_map=_interval(0.9, 1.1), c=1.1, mu=1.1, lipschitz=0.0
    ),
}


def field_names() -> list[str]:
    return sorted(FIELDS)


def build_field(name: str, mesh: TimeMesh, d: int) -> SetField:
    """
    Catalog field by name with constant growth data.

    The uniform bound mu of affine-interval holds for states |x| <= 2.

    Raises:
        ConfigurationError: For an unknown name
    """
    entry = FIELDS.get(name)
    if entry is None:
        known = ", ".join(field_names())
        raise ConfigurationError(f"Unknown field '{name}'. Known fields: {known}")
    growth = GrowthData.constant(
        mesh,
        c=entry.c * _root(d),
        eta=entry.eta,
        mu=entry.mu * _root(d) + entry.mu_offset,
    )
    if entry.set_map is not None:
        return SetField(entry.set_map, growth, d, lipschitz_meta=entry.lipschitz, label=name)
    assert entry.point_map is not None
    return SetField.singleton(entry.point_map, growth, d, label=name)


def growth_from_spec(spec: GrowthSpec, mesh: TimeMesh) -> GrowthData:
    """Growth data from expressions in t."""
    return GrowthData(
        c=Path.scalar(mesh, time_function(spec.c, mesh.T)(mesh.nodes)),
        eta=Path.scalar(mesh, time_function(spec.eta, mesh.T)(mesh.nodes)),
        mu=Path.scalar(mesh, time_function(spec.mu, mesh.T)(mesh.nodes)),
    )


def field_from_spec(
    spec: FieldSpec, mesh: TimeMesh, d: int, growth: GrowthData | None
) -> SetField:
    """
    Resolve a field section.

    Inline fields take the growth section of the problem; without one their
    growth data is zero, which the condition checks then report as failing.
    """
    if spec.name is not None:
        field = build_field(spec.name, mesh, d)
        if growth is None:
            return field
        return SetField(
            field.evaluate, growth, d, field.lipschitz_meta, field.label, field.point_map
        )
    growth = growth or GrowthData.constant(mesh)
    T = mesh.T
    if spec.type == "function":
        assert spec.components is not None
        f = state_function(spec.components, T, d)
        return SetField.singleton(f, growth, d, label="inline-function")
    if spec.type == "ball":
        assert spec.center is not None and spec.radius is not None
        center = state_function(spec.center, T, d)
        radius = state_functions([spec.radius], T, d)

        def ball(t: np.ndarray, x: np.ndarray) -> ConvexSet:
            return Ball(center(t, x), radius(t, x)[..., 0])

        return SetField(ball, growth, d, spec.lipschitz, label="inline-ball")
    assert spec.lower is not None and spec.upper is not None
    lower = state_function(spec.lower, T, d)
    upper = state_function(spec.upper, T, d)

    def box(t: np.ndarray, x: np.ndarray) -> ConvexSet:
        return Box(lower(t, x), upper(t, x))

    return SetField(box, growth, d, spec.lipschitz, label="inline-box")
