"""Convex compact sets in R^d: balls, boxes and polytopes.

Every set carries an optional leading batch shape so that one object can hold
the values F(t_i, x_i) at all mesh nodes at once. ``support`` and ``project``
broadcast over that batch.
"""

import itertools
from abc import ABC, abstractmethod
from collections.abc import Sequence
from dataclasses import dataclass
from math import comb
try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
from shared.exceptions import InvalidArgumentError

# Subset count above which polytope projection switches to projected gradient
_ENUMERATION_LIMIT = 4000
_FEASIBILITY_SLACK = 1e-10


def normalize(direction: np.ndarray) -> np.ndarray:
    """Unit vectors along the last axis; zero directions are rejected."""
    direction = np.asarray(direction, dtype=float)
    norms = np.linalg.norm(direction, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise InvalidArgumentError("dir", "support direction must be nonzero")
    return direction / norms


class ConvexSet(ABC):
    """Nonempty convex compact set (or batch of sets) in R^d."""

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @property
    @abstractmethod
    def batch_shape(self) -> tuple[int, ...]: ...

    @abstractmethod
    def support(self, direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(value, maximizing point) of <u, y> over the set for u = direction / |direction|."""

    @abstractmethod
    def project(self, x: np.ndarray) -> np.ndarray:
        """Euclidean nearest point."""

    @abstractmethod
    def radius_bound(self) -> np.ndarray:
        """sup of |y| over the set (the norm ||A||^+)."""

    @abstractmethod
    def is_valid(self) -> np.ndarray:
        """Per batch entry: nonempty with finite data."""

    @abstractmethod
    def take(self, index: np.ndarray | int) -> Self:
        """Sub-batch selected along the leading axis."""

    @classmethod
    @abstractmethod
    def enclosing(cls, sets: Sequence[Self]) -> Self:
        """A set of the same kind containing every set of the sequence (same batch shape)."""

    def distance(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.project(x), axis=-1)

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        return self.distance(x) <= tol


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    """Closed Euclidean ball(center, radius)."""

    center: np.ndarray
    radius: np.ndarray

    def __post_init__(self) -> None:
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        radius = np.broadcast_to(np.asarray(self.radius, dtype=float), center.shape[:-1])
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", np.array(radius))

    @property
    def dim(self) -> int:
        return int(self.center.shape[-1])

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return tuple(self.center.shape[:-1])

    def support(self, direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        unit = normalize(direction)
        point = self.center + self.radius[..., None] * unit
        return np.sum(unit * point, axis=-1), point

    def project(self, x: np.ndarray) -> np.ndarray:
        offset = np.asarray(x, dtype=float) - self.center
        dist = np.linalg.norm(offset, axis=-1)
        factor = np.ones_like(dist)
        outside = dist > self.radius
        np.divide(self.radius, dist, out=factor, where=outside)
        return self.center + offset * factor[..., None]

    def radius_bound(self) -> np.ndarray:
        return np.linalg.norm(self.center, axis=-1) + self.radius

    def is_valid(self) -> np.ndarray:
        return (
            np.all(np.isfinite(self.center), axis=-1)
            & np.isfinite(self.radius)
            & (self.radius >= 0)
        )

    def take(self, index: np.ndarray | int) -> "Ball":
        return Ball(self.center[index], self.radius[index])

    @classmethod
    def enclosing(cls, sets: Sequence["Ball"]) -> "Ball":
        center = sets[0].center
        radius = np.max(
            [np.linalg.norm(s.center - center, axis=-1) + s.radius for s in sets], axis=0
        )
        return cls(center, radius)


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    """Axis-aligned box [lower, upper]."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        lower, upper = np.broadcast_arrays(lower, upper)
        object.__setattr__(self, "lower", np.array(lower))
        object.__setattr__(self, "upper", np.array(upper))

    @property
    def dim(self) -> int:
        return int(self.lower.shape[-1])

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return tuple(self.lower.shape[:-1])

    def support(self, direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        unit = normalize(direction)
        # zero components map to the upper bound
        point = np.where(unit >= 0, self.upper, self.lower)
        return np.sum(unit * point, axis=-1), point

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def radius_bound(self) -> np.ndarray:
        return np.linalg.norm(np.maximum(np.abs(self.lower), np.abs(self.upper)), axis=-1)

    def is_valid(self) -> np.ndarray:
        finite = np.isfinite(self.lower) & np.isfinite(self.upper)
        return np.all(finite & (self.lower <= self.upper), axis=-1)

    def take(self, index: np.ndarray | int) -> "Box":
        return Box(self.lower[index], self.upper[index])

    @classmethod
    def enclosing(cls, sets: Sequence["Box"]) -> "Box":
        return cls(
            np.min([s.lower for s in sets], axis=0), np.max([s.upper for s in sets], axis=0)
        )


def project_onto_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row (last axis) onto the probability simplex."""
    u = np.sort(v, axis=-1)[..., ::-1]
    css = np.cumsum(u, axis=-1) - 1.0
    ind = np.arange(1, v.shape[-1] + 1)
    rho = np.sum(u - css / ind > 0, axis=-1) - 1
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1.0)
    return np.maximum(v - theta, 0.0)


@dataclass(frozen=True, eq=False)
class Polytope(ConvexSet):
    """Convex hull of a vertex list (shape (..., V, d))."""

    vertices: np.ndarray

    def __post_init__(self) -> None:
        vertices = np.asarray(self.vertices, dtype=float)
        if vertices.ndim < 2 or vertices.shape[-2] == 0:
            raise InvalidArgumentError("vertices", "a polytope needs at least one vertex")
        object.__setattr__(self, "vertices", vertices)

    @property
    def dim(self) -> int:
        return int(self.vertices.shape[-1])

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return tuple(self.vertices.shape[:-2])

    def support(self, direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        unit = normalize(direction)
        scores = np.einsum("...vd,...d->...v", self.vertices, unit)
        best = np.argmax(scores, axis=-1)
        point = np.take_along_axis(self.vertices, best[..., None, None], axis=-2)[..., 0, :]
        return np.take_along_axis(scores, best[..., None], axis=-1)[..., 0], point

    def radius_bound(self) -> np.ndarray:
        return np.linalg.norm(self.vertices, axis=-1).max(axis=-1)

    def is_valid(self) -> np.ndarray:
        return np.all(np.isfinite(self.vertices), axis=(-2, -1))

    def take(self, index: np.ndarray | int) -> "Polytope":
        return Polytope(self.vertices[index])

    @classmethod
    def enclosing(cls, sets: Sequence["Polytope"]) -> "Polytope":
        return cls(np.concatenate([s.vertices for s in sets], axis=-2))

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        batch = np.broadcast_shapes(self.batch_shape, x.shape[:-1])
        vertices = np.broadcast_to(self.vertices, batch + self.vertices.shape[-2:])
        x = np.broadcast_to(x, batch + (self.dim,))
        n_vertices = vertices.shape[-2]
        sizes = range(1, min(n_vertices, self.dim + 1) + 1)
        subsets = sum(comb(n_vertices, size) for size in sizes)
        if subsets <= _ENUMERATION_LIMIT:
            return _project_by_faces(vertices, x)
        return _project_by_gradient(vertices, x)


def _project_by_faces(vertices: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Exact projection: best feasible affine-hull projection over vertex subsets."""
    n_vertices, d = vertices.shape[-2:]
    best = np.array(vertices[..., 0, :])
    best_dist = np.linalg.norm(x - best, axis=-1)
    for size in range(2, min(n_vertices, d + 1) + 1):
        for subset in itertools.combinations(range(n_vertices), size):
            points = vertices[..., list(subset), :]
            origin = points[..., 0, :]
            edges = points[..., 1:, :] - origin[..., None, :]
            gram = edges @ np.swapaxes(edges, -1, -2)
            rhs = edges @ (x - origin)[..., None]
            alpha = (np.linalg.pinv(gram, hermitian=True) @ rhs)[..., 0]
            candidate = origin + np.einsum("...k,...kd->...d", alpha, edges)
            weights = np.concatenate([1.0 - alpha.sum(axis=-1, keepdims=True), alpha], axis=-1)
            feasible = np.all(weights >= -_FEASIBILITY_SLACK, axis=-1)
            dist = np.linalg.norm(x - candidate, axis=-1)
            better = feasible & (dist < best_dist)
            best = np.where(better[..., None], candidate, best)
            best_dist = np.where(better, dist, best_dist)
    # single vertices
    for v in range(n_vertices):
        dist = np.linalg.norm(x - vertices[..., v, :], axis=-1)
        better = dist < best_dist
        best = np.where(better[..., None], vertices[..., v, :], best)
        best_dist = np.where(better, dist, best_dist)
    return best


def _project_by_gradient(vertices: np.ndarray, x: np.ndarray, iterations: int = 3000) -> np.ndarray:
    """Accelerated projected gradient on barycentric weights."""
    n_vertices = vertices.shape[-2]
    gram = vertices @ np.swapaxes(vertices, -1, -2)
    lipschitz = np.linalg.eigvalsh(gram)[..., -1][..., None] + 1e-12
    target = np.einsum("...vd,...d->...v", vertices, x)
    weights = np.full(x.shape[:-1] + (n_vertices,), 1.0 / n_vertices)
    momentum = weights.copy()
    step = 1.0
    for _ in range(iterations):
        gradient = np.einsum("...vw,...w->...v", gram, momentum) - target
        updated = project_onto_simplex(momentum - gradient / lipschitz)
        next_step = (1.0 + np.sqrt(1.0 + 4.0 * step * step)) / 2.0
        momentum = updated + ((step - 1.0) / next_step) * (updated - weights)
        weights, step = updated, next_step
    return np.einsum("...v,...vd->...d", weights, vertices)


def support(A: ConvexSet, direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Support value and a maximizing point of A in ``direction``."""
    return A.support(direction)


def project(A: ConvexSet, x: np.ndarray) -> np.ndarray:
    """Euclidean metric projection of x onto A."""
    return A.project(x)


def probe_directions(d: int) -> np.ndarray:
    """The 2d axis directions plus the two main diagonals (2d + 2 unit vectors)."""
    axes = np.vstack([np.eye(d), -np.eye(d)])
    diagonal = np.ones((1, d)) / np.sqrt(d)
    return np.vstack([axes, diagonal, -diagonal])


def hausdorff_on_directions(A: ConvexSet, B: ConvexSet, directions: np.ndarray) -> np.ndarray:
    """Largest support-function gap over sampled directions (lower bound of d_H)."""
    gaps = [np.abs(A.support(u)[0] - B.support(u)[0]) for u in directions]
    return np.max(gaps, axis=0)


def dominates(A: ConvexSet, B: ConvexSet, directions: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Per batch entry: sigma_A >= sigma_B - tol on every sampled direction."""
    checks = [A.support(u)[0] >= B.support(u)[0] - tol for u in directions]
    return np.all(checks, axis=0)
