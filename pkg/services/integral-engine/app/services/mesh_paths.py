"""Time meshes, piecewise-linear paths, norms and finite-family diagnostics.

Paths are sampled at mesh nodes and interpolated linearly in between; every
norm and integral is a mesh quadrature. Values are read-only numpy arrays so
meshes and paths can be shared freely between worker threads.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from shared.core.logging import get_logger
from shared.exceptions import InvalidArgumentError

logger = get_logger(__name__)

# Relative slack used when comparing distances against radii
_RADIUS_SLACK = 1e-9


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TimeMesh:
    """Ordered quadrature nodes on [0, T] for a state space R^d."""

    nodes: np.ndarray
    d: int

    def __post_init__(self) -> None:
        nodes = _frozen(np.asarray(self.nodes, dtype=float).reshape(-1))
        if nodes.size < 2:
            raise InvalidArgumentError("nodes", "a mesh needs at least 2 nodes")
        if not np.all(np.isfinite(nodes)):
            raise InvalidArgumentError("nodes", "nodes must be finite")
        if nodes[0] != 0.0:
            raise InvalidArgumentError("nodes", "the first node must be 0")
        if np.any(np.diff(nodes) <= 0):
            raise InvalidArgumentError("nodes", "nodes must be strictly increasing")
        if self.d < 1:
            raise InvalidArgumentError("d", "state dimension must be positive")
        object.__setattr__(self, "nodes", nodes)

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def max_step(self) -> float:
        return float(self.steps.max())

    @property
    def time_tol(self) -> float:
        """Absolute tolerance for deciding that a time coincides with a node."""
        return 1e-12 * self.T

    def compatible(self, other: "TimeMesh") -> bool:
        """Whether two meshes carry the same nodes."""
        return other is self or (
            other.size == self.size and bool(np.array_equal(other.nodes, self.nodes))
        )

    def index_of(self, time: float) -> int | None:
        """Index of the node equal to ``time`` within ``time_tol``, else None."""
        idx = int(np.argmin(np.abs(self.nodes - time)))
        return idx if abs(self.nodes[idx] - time) <= self.time_tol else None


def make_uniform_mesh(T: float, N: int, d: int = 1) -> TimeMesh:
    """
    Build N equally spaced nodes from 0 to T.

    Args:
        T: Horizon, strictly positive
        N: Node count, at least 2
        d: State dimension

    Returns:
        The uniform mesh

    Raises:
        InvalidArgumentError: If T <= 0 or N < 2

    Examples:
        >>> make_uniform_mesh(1.0, 3).nodes
        array([0. , 0.5, 1. ])
    """
    if not np.isfinite(T) or T <= 0:
        raise InvalidArgumentError("T", f"horizon must be positive, got {T}")
    if N < 2:
        raise InvalidArgumentError("N", f"node count must be at least 2, got {N}")
    return TimeMesh(nodes=np.linspace(0.0, float(T), int(N)), d=int(d))


@dataclass(frozen=True, eq=False)
class Path:
    """Piecewise-linear function on a mesh; ``values`` has one row per node."""

    mesh: TimeMesh
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2 or values.shape[0] != self.mesh.size:
            raise InvalidArgumentError(
                "values",
                f"expected {self.mesh.size} rows, got shape {np.shape(self.values)}",
            )
        object.__setattr__(self, "values", _frozen(values))

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    @classmethod
    def constant(cls, mesh: TimeMesh, value: float | Sequence[float]) -> "Path":
        row = np.atleast_1d(np.asarray(value, dtype=float))
        if row.size == 1 and mesh.d > 1:
            row = np.full(mesh.d, float(row[0]))
        return cls(mesh, np.tile(row, (mesh.size, 1)))

    @classmethod
    def from_function(cls, mesh: TimeMesh, fn: Callable[[np.ndarray], np.ndarray]) -> "Path":
        """Sample a vectorized ``fn(times) -> (N,) or (N, k)`` at the nodes."""
        values = np.asarray(fn(mesh.nodes), dtype=float)
        if values.ndim == 0:
            values = np.full(mesh.size, float(values))
        return cls(mesh, values)

    @classmethod
    def scalar(cls, mesh: TimeMesh, samples: np.ndarray | float) -> "Path":
        """A sampled scalar function t -> R (one column)."""
        samples = np.broadcast_to(np.asarray(samples, dtype=float), (mesh.size,))
        return cls(mesh, samples.reshape(-1, 1))

    def __call__(self, t: float | np.ndarray) -> np.ndarray:
        """Evaluate by linear interpolation; returns shape (d,) or (n, d)."""
        times = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.column_stack(
            [np.interp(times, self.mesh.nodes, self.values[:, j]) for j in range(self.dim)]
        )
        return out[0] if np.ndim(t) == 0 else out

    def _check(self, other: "Path") -> None:
        if not self.mesh.compatible(other.mesh):
            raise InvalidArgumentError("mesh", "paths live on different meshes")

    def __add__(self, other: "Path") -> "Path":
        self._check(other)
        return Path(self.mesh, self.values + other.values)

    def __sub__(self, other: "Path") -> "Path":
        self._check(other)
        return Path(self.mesh, self.values - other.values)

    def __mul__(self, scale: float) -> "Path":
        return Path(self.mesh, float(scale) * self.values)

    __rmul__ = __mul__

    def norms(self) -> np.ndarray:
        """Euclidean norm of the value at each node."""
        return np.linalg.norm(self.values, axis=1)


@dataclass(frozen=True, eq=False)
class PathFamily:
    """Finite family of paths sharing one mesh."""

    members: tuple[Path, ...]

    def __post_init__(self) -> None:
        members = tuple(self.members)
        if members:
            mesh = members[0].mesh
            for member in members[1:]:
                if not mesh.compatible(member.mesh):
                    raise InvalidArgumentError("members", "all members must share one mesh")
        object.__setattr__(self, "members", members)

    def __len__(self) -> int:
        return len(self.members)

    @property
    def mesh(self) -> TimeMesh:
        if not self.members:
            raise InvalidArgumentError("members", "empty family has no mesh")
        return self.members[0].mesh

    def stack(self) -> np.ndarray:
        """Member values as an array of shape (m, N, d)."""
        return np.stack([member.values for member in self.members])

    def distances_from(self, index: int) -> np.ndarray:
        """Sup-norm distances from member ``index`` to every member."""
        stacked = self.stack()
        return np.linalg.norm(stacked - stacked[index], axis=2).max(axis=1)

    def distance_matrix(self) -> np.ndarray:
        return np.stack([self.distances_from(i) for i in range(len(self))])

    def diameter(self) -> float:
        return float(self.distance_matrix().max()) if self.members else 0.0


def sup_norm(x: Path) -> float:
    """Maximum over nodes of the Euclidean norm (exact for piecewise-linear paths)."""
    return float(x.norms().max())


def lp_norm(x: Path, p: float) -> float:
    """
    L^p norm by composite trapezoidal quadrature of |x(t)|^p on the mesh.

    Args:
        x: Path (a scalar function is a one-column path)
        p: Exponent, at least 1; ``numpy.inf`` gives the sup norm

    Returns:
        (integral of |x|^p)^(1/p)

    Raises:
        InvalidArgumentError: If p < 1
    """
    if p < 1:
        raise InvalidArgumentError("p", f"exponent must be >= 1, got {p}")
    if np.isinf(p):
        return sup_norm(x)
    integral = trapezoid(x.norms() ** p, x.mesh.nodes)
    return float(max(integral, 0.0) ** (1.0 / p))


def conjugate_exponent(p: float) -> float:
    """Hölder conjugate q of p (1 -> inf, inf -> 1)."""
    if p < 1:
        raise InvalidArgumentError("p", f"exponent must be >= 1, got {p}")
    if p == 1:
        return float(np.inf)
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)


def modulus_of_continuity(fam: PathFamily, xi: float) -> float:
    """
    Largest oscillation |x(t) - x(tau)| over members and node pairs with |t - tau| <= xi.

    Raises:
        InvalidArgumentError: For an empty family or xi <= 0
    """
    if xi <= 0:
        raise InvalidArgumentError("xi", "gap must be positive")
    if not fam.members:
        raise InvalidArgumentError("fam", "family is empty")
    nodes = fam.mesh.nodes
    stacked = fam.stack()
    limit = xi + fam.mesh.time_tol
    best = 0.0
    for lag in range(1, nodes.size):
        mask = nodes[lag:] - nodes[:-lag] <= limit
        if not mask.any():
            break
        diffs = np.linalg.norm(stacked[:, lag:, :] - stacked[:, :-lag, :], axis=2)
        best = max(best, float(diffs[:, mask].max()))
    return best


def covering_number(fam: PathFamily, eps: float) -> int:
    """
    Size of a greedy farthest-point eps-net of the family under the sup norm.

    The first member is the first center; each step adds the member farthest
    from the current centers, lowest index first on ties, until every member
    lies within eps of a center. The count upper-bounds the minimal covering
    number.

    Raises:
        InvalidArgumentError: For an empty family or eps <= 0
    """
    if eps <= 0:
        raise InvalidArgumentError("eps", "radius must be positive")
    if not fam.members:
        raise InvalidArgumentError("fam", "family is empty")
    distances = fam.distance_matrix()
    reach = distances[0].copy()
    centers = 1
    while reach.max() > eps * (1.0 + _RADIUS_SLACK):
        farthest = int(np.argmax(reach))
        reach = np.minimum(reach, distances[farthest])
        centers += 1
    return centers


def covering_profile(fam: PathFamily, eps_ladder: Sequence[float]) -> list[int]:
    """Covering numbers along a ladder of radii, made antitone in eps."""
    order = np.argsort(np.asarray(eps_ladder, dtype=float))
    counts = np.array([covering_number(fam, float(eps_ladder[i])) for i in order])
    # a cover at a smaller radius also covers at every larger one
    envelope = np.minimum.accumulate(counts)
    result = [0] * len(order)
    for rank, i in enumerate(order):
        result[int(i)] = int(envelope[rank])
    return result


def semidistance(A: PathFamily, B: PathFamily) -> float:
    """Directed semidistance: sup over a in A of the distance from a to B."""
    if not A.members or not B.members:
        raise InvalidArgumentError("family", "families must be nonempty")
    if not A.mesh.compatible(B.mesh):
        raise InvalidArgumentError("mesh", "families live on different meshes")
    a_values = A.stack()
    b_values = B.stack()
    worst = 0.0
    for a in a_values:
        nearest = np.linalg.norm(b_values - a, axis=2).max(axis=1).min()
        worst = max(worst, float(nearest))
    return worst


def hausdorff_distance(A: PathFamily, B: PathFamily) -> float:
    """Hausdorff distance: the larger of the two directed semidistances."""
    return max(semidistance(A, B), semidistance(B, A))
