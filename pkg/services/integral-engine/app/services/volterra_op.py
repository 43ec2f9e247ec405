"""Volterra, Hammerstein and truncated integral operators by product trapezoid quadrature.

Every operator is assembled once per (kernel, mesh, cut) into a dense block
matrix of shape (N*d, N*d) and cached, so repeated applications inside
fixed-point iterations cost one matrix-vector product.

For an upper limit u that is not a node, the integrand at u uses the kernel
at u and the linearly interpolated density, so truncated integrals depend
continuously on u.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from shared.core.logging import get_logger
from shared.exceptions import InconsistentDataError, InvalidArgumentError, NotInvertibleError

from app.services.kernels import Kernel, check_diagonal_invertible
from app.services.mesh_paths import Path, TimeMesh, sup_norm

logger = get_logger(__name__)


@dataclass(frozen=True)
class _Grid:
    """Trapezoid grid for an integral over [0, u] with interpolation coefficients."""

    taus: np.ndarray
    weights: np.ndarray
    left: np.ndarray
    right: np.ndarray
    theta: np.ndarray


def _truncated_grid(mesh: TimeMesh, upper: float) -> _Grid:
    nodes = mesh.nodes
    tol = mesh.time_tol
    if upper <= tol:
        empty = np.zeros(0)
        return _Grid(empty, empty, empty.astype(int), empty.astype(int), empty)
    m = int(np.searchsorted(nodes, upper - tol, side="left"))
    inner = np.arange(m)
    if m < nodes.size and abs(nodes[m] - upper) <= tol:
        taus = nodes[: m + 1]
        left = np.arange(m + 1)
        right = left.copy()
        theta = np.zeros(m + 1)
    else:
        fraction = (upper - nodes[m - 1]) / (nodes[m] - nodes[m - 1])
        taus = np.append(nodes[:m], upper)
        left = np.append(inner, m - 1)
        right = np.append(inner, m)
        theta = np.append(np.zeros(m), fraction)
    gaps = np.diff(taus)
    weights = np.zeros(taus.size)
    weights[:-1] += gaps / 2.0
    weights[1:] += gaps / 2.0
    return _Grid(taus, weights, left, right, theta)


def _assemble_rows(
    k: Kernel, mesh: TimeMesh, times: np.ndarray, uppers: np.ndarray
) -> np.ndarray:
    """Block rows (R*d, N*d) for integrals over [0, upper_r] evaluated at time_r."""
    d = k.d
    n = mesh.size
    rows = np.zeros((times.size, n, d, d))
    for r, (t, u) in enumerate(zip(times, uppers, strict=True)):
        grid = _truncated_grid(mesh, float(u))
        if grid.taus.size == 0:
            continue
        blocks = k.matrices(float(t), grid.taus) * grid.weights[:, None, None]
        np.add.at(rows[r], grid.left, blocks * (1.0 - grid.theta)[:, None, None])
        np.add.at(rows[r], grid.right, blocks * grid.theta[:, None, None])
    return rows.transpose(0, 2, 1, 3).reshape(times.size * d, n * d)


@lru_cache(maxsize=32)
def _volterra_matrix(k: Kernel, mesh: TimeMesh, cut: float) -> np.ndarray:
    uppers = np.minimum(mesh.nodes, cut)
    matrix = _assemble_rows(k, mesh, mesh.nodes, uppers)
    matrix.setflags(write=False)
    return matrix


@lru_cache(maxsize=16)
def _hammerstein_matrix(k: Kernel, mesh: TimeMesh) -> np.ndarray:
    matrix = _assemble_rows(k, mesh, mesh.nodes, np.full(mesh.size, mesh.T))
    matrix.setflags(write=False)
    return matrix


def _check_inputs(k: Kernel, w: Path, mesh: TimeMesh) -> None:
    if not mesh.compatible(w.mesh):
        raise InvalidArgumentError("w", "density lives on a different mesh")
    if w.dim != k.d:
        raise InvalidArgumentError("w", f"expected dimension {k.d}, got {w.dim}")
    if abs(k.T - mesh.T) > mesh.time_tol:
        raise InvalidArgumentError("mesh", f"kernel horizon {k.T} differs from mesh {mesh.T}")


def _apply(matrix: np.ndarray, w: Path, mesh: TimeMesh) -> Path:
    values = (matrix @ w.values.reshape(-1)).reshape(mesh.size, -1)
    return Path(mesh, values)


def volterra_matrix(k: Kernel, mesh: TimeMesh) -> np.ndarray:
    """Cached block matrix of V on the mesh (lower block-triangular)."""
    if not k.triangular:
        raise InvalidArgumentError("k", "the Volterra operator needs a triangular kernel")
    return _volterra_matrix(k, mesh, mesh.T)


def hammerstein_matrix(k: Kernel, mesh: TimeMesh) -> np.ndarray:
    """Cached block matrix of V_T on the mesh."""
    if k.triangular:
        raise InvalidArgumentError("k", "the Hammerstein operator needs a square kernel")
    return _hammerstein_matrix(k, mesh)


def apply_V(k: Kernel, w: Path, mesh: TimeMesh) -> Path:
    """
    Volterra operator y(t_i) = integral over [0, t_i] of k(t_i, s) w(s) ds.

    Composite trapezoid product quadrature; y(0) = 0 exactly.

    Raises:
        InvalidArgumentError: On a square kernel or a mesh mismatch
    """
    _check_inputs(k, w, mesh)
    return _apply(volterra_matrix(k, mesh), w, mesh)


def apply_V_T(k: Kernel, w: Path, mesh: TimeMesh) -> Path:
    """
    Hammerstein operator y(t_i) = integral over [0, T] of k(t_i, s) w(s) ds.

    Raises:
        InvalidArgumentError: On a triangular kernel or a mesh mismatch
    """
    _check_inputs(k, w, mesh)
    return _apply(hammerstein_matrix(k, mesh), w, mesh)


def apply_V_trunc(k: Kernel, w: Path, mesh: TimeMesh, s_frac: float) -> Path:
    """
    Truncated operator y(t_i) = integral over [0, min(t_i, s_frac*T)] of k(t_i, s) w(s) ds.

    Equals ``apply_V`` for s_frac = 1 and vanishes for s_frac = 0.

    Raises:
        InvalidArgumentError: If s_frac is outside [0, 1]
    """
    if not 0.0 <= s_frac <= 1.0:
        raise InvalidArgumentError("s_frac", f"must lie in [0, 1], got {s_frac}")
    if not k.triangular:
        raise InvalidArgumentError("k", "the truncated operator needs a triangular kernel")
    _check_inputs(k, w, mesh)
    if s_frac == 1.0:
        return _apply(volterra_matrix(k, mesh), w, mesh)
    return _apply(_volterra_matrix(k, mesh, float(s_frac) * mesh.T), w, mesh)


def volterra_value_at(k: Kernel, w: Path, mesh: TimeMesh, t: float) -> np.ndarray:
    """Integral over [0, t] of k(t, s) w(s) ds at an arbitrary time t."""
    row = _assemble_rows(k, mesh, np.array([t]), np.array([t]))
    return row @ w.values.reshape(-1)


@dataclass(frozen=True)
class ContinuationQuadrature:
    """
    Quadrature of the free part of a continuation integral over [c, t_i].

    ``free`` lists the nodes strictly after the cut c. For free node i the
    integral uses the grid (c, free nodes up to i): ``anchor`` holds the
    weighted kernel blocks at c (shape (n_free, d, d)) and ``block`` the
    lower block-triangular matrix on the free nodes (n_free*d, n_free*d).
    """

    cut: float
    free: np.ndarray
    anchor_node: int | None
    anchor: np.ndarray
    block: np.ndarray


@lru_cache(maxsize=32)
def continuation_quadrature(k: Kernel, mesh: TimeMesh, cut: float) -> ContinuationQuadrature:
    """Assemble (and cache) the continuation quadrature for a cut time in [0, T]."""
    if not k.triangular:
        raise InvalidArgumentError("k", "continuation needs a triangular kernel")
    nodes = mesh.nodes
    d = k.d
    free = np.flatnonzero(nodes > cut + mesh.time_tol)
    n_free = free.size
    anchor = np.zeros((n_free, d, d))
    block = np.zeros((n_free, n_free, d, d))
    for r, i in enumerate(free):
        taus = np.append(cut, nodes[free[: r + 1]])
        gaps = np.diff(taus)
        weights = np.zeros(taus.size)
        weights[:-1] += gaps / 2.0
        weights[1:] += gaps / 2.0
        blocks = k.matrices(nodes[i], taus) * weights[:, None, None]
        anchor[r] = blocks[0]
        block[r, : r + 1] = blocks[1:]
    flat = block.transpose(0, 2, 1, 3).reshape(n_free * d, n_free * d)
    flat.setflags(write=False)
    anchor.setflags(write=False)
    return ContinuationQuadrature(
        cut=float(cut),
        free=free,
        anchor_node=mesh.index_of(cut),
        anchor=anchor,
        block=flat,
    )


@dataclass(frozen=True, eq=False)
class InversionResult:
    """Density recovered from y = V w, with the roundtrip residual."""

    w: Path
    residual: float


def invert_V(k: Kernel, y: Path, mesh: TimeMesh) -> InversionResult:
    """
    Recover w from y = V w by forward substitution on the collocation system.

    The diagonal block of row i is (h_i / 2) k(t_i, t_i). The value at node 0
    is not determined by the collocation rows; it is closed by the
    differentiated identity w(0) = k(0, 0)^{-1} y'(0) with a second-order
    one-sided difference.

    Args:
        k: Triangular kernel passing the diagonal check
        y: Data with y(0) = 0
        mesh: Mesh of y

    Returns:
        The density and the sup-norm roundtrip residual

    Raises:
        NotInvertibleError: If k(t, t) is singular on the mesh
        InconsistentDataError: If y(0) differs from 0
    """
    _check_inputs(k, y, mesh)
    diagonal = check_diagonal_invertible(k, mesh)
    if not diagonal.passed:
        raise NotInvertibleError(diagonal.worst_time, diagonal.min_singular)
    scale = 1.0 + sup_norm(y)
    start = float(np.linalg.norm(y.values[0]))
    if start > 1e-9 * scale:
        raise InconsistentDataError("y(0) must vanish for data in the range of V", start)

    matrix = volterra_matrix(k, mesh)
    d = k.d
    n = mesh.size
    nodes = mesh.nodes
    data = y.values
    w = np.zeros((n, d))
    head = min(n, 3)
    slope = np.gradient(data[:head], nodes[:head], axis=0, edge_order=head - 1)[0]
    w[0] = np.linalg.solve(k.matrices(0.0, 0.0), slope)
    for i in range(1, n):
        rows = slice(i * d, (i + 1) * d)
        rhs = data[i] - matrix[rows, : i * d] @ w[:i].reshape(-1)
        w[i] = np.linalg.solve(matrix[rows, i * d : (i + 1) * d], rhs)
    density = Path(mesh, w)
    residual = sup_norm(apply_V(k, density, mesh) - y)
    logger.debug("volterra_inverted", kernel=k.label, nodes=n, residual=residual)
    return InversionResult(w=density, residual=residual)


def operator_cache_clear() -> None:
    """Drop every cached operator matrix."""
    _volterra_matrix.cache_clear()
    _hammerstein_matrix.cache_clear()
    continuation_quadrature.cache_clear()


__all__ = [
    "ContinuationQuadrature",
    "InversionResult",
    "apply_V",
    "apply_V_T",
    "apply_V_trunc",
    "continuation_quadrature",
    "hammerstein_matrix",
    "invert_V",
    "operator_cache_clear",
    "volterra_matrix",
    "volterra_value_at",
]
