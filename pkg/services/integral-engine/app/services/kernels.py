"""Matrix-valued kernels on the triangle or the square, and sampled kernel conditions.

A kernel callable is vectorized: ``fn(t, s)`` receives broadcastable arrays
and returns an array of shape ``broadcast(t, s).shape + (d, d)``. On the
triangle, values with s > t are replaced by zero whatever the callable
returns.
"""

from collections.abc import Callable
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import trapezoid
from shared.core.config import settings
from shared.core.logging import get_logger
from shared.exceptions import InvalidArgumentError
from shared.schemas import ConditionCheck

from app.services.mesh_paths import Path, TimeMesh, conjugate_exponent

logger = get_logger(__name__)

KernelFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]
MatrixFunction = Callable[[np.ndarray], np.ndarray]


class KernelDomain(str, Enum):
    """Where a kernel lives."""

    TRIANGLE = "triangle"
    SQUARE = "square"


@dataclass(frozen=True, eq=False)
class Kernel:
    """Kernel k(t, s) on [0, T] with optional exact time derivative."""

    domain: KernelDomain
    d: int
    T: float
    fn: KernelFunction
    dt_fn: KernelFunction | None = None
    label: str = "kernel"

    @property
    def triangular(self) -> bool:
        return self.domain is KernelDomain.TRIANGLE

    def raw(self, t: np.ndarray | float, s: np.ndarray | float) -> np.ndarray:
        """Callable values without triangular zeroing."""
        t_b, s_b = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
        with np.errstate(over="ignore", invalid="ignore"):
            values = np.asarray(self.fn(t_b, s_b), dtype=float)
        return np.broadcast_to(values, t_b.shape + (self.d, self.d))

    def matrices(self, t: np.ndarray | float, s: np.ndarray | float) -> np.ndarray:
        """Kernel matrices, zero for s > t on the triangle."""
        t_b, s_b = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
        values = self.raw(t_b, s_b)
        if self.triangular:
            values = np.where((s_b > t_b)[..., None, None], 0.0, values)
        return values

    def derivative(self, t: np.ndarray | float, s: np.ndarray | float) -> np.ndarray:
        """Exact time derivative; requires ``dt_fn``."""
        if self.dt_fn is None:
            raise InvalidArgumentError("dt_fn", f"kernel '{self.label}' has no exact derivative")
        t_b, s_b = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
        values = np.asarray(self.dt_fn(t_b, s_b), dtype=float)
        return np.broadcast_to(values, t_b.shape + (self.d, self.d))


@dataclass(frozen=True)
class DiagonalCheck:
    """Sampled (k3): invertibility of k(t, t) on the mesh."""

    passed: bool
    min_singular: float
    M_inv: float
    worst_time: float


@dataclass(frozen=True, eq=False)
class QNormProfile:
    """Per-node q-norm of s -> ||k(t, s)||, its max B and the continuity modulus."""

    profile: Path
    B: float
    continuity_modulus: float
    q: float


@dataclass(frozen=True)
class KernelReport:
    """Kernel constants used by the bounds and thresholds."""

    B: float
    M_inv: float
    psi_bound: float
    continuity_modulus: float
    q: float


def eval_kernel(k: Kernel, t: float, s: float) -> np.ndarray:
    """
    Evaluate k(t, s) as a d x d matrix.

    Raises:
        InvalidArgumentError: If t or s lies outside [0, T]
    """
    slack = 1e-12 * k.T
    for name, value in (("t", t), ("s", s)):
        if not -slack <= value <= k.T + slack:
            raise InvalidArgumentError(name, f"{value} outside [0, {k.T}]")
    return np.array(k.matrices(t, s))


def separable_kernel(
    f: MatrixFunction,
    g: MatrixFunction,
    domain: KernelDomain | str,
    T: float,
    d: int,
    label: str = "separable",
    probe_nodes: int = 257,
) -> Kernel:
    """
    Kernel k(t, s) = f(t) g(s) (matrix product).

    Both factors are vectorized: ``f(times)`` returns shape ``times.shape + (d, d)``.
    Finiteness is checked on ``probe_nodes`` equally spaced samples.

    Raises:
        InvalidArgumentError: If a factor is non-finite at a sample
    """
    probes = np.linspace(0.0, T, probe_nodes)
    for name, factor in (("f", f), ("g", g)):
        samples = np.asarray(factor(probes), dtype=float)
        if not np.all(np.isfinite(samples)):
            raise InvalidArgumentError(name, "factor is not finite on the probe grid")

    def fn(t: np.ndarray, s: np.ndarray) -> np.ndarray:
        return np.matmul(
            np.broadcast_to(f(t), t.shape + (d, d)), np.broadcast_to(g(s), s.shape + (d, d))
        )

    return Kernel(domain=KernelDomain(domain), d=d, T=T, fn=fn, label=label)


def _operator_norms(matrices: np.ndarray) -> np.ndarray:
    """Spectral norms over the trailing (d, d) axes."""
    if matrices.shape[-1] == 1:
        return np.abs(matrices[..., 0, 0])
    return np.linalg.norm(matrices, ord=2, axis=(-2, -1))


def _qnorm(samples: np.ndarray, nodes: np.ndarray, q: float) -> float:
    if samples.size == 0:
        return 0.0
    if np.isinf(q):
        return float(samples.max())
    if samples.size == 1:
        return 0.0
    return float(max(trapezoid(samples**q, nodes), 0.0) ** (1.0 / q))


def check_diagonal_invertible(
    k: Kernel, mesh: TimeMesh, tol: float = settings.diagonal_tol
) -> DiagonalCheck:
    """
    Sampled (k3): smallest singular value of k(t, t) must exceed ``tol`` at every node.

    A singular diagonal is reported, not raised.
    """
    if not k.triangular:
        raise InvalidArgumentError("k", "diagonal check applies to triangular kernels")
    diagonal = k.matrices(mesh.nodes, mesh.nodes)
    singular = np.linalg.svd(diagonal, compute_uv=False)
    smallest = singular.min(axis=1)
    worst = int(np.argmin(smallest))
    min_singular = float(smallest[worst])
    passed = bool(min_singular > tol)
    M_inv = float((1.0 / smallest).max()) if passed else float(np.inf)
    logger.debug("diagonal_checked", kernel=k.label, passed=passed, min_singular=min_singular)
    return DiagonalCheck(
        passed=passed, min_singular=min_singular, M_inv=M_inv, worst_time=float(mesh.nodes[worst])
    )


def estimate_psi(k: Kernel, mesh: TimeMesh) -> Path:
    """
    Sampled psi(s) = max over nodes t >= s of ||dk/dt(t, s)||.

    Uses the exact derivative when the kernel carries one. Otherwise finite
    differences along t in [s, T] with step equal to the mesh spacing:
    second-order one-sided at t = s and t = T, central elsewhere.
    """
    if not k.triangular:
        raise InvalidArgumentError("k", "psi is defined for triangular kernels")
    nodes = mesh.nodes
    n = nodes.size
    psi = np.zeros(n)
    for j in range(n):
        if k.dt_fn is not None:
            derivative = k.derivative(nodes[j:], nodes[j])
        else:
            lo = j if n - j >= 3 else max(n - 3, 0)
            column = k.raw(nodes[lo:], nodes[j])
            order = 2 if column.shape[0] >= 3 else 1
            derivative = np.gradient(column, nodes[lo:], axis=0, edge_order=order)[j - lo :]
        psi[j] = float(_operator_norms(derivative).max())
    return Path.scalar(mesh, psi)


def kernel_qnorm_profile(k: Kernel, mesh: TimeMesh, q: float) -> QNormProfile:
    """
    Per-node q-norm of s -> ||k(t, s)|| over [0, t] (triangle) or [0, T] (square).

    Also reports B (the max) and the continuity modulus: the largest q-norm of
    k(t, .) - k(tau, .) over adjacent nodes, with zero extension beyond the
    triangle.

    Args:
        k: Kernel
        mesh: Sampling mesh
        q: Exponent, at least 1, or ``numpy.inf``

    Returns:
        The profile with B and continuity_modulus
    """
    if q < 1:
        raise InvalidArgumentError("q", f"exponent must be >= 1, got {q}")
    nodes = mesh.nodes
    n = nodes.size
    profile = np.zeros(n)
    modulus = 0.0
    previous: np.ndarray | None = None
    for i in range(n):
        row = k.matrices(nodes[i], nodes)
        norms = _operator_norms(row)
        upper = i + 1 if k.triangular else n
        profile[i] = _qnorm(norms[:upper], nodes[:upper], q)
        if previous is not None:
            modulus = max(modulus, _qnorm(_operator_norms(row - previous), nodes, q))
        previous = row
    B = float(profile.max())
    logger.debug("qnorm_profile", kernel=k.label, q=q, B=B, modulus=modulus)
    return QNormProfile(
        profile=Path.scalar(mesh, profile), B=B, continuity_modulus=float(modulus), q=q
    )


def kernel_bound(k: Kernel, mesh: TimeMesh, p: float) -> float:
    """B = sup_t ||k(t, .)||_q with q conjugate to p."""
    return kernel_qnorm_profile(k, mesh, conjugate_exponent(p)).B


def continuity_modulus_within(k: Kernel, mesh: TimeMesh, q: float, xi: float) -> float:
    """Largest ||k(t, .) - k(tau, .)||_q over node pairs with |t - tau| <= xi."""
    nodes = mesh.nodes
    rows = [k.matrices(t, nodes) for t in nodes]
    limit = xi + mesh.time_tol
    best = 0.0
    for i in range(nodes.size):
        for j in range(i + 1, nodes.size):
            if nodes[j] - nodes[i] > limit:
                break
            best = max(best, _qnorm(_operator_norms(rows[j] - rows[i]), nodes, q))
    return best


def check_kernel_periodicity(k: Kernel, mesh: TimeMesh, q: float) -> float:
    """Sampled (k6') periodicity defect ||k(0, .) - k(T, .)||_q over [0, T]."""
    nodes = mesh.nodes
    difference = k.raw(0.0, nodes) - k.raw(mesh.T, nodes)
    return _qnorm(_operator_norms(difference), nodes, q)


def kernel_report(
    k: Kernel, mesh: TimeMesh, q: float, tol: float = settings.diagonal_tol
) -> KernelReport:
    """Assemble B, M_inv, psi bound and continuity modulus for a kernel."""
    profile = kernel_qnorm_profile(k, mesh, q)
    if k.triangular:
        M_inv = check_diagonal_invertible(k, mesh, tol).M_inv
        psi_bound = float(estimate_psi(k, mesh).values.max())
    else:
        M_inv = float("nan")
        psi_bound = float("nan")
    return KernelReport(
        B=profile.B,
        M_inv=M_inv,
        psi_bound=psi_bound,
        continuity_modulus=profile.continuity_modulus,
        q=q,
    )


def check_kernel_conditions(
    k: Kernel, mesh: TimeMesh, p: float, tol: float = settings.diagonal_tol
) -> list[ConditionCheck]:
    """
    Sampled kernel conditions as report rows.

    Triangular kernels report (k3)-(k7) plus the linear growth bound
    ||k(t, s)|| <= ||k(s, s)|| + psi(s)(t - s). Square kernels report
    (k5')-(k7'). Nothing here raises for a failed condition.
    """
    q = conjugate_exponent(p)
    profile = kernel_qnorm_profile(k, mesh, q)
    checks: list[ConditionCheck] = []
    if k.triangular:
        diagonal = check_diagonal_invertible(k, mesh, tol)
        checks.append(
            ConditionCheck(
                name="(k3)",
                passed=diagonal.passed,
                value=diagonal.M_inv,
                threshold=None,
                margin=diagonal.min_singular - tol,
                detail=f"M_inv={diagonal.M_inv:.6g}; min singular value "
                f"{diagonal.min_singular:.6g} at t={diagonal.worst_time:.6g}",
            )
        )
        psi = estimate_psi(k, mesh)
        psi_q = _qnorm(psi.values[:, 0], mesh.nodes, q)
        checks.append(
            ConditionCheck(
                name="(k4)",
                passed=bool(np.isfinite(psi_q)),
                value=float(psi.values.max()),
                detail=f"psi bound {float(psi.values.max()):.6g}; ||psi||_q={psi_q:.6g}",
            )
        )
        checks.append(
            ConditionCheck(
                name="(k5)",
                passed=bool(np.isfinite(profile.B)),
                value=profile.B,
                detail=f"B = sup_t ||k(t,.)||_q with q={q:g}",
            )
        )
        checks.append(
            ConditionCheck(
                name="(k6)",
                passed=bool(np.isfinite(profile.continuity_modulus)),
                value=profile.continuity_modulus,
                detail=f"adjacent-node modulus, step {mesh.max_step:.6g}",
            )
        )
        checks.append(
            ConditionCheck(name="(k7)", passed=True, detail="automatic in finite dimension")
        )
        checks.append(_linear_growth_check(k, mesh, psi))
    else:
        checks.append(
            ConditionCheck(
                name="(k5')",
                passed=bool(np.isfinite(profile.B)),
                value=profile.B,
                detail=f"B over the full interval with q={q:g}",
            )
        )
        defect = check_kernel_periodicity(k, mesh, q)
        checks.append(
            ConditionCheck(
                name="(k6')",
                passed=bool(defect <= max(tol, 1e-9)),
                value=defect,
                threshold=max(tol, 1e-9),
                margin=max(tol, 1e-9) - defect,
                detail=f"||k(0,.)-k(T,.)||_q; modulus {profile.continuity_modulus:.6g}",
            )
        )
        checks.append(
            ConditionCheck(name="(k7')", passed=True, detail="automatic in finite dimension")
        )
    return checks


def _linear_growth_check(k: Kernel, mesh: TimeMesh, psi: Path) -> ConditionCheck:
    nodes = mesh.nodes
    worst = -np.inf
    psi_values = psi.values[:, 0]
    for j in range(nodes.size):
        column = _operator_norms(k.matrices(nodes[j:], nodes[j]))
        bound = column[0] + psi_values[j] * (nodes[j:] - nodes[j])
        worst = max(worst, float((column - bound).max()))
    slack = 1e-6 * (1.0 + float(psi_values.max()))
    return ConditionCheck(
        name="kernel-growth",
        passed=bool(worst <= slack),
        value=worst,
        threshold=slack,
        margin=slack - worst,
        detail="||k(t,s)|| <= ||k(s,s)|| + psi(s)(t-s)",
    )
