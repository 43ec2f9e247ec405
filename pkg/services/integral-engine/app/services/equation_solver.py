"""Single-valued Volterra equations x = h + V(f(., x)).

Solutions are computed by damped Picard iteration started from x0 = h. The
free nodes are processed in windows: when the residual of a window stops
improving, the window is split in half and the halves are solved in time
order, each one continuing from the already solved prefix. The same engine
solves continuation problems whose integral starts at a cut time c with a
prescribed density on [0, c].
"""

from collections import deque
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from shared.core.logging import get_logger
from shared.exceptions import (
    ConditionSearchError,
    InconsistentDataError,
    InvalidArgumentError,
    NonConvergenceError,
    NumericFailureError,
)
from shared.schemas import SolverConfig

from app.services.kernels import Kernel, kernel_bound
from app.services.mesh_paths import Path, TimeMesh, lp_norm, sup_norm
from app.services.volterra_op import (
    ContinuationQuadrature,
    apply_V,
    apply_V_trunc,
    continuation_quadrature,
    invert_V,
    volterra_value_at,
)

logger = get_logger(__name__)

VectorField = Callable[[np.ndarray, np.ndarray], np.ndarray]
"""Vectorized right-hand side: f(times (n,), states (n, d)) -> (n, d)."""

L_SEARCH_CAP = 2.0**40


@dataclass(frozen=True, eq=False)
class GrowthData:
    """Sampled growth bound c, contraction density eta and uniform bound mu."""

    c: Path
    eta: Path
    mu: Path

    def __post_init__(self) -> None:
        for name in ("c", "eta", "mu"):
            values = getattr(self, name).values
            if not np.all(np.isfinite(values)) or np.any(values < 0):
                raise InvalidArgumentError(name, "growth samples must be finite and nonnegative")

    @classmethod
    def constant(
        cls, mesh: TimeMesh, c: float = 0.0, eta: float = 0.0, mu: float = 0.0
    ) -> "GrowthData":
        return cls(c=Path.scalar(mesh, c), eta=Path.scalar(mesh, eta), mu=Path.scalar(mesh, mu))


@dataclass(frozen=True)
class SolveReport:
    """Iteration bookkeeping of one solve."""

    iterations: int
    residual: float
    windows: int
    splits: int


@dataclass(frozen=True, eq=False)
class SolveResult:
    """Solution path, its density f(t, x(t)) at the nodes and the iteration report."""

    path: Path
    selection: Path
    report: SolveReport


@dataclass(frozen=True)
class LChoice:
    """Outcome of the doubling search for the weight L."""

    L: float
    phi: float
    threshold: float
    B: float
    trivial: bool


def evaluate_field(f: VectorField, times: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Evaluate a right-hand side and reject non-finite output."""
    values = np.asarray(f(times, states), dtype=float)
    values = np.array(np.broadcast_to(values, states.shape))
    if not np.all(np.isfinite(values)):
        raise NumericFailureError("right-hand side f")
    return values


def _stalled(history: list[float], window: int) -> bool:
    if len(history) > 1 and history[-1] > 1e6 * (1.0 + history[0]):
        return True
    if len(history) <= window:
        return False
    return min(history[-window:]) > 0.9 * min(history[:-window])


def _solve_free(
    quad: ContinuationQuadrature,
    f: VectorField,
    mesh: TimeMesh,
    base: np.ndarray,
    x_init: np.ndarray,
    cfg: SolverConfig,
) -> tuple[np.ndarray, np.ndarray, SolveReport]:
    d = base.shape[1] if base.ndim == 2 else 1
    times = mesh.nodes[quad.free]
    n = quad.free.size
    x = x_init.copy()
    f_done = np.zeros((n, d))
    pending: deque[tuple[int, int, int]] = deque([(0, n, 0)]) if n else deque()
    iterations = windows = splits = 0
    worst = 0.0
    while pending:
        lo, hi, depth = pending.popleft()
        rows = slice(lo * d, hi * d)
        known = base[lo:hi] + (quad.block[rows, : lo * d] @ f_done[:lo].reshape(-1)).reshape(
            hi - lo, d
        )
        local = quad.block[rows, rows]
        states = x[lo:hi].copy()
        history: list[float] = []
        residual = float("inf")
        outcome = "exhausted"
        for _ in range(cfg.max_iter):
            values = evaluate_field(f, times[lo:hi], states)
            mapped = known + (local @ values.reshape(-1)).reshape(hi - lo, d)
            residual = float(np.linalg.norm(states - mapped, axis=1).max())
            # size of the next relaxed update
            change = cfg.damping * residual
            scale = cfg.tol * (1.0 + float(np.linalg.norm(states, axis=1).max()))
            iterations += 1
            if residual <= scale and change <= scale:
                outcome = "converged"
                break
            history.append(residual)
            if hi - lo > 1 and depth < cfg.max_splits and _stalled(history, cfg.stall_window):
                outcome = "split"
                break
            states = (1.0 - cfg.damping) * states + cfg.damping * mapped
        if outcome == "converged":
            x[lo:hi] = states
            f_done[lo:hi] = values
            windows += 1
            worst = max(worst, residual)
        elif outcome == "split":
            mid = (lo + hi) // 2
            x[lo:hi] = x_init[lo:hi]
            pending.appendleft((mid, hi, depth + 1))
            pending.appendleft((lo, mid, depth + 1))
            splits += 1
            logger.debug("picard_window_split", lo=int(lo), hi=int(hi), residual=residual)
        else:
            logger.warning("picard_exhausted", iterations=iterations, residual=residual)
            raise NonConvergenceError(iterations, residual)
    return x, f_done, SolveReport(iterations, worst, windows, splits)


def _solve(
    k: Kernel,
    f: VectorField,
    h: Path,
    cfg: SolverConfig,
    w_prefix: Path | None,
    s_frac: float,
    x0: Path | None = None,
) -> SolveResult:
    mesh = h.mesh
    if not k.triangular:
        raise InvalidArgumentError("k", "equation solver needs a triangular kernel")
    if h.dim != k.d:
        raise InvalidArgumentError("h", f"expected dimension {k.d}, got {h.dim}")
    if not 0.0 <= s_frac <= 1.0:
        raise InvalidArgumentError("s_frac", f"must lie in [0, 1], got {s_frac}")
    cut = float(s_frac) * mesh.T
    quad = continuation_quadrature(k, mesh, cut)
    prefix = np.zeros_like(h.values)
    if w_prefix is not None and s_frac > 0:
        prefix = np.array(apply_V_trunc(k, w_prefix, mesh, s_frac).values)
    if quad.anchor_node is not None:
        x_cut = h.values[quad.anchor_node] + prefix[quad.anchor_node]
    else:
        assert w_prefix is not None
        x_cut = h(cut) + volterra_value_at(k, w_prefix, mesh, cut)
    f_cut = evaluate_field(f, np.array([cut]), x_cut[None, :])[0]
    free = quad.free
    base = h.values[free] + prefix[free] + np.einsum("rab,b->ra", quad.anchor, f_cut)
    start = (x0.values if x0 is not None else h.values)[free]
    x_free, f_free, report = _solve_free(quad, f, mesh, base, np.array(start), cfg)

    values = h.values + prefix
    selection = np.array(w_prefix.values) if w_prefix is not None else np.zeros_like(values)
    if quad.anchor_node is not None:
        values[quad.anchor_node] = x_cut
        selection[quad.anchor_node] = f_cut
    values[free] = x_free
    selection[free] = f_free
    logger.debug(
        "picard_converged",
        kernel=k.label,
        s_frac=s_frac,
        iterations=report.iterations,
        residual=report.residual,
        splits=report.splits,
    )
    return SolveResult(Path(mesh, values), Path(mesh, selection), report)


def solve_equation(
    k: Kernel, f: VectorField, h: Path, cfg: SolverConfig, x0: Path | None = None
) -> SolveResult:
    """
    Solve x = h + V(f(., x)) by damped Picard iteration.

    Args:
        k: Triangular kernel
        f: Vectorized right-hand side
        h: Inhomogeneity; its mesh is the solve mesh
        cfg: Iteration controls
        x0: Optional start (defaults to h)

    Returns:
        Solution, density f(t, x(t)) and the iteration report; the residual
        ||x - h - V f(., x)|| is at most tol * (1 + sup_norm(x))

    Raises:
        NonConvergenceError: If a window exhausts ``cfg.max_iter``
        NumericFailureError: If f returns NaN or Inf

    Examples:
        With k = 1, f(t, x) = x and h = 1 the solution is e^t.
    """
    return _solve(k, f, h, cfg, None, 0.0, x0)


def solve_continuation(
    k: Kernel, f: VectorField, w_prefix: Path, s_frac: float, h: Path, cfg: SolverConfig
) -> SolveResult:
    """
    Continuation solution x[s; w_prefix].

    For t >= c = s_frac * T the result solves
    x(t) = h(t) + int_0^c k(t, r) w_prefix(r) dr + int_c^t k(t, r) f(r, x(r)) dr.
    Nodes before c carry h + V(w_prefix), the path generated by the prefix.
    ``w_prefix`` is a full-mesh path; when c falls between nodes its value at
    c is interpolated from the neighbouring nodes.
    """
    return _solve(k, f, h, cfg, w_prefix, s_frac)


def homotopy_eval(
    k: Kernel,
    f: VectorField,
    y: Path,
    w_y: Path | None,
    s: float,
    h: Path,
    cfg: SolverConfig,
) -> Path:
    """
    Homotopy H(s, y): y on [0, sT] and the continuation x[s; y] on [sT, T].

    ``w_y`` may be omitted; it is then recovered from y - h through ``invert_V``.

    Raises:
        InconsistentDataError: If y differs from h + V(w_y) by more than
            tol * (1 + sup_norm(y))
    """
    mesh = y.mesh
    if w_y is None:
        w_y = invert_V(k, y - h, mesh).w
    defect = sup_norm(y - h - apply_V(k, w_y, mesh))
    if defect > cfg.tol * (1.0 + sup_norm(y)):
        raise InconsistentDataError("pair (y, w_y) does not satisfy y = h + V(w_y)", defect)
    if s == 1.0:
        return y
    if s == 0.0:
        return solve_equation(k, f, h, cfg).path
    continued = solve_continuation(k, f, w_y, s, h, cfg).path
    values = np.array(continued.values)
    head = mesh.nodes <= s * mesh.T + mesh.time_tol
    values[head] = y.values[head]
    return Path(mesh, values)


def apriori_bound(h_sup: float, B: float, c: Path, p: float) -> float:
    """
    A-priori bound on solutions from the growth bound c.

    A = h_sup + B * ||c||_p and
    M = 2^(1 - 1/p) * A * exp(p^-1 * 2^(p-1) * B^p * ||c||_p^p).

    Raises:
        InvalidArgumentError: If p < 1 or an input is negative
    """
    if p < 1:
        raise InvalidArgumentError("p", f"exponent must be >= 1, got {p}")
    if h_sup < 0 or B < 0:
        raise InvalidArgumentError("h_sup/B", "bounds must be nonnegative")
    c_norm = lp_norm(c, p)
    A = h_sup + B * c_norm
    return float(2.0 ** (1.0 - 1.0 / p) * A * np.exp(2.0 ** (p - 1.0) * (B * c_norm) ** p / p))


def dependence_constant(B: float, eta_norm: float, p: float) -> float:
    """Gronwall factor bounding ||x_1 - x_2|| / ||h_1 - h_2|| for Lipschitz density eta."""
    return float(2.0 ** (1.0 - 1.0 / p) * np.exp(2.0 ** (p - 1.0) * (B * eta_norm) ** p / p))


def _exp_cell_weights(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(phi1, phi2) with cell integral = gap * (g0 * (phi1 - phi2) + g1 * phi2)."""
    small = np.abs(x) < 1e-3
    safe = np.where(small, 1.0, x)
    phi1 = np.where(small, 1 - x / 2 + x**2 / 6 - x**3 / 24, -np.expm1(-safe) / safe)
    phi2 = np.where(
        small, 0.5 - x / 6 + x**2 / 24 - x**3 / 120, (safe + np.expm1(-safe)) / safe**2
    )
    return phi1, phi2


def phi_of_L(eta: Path, p: float, L: float) -> float:
    """
    phi(L) = sup_t e^{-Lt} (int_0^t (eta(s) e^{Ls})^p ds)^{1/p}.

    eta^p is interpolated linearly between nodes and integrated against the
    exponential in closed form, so the value is accurate for any L without
    overflow.
    """
    if p < 1:
        raise InvalidArgumentError("p", f"exponent must be >= 1, got {p}")
    g = eta.values[:, 0] ** p
    gaps = eta.mesh.steps
    rate = p * float(L)
    phi1, phi2 = _exp_cell_weights(rate * gaps)
    decay = np.exp(-rate * gaps)
    cells = gaps * (g[:-1] * (phi1 - phi2) + g[1:] * phi2)
    integral = 0.0
    best = 0.0
    for factor, cell in zip(decay, cells, strict=True):
        integral = integral * factor + cell
        best = max(best, integral)
    return float(max(best, 0.0) ** (1.0 / p))


def choose_L(k: Kernel, eta: Path, p: float, mesh: TimeMesh) -> LChoice:
    """
    Smallest L in {0, 1, 2, 4, ...} with phi(L) < 1 / (2B).

    Raises:
        ConditionSearchError: If no L up to 2^40 qualifies
    """
    B = kernel_bound(k, mesh, p)
    if B <= 0:
        return LChoice(L=0.0, phi=phi_of_L(eta, p, 0.0), threshold=float("inf"), B=B, trivial=True)
    threshold = 1.0 / (2.0 * B)
    candidate = 0.0
    while candidate <= L_SEARCH_CAP:
        phi = phi_of_L(eta, p, candidate)
        if phi < threshold:
            logger.info("weight_chosen", L=candidate, phi=phi, threshold=threshold)
            return LChoice(L=candidate, phi=phi, threshold=threshold, B=B, trivial=False)
        candidate = 1.0 if candidate == 0.0 else 2.0 * candidate
    raise ConditionSearchError(L_SEARCH_CAP)
