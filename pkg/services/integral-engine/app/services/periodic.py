"""Periodic solutions of Volterra and Hammerstein problems.

Volterra problems are handled through the Poincare-type map
P_T(x0) = x(T), where x solves the problem with inhomogeneity h(t) = U(t) x0
for a matrix-exponential family U. A fixed point of P_T generates a
T-periodic solution. Hammerstein problems with periodic data are solved
directly; periodicity of the result is measured, never enforced.
"""

from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from shared.core.logging import get_logger
from shared.exceptions import (
    InvalidArgumentError,
    NonConvergenceError,
    NotStableError,
    PreconditionViolatedError,
)
from shared.schemas import ConditionCheck, SolverConfig

from app.services.equation_solver import GrowthData, VectorField, solve_equation
from app.services.inclusion_funnel import (
    ExtremalStrategy,
    SelectionStrategy,
    SetField,
    hammerstein_selection,
    solve_inclusion_selection,
)
from app.services.kernels import (
    Kernel,
    check_kernel_periodicity,
    kernel_bound,
    kernel_qnorm_profile,
)
from app.services.mesh_paths import Path, TimeMesh, conjugate_exponent, lp_norm, sup_norm

logger = get_logger(__name__)

RightHandSide = VectorField | SetField

STRICT_CERTIFICATE = "(U3)"
RELAXED_CERTIFICATE = "(U3')"
_NORM_SLACK = 1e-10


@dataclass(frozen=True, eq=False)
class StableFamily:
    """Samples U(t_i) = exp(t_i A) of a stable matrix-exponential family."""

    generator: np.ndarray
    omega: float
    mesh: TimeMesh
    samples: np.ndarray
    norms: np.ndarray
    certificate: str

    @property
    def d(self) -> int:
        return int(self.generator.shape[0])

    @property
    def norm_at_T(self) -> float:
        return float(self.norms[-1])

    def orbit(self, x0: np.ndarray) -> Path:
        """The inhomogeneity h(t) = U(t) x0 on the mesh."""
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        return Path(self.mesh, np.einsum("nij,j->ni", self.samples, x0))


def make_stable_family(A: np.ndarray, mesh: TimeMesh, omega_claim: float) -> StableFamily:
    """
    Matrix exponentials U(t_i) = exp(t_i A) with a stability certificate.

    The strict certificate requires ||U(t_i)|| <= exp(-omega_claim t_i) at
    every node; failing that, the relaxed certificate ||U(T)|| < 1 is used.

    Raises:
        InvalidArgumentError: If A is not square or omega_claim <= 0
        NotStableError: If neither certificate holds

    Examples:
        A = -I with omega_claim = 1 certifies strictly; A = 0 fails both.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError("A", f"generator must be square, got shape {A.shape}")
    if omega_claim <= 0:
        raise InvalidArgumentError("omega_claim", "decay rate must be positive")
    samples = np.stack([expm(t * A) for t in mesh.nodes])
    norms = np.linalg.norm(samples, ord=2, axis=(1, 2))
    envelope = np.exp(-omega_claim * mesh.nodes) * (1.0 + _NORM_SLACK)
    if np.all(norms <= envelope):
        certificate = STRICT_CERTIFICATE
    elif norms[-1] < 1.0:
        certificate = RELAXED_CERTIFICATE
        logger.info("stability_relaxed", norm_at_T=float(norms[-1]), omega=omega_claim)
    else:
        raise NotStableError(float(norms[-1]))
    return StableFamily(
        generator=A,
        omega=float(omega_claim),
        mesh=mesh,
        samples=samples,
        norms=norms,
        certificate=certificate,
    )


def _as_field(rhs: RightHandSide, mesh: TimeMesh, d: int) -> SetField:
    if isinstance(rhs, SetField):
        return rhs
    return SetField.singleton(rhs, GrowthData.constant(mesh), d)


def default_strategies(d: int) -> list[SelectionStrategy]:
    """Extremal selections along +e_i and -e_i."""
    strategies: list[SelectionStrategy] = []
    for i in range(d):
        axis = np.zeros(d)
        axis[i] = 1.0
        strategies.append(ExtremalStrategy(axis, name=f"extremal(+e{i})"))
        strategies.append(ExtremalStrategy(-axis, name=f"extremal(-e{i})"))
    return strategies


def _branch(
    k: Kernel,
    rhs: RightHandSide,
    U: StableFamily,
    cfg: SolverConfig,
    strategy: SelectionStrategy | None,
) -> Callable[[np.ndarray], tuple[Path, Path]]:
    """x0 -> (solution, selection) with h = U(.) x0 for one fixed selection strategy."""
    point_map = rhs.point_map if isinstance(rhs, SetField) else rhs
    if point_map is not None:

        def solve_single(x0: np.ndarray) -> tuple[Path, Path]:
            result = solve_equation(k, point_map, U.orbit(x0), cfg)
            return result.path, result.selection

        return solve_single
    assert isinstance(rhs, SetField)
    chosen = strategy or default_strategies(rhs.d)[0]

    def solve(x0: np.ndarray) -> tuple[Path, Path]:
        sample = solve_inclusion_selection(k, rhs, U.orbit(x0), chosen, cfg)
        if not sample.accepted:
            raise NonConvergenceError(sample.iterations, sample.eq_residual, context="selection")
        return sample.x, sample.w

    return solve


def poincare_map(
    k: Kernel,
    rhs: RightHandSide,
    U: StableFamily,
    x0: np.ndarray,
    cfg: SolverConfig,
    strategies: Sequence[SelectionStrategy] | None = None,
) -> np.ndarray:
    """
    P_T(x0) = x(T) for the solution driven by h(t) = U(t) x0.

    Single-valued right-hand sides return a vector (d,). Set fields return
    one value per selection strategy, shape (n_strategies, d).

    Raises:
        NonConvergenceError: If an inner solve fails

    Examples:
        With f = 0 the map is x0 -> U(T) x0.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if isinstance(rhs, SetField) and rhs.point_map is None:
        chosen = list(strategies) if strategies else default_strategies(rhs.d)
        return np.stack([_branch(k, rhs, U, cfg, s)(x0)[0].values[-1] for s in chosen])
    return np.array(_branch(k, rhs, U, cfg, None)(x0)[0].values[-1])


def contraction_threshold(p: float) -> float:
    """2^(2/p - 3) e^(-1/p): (2e)^-1 at p = 1, e^(-1/2) / 4 at p = 2."""
    if p < 1:
        raise InvalidArgumentError("p", f"exponent must be >= 1, got {p}")
    return float(2.0 ** (2.0 / p - 3.0) * np.exp(-1.0 / p))


def optimal_omega(p: float, T: float) -> float:
    """Maximiser omega_0 = (1 + (p - 1) ln 2) / (p T) of ``threshold_profile``."""
    return float((1.0 + (p - 1.0) * np.log(2.0)) / (p * T))


def threshold_profile(omega: float, p: float, T: float) -> float:
    """
    xi(omega) = 2^(1/p - 2) ((1 - p) ln 2 + p omega T)^(1/p) e^(-omega T).

    Zero where omega T <= (1 - 1/p) ln 2. The maximum over omega sits at
    ``optimal_omega`` and equals ``contraction_threshold(p)``.
    """
    base = (1.0 - p) * np.log(2.0) + p * omega * T
    if base <= 0:
        return 0.0
    return float(2.0 ** (1.0 / p - 2.0) * base ** (1.0 / p) * np.exp(-omega * T))


def contraction_condition(B: float, eta_norm: float, p: float) -> ConditionCheck:
    """B ||eta||_p < 2^(2/p - 3) e^(-1/p)."""
    value = B * eta_norm
    threshold = contraction_threshold(p)
    return ConditionCheck(
        name="periodic-contraction",
        passed=bool(value < threshold),
        value=value,
        threshold=threshold,
        margin=threshold - value,
        detail=f"B*||eta||_p with p={p:g}",
    )


def check_contraction_condition(k: Kernel, eta: Path, p: float, mesh: TimeMesh) -> ConditionCheck:
    """Sampled contraction condition for the Volterra periodic finder."""
    return contraction_condition(kernel_bound(k, mesh, p), lp_norm(eta, p), p)


def alternative_contraction_check(
    B: float, rho_norm: float, omega: float, T: float, p: float
) -> ConditionCheck:
    """
    Weighted variant for fields contracting like e^(omega (t - T)) rho(t).

    Passes when omega T > (1 - 1/p) ln 2 and
    B ||rho||_p < 2^(1/p - 2) ((1 - p) ln 2 + p omega T)^(1/p); the detail
    carries the contraction factor 2^((p-1)/p) e^(-omega T + 2^(2p-1) (B ||rho||_p)^p / p).
    """
    base = (1.0 - p) * np.log(2.0) + p * omega * T
    threshold = float(2.0 ** (1.0 / p - 2.0) * base ** (1.0 / p)) if base > 0 else 0.0
    value = B * rho_norm
    factor = 2.0 ** ((p - 1.0) / p) * np.exp(-omega * T + 2.0 ** (2.0 * p - 1.0) * value**p / p)
    return ConditionCheck(
        name="weighted-contraction",
        passed=bool(base > 0 and value < threshold),
        value=value,
        threshold=threshold,
        margin=threshold - value,
        detail=f"contraction factor {float(factor):.6g}",
    )


def invariant_radius(k: Kernel, U: StableFamily, mu: Path, p: float) -> float:
    """
    Radius R of a ball D(0, R) mapped into itself by P_T.

    R = M / (1 - e^(-omega T)) under the strict certificate and
    R = M / (1 - ||U(T)||) under the relaxed one, M = ||k(T, .)||_q ||mu||_p.
    """
    q = conjugate_exponent(p)
    M = float(kernel_qnorm_profile(k, U.mesh, q).profile.values[-1, 0]) * lp_norm(mu, p)
    if U.certificate == STRICT_CERTIFICATE:
        return M / float(-np.expm1(-U.omega * U.mesh.T))
    return M / (1.0 - U.norm_at_T)


@dataclass(frozen=True, eq=False)
class PeriodicResult:
    """Fixed point of P_T and the periodic orbit it generates."""

    x0: np.ndarray
    orbit: Path
    selection: Path
    fixed_point_residual: float
    periodicity_residual: float
    iterations: int
    contraction_estimate: float
    accepted: bool
    radius: float
    strategy: str = "single-valued"
    checks: list[ConditionCheck] = field(default_factory=list)


def _enforce(check: ConditionCheck, strict: bool) -> None:
    if check.passed:
        return
    if strict:
        raise PreconditionViolatedError(check.name, check.detail)
    logger.warning(
        "precondition_failed_proceeding",
        condition=check.name,
        value=check.value,
        threshold=check.threshold,
    )


def find_periodic_volterra(
    k: Kernel,
    rhs: RightHandSide,
    U: StableFamily,
    mu: Path,
    cfg: SolverConfig,
    eta: Path | None = None,
    strategy: SelectionStrategy | None = None,
    strict: bool = True,
) -> PeriodicResult:
    """
    Iterate x0 <- P_T(x0) from x0 = 0 inside the invariant ball D(0, R).

    Args:
        k: Triangular kernel on the mesh of U
        rhs: Single-valued field or set field
        U: Stable family supplying h(t) = U(t) x0
        mu: Uniform bound of the field (sets the radius R)
        cfg: Iteration controls; cfg.p is the integrability exponent
        eta: Lipschitz density; when given the contraction condition is checked
        strategy: Selection rule for set fields
        strict: Raise instead of warning on a failed condition

    Returns:
        PeriodicResult with orbit(0) = x0 and |orbit(T) - x0| <= tol

    Raises:
        NonConvergenceError: If the iteration budget runs out
        PreconditionViolatedError: If strict and the contraction condition fails

    Examples:
        U(t) = e^-t, k = e^-(t-s), f = 1, T = 1 has the fixed point x0 = 1.
    """
    checks: list[ConditionCheck] = []
    if eta is not None:
        check = check_contraction_condition(k, eta, cfg.p, U.mesh)
        checks.append(check)
        _enforce(check, strict)
    radius = invariant_radius(k, U, mu, cfg.p)
    solve = _branch(k, rhs, U, cfg, strategy)
    label = strategy.name if strategy is not None else "single-valued"

    x0 = np.zeros(U.d)
    previous: float | None = None
    estimate = 0.0
    residual = float("inf")
    for iteration in range(1, cfg.max_iter + 1):
        orbit, selection = solve(x0)
        image = orbit.values[-1]
        residual = float(np.linalg.norm(image - x0))
        if previous is not None and previous > 0:
            estimate = residual / previous
        if residual <= cfg.tol * (1.0 + float(np.linalg.norm(x0))):
            periodicity = float(np.linalg.norm(orbit.values[-1] - orbit.values[0]))
            logger.info(
                "periodic_orbit_found",
                strategy=label,
                iterations=iteration,
                residual=residual,
                contraction_estimate=estimate,
            )
            return PeriodicResult(
                x0=np.array(x0),
                orbit=orbit,
                selection=selection,
                fixed_point_residual=residual,
                periodicity_residual=periodicity,
                iterations=iteration,
                contraction_estimate=estimate,
                accepted=True,
                radius=radius,
                strategy=label,
                checks=checks,
            )
        previous = residual
        norm = float(np.linalg.norm(image))
        if radius > 0 and norm > radius:
            logger.debug("poincare_projected", norm=norm, radius=radius)
            image = image * (radius / norm)
        x0 = image
    logger.warning(
        "periodic_search_exhausted",
        strategy=label,
        residual=residual,
        contraction_estimate=estimate,
    )
    raise NonConvergenceError(cfg.max_iter, residual, context="poincare")


def find_periodic_branches(
    k: Kernel,
    F: SetField,
    U: StableFamily,
    mu: Path,
    cfg: SolverConfig,
    strategies: Sequence[SelectionStrategy] | None = None,
    eta: Path | None = None,
    strict: bool = True,
    threads: int = 1,
) -> list[PeriodicResult]:
    """One periodic search per selection strategy, results in strategy order."""
    chosen = list(strategies) if strategies else default_strategies(F.d)

    def search(strategy: SelectionStrategy) -> PeriodicResult:
        return find_periodic_volterra(k, F, U, mu, cfg, eta, strategy, strict)

    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        return list(pool.map(search, chosen))


@dataclass(frozen=True, eq=False)
class ContractionProbe:
    """Measured ratios |P(x1) - P(x2)| / |x1 - x2| over random pairs of D(0, R)."""

    ratios: np.ndarray
    radius: float
    max_image_norm: float

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max())


def _ball_point(rng: np.random.Generator, d: int, radius: float) -> np.ndarray:
    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction)
    return radius * rng.random() ** (1.0 / d) * direction


def measure_contraction(
    k: Kernel,
    rhs: RightHandSide,
    U: StableFamily,
    mu: Path,
    cfg: SolverConfig,
    n_pairs: int = 20,
    seed: int = 0,
    strategy: SelectionStrategy | None = None,
    threads: int = 1,
) -> ContractionProbe:
    """Probe P_T on ``n_pairs`` seeded pairs of D(0, R); pair i uses default_rng([seed, i])."""
    radius = invariant_radius(k, U, mu, cfg.p)
    solve = _branch(k, rhs, U, cfg, strategy)
    solve(np.zeros(U.d))

    def probe(index: int) -> tuple[float, float]:
        rng = np.random.default_rng([seed, index])
        x1 = _ball_point(rng, U.d, radius)
        x2 = _ball_point(rng, U.d, radius)
        y1 = solve(x1)[0].values[-1]
        y2 = solve(x2)[0].values[-1]
        gap = float(np.linalg.norm(x1 - x2))
        ratio = float(np.linalg.norm(y1 - y2)) / gap if gap > 0 else 0.0
        return ratio, float(max(np.linalg.norm(y1), np.linalg.norm(y2)))

    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        outcomes = list(pool.map(probe, range(n_pairs)))
    ratios = np.array([ratio for ratio, _ in outcomes])
    largest = max((norm for _, norm in outcomes), default=0.0)
    logger.info("contraction_measured", pairs=n_pairs, max_ratio=float(ratios.max()))
    return ContractionProbe(ratios=ratios, radius=radius, max_image_norm=largest)


def hammerstein_condition(B: float, eta_norm: float) -> ConditionCheck:
    """2 B ||eta||_p < 1."""
    value = 2.0 * B * eta_norm
    return ConditionCheck(
        name="hammerstein-contraction",
        passed=bool(value < 1.0),
        value=value,
        threshold=1.0,
        margin=1.0 - value,
        detail=f"2*B*||eta||_p with B={B:.6g}, ||eta||_p={eta_norm:.6g}",
    )


def check_hammerstein_condition(k: Kernel, eta: Path, p: float, mesh: TimeMesh) -> ConditionCheck:
    """
    Sampled Hammerstein contraction condition with B over the full square.

    Raises:
        InvalidArgumentError: For a triangular kernel
    """
    if k.triangular:
        raise InvalidArgumentError("k", "the Hammerstein condition needs a square kernel")
    return hammerstein_condition(kernel_bound(k, mesh, p), lp_norm(eta, p))


@dataclass(frozen=True, eq=False)
class HammersteinResult:
    """Solution of the Hammerstein problem and its measured periodicity."""

    path: Path
    selection: Path
    periodicity_residual: float
    iterations: int
    residual: float
    periodic: bool
    radius: float | None
    checks: list[ConditionCheck] = field(default_factory=list)


def _periodicity_checks(k: Kernel, h: Path, cfg: SolverConfig) -> list[ConditionCheck]:
    tol = cfg.tol
    h_defect = float(np.linalg.norm(h.values[0] - h.values[-1]))
    k_defect = check_kernel_periodicity(k, h.mesh, conjugate_exponent(cfg.p))
    return [
        ConditionCheck(
            name="periodic-h",
            passed=bool(h_defect <= tol),
            value=h_defect,
            threshold=tol,
            margin=tol - h_defect,
            detail="|h(0) - h(T)|",
        ),
        ConditionCheck(
            name="(k6')",
            passed=bool(k_defect <= tol),
            value=k_defect,
            threshold=tol,
            margin=tol - k_defect,
            detail="||k(0,.) - k(T,.)||_q",
        ),
    ]


def solve_hammerstein_periodic(
    k: Kernel,
    rhs: RightHandSide,
    h: Path,
    cfg: SolverConfig,
    eta: Path | None = None,
    strategy: SelectionStrategy | None = None,
    strict: bool = True,
) -> HammersteinResult:
    """
    Solve x = h + V_T(w), w(t) in F(t, x(t)), and report |x(0) - x(T)|.

    Periodicity is checked after convergence, not imposed by the iteration;
    the run is accepted when |x(0) - x(T)| <= tol * (1 + sup_norm(x)).

    Raises:
        InvalidArgumentError: For a triangular kernel
        PreconditionViolatedError: If strict and h, k or the contraction
            condition fail their sampled checks, or the converged solution is
            not periodic
        NonConvergenceError: If the iteration budget runs out

    Examples:
        With f = 0 the result is h itself.
    """
    if k.triangular:
        raise InvalidArgumentError("k", "the Hammerstein problem needs a square kernel")
    mesh = h.mesh
    checks = _periodicity_checks(k, h, cfg)
    if eta is not None:
        checks.append(check_hammerstein_condition(k, eta, cfg.p, mesh))
    for check in checks:
        _enforce(check, strict)

    F = _as_field(rhs, mesh, h.dim)
    chosen = strategy or ExtremalStrategy(np.ones(h.dim))
    sample = hammerstein_selection(k, F, h, chosen, cfg)
    if not sample.accepted:
        logger.warning("hammerstein_exhausted", iterations=sample.iterations)
        raise NonConvergenceError(sample.iterations, sample.eq_residual, context="hammerstein")

    x = sample.x
    periodicity = float(np.linalg.norm(x.values[0] - x.values[-1]))
    scale = cfg.tol * (1.0 + sup_norm(x))
    periodic = periodicity <= scale
    radius = None
    if isinstance(rhs, SetField):
        radius = sup_norm(h) + kernel_bound(k, mesh, cfg.p) * lp_norm(rhs.growth.mu, cfg.p)
    logger.info(
        "hammerstein_solved",
        iterations=sample.iterations,
        periodicity_residual=periodicity,
        periodic=periodic,
    )
    check = ConditionCheck(
        name="periodic-solution",
        passed=bool(periodic),
        value=periodicity,
        threshold=scale,
        margin=scale - periodicity,
        detail="|x(0) - x(T)| after convergence",
    )
    checks.append(check)
    _enforce(check, strict)
    return HammersteinResult(
        path=x,
        selection=sample.w,
        periodicity_residual=periodicity,
        iterations=sample.iterations,
        residual=sample.eq_residual,
        periodic=periodic,
        radius=radius,
        checks=checks,
    )
