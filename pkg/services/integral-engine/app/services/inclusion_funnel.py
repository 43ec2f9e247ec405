"""Set-valued right-hand sides and sampled solution funnels.

A funnel member is a pair (x, w) with x = h + V(w) and w(t) in F(t, x(t)) at
every node. Members are produced by a fixed-point iteration over a selection
strategy; the strategy data is piecewise constant in t and drawn from the
seed stream (seed, sample index), so funnels replay bit for bit.
"""

import itertools
from abc import ABC, abstractmethod
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from shared.core.config import settings
from shared.core.logging import get_logger
from shared.exceptions import EmptyFunnelError, InvalidArgumentError, NumericFailureError
from shared.schemas import ConditionCheck, SolverConfig

from app.services.convex_sets import (
    Ball,
    ConvexSet,
    hausdorff_on_directions,
    normalize,
)
from app.services.equation_solver import GrowthData, VectorField, evaluate_field
from app.services.kernels import Kernel, continuity_modulus_within, kernel_bound
from app.services.mesh_paths import (
    Path,
    PathFamily,
    TimeMesh,
    conjugate_exponent,
    covering_profile,
    lp_norm,
    modulus_of_continuity,
    semidistance,
    sup_norm,
)
from app.services.volterra_op import apply_V, apply_V_T, hammerstein_matrix, volterra_matrix

logger = get_logger(__name__)

SetEval = Callable[[np.ndarray, np.ndarray], ConvexSet]
"""Vectorized set-valued map: F(times (n,), states (n, d)) -> sets with batch shape (n,)."""

RESAMPLE_FACTOR = 4


@dataclass(frozen=True, eq=False)
class SetField:
    """Set-valued right-hand side F with its growth data."""

    evaluate: SetEval
    growth: GrowthData
    d: int
    lipschitz_meta: float | None = None
    label: str = "F"
    point_map: VectorField | None = None

    def __call__(self, times: np.ndarray, states: np.ndarray) -> ConvexSet:
        sets = self.evaluate(np.asarray(times, dtype=float), np.asarray(states, dtype=float))
        if sets.dim != self.d:
            raise InvalidArgumentError("F", f"field {self.label} returned sets in R^{sets.dim}")
        if not np.all(sets.is_valid()):
            raise NumericFailureError(f"set field {self.label}")
        return sets

    @property
    def is_singleton(self) -> bool:
        return self.point_map is not None

    @classmethod
    def singleton(
        cls, f: VectorField, growth: GrowthData, d: int, label: str = "f"
    ) -> "SetField":
        """Adapt a single-valued right-hand side: F(t, x) = {f(t, x)}."""

        def evaluate(times: np.ndarray, states: np.ndarray) -> ConvexSet:
            return Ball(evaluate_field(f, times, states), 0.0)

        return cls(evaluate=evaluate, growth=growth, d=d, label=label, point_map=f)


class SelectionStrategy(ABC):
    """Rule picking w(t_i) from F(t_i, x(t_i)) at every node."""

    name: str = "strategy"

    def initial(self, mesh: TimeMesh, d: int) -> np.ndarray:
        return np.zeros((mesh.size, d))

    @abstractmethod
    def select(self, sets: ConvexSet, previous: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class ExtremalStrategy(SelectionStrategy):
    """Support point in a fixed direction (d,) or a node-wise direction (N, d)."""

    directions: np.ndarray
    name: str = "extremal"

    def __post_init__(self) -> None:
        object.__setattr__(self, "directions", normalize(self.directions))

    def select(self, sets: ConvexSet, previous: np.ndarray) -> np.ndarray:
        return sets.support(self.directions)[1]


@dataclass(frozen=True, eq=False)
class ProjectRelaxStrategy(SelectionStrategy):
    """Metric projection of the previous selection; starts from ``anchor``."""

    anchor: np.ndarray
    name: str = "project-relax"

    def initial(self, mesh: TimeMesh, d: int) -> np.ndarray:
        return np.array(np.broadcast_to(np.asarray(self.anchor, dtype=float), (mesh.size, d)))

    def select(self, sets: ConvexSet, previous: np.ndarray) -> np.ndarray:
        return sets.project(previous)


def bang_bang_directions(
    mesh: TimeMesh, d: int, seed: int, index: int, n_samples: int
) -> np.ndarray:
    """
    Node-wise directions u on [0, tau) and -u on [tau, T].

    The switch time tau is stratified over the sample index so that n_samples
    draws spread across [0, T]; d = 1 uses u = +1, higher dimensions draw a
    uniform unit vector. The stream is ``default_rng([seed, index])``.
    """
    rng = np.random.default_rng([seed, index])
    stratum = index % max(n_samples, 1)
    tau = mesh.T * (stratum + rng.random()) / max(n_samples, 1)
    if d == 1:
        u = np.ones(1)
    else:
        u = normalize(rng.normal(size=d))
    before = mesh.nodes < tau
    return np.where(before[:, None], u, -u)


def make_strategy(
    kind: str, mesh: TimeMesh, d: int, seed: int, index: int, n_samples: int, scale: float
) -> SelectionStrategy:
    """Seeded strategy for sample ``index``; project-relax anchors sit at distance ``scale``."""
    directions = bang_bang_directions(mesh, d, seed, index, n_samples)
    if kind == "extremal":
        return ExtremalStrategy(directions)
    if kind == "project-relax":
        return ProjectRelaxStrategy(anchor=scale * directions)
    raise InvalidArgumentError("strategy", f"unknown strategy '{kind}'")


@dataclass(frozen=True, eq=False)
class FunnelSample:
    """One selection run with its residual report."""

    sample_id: int
    x: Path
    w: Path
    eq_residual: float
    incl_residual: float
    iterations: int
    accepted: bool
    strategy: str = "extremal"


@dataclass(frozen=True, eq=False)
class Funnel:
    """Accepted samples of the solution set plus the rejected runs."""

    samples: tuple[FunnelSample, ...]
    rejected: tuple[FunnelSample, ...] = ()
    tag: dict[str, str] = field(default_factory=dict)
    tol: float = settings.default_tol

    @property
    def mesh(self) -> TimeMesh:
        return self.samples[0].x.mesh

    def family(self) -> PathFamily:
        return PathFamily(tuple(sample.x for sample in self.samples))


def _acceptance_scale(tol: float, x: np.ndarray) -> float:
    return tol * (1.0 + float(np.linalg.norm(x, axis=1).max()))


def selection_fixed_point(
    matrix: np.ndarray,
    F: SetField,
    h: Path,
    strategy: SelectionStrategy,
    cfg: SolverConfig,
    sample_id: int = 0,
) -> FunnelSample:
    """
    Iterate w <- select(F(t, x)), x <- h + M w for an operator matrix M.

    The returned x is the iterate the final selection w was taken at, so
    w(t_i) lies in F(t_i, x(t_i)) up to rounding and the equation residual
    ||x - h - M w|| carries the convergence error. A run that exhausts the budget or
    blows up comes back with ``accepted=False``.
    """
    mesh = h.mesh
    nodes = mesh.nodes
    d = h.dim

    def image(selection: np.ndarray) -> np.ndarray:
        return h.values + (matrix @ selection.reshape(-1)).reshape(mesh.size, d)

    x = np.array(h.values)
    w = strategy.initial(mesh, d)
    selected_at = x
    residual = float("inf")
    first = None
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        w = strategy.select(F(nodes, x), w)
        selected_at = x
        mapped = image(w)
        residual = float(np.linalg.norm(mapped - x, axis=1).max())
        if residual <= _acceptance_scale(cfg.tol, x):
            break
        first = residual if first is None else first
        if not np.isfinite(residual) or residual > 1e6 * (1.0 + first):
            break
        x = (1.0 - cfg.damping) * x + cfg.damping * mapped

    x = selected_at
    if not np.all(np.isfinite(x)):
        raise NumericFailureError(f"selection iteration for {F.label}")
    eq_residual = float(np.linalg.norm(x - image(w), axis=1).max())
    incl_residual = float(F(nodes, x).distance(w).max())
    scale = _acceptance_scale(cfg.tol, x)
    accepted = residual <= scale and eq_residual <= scale and incl_residual <= scale
    return FunnelSample(
        sample_id=sample_id,
        x=Path(mesh, x),
        w=Path(mesh, w),
        eq_residual=eq_residual,
        incl_residual=incl_residual,
        iterations=iterations,
        accepted=accepted,
        strategy=strategy.name,
    )


def solve_inclusion_selection(
    k: Kernel,
    F: SetField,
    h: Path,
    strategy: SelectionStrategy,
    cfg: SolverConfig,
    sample_id: int = 0,
) -> FunnelSample:
    """
    One solution of x(t) in h(t) + int_0^t k(t, s) F(s, x(s)) ds.

    Args:
        k: Triangular kernel
        F: Set field
        h: Inhomogeneity (its mesh is the solve mesh)
        strategy: Selection rule
        cfg: Iteration controls
        sample_id: Index recorded on the sample

    Returns:
        A sample flagged ``accepted`` when both residuals are within tolerance

    Examples:
        F = [-1, 1], k = 1, h = 0 and ExtremalStrategy([1.0]) give x(t) = t, w = 1.
    """
    if h.dim != F.d or k.d != F.d:
        raise InvalidArgumentError("F", "kernel, field and h must share the dimension")
    sample = selection_fixed_point(volterra_matrix(k, h.mesh), F, h, strategy, cfg, sample_id)
    if not sample.accepted:
        logger.warning(
            "selection_rejected",
            sample_id=sample_id,
            strategy=strategy.name,
            iterations=sample.iterations,
            eq_residual=sample.eq_residual,
            incl_residual=sample.incl_residual,
        )
    return sample


def sample_funnel(
    k: Kernel,
    F: SetField,
    h: Path,
    mesh: TimeMesh,
    n_samples: int,
    seed: int,
    cfg: SolverConfig,
    strategy: str = "extremal",
    threads: int = 1,
) -> Funnel:
    """
    Sample the solution funnel with seeded bang-bang selections.

    Samples are drawn with indices 0, 1, ... until ``n_samples`` are
    accepted or 4 * n_samples attempts were made; results are aggregated in
    index order whatever the thread count.

    Raises:
        InvalidArgumentError: If n_samples < 1 or h lives on another mesh
        EmptyFunnelError: If no sample is accepted
    """
    if n_samples < 1:
        raise InvalidArgumentError("n_samples", "at least one sample is required")
    if not h.mesh.compatible(mesh):
        raise InvalidArgumentError("mesh", "h must be sampled on the funnel mesh")
    matrix = volterra_matrix(k, mesh)
    scale = 1.0 + float(F.growth.mu.values.max())

    def run(index: int) -> FunnelSample:
        chosen = make_strategy(strategy, mesh, F.d, seed, index, n_samples, scale)
        sample = selection_fixed_point(matrix, F, h, chosen, cfg, index)
        if not sample.accepted:
            logger.warning("funnel_sample_rejected", sample_id=index, strategy=strategy)
        return sample

    outcomes: list[FunnelSample] = []
    cap = RESAMPLE_FACTOR * n_samples
    next_index = 0
    while next_index < cap:
        missing = n_samples - sum(sample.accepted for sample in outcomes)
        if missing <= 0:
            break
        batch = range(next_index, min(next_index + missing, cap))
        with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
            outcomes.extend(pool.map(run, batch))
        next_index = batch.stop

    accepted = tuple(sample for sample in outcomes if sample.accepted)
    rejected = tuple(sample for sample in outcomes if not sample.accepted)
    if not accepted:
        raise EmptyFunnelError(len(rejected))
    logger.info(
        "funnel_sampled",
        field=F.label,
        kernel=k.label,
        accepted=len(accepted),
        rejected=len(rejected),
        seed=seed,
    )
    tag = {
        "kernel": k.label,
        "field": F.label,
        "strategy": strategy,
        "seed": str(seed),
        "mesh": f"T={mesh.T:g},N={mesh.size}",
    }
    return Funnel(samples=accepted, rejected=rejected, tag=tag, tol=cfg.tol)


@dataclass(frozen=True)
class FunnelVerification:
    """Independently recomputed residual maxima over accepted members."""

    eq_residual: float
    incl_residual: float
    passed: bool


def verify_funnel(
    funnel: Funnel, k: Kernel, F: SetField, h: Path, operator: str = "volterra"
) -> FunnelVerification:
    """Recompute ||x - h - V w|| and max dist(w, F(t, x)) for every accepted member."""
    apply = apply_V if operator == "volterra" else apply_V_T
    nodes = h.mesh.nodes
    eq_worst = 0.0
    incl_worst = 0.0
    passed = True
    for sample in funnel.samples:
        eq = sup_norm(sample.x - h - apply(k, sample.w, h.mesh))
        incl = float(F(nodes, sample.x.values).distance(sample.w.values).max())
        eq_worst = max(eq_worst, eq)
        incl_worst = max(incl_worst, incl)
        # allow the slack of the convergence test on top of the declared tolerance
        scale = 2.0 * _acceptance_scale(funnel.tol, sample.x.values)
        passed = passed and eq <= scale and incl <= scale + sample.eq_residual
    return FunnelVerification(eq_residual=eq_worst, incl_residual=incl_worst, passed=passed)


def probe_offsets(d: int, r: float) -> np.ndarray:
    """Center, the 2d axis points and (for d > 1) the 2^d scaled diagonals of B(0, r)."""
    rows = [np.zeros(d)]
    for i in range(d):
        axis = np.zeros(d)
        axis[i] = r
        rows.extend([axis, -axis])
    if d > 1:
        for signs in itertools.product((1.0, -1.0), repeat=d):
            rows.append(r * np.asarray(signs) / np.sqrt(d))
    return np.vstack(rows)


def inflate_field(F: SetField, r: float) -> SetField:
    """
    F_r(t, x) = a set containing F(t, y) for every probe y of B(x, r).

    Probe values are combined with the enclosing rule of their set type:
    boxes take the bounding box, balls keep the center value and widen the
    radius, polytopes pool their vertices. r = 0 returns F itself.

    Raises:
        InvalidArgumentError: If r < 0 or probes return different set types
    """
    if r < 0:
        raise InvalidArgumentError("r", f"inflation radius must be nonnegative, got {r}")
    if r == 0:
        return F
    offsets = probe_offsets(F.d, float(r))

    def evaluate(times: np.ndarray, states: np.ndarray) -> ConvexSet:
        sets = [F(times, states + offset) for offset in offsets]
        kind = type(sets[0])
        if any(type(s) is not kind for s in sets):
            raise InvalidArgumentError("F", "probe values mix set types")
        return kind.enclosing(sets)

    return SetField(
        evaluate=evaluate,
        growth=F.growth,
        d=F.d,
        lipschitz_meta=F.lipschitz_meta,
        label=f"{F.label}+B({r:.6g})",
    )


def ladder_radius(n: int) -> float:
    """r_n = 3^-n."""
    return 3.0 ** (-n)


def nesting_defect_bound(n: int, p: float, B: float, eta_norm: float) -> float:
    """3 r_n (exp(2^(2p-1) B^p ||eta||_p^p) - 1)^(1/p)."""
    growth = np.expm1(2.0 ** (2.0 * p - 1.0) * (B * eta_norm) ** p)
    return float(3.0 * ladder_radius(n) * growth ** (1.0 / p))


def sample_ladder(
    k: Kernel,
    F: SetField,
    h: Path,
    levels: int,
    n_samples: int,
    seed: int,
    cfg: SolverConfig,
    strategy: str = "extremal",
    threads: int = 1,
) -> list[Funnel]:
    """Funnels of the inflated fields F(t, B(x, 3 r_n)) for n = 1..levels, one seed for all."""
    funnels = []
    for n in range(1, levels + 1):
        inflated = inflate_field(F, 3.0 * ladder_radius(n))
        funnel = sample_funnel(k, inflated, h, h.mesh, n_samples, seed, cfg, strategy, threads)
        funnels.append(funnel)
        logger.info("ladder_level_sampled", level=n, radius=ladder_radius(n))
    return funnels


@dataclass(frozen=True)
class NestingRow:
    level: int
    radius: float
    semidistance: float
    defect_bound: float


@dataclass(frozen=True)
class NestingReport:
    """Directed semidistances funnel_{n+1} -> funnel_n against the predicted defect."""

    rows: tuple[NestingRow, ...]
    nonincreasing: bool
    within_bound: bool


def nesting_report(
    funnels: Sequence[Funnel], p: float, B: float, eta_norm: float, slack: float = 1e-9
) -> NestingReport:
    """
    Compare consecutive ladder funnels.

    Raises:
        InvalidArgumentError: If the funnels do not share a mesh
    """
    if not funnels:
        raise InvalidArgumentError("funnels", "at least one funnel is required")
    mesh = funnels[0].mesh
    if any(not funnel.mesh.compatible(mesh) for funnel in funnels):
        raise InvalidArgumentError("funnels", "all funnels must share one mesh")
    families = [funnel.family() for funnel in funnels]
    rows = []
    for n in range(1, len(families)):
        rows.append(
            NestingRow(
                level=n,
                radius=ladder_radius(n),
                semidistance=semidistance(families[n], families[n - 1]),
                defect_bound=nesting_defect_bound(n, p, B, eta_norm),
            )
        )
    distances = [row.semidistance for row in rows]
    nonincreasing = all(b <= a + slack for a, b in itertools.pairwise(distances))
    within = all(row.semidistance <= row.defect_bound + slack for row in rows)
    return NestingReport(rows=tuple(rows), nonincreasing=nonincreasing, within_bound=within)


def funnel_radius(h: Path, B: float, mu: Path, p: float) -> float:
    """Radius ||h||_sup + B ||mu||_p of a ball holding every solution."""
    return sup_norm(h) + B * lp_norm(mu, p)


def equicontinuity_bound(
    k: Kernel, mesh: TimeMesh, mu: Path, h: Path, p: float, xi: float
) -> float:
    """
    Bound on |x(t) - x(tau)| for |t - tau| <= xi over all solutions.

    omega_h(xi) + c_q(xi) ||mu||_p + B max(mu) xi^(1/p), where c_q is the
    sampled kernel modulus over node gaps up to xi.
    """
    q = conjugate_exponent(p)
    omega_h = modulus_of_continuity(PathFamily((h,)), xi)
    kernel_part = continuity_modulus_within(k, mesh, q, xi) * lp_norm(mu, p)
    tail = kernel_bound(k, mesh, p) * float(mu.values.max()) * xi ** (1.0 / p)
    return float(omega_h + kernel_part + tail)


@dataclass(frozen=True, eq=False)
class StructureReport:
    """Compactness and connectedness proxies of a sampled funnel."""

    xi: float
    modulus: float
    equicontinuity_bound: float
    eps_ladder: tuple[float, ...]
    covering_numbers: tuple[int, ...]
    diameter: float
    gap_profile: np.ndarray | None = None
    cross_section_diameter: np.ndarray | None = None

    @property
    def max_gap_at_T(self) -> float | None:
        return None if self.gap_profile is None else float(self.gap_profile[-1])


def default_eps_ladder(diameter: float, tol: float) -> list[float]:
    if diameter <= 0:
        return [2.0 * tol, 1e-6, 1e-3, 1.0]
    return [diameter * 2.0 ** (-j) for j in range(7)]


def structure_diagnostics(
    funnel: Funnel,
    k: Kernel,
    F: SetField,
    h: Path,
    p: float,
    eps_ladder: Sequence[float] | None = None,
) -> StructureReport:
    """
    Equicontinuity, covering numbers and (d = 1) cross-section gaps of a funnel.

    The modulus is taken at xi = mesh step and compared with
    ``equicontinuity_bound``; gap analysis sorts the sampled values per node
    and reports the largest consecutive gap.
    """
    if not funnel.samples:
        raise InvalidArgumentError("funnel", "funnel has no accepted samples")
    mesh = funnel.mesh
    family = funnel.family()
    xi = mesh.max_step
    modulus = modulus_of_continuity(family, xi)
    bound = equicontinuity_bound(k, mesh, F.growth.mu, h, p, xi)
    diameter = family.diameter()
    ladder = list(eps_ladder) if eps_ladder else default_eps_ladder(diameter, funnel.tol)
    counts = covering_profile(family, ladder)
    gaps = sections = None
    if F.d == 1:
        values = np.sort(family.stack()[:, :, 0], axis=0)
        sections = values[-1] - values[0]
        gaps = np.diff(values, axis=0).max(axis=0) if len(family) > 1 else np.zeros(mesh.size)
    logger.info(
        "funnel_structure",
        modulus=modulus,
        bound=bound,
        diameter=diameter,
        max_gap=None if gaps is None else float(gaps.max()),
    )
    return StructureReport(
        xi=xi,
        modulus=modulus,
        equicontinuity_bound=bound,
        eps_ladder=tuple(float(eps) for eps in ladder),
        covering_numbers=tuple(counts),
        diameter=diameter,
        gap_profile=gaps,
        cross_section_diameter=sections,
    )


def e1_condition(B: float, eta_norm: float) -> ConditionCheck:
    """4 B ||eta||_p < 1, margin 1 - 4 B ||eta||_p."""
    value = 4.0 * B * eta_norm
    return ConditionCheck(
        name="(E1)",
        passed=bool(value < 1.0),
        value=value,
        threshold=1.0,
        margin=1.0 - value,
        detail=f"4*B*||eta||_p with B={B:.6g}, ||eta||_p={eta_norm:.6g}",
    )


def check_E1(k: Kernel, eta: Path, p: float, mesh: TimeMesh) -> ConditionCheck:
    """Sampled (E1) on the kernel bound B and the L^p norm of eta."""
    return e1_condition(kernel_bound(k, mesh, p), lp_norm(eta, p))


def _hausdorff_directions(d: int) -> np.ndarray:
    rows = list(np.vstack([np.eye(d), -np.eye(d)]))
    if d > 1:
        rows.extend(np.asarray(s) / np.sqrt(d) for s in itertools.product((1.0, -1.0), repeat=d))
    return np.vstack(rows)


def _probe_grid(
    F: SetField, mesh: TimeMesh, radius: float, n_times: int
) -> tuple[np.ndarray, np.ndarray]:
    picks = np.unique(np.linspace(0, mesh.size - 1, n_times).round().astype(int))
    offsets = [np.zeros(F.d)]
    for i in range(F.d):
        for scale in (0.5, 1.0):
            axis = np.zeros(F.d)
            axis[i] = scale * radius
            offsets.extend([axis, -axis])
    states = np.vstack(offsets)
    times = np.repeat(mesh.nodes[picks], states.shape[0])
    return times, np.tile(states, (picks.size, 1))


def check_field_conditions(
    F: SetField,
    mesh: TimeMesh,
    probe_radius: float = settings.probe_radius,
    n_times: int = 11,
) -> list[ConditionCheck]:
    """
    Sampled field conditions on a probe grid of times and states |x| <= probe_radius.

    Rows: (F1) nonempty values, (F3) sampled upper hemicontinuity, (F4) linear
    growth ||F(t,x)||^+ <= c(t)(1 + |x|), (F4') ||F(t,x)||^+ <= mu(t) and (F5)
    Hausdorff-Lipschitz with density eta. A failed row never raises.
    """
    times, states = _probe_grid(F, mesh, probe_radius, n_times)
    kind = "singleton field" if F.is_singleton else "set field"
    sets = F.evaluate(times, states)
    valid = sets.is_valid()
    checks = [
        ConditionCheck(
            name="(F1)",
            passed=bool(np.all(valid)),
            value=float(np.mean(valid)),
            threshold=1.0,
            margin=float(np.mean(valid)) - 1.0,
            detail=f"{kind}: share of nonempty convex values on {times.size} probes",
        )
    ]
    if not np.all(valid):
        return checks

    directions = _hausdorff_directions(F.d)
    eps = 1e-6
    variations = []
    for i in range(F.d):
        shifted = states.copy()
        shifted[:, i] += eps
        variations.append(hausdorff_on_directions(sets, F.evaluate(times, shifted), directions))
    ratio = float(np.max(variations)) / eps
    limit = F.lipschitz_meta
    checks.append(
        ConditionCheck(
            name="(F3)",
            passed=bool(
                np.isfinite(ratio) and (limit is None or ratio <= limit * (1 + 1e-6) + 1e-6)
            ),
            value=ratio,
            threshold=limit,
            margin=None if limit is None else limit - ratio,
            detail="support-function variation under a 1e-6 shift along each state axis",
        )
    )

    radii = sets.radius_bound()
    norms = np.linalg.norm(states, axis=1)
    slack = 1e-9 * (1.0 + float(radii.max()))
    growth_excess = float((radii - F.growth.c(times)[:, 0] * (1.0 + norms)).max())
    checks.append(
        ConditionCheck(
            name="(F4)",
            passed=bool(growth_excess <= slack),
            value=growth_excess,
            threshold=slack,
            margin=slack - growth_excess,
            detail="max of ||F(t,x)||^+ - c(t)(1+|x|)",
        )
    )
    bound_excess = float((radii - F.growth.mu(times)[:, 0]).max())
    checks.append(
        ConditionCheck(
            name="(F4')",
            passed=bool(bound_excess <= slack),
            value=bound_excess,
            threshold=slack,
            margin=slack - bound_excess,
            detail="max of ||F(t,x)||^+ - mu(t)",
        )
    )

    step = 0.5 * probe_radius
    lipschitz_excess = -np.inf
    for i in range(F.d):
        moved = states.copy()
        moved[:, i] += step
        gap = hausdorff_on_directions(sets, F.evaluate(times, moved), directions)
        lipschitz_excess = max(
            lipschitz_excess, float((gap - F.growth.eta(times)[:, 0] * step).max())
        )
    checks.append(
        ConditionCheck(
            name="(F5)",
            passed=bool(lipschitz_excess <= slack),
            value=lipschitz_excess,
            threshold=slack,
            margin=slack - lipschitz_excess,
            detail=f"max of d_H(F(t,x),F(t,y)) - eta(t)|x-y| over shifts of {step:g}",
        )
    )
    return checks


def hammerstein_selection(
    k: Kernel,
    F: SetField,
    h: Path,
    strategy: SelectionStrategy,
    cfg: SolverConfig,
) -> FunnelSample:
    """One selection run for the Hammerstein operator V_T."""
    return selection_fixed_point(hammerstein_matrix(k, h.mesh), F, h, strategy, cfg)
