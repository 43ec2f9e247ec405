"""Experiment runner: one function per experiment kind.

Each kind resolves the problem on its mesh, computes everything in memory,
stages the CSV tables and returns a RunOutcome. Artefacts are written only
by ``run_experiment`` after the computation succeeded.
"""

from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Any

import numpy as np
from shared.core.config import settings
from shared.core.logging import get_logger
from shared.exceptions import ConditionSearchError, ConfigurationError
from shared.schemas import ConditionCheck, ExperimentConfig, RunManifest

from app.catalog.problems import ResolvedProblem, resolve_problem
from app.repositories.artifact_repository import ArtifactRepository, CsvTable
from app.services.equation_solver import apriori_bound, choose_L, solve_equation
from app.services.inclusion_funnel import (
    ExtremalStrategy,
    SelectionStrategy,
    check_E1,
    check_field_conditions,
    funnel_radius,
    nesting_report,
    sample_funnel,
    sample_ladder,
    structure_diagnostics,
    verify_funnel,
)
from app.services.kernels import check_kernel_conditions, kernel_bound
from app.services.mesh_paths import Path, TimeMesh, lp_norm, make_uniform_mesh, sup_norm
from app.services.periodic import (
    check_contraction_condition,
    check_hammerstein_condition,
    find_periodic_branches,
    find_periodic_volterra,
    make_stable_family,
    measure_contraction,
    solve_hammerstein_periodic,
)
from app.services.volterra_op import apply_V

logger = get_logger(__name__)

CONDITIONS_HEADER = ["condition", "passed", "value", "threshold", "margin", "detail"]


@dataclass
class RunOutcome:
    """Staged tables, condition rows and headline numbers of one run."""

    kind: str
    tables: list[CsvTable] = field(default_factory=list)
    conditions: list[ConditionCheck] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)


def _columns(prefix: str, d: int) -> list[str]:
    return [f"{prefix}_{i}" for i in range(d)]


def _floats(values: np.ndarray) -> list[object]:
    return [float(v) for v in np.ravel(values)]


def funnel_table(name: str, d: int) -> CsvTable:
    """Funnel CSV layout shared by funnel members and periodic orbits."""
    header = ["sample_id", "node_time", *_columns("x", d), *_columns("w", d)]
    return CsvTable(name, [*header, "eq_residual", "incl_residual"])


def _add_path_rows(
    table: CsvTable, sample_id: int, x: Path, w: Path, eq_residual: float, incl: float
) -> None:
    for i, time in enumerate(x.mesh.nodes):
        table.add(
            [
                sample_id,
                float(time),
                *_floats(x.values[i]),
                *_floats(w.values[i]),
                eq_residual,
                incl,
            ]
        )


def conditions_table(checks: list[ConditionCheck]) -> CsvTable:
    table = CsvTable("conditions.csv", list(CONDITIONS_HEADER))
    for check in checks:
        table.add(
            [check.name, check.passed, check.value, check.threshold, check.margin, check.detail]
        )
    return table


def _mesh(config: ExperimentConfig, N: int | None = None) -> TimeMesh:
    return make_uniform_mesh(config.mesh.T, N or config.mesh.N, config.mesh.d)


def collect_conditions(
    problem: ResolvedProblem, mesh: TimeMesh, config: ExperimentConfig
) -> list[ConditionCheck]:
    """Sampled kernel, field and threshold conditions relevant to the problem."""
    p = config.solver.p
    k = problem.kernel
    field_ = problem.field
    eta = field_.growth.eta
    checks = check_kernel_conditions(k, mesh, p)
    checks.extend(check_field_conditions(field_, mesh))
    if k.triangular:
        checks.append(check_E1(k, eta, p, mesh))
        checks.append(check_contraction_condition(k, eta, p, mesh))
        try:
            choice = choose_L(k, eta, p, mesh)
            checks.append(
                ConditionCheck(
                    name="weight-L",
                    passed=True,
                    value=choice.phi,
                    threshold=choice.threshold,
                    margin=choice.threshold - choice.phi,
                    detail=f"L={choice.L:g}, B={choice.B:.6g}",
                )
            )
        except ConditionSearchError as e:
            checks.append(ConditionCheck(name="weight-L", passed=False, detail=str(e)))
    else:
        checks.append(check_hammerstein_condition(k, eta, p, mesh))
    return checks


def _require_single_valued(problem: ResolvedProblem, kind: str) -> Callable[..., np.ndarray]:
    if problem.field.point_map is None:
        raise ConfigurationError(f"Experiment '{kind}' needs a single-valued right-hand side")
    return problem.field.point_map


def _require_triangle(problem: ResolvedProblem, kind: str) -> None:
    if not problem.kernel.triangular:
        raise ConfigurationError(f"Experiment '{kind}' needs a triangular kernel")


def run_solve_eq(config: ExperimentConfig) -> RunOutcome:
    mesh = _mesh(config)
    problem = resolve_problem(config.problem, mesh)
    _require_triangle(problem, "solve-eq")
    f = _require_single_valued(problem, "solve-eq")
    cfg = config.solver
    result = solve_equation(problem.kernel, f, problem.h, cfg)
    x = result.path
    d = mesh.d

    exact = problem.exact_path(mesh)
    header = ["time", *_columns("x", d), *_columns("w", d)]
    if exact is not None:
        header += [*_columns("exact", d), "error"]
    table = CsvTable("solution.csv", header)
    errors = np.linalg.norm(x.values - exact.values, axis=1) if exact is not None else None
    for i, time in enumerate(mesh.nodes):
        row: list[object] = [float(time), *_floats(x.values[i])]
        row += _floats(result.selection.values[i])
        if exact is not None and errors is not None:
            row += [*_floats(exact.values[i]), float(errors[i])]
        table.add(row)

    outcome = RunOutcome("solve-eq", tables=[table])
    outcome.conditions = collect_conditions(problem, mesh, config)
    B = kernel_bound(problem.kernel, mesh, cfg.p)
    bound = apriori_bound(sup_norm(problem.h), B, problem.field.growth.c, cfg.p)
    outcome.conditions.append(
        ConditionCheck(
            name="apriori-bound",
            passed=bool(sup_norm(x) <= bound * (1.0 + 1e-9)),
            value=sup_norm(x),
            threshold=bound,
            margin=bound - sup_norm(x),
            detail="sup_norm(x) against the Gronwall bound from c",
        )
    )
    outcome.summary = {
        "iterations": result.report.iterations,
        "residual": result.report.residual,
        "splits": result.report.splits,
        "sup_norm": sup_norm(x),
        "sup_error": None if errors is None else float(errors.max()),
    }
    return outcome


def _structure_rows(outcome: RunOutcome, name: str, rows: list[tuple[str, object, object]]) -> None:
    table = CsvTable(name, ["metric", "parameter", "value"])
    for row in rows:
        table.add(list(row))
    outcome.tables.append(table)


def run_funnel(config: ExperimentConfig) -> RunOutcome:
    mesh = _mesh(config)
    problem = resolve_problem(config.problem, mesh)
    _require_triangle(problem, "funnel")
    cfg = config.solver
    k, F, h = problem.kernel, problem.field, problem.h
    spec = config.funnel
    funnel = sample_funnel(
        k, F, h, mesh, spec.n_samples, config.seed, cfg, spec.strategy, config.threads
    )
    verification = verify_funnel(funnel, k, F, h)
    structure = structure_diagnostics(funnel, k, F, h, cfg.p, spec.eps_ladder)

    table = funnel_table("funnel.csv", mesh.d)
    for sample in funnel.samples:
        _add_path_rows(
            table, sample.sample_id, sample.x, sample.w, sample.eq_residual, sample.incl_residual
        )
    outcome = RunOutcome("funnel", tables=[table])

    B = kernel_bound(k, mesh, cfg.p)
    radius = funnel_radius(h, B, F.growth.mu, cfg.p)
    largest = max(sup_norm(sample.x) for sample in funnel.samples)
    rows: list[tuple[str, object, object]] = [
        ("accepted", None, len(funnel.samples)),
        ("rejected", None, len(funnel.rejected)),
        ("verified_eq_residual", None, verification.eq_residual),
        ("verified_incl_residual", None, verification.incl_residual),
        ("modulus", structure.xi, structure.modulus),
        ("equicontinuity_bound", structure.xi, structure.equicontinuity_bound),
        ("diameter", None, structure.diameter),
        ("funnel_radius", None, radius),
        ("max_sup_norm", None, largest),
    ]
    rows += [
        ("covering_number", eps, count)
        for eps, count in zip(structure.eps_ladder, structure.covering_numbers, strict=True)
    ]
    if structure.gap_profile is not None and structure.cross_section_diameter is not None:
        rows.append(("max_gap_at_T", mesh.T, float(structure.gap_profile[-1])))
        diameter_at_T = float(structure.cross_section_diameter[-1])
        rows.append(("cross_section_diameter_at_T", mesh.T, diameter_at_T))
    _structure_rows(outcome, "diagnostics.csv", rows)

    outcome.conditions = collect_conditions(problem, mesh, config)
    outcome.conditions.append(
        ConditionCheck(
            name="funnel-radius",
            passed=bool(largest <= radius * (1.0 + 1e-9) + cfg.tol),
            value=largest,
            threshold=radius,
            margin=radius - largest,
            detail="max sup_norm over members against ||h|| + B||mu||_p",
        )
    )
    outcome.summary = {
        "accepted": len(funnel.samples),
        "rejected": len(funnel.rejected),
        "verified": verification.passed,
        "modulus": structure.modulus,
        "equicontinuity_bound": structure.equicontinuity_bound,
    }
    return outcome


def run_nesting_ladder(config: ExperimentConfig) -> RunOutcome:
    mesh = _mesh(config)
    problem = resolve_problem(config.problem, mesh)
    _require_triangle(problem, "nesting-ladder")
    cfg = config.solver
    k, F, h = problem.kernel, problem.field, problem.h
    funnels = sample_ladder(
        k,
        F,
        h,
        config.ladder.levels,
        config.funnel.n_samples,
        config.seed,
        cfg,
        config.funnel.strategy,
        config.threads,
    )
    B = kernel_bound(k, mesh, cfg.p)
    eta_norm = lp_norm(F.growth.eta, cfg.p)
    report = nesting_report(funnels, cfg.p, B, eta_norm)
    table = CsvTable("nesting.csv", ["level", "radius", "semidistance", "defect_bound"])
    for row in report.rows:
        table.add([row.level, row.radius, row.semidistance, row.defect_bound])
    outcome = RunOutcome("nesting-ladder", tables=[table])
    outcome.conditions = collect_conditions(problem, mesh, config)
    outcome.conditions.append(
        ConditionCheck(
            name="nesting",
            passed=report.nonincreasing and report.within_bound,
            detail=f"nonincreasing={report.nonincreasing}, within_bound={report.within_bound}",
        )
    )
    outcome.summary = {
        "levels": config.ladder.levels,
        "nonincreasing": report.nonincreasing,
        "within_bound": report.within_bound,
    }
    return outcome


def _strategies(config: ExperimentConfig) -> list[SelectionStrategy] | None:
    directions = config.periodic.directions
    if not directions:
        return None
    return [
        ExtremalStrategy(np.asarray(u, dtype=float), name=f"extremal({i})")
        for i, u in enumerate(directions)
    ]


def run_periodic_volterra(config: ExperimentConfig) -> RunOutcome:
    mesh = _mesh(config)
    problem = resolve_problem(config.problem, mesh)
    _require_triangle(problem, "periodic-volterra")
    cfg = config.solver
    spec = config.periodic
    k, F = problem.kernel, problem.field
    d = mesh.d
    generator = np.asarray(spec.generator, dtype=float) if spec.generator else -np.eye(d)
    U = make_stable_family(generator, mesh, spec.omega)
    mu, eta = F.growth.mu, F.growth.eta

    strategies = _strategies(config)
    if F.point_map is not None:
        results = [find_periodic_volterra(k, F.point_map, U, mu, cfg, eta, strict=spec.strict)]
        probe_strategy = None
    else:
        results = find_periodic_branches(
            k, F, U, mu, cfg, strategies, eta, spec.strict, config.threads
        )
        probe_strategy = strategies[0] if strategies else None
    rhs = F.point_map if F.point_map is not None else F
    probe = measure_contraction(
        k, rhs, U, mu, cfg, spec.probe_pairs, config.seed, probe_strategy, config.threads
    )

    periodic = CsvTable(
        "periodic.csv",
        [
            "branch",
            *_columns("x0", d),
            "fixed_point_residual",
            "periodicity_residual",
            "iterations",
            "contraction_estimate",
            "accepted",
        ],
    )
    orbits = funnel_table("orbit.csv", d)
    nodes = mesh.nodes
    for index, result in enumerate(results):
        periodic.add(
            [
                result.strategy,
                *_floats(result.x0),
                result.fixed_point_residual,
                result.periodicity_residual,
                result.iterations,
                result.contraction_estimate,
                result.accepted,
            ]
        )
        h = U.orbit(result.x0)
        eq = sup_norm(result.orbit - h - apply_V(k, result.selection, mesh))
        incl = float(F(nodes, result.orbit.values).distance(result.selection.values).max())
        _add_path_rows(orbits, index, result.orbit, result.selection, eq, incl)

    outcome = RunOutcome("periodic-volterra", tables=[periodic, orbits])
    outcome.conditions = collect_conditions(problem, mesh, config)
    outcome.conditions.append(
        ConditionCheck(
            name="stability",
            passed=True,
            value=U.norm_at_T,
            threshold=1.0,
            margin=1.0 - U.norm_at_T,
            detail=f"certificate {U.certificate} with omega={U.omega:g}",
        )
    )
    outcome.conditions.append(
        ConditionCheck(
            name="measured-contraction",
            passed=bool(probe.max_ratio < 1.0),
            value=probe.max_ratio,
            threshold=1.0,
            margin=1.0 - probe.max_ratio,
            detail=f"{probe.ratios.size} random pairs in D(0, {probe.radius:.6g})",
        )
    )
    outcome.summary = {
        "branches": len(results),
        "x0": [_floats(result.x0) for result in results],
        "max_contraction_ratio": probe.max_ratio,
        "certificate": U.certificate,
    }
    return outcome


def run_periodic_hammerstein(config: ExperimentConfig) -> RunOutcome:
    mesh = _mesh(config)
    problem = resolve_problem(config.problem, mesh)
    if problem.kernel.triangular:
        raise ConfigurationError("Experiment 'periodic-hammerstein' needs a square kernel")
    cfg = config.solver
    F = problem.field
    strategies = _strategies(config)
    rhs = F.point_map if F.point_map is not None else F
    result = solve_hammerstein_periodic(
        problem.kernel,
        rhs,
        problem.h,
        cfg,
        F.growth.eta,
        strategies[0] if strategies else None,
        config.periodic.strict,
    )
    d = mesh.d
    solution = CsvTable("solution.csv", ["time", *_columns("x", d), *_columns("w", d)])
    for i, time in enumerate(mesh.nodes):
        solution.add(
            [float(time), *_floats(result.path.values[i]), *_floats(result.selection.values[i])]
        )
    periodic = CsvTable(
        "periodic.csv", ["periodicity_residual", "iterations", "residual", "periodic", "radius"]
    )
    periodic.add(
        [
            result.periodicity_residual,
            result.iterations,
            result.residual,
            result.periodic,
            result.radius,
        ]
    )
    outcome = RunOutcome("periodic-hammerstein", tables=[solution, periodic])
    outcome.conditions = collect_conditions(problem, mesh, config) + result.checks
    outcome.summary = {
        "periodicity_residual": result.periodicity_residual,
        "iterations": result.iterations,
        "periodic": result.periodic,
    }
    return outcome


def run_check_conditions(config: ExperimentConfig) -> RunOutcome:
    mesh = _mesh(config)
    problem = resolve_problem(config.problem, mesh)
    outcome = RunOutcome("check-conditions")
    outcome.conditions = collect_conditions(problem, mesh, config)
    outcome.summary = {
        "passed": sum(check.passed for check in outcome.conditions),
        "failed": sum(not check.passed for check in outcome.conditions),
    }
    return outcome


def convergence_table(config: ExperimentConfig) -> CsvTable:
    """
    Sup errors against the closed form along the node ladder.

    Raises:
        ConfigurationError: If the problem has no closed form
    """
    table = CsvTable("convergence.csv", ["N", "sup_error", "ratio"])
    previous: float | None = None
    for N in config.convergence.nodes:
        mesh = _mesh(config, N)
        problem = resolve_problem(config.problem, mesh)
        exact = problem.exact_path(mesh)
        if exact is None:
            raise ConfigurationError("Convergence table needs a problem with a closed form")
        _require_triangle(problem, "convergence-table")
        f = _require_single_valued(problem, "convergence-table")
        x = solve_equation(problem.kernel, f, problem.h, config.solver).path
        error = sup_norm(x - exact)
        ratio = previous / error if previous is not None and error > 0 else None
        table.add([N, error, ratio])
        logger.info("convergence_row", N=N, sup_error=error, ratio=ratio)
        previous = error
    return table


def run_convergence_table(config: ExperimentConfig) -> RunOutcome:
    table = convergence_table(config)
    errors = [row[1] for row in table.rows]
    return RunOutcome("convergence-table", tables=[table], summary={"sup_errors": errors})


RUNNERS: dict[str, Callable[[ExperimentConfig], RunOutcome]] = {
    "solve-eq": run_solve_eq,
    "funnel": run_funnel,
    "nesting-ladder": run_nesting_ladder,
    "periodic-volterra": run_periodic_volterra,
    "periodic-hammerstein": run_periodic_hammerstein,
    "check-conditions": run_check_conditions,
    "convergence-table": run_convergence_table,
}


def resolve_kind(config: ExperimentConfig, kind: str | None) -> str:
    """The subcommand wins; a kind in the file must agree with it."""
    chosen = kind or config.kind
    if chosen is None:
        raise ConfigurationError("No experiment kind given")
    if chosen not in RUNNERS:
        raise ConfigurationError(f"Unknown experiment kind '{chosen}'")
    if config.kind is not None and config.kind != chosen:
        raise ConfigurationError(
            f"Config declares kind '{config.kind}' but '{chosen}' was requested"
        )
    return chosen


def compute_experiment(config: ExperimentConfig, kind: str | None = None) -> RunOutcome:
    """Run the experiment in memory; nothing is written."""
    chosen = resolve_kind(config, kind)
    logger.info("experiment_started", kind=chosen, seed=config.seed, threads=config.threads)
    outcome = RUNNERS[chosen](config)
    outcome.tables.append(conditions_table(outcome.conditions))
    logger.info("experiment_finished", kind=chosen, **_loggable(outcome.summary))
    return outcome


def _loggable(summary: dict[str, Any]) -> dict[str, Any]:
    return {key: value for key, value in summary.items() if not isinstance(value, list)}


def build_manifest(config: ExperimentConfig, outcome: RunOutcome) -> RunManifest:
    cfg = config.solver
    return RunManifest(
        app_name=settings.app_name,
        version=settings.app_version,
        kind=outcome.kind,
        seed=config.seed,
        threads=config.threads,
        tolerances={
            "tol": cfg.tol,
            "damping": cfg.damping,
            "p": cfg.p,
            "max_iter": float(cfg.max_iter),
            "diagonal_tol": settings.diagonal_tol,
            "probe_radius": settings.probe_radius,
        },
        config=config.model_dump(mode="json"),
        summary=outcome.summary,
    )


def run_experiment(
    config: ExperimentConfig, kind: str | None = None, output_dir: str | FsPath | None = None
) -> RunOutcome:
    """
    Compute an experiment and write its artefacts.

    Args:
        config: Validated experiment config
        kind: Experiment kind (subcommand); defaults to the config's kind
        output_dir: Artefact directory; defaults to the config's, then settings

    Returns:
        RunOutcome: The computed run

    Raises:
        ConfigurationError: For an unknown or conflicting kind
        ArtifactWriteError: If artefacts cannot be written
    """
    chosen = resolve_kind(config, kind)
    config = config.model_copy(update={"kind": chosen})
    outcome = compute_experiment(config, chosen)
    repository = ArtifactRepository(output_dir or config.output_dir or settings.output_dir)
    for table in outcome.tables:
        repository.stage(table)
    repository.commit(build_manifest(config, outcome))
    return outcome


__all__ = [
    "RunOutcome",
    "compute_experiment",
    "convergence_table",
    "run_experiment",
]
