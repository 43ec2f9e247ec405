"""Unit tests for stable families, periodic finders and the Hammerstein solver."""

import numpy as np
import pytest
from shared.exceptions import (
    InvalidArgumentError,
    NotStableError,
    PreconditionViolatedError,
)
from shared.schemas import SolverConfig

from app.catalog.fields import build_field
from app.catalog.kernels import build_kernel
from app.services.kernels import Kernel, KernelDomain
from app.services.mesh_paths import Path, make_uniform_mesh
from app.services.periodic import (
    RELAXED_CERTIFICATE,
    STRICT_CERTIFICATE,
    alternative_contraction_check,
    check_contraction_condition,
    check_hammerstein_condition,
    contraction_threshold,
    find_periodic_branches,
    find_periodic_volterra,
    hammerstein_condition,
    invariant_radius,
    make_stable_family,
    measure_contraction,
    optimal_omega,
    poincare_map,
    solve_hammerstein_periodic,
    threshold_profile,
)


@pytest.fixture
def mesh():
    return make_uniform_mesh(1.0, 401)


@pytest.fixture
def kernel(mesh):
    return build_kernel("convolution-exp(1)", mesh.T, 1)


@pytest.fixture
def decay(mesh):
    """U(t) = e^-t with the strict certificate."""
    return make_stable_family(-np.eye(1), mesh, 1.0)


@pytest.fixture
def cfg():
    return SolverConfig(tol=1e-10, max_iter=500)


def unit(t, x):
    return np.ones_like(x)


def drifting_kernel(mesh, drift):
    """cos(2 pi s / T) + drift * t on the square: (k6') holds while x(T) - x(0) = drift * int w."""
    T = mesh.T
    return Kernel(
        KernelDomain.SQUARE,
        1,
        T,
        fn=lambda t, s: (np.cos(2.0 * np.pi * s / T) + drift * t)[..., None, None],
        label="drifting",
    )


class TestStableFamily:
    """Test suite for matrix-exponential families."""

    def test_strict_certificate(self, decay):
        """Test ||U(T)|| = e^-1 under the strict certificate."""
        assert decay.certificate == STRICT_CERTIFICATE
        assert decay.norm_at_T == pytest.approx(np.exp(-1.0))

    def test_relaxed_certificate(self, mesh):
        """Test that an overclaimed rate falls back to ||U(T)|| < 1."""
        family = make_stable_family(-np.eye(1), mesh, 2.0)
        assert family.certificate == RELAXED_CERTIFICATE

    def test_unstable_generator_rejected(self, mesh):
        """Test that A = 0 fails both certificates."""
        with pytest.raises(NotStableError):
            make_stable_family(np.zeros((1, 1)), mesh, 1.0)

    def test_invalid_generator_rejected(self, mesh):
        """Test that non-square generators and non-positive rates are rejected."""
        with pytest.raises(InvalidArgumentError):
            make_stable_family(np.zeros((1, 2)), mesh, 1.0)
        with pytest.raises(InvalidArgumentError):
            make_stable_family(-np.eye(1), mesh, 0.0)

    def test_orbit_starts_at_x0(self, decay):
        """Test h(0) = x0 and h(T) = U(T) x0."""
        orbit = decay.orbit(np.array([2.0]))
        assert orbit.values[0, 0] == pytest.approx(2.0)
        assert orbit.values[-1, 0] == pytest.approx(2.0 * np.exp(-1.0))


class TestThresholds:
    """Test suite for the contraction thresholds."""

    def test_threshold_values(self):
        """Test (2e)^-1 at p = 1 and e^(-1/2) / 4 at p = 2."""
        assert contraction_threshold(1.0) == pytest.approx(1.0 / (2.0 * np.e))
        assert contraction_threshold(2.0) == pytest.approx(np.exp(-0.5) / 4.0)

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0])
    def test_profile_peaks_at_optimal_omega(self, p):
        """Test that the profile maximum equals the threshold."""
        T = 2.0
        omega = optimal_omega(p, T)
        assert threshold_profile(omega, p, T) == pytest.approx(contraction_threshold(p))
        assert threshold_profile(1.2 * omega, p, T) < threshold_profile(omega, p, T)
        assert threshold_profile(0.8 * omega, p, T) < threshold_profile(omega, p, T)

    def test_profile_vanishes_for_slow_decay(self):
        """Test xi(omega) = 0 when omega T <= (1 - 1/p) ln 2."""
        assert threshold_profile(0.3, 2.0, 1.0) == 0.0

    def test_alternative_check(self):
        """Test the weighted variant on both sides of its threshold."""
        assert not alternative_contraction_check(1.0, 0.5, 0.1, 1.0, 2.0).passed
        assert alternative_contraction_check(1.0, 0.5, 5.0, 1.0, 2.0).passed

    def test_contraction_condition_from_kernel(self, mesh, kernel):
        """Test that eta = 1 fails and eta = 0.1 passes for exp(-(t - s))."""
        assert not check_contraction_condition(kernel, Path.constant(mesh, 1.0), 2.0, mesh).passed
        assert check_contraction_condition(kernel, Path.constant(mesh, 0.1), 2.0, mesh).passed

    def test_invariant_radius(self, mesh, kernel, decay):
        """Test R = ||k(T,.)||_2 ||mu||_2 / (1 - e^(-omega T))."""
        expected = np.sqrt((1.0 - np.exp(-2.0)) / 2.0) / (1.0 - np.exp(-1.0))
        radius = invariant_radius(kernel, decay, Path.constant(mesh, 1.0), 2.0)
        assert radius == pytest.approx(expected, rel=1e-4)


class TestPeriodicVolterra:
    """Test suite for the Poincaré-map fixed point."""

    def test_poincare_map_without_forcing(self, kernel, decay, cfg):
        """Test that f = 0 gives P(x0) = U(T) x0."""
        image = poincare_map(kernel, lambda t, x: np.zeros_like(x), decay, np.array([3.0]), cfg)
        assert image[0] == pytest.approx(3.0 * np.exp(-1.0))

    def test_relaxation_fixed_point(self, mesh, kernel, decay, cfg):
        """Test x0 = 1 for U = e^-t, k = e^-(t-s), f = 1."""
        result = find_periodic_volterra(
            kernel, unit, decay, Path.constant(mesh, 1.0), cfg, eta=Path.constant(mesh, 0.0)
        )
        assert result.accepted
        assert result.x0[0] == pytest.approx(1.0, abs=1e-5)
        assert result.orbit.values[0, 0] == pytest.approx(result.x0[0])
        assert result.periodicity_residual <= 1e-9
        assert result.contraction_estimate == pytest.approx(np.exp(-1.0), abs=1e-2)
        assert np.allclose(result.selection.values, 1.0)

    def test_failed_condition_raises_when_strict(self, mesh, kernel, decay, cfg):
        """Test that a violated contraction condition raises in strict mode."""
        with pytest.raises(PreconditionViolatedError):
            find_periodic_volterra(
                kernel, unit, decay, Path.constant(mesh, 1.0), cfg, eta=Path.constant(mesh, 1.0)
            )

    def test_failed_condition_is_recorded_when_relaxed(self, mesh, kernel, decay, cfg):
        """Test that non-strict mode proceeds and records the failed check."""
        result = find_periodic_volterra(
            kernel,
            unit,
            decay,
            Path.constant(mesh, 1.0),
            cfg,
            eta=Path.constant(mesh, 1.0),
            strict=False,
        )
        assert result.accepted
        assert not result.checks[0].passed

    def test_band_branches(self, mesh, kernel, decay, cfg):
        """Test the extremal branches of F = [0.9, 1.1]."""
        band = build_field("band", mesh, 1)
        results = find_periodic_branches(kernel, band, decay, band.growth.mu, cfg, threads=2)
        assert [result.strategy for result in results] == ["extremal(+e0)", "extremal(-e0)"]
        assert results[0].x0[0] == pytest.approx(1.1, abs=1e-5)
        assert results[1].x0[0] == pytest.approx(0.9, abs=1e-5)

    def test_measured_contraction(self, mesh, kernel, decay, cfg):
        """Test that the map x0 -> U(T) x0 + c contracts by exactly e^-1."""
        probe = measure_contraction(kernel, unit, decay, Path.constant(mesh, 1.0), cfg, n_pairs=5)
        assert probe.ratios.shape == (5,)
        assert probe.max_ratio == pytest.approx(np.exp(-1.0), rel=1e-8)
        assert probe.radius > 0


class TestHammerstein:
    """Test suite for the Hammerstein periodic solver."""

    def test_constant_forcing_closed_form(self, mesh, cfg):
        """Test x = h + T/2 (1 + cos(2 pi t / T) / 2) for f = 1/2."""
        k = build_kernel("separable-cos", mesh.T, 1)
        h = Path.scalar(mesh, np.cos(2.0 * np.pi * mesh.nodes))
        result = solve_hammerstein_periodic(
            k, lambda t, x: np.full_like(x, 0.5), h, cfg, eta=Path.constant(mesh, 0.0)
        )
        expected = h.values[:, 0] + 0.5 * (1.0 + np.cos(2.0 * np.pi * mesh.nodes) / 2.0)
        assert np.allclose(result.path.values[:, 0], expected, atol=1e-12)
        assert result.periodic
        assert result.radius is None
        assert [check.name for check in result.checks] == [
            "periodic-h",
            "(k6')",
            "hammerstein-contraction",
            "periodic-solution",
        ]

    def test_zero_field_returns_h(self, mesh, cfg):
        """Test that f = 0 gives x = h."""
        k = build_kernel("fredholm-periodic", mesh.T, 1)
        h = Path.scalar(mesh, np.sin(2.0 * np.pi * mesh.nodes) + 1.0)
        result = solve_hammerstein_periodic(k, lambda t, x: np.zeros_like(x), h, cfg)
        assert np.allclose(result.path.values, h.values, atol=1e-14)

    def test_set_field_reports_radius(self, mesh, cfg):
        """Test the solution ball radius for a set-valued field."""
        k = build_kernel("separable-cos", mesh.T, 1)
        band = build_field("band", mesh, 1)
        h = Path.scalar(mesh, np.cos(2.0 * np.pi * mesh.nodes))
        result = solve_hammerstein_periodic(k, band, h, cfg)
        assert result.radius is not None
        assert np.abs(result.path.values).max() <= result.radius + 1e-9

    def test_non_periodic_h_raises_when_strict(self, mesh, cfg):
        """Test that h(0) != h(T) violates a precondition."""
        k = build_kernel("separable-cos", mesh.T, 1)
        h = Path.scalar(mesh, mesh.nodes)
        with pytest.raises(PreconditionViolatedError):
            solve_hammerstein_periodic(k, lambda t, x: np.zeros_like(x), h, cfg)

    def test_non_periodic_solution_raises_when_strict(self, mesh, cfg):
        """Test that a converged solution with x(0) != x(T) is rejected."""
        k = drifting_kernel(mesh, 0.5 * cfg.tol)
        with pytest.raises(PreconditionViolatedError, match="periodic-solution"):
            solve_hammerstein_periodic(
                k, lambda t, x: np.full_like(x, 1e3), Path.constant(mesh, 0.0), cfg
            )

    def test_non_periodic_solution_reported_when_relaxed(self, mesh, cfg):
        """Test that relaxed mode returns the solution flagged as not periodic."""
        k = drifting_kernel(mesh, 0.5 * cfg.tol)
        result = solve_hammerstein_periodic(
            k, lambda t, x: np.full_like(x, 1e3), Path.constant(mesh, 0.0), cfg, strict=False
        )
        assert not result.periodic
        assert result.periodicity_residual == pytest.approx(1e3 * 0.5 * cfg.tol, rel=1e-3)
        checks = {check.name: check for check in result.checks}
        assert checks["(k6')"].passed
        assert not checks["periodic-solution"].passed

    def test_hammerstein_condition(self):
        """Test 2 B ||eta|| < 1."""
        assert hammerstein_condition(1.0, 0.4).passed
        assert not hammerstein_condition(1.0, 0.6).passed

    def test_hammerstein_condition_rejects_triangle(self, mesh, kernel):
        """Test that the Hammerstein condition needs a square kernel."""
        with pytest.raises(InvalidArgumentError):
            check_hammerstein_condition(kernel, Path.constant(mesh, 0.1), 2.0, mesh)

    def test_triangle_rejected_by_solver(self, mesh, kernel, cfg):
        """Test that the Hammerstein solver needs a square kernel."""
        with pytest.raises(InvalidArgumentError):
            solve_hammerstein_periodic(
                kernel, lambda t, x: np.zeros_like(x), Path.constant(mesh, 0.0), cfg
            )
