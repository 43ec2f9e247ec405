"""Unit tests for the kernel, field and problem catalogs."""

import numpy as np
import pytest
from pydantic import ValidationError
from shared.exceptions import ConfigurationError
from shared.schemas import FieldSpec, GrowthSpec, KernelSpec, ProblemSpec

from app.catalog.fields import build_field, field_from_spec, growth_from_spec
from app.catalog.kernels import build_kernel, kernel_from_spec, parse_kernel_name
from app.catalog.problems import problem_names, resolve_problem
from app.services.convex_sets import Ball, Box
from app.services.mesh_paths import make_uniform_mesh


@pytest.fixture
def mesh():
    return make_uniform_mesh(1.0, 11)


class TestKernelCatalog:
    """Test suite for named and inline kernels."""

    def test_parse_name_with_parameter(self):
        """Test the name(param) syntax."""
        assert parse_kernel_name("convolution-exp(2.5)") == ("convolution-exp", "2.5")
        assert parse_kernel_name("identity") == ("identity", None)

    def test_convolution_kernel(self):
        """Test exp(-lam (t - s)) and zeroing above the diagonal."""
        k = build_kernel("convolution-exp(2)", 1.0, 1)
        assert k.triangular
        assert k.matrices(1.0, 0.5)[0, 0] == pytest.approx(np.exp(-1.0))
        assert k.matrices(0.5, 1.0)[0, 0] == 0.0
        assert k.derivative(1.0, 0.5)[0, 0] == pytest.approx(-2.0 * np.exp(-1.0))

    def test_identity_blocks(self):
        """Test that catalog kernels act as scalars times the identity."""
        k = build_kernel("identity", 1.0, 2)
        assert np.array_equal(k.matrices(0.5, 0.2), np.eye(2))

    def test_square_kernels(self):
        """Test that the Hammerstein kernels live on the square."""
        assert not build_kernel("separable-cos", 1.0, 1).triangular
        k = build_kernel("fredholm-periodic", 2.0, 1)
        assert k.matrices(0.0, 1.0)[0, 0] == pytest.approx(0.5)

    @pytest.mark.parametrize("text", ["nope", "convolution-exp(abc)", "Identity"])
    def test_unknown_kernel(self, text):
        """Test that unknown names and bad parameters are rejected."""
        with pytest.raises(ConfigurationError):
            build_kernel(text, 1.0, 1)

    def test_inline_kernel(self):
        """Test an inline triangle kernel with its exact derivative."""
        spec = KernelSpec(entries=[["exp(-(t-s))"]], dt_entries=[["-exp(-(t-s))"]])
        k = kernel_from_spec(spec, 1.0, 1)
        assert k.label == "inline"
        assert k.matrices(1.0, 0.0)[0, 0] == pytest.approx(np.exp(-1.0))
        assert k.derivative(1.0, 0.0)[0, 0] == pytest.approx(-np.exp(-1.0))

    def test_kernel_spec_needs_one_source(self):
        """Test that a kernel section names a catalog entry or inline entries, not both."""
        with pytest.raises(ValidationError):
            KernelSpec(name="identity", entries=[["1"]])
        with pytest.raises(ValidationError):
            KernelSpec()


class TestFieldCatalog:
    """Test suite for named and inline fields."""

    def test_band(self, mesh):
        """Test F = [0.9, 1.1] and its uniform bound."""
        band = build_field("band", mesh, 1)
        sets = band(np.array([0.0, 0.5]), np.zeros((2, 1)))
        assert isinstance(sets, Box)
        assert np.allclose(sets.lower, 0.9)
        assert np.allclose(sets.upper, 1.1)
        assert np.allclose(band.growth.mu.values, 1.1)
        assert not band.is_singleton

    def test_growth_scales_with_dimension(self, mesh):
        """Test that catalog growth constants scale by sqrt(d)."""
        field = build_field("unit", mesh, 2)
        assert np.allclose(field.growth.mu.values, np.sqrt(2.0))
        assert field.is_singleton

    def test_unknown_field(self, mesh):
        """Test that an unknown field name is rejected."""
        with pytest.raises(ConfigurationError):
            build_field("nope", mesh, 1)

    def test_inline_box(self, mesh):
        """Test a box field with time-dependent corners and zero growth."""
        field = field_from_spec(FieldSpec(type="box", lower=["-1"], upper=["t"]), mesh, 1, None)
        sets = field(np.array([0.5]), np.zeros((1, 1)))
        assert np.allclose(sets.lower, -1.0)
        assert np.allclose(sets.upper, 0.5)
        assert np.all(field.growth.mu.values == 0.0)

    def test_inline_ball(self, mesh):
        """Test a ball field centered at the state."""
        spec = FieldSpec(type="ball", center=["x"], radius="0.5", lipschitz=1.0)
        field = field_from_spec(spec, mesh, 1, None)
        sets = field(np.array([0.0, 1.0]), np.array([[2.0], [3.0]]))
        assert isinstance(sets, Ball)
        assert np.allclose(sets.center[:, 0], [2.0, 3.0])
        assert np.allclose(sets.radius, 0.5)
        assert field.lipschitz_meta == 1.0

    def test_inline_function(self, mesh):
        """Test that an inline function becomes a singleton field."""
        field = field_from_spec(FieldSpec(type="function", components=["-x"]), mesh, 1, None)
        assert field.is_singleton
        assert np.allclose(field.point_map(np.array([0.0]), np.array([[2.0]])), [[-2.0]])

    def test_named_field_takes_growth_override(self, mesh):
        """Test that a growth section replaces the catalog growth data."""
        growth = growth_from_spec(GrowthSpec(c="2", eta="t", mu="3"), mesh)
        field = field_from_spec(FieldSpec(name="linear"), mesh, 1, growth)
        assert field.is_singleton
        assert np.allclose(field.growth.c.values, 2.0)
        assert np.allclose(field.growth.eta.values[:, 0], mesh.nodes)

    def test_field_spec_validation(self):
        """Test that inline kinds require their pieces."""
        with pytest.raises(ValidationError):
            FieldSpec(type="ball", center=["0"])
        with pytest.raises(ValidationError):
            FieldSpec(name="unit", type="box", lower=["0"], upper=["1"])


class TestProblemCatalog:
    """Test suite for resolve_problem."""

    def test_catalog_problem(self, mesh):
        """Test exp-growth: identity kernel, h = 1, exact e^t."""
        problem = resolve_problem(ProblemSpec(name="exp-growth"), mesh)
        assert problem.name == "exp-growth"
        assert problem.kernel.label == "identity"
        assert np.all(problem.h.values == 1.0)
        exact = problem.exact_path(mesh)
        assert exact is not None
        assert np.allclose(exact.values[:, 0], np.exp(mesh.nodes))

    def test_overrides(self, mesh):
        """Test that h and exact override the catalog entry."""
        spec = ProblemSpec(name="exp-growth", h=["2"], exact=["2*exp(t)"])
        problem = resolve_problem(spec, mesh)
        assert np.all(problem.h.values == 2.0)
        assert np.allclose(problem.exact_path(mesh).values[:, 0], 2.0 * np.exp(mesh.nodes))

    def test_problem_without_exact(self, mesh):
        """Test that inclusion problems carry no closed form."""
        problem = resolve_problem(ProblemSpec(name="unit-interval"), mesh)
        assert problem.exact is None
        assert problem.exact_path(mesh) is None

    def test_components_broadcast_to_dimension(self):
        """Test that one h component fills every coordinate."""
        mesh = make_uniform_mesh(1.0, 11, 2)
        problem = resolve_problem(ProblemSpec(name="exp-growth"), mesh)
        assert problem.h.values.shape == (11, 2)

    def test_inline_problem(self, mesh):
        """Test a problem defined without a catalog name."""
        spec = ProblemSpec(
            kernel=KernelSpec(name="identity"),
            rhs=FieldSpec(type="function", components=["0"]),
            h=["t"],
        )
        problem = resolve_problem(spec, mesh)
        assert problem.name == "inline"
        assert np.allclose(problem.h.values[:, 0], mesh.nodes)

    @pytest.mark.parametrize(
        "spec",
        [
            ProblemSpec(name="nope"),
            ProblemSpec(rhs=FieldSpec(name="unit")),
            ProblemSpec(kernel=KernelSpec(name="identity")),
            ProblemSpec(name="exp-growth", h=["1", "2", "3"]),
        ],
    )
    def test_invalid_problems(self, spec, mesh):
        """Test unknown names, missing pieces and component counts."""
        with pytest.raises(ConfigurationError):
            resolve_problem(spec, mesh)

    def test_problem_names_sorted(self):
        """Test that the catalog lists its problems in order."""
        names = problem_names()
        assert names == sorted(names)
        assert "hammerstein-affine" in names
