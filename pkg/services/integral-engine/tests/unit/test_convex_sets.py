"""Unit tests for convex sets, support functions and projections."""

import numpy as np
import pytest
from shared.exceptions import InvalidArgumentError

from app.services.convex_sets import (
    Ball,
    Box,
    Polytope,
    dominates,
    hausdorff_on_directions,
    normalize,
    probe_directions,
    project,
    support,
)


@pytest.fixture
def triangle():
    return Polytope(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))


class TestSupport:
    """Test suite for support values and points."""

    def test_ball_support(self):
        """Test the support point center + r u."""
        value, point = support(Ball(np.zeros(2), 2.0), np.array([3.0, 4.0]))
        assert value == pytest.approx(2.0)
        assert np.allclose(point, [1.2, 1.6])

    def test_box_support(self):
        """Test the support of the unit square in direction (1, -1)."""
        value, point = Box(np.zeros(2), np.ones(2)).support(np.array([1.0, -1.0]))
        assert value == pytest.approx(1.0 / np.sqrt(2.0))
        assert np.array_equal(point, [1.0, 0.0])

    def test_box_zero_component_takes_upper(self):
        """Test that a zero direction component picks the upper bound."""
        _, point = Box(np.zeros(2), np.ones(2)).support(np.array([1.0, 0.0]))
        assert np.array_equal(point, [1.0, 1.0])

    def test_polytope_tie_takes_lowest_index(self, triangle):
        """Test the deterministic tie rule."""
        value, point = triangle.support(np.array([1.0, 1.0]))
        assert value == pytest.approx(1.0 / np.sqrt(2.0))
        assert np.array_equal(point, [1.0, 0.0])

    def test_batched_support(self):
        """Test support over a batch of intervals."""
        boxes = Box(np.array([[-1.0], [0.0], [2.0]]), np.array([[1.0], [0.5], [3.0]]))
        values, points = boxes.support(np.array([-1.0]))
        assert np.allclose(values, [1.0, 0.0, -2.0])
        assert np.allclose(points[:, 0], [-1.0, 0.0, 2.0])

    def test_zero_direction_rejected(self):
        """Test that a zero direction is rejected."""
        with pytest.raises(InvalidArgumentError):
            normalize(np.zeros(3))


class TestProjection:
    """Test suite for Euclidean projections."""

    def test_ball_projection(self):
        """Test projection from outside and inside a ball."""
        ball = Ball(np.zeros(2), 1.0)
        assert np.allclose(project(ball, np.array([3.0, 4.0])), [0.6, 0.8])
        assert np.array_equal(project(ball, np.array([0.1, 0.2])), [0.1, 0.2])

    def test_box_projection_clips(self):
        """Test that box projection clips componentwise."""
        box = Box(np.array([-1.0, 0.0]), np.array([1.0, 2.0]))
        assert np.array_equal(box.project(np.array([3.0, -1.0])), [1.0, 0.0])

    def test_polytope_projection_onto_edge(self, triangle):
        """Test the nearest point on the hypotenuse."""
        assert np.allclose(triangle.project(np.array([1.0, 1.0])), [0.5, 0.5])

    def test_polytope_projection_onto_vertex(self, triangle):
        """Test the nearest point at a vertex."""
        assert np.allclose(triangle.project(np.array([-1.0, -1.0])), [0.0, 0.0])

    def test_polytope_projection_inside(self, triangle):
        """Test that interior points are fixed."""
        assert np.allclose(triangle.project(np.array([0.2, 0.3])), [0.2, 0.3])

    def test_many_vertices_use_gradient_projection(self):
        """Test the projected-gradient path on a 40-gon."""
        angles = np.linspace(0.0, 2.0 * np.pi, 40, endpoint=False)
        polygon = Polytope(np.column_stack([np.cos(angles), np.sin(angles)]))
        assert np.allclose(polygon.project(np.array([2.0, 0.0])), [1.0, 0.0], atol=1e-2)

    def test_distance_and_contains(self):
        """Test distance to a ball and membership."""
        ball = Ball(np.zeros(1), 1.0)
        assert ball.distance(np.array([3.0])) == pytest.approx(2.0)
        assert ball.contains(np.array([0.5]))
        assert not ball.contains(np.array([1.5]))


class TestSetComparisons:
    """Test suite for enclosing sets and support-function comparisons."""

    def test_enclosing_ball_keeps_first_center(self):
        """Test the ball enclosing rule."""
        enclosing = Ball.enclosing([Ball(np.zeros(1), 1.0), Ball(np.ones(1), 1.0)])
        assert np.array_equal(enclosing.center, [0.0])
        assert float(enclosing.radius) == pytest.approx(2.0)

    def test_enclosing_box(self):
        """Test the bounding box of two boxes."""
        enclosing = Box.enclosing([Box([0.0], [1.0]), Box([-2.0], [0.5])])
        assert np.array_equal(enclosing.lower, [-2.0])
        assert np.array_equal(enclosing.upper, [1.0])

    def test_hausdorff_on_directions(self):
        """Test the sampled Hausdorff distance of nested intervals."""
        directions = probe_directions(1)
        gap = hausdorff_on_directions(Box([0.0], [1.0]), Box([0.0], [2.0]), directions)
        assert float(gap) == pytest.approx(1.0)

    def test_dominates(self):
        """Test support-function domination."""
        directions = probe_directions(2)
        outer = Box(-np.ones(2), np.ones(2))
        inner = Ball(np.zeros(2), 0.5)
        assert dominates(outer, inner, directions)
        assert not dominates(inner, outer, directions)

    def test_probe_directions_count(self):
        """Test the 2d + 2 probe directions."""
        assert probe_directions(3).shape == (8, 3)

    def test_validity(self):
        """Test that inverted boxes and negative radii are invalid."""
        assert not Box([1.0], [0.0]).is_valid()
        assert not Ball(np.zeros(1), -1.0).is_valid()
        assert Ball(np.zeros(1), 0.0).is_valid()
