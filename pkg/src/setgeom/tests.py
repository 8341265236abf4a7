import math

import numpy as np
from django.test import SimpleTestCase

from backend.exceptions import EmptySetError, ModelError, NumericalError, UnboundedError
from setgeom.operators import (
    box_hull, discrete_post_over, mat_exp, omega, phi2, poly_distance, template_hull,
)
from setgeom.polytope import Polytope
from setgeom.support import Ball, LinearImage, MinkowskiSum, PolytopeSet, support
from setgeom.templates import TemplateDirections, templates_for


def unit_box(dim=2):
    return Polytope.from_box(-np.ones(dim), np.ones(dim))


class ShiftReset:

    def __init__(self, shift):
        self.shift = np.asarray(shift, dtype=float)

    def image_set(self, polytope):
        return MinkowskiSum(PolytopeSet(polytope), Ball(self.shift, 0.0))


class ShiftEdge:

    def __init__(self, guard, shift):
        self.guard = guard
        self.reset = ShiftReset(shift)


class PolytopeTestCase(SimpleTestCase):

    def test_canonical_merges_duplicates(self):
        polytope = Polytope([[1, 0], [2, 0], [0, 0]], [1, 3, 5])
        self.assertEquals(polytope.A.shape[0], 1)
        self.assertAlmostEqual(polytope.b[0], 1.0)

    def test_zero_row_infeasible(self):
        self.assertTrue(Polytope([[0, 0]], [-1]).is_empty())

    def test_box_support(self):
        value, bounded, _ = unit_box().support([1, 0])
        self.assertTrue(bounded)
        self.assertEquals(value, 1.0)

    def test_lp_support(self):
        triangle = Polytope([[-1, 0], [0, -1], [1, 1]], [0, 0, 1])
        value, bounded, point = triangle.support([1, 2])
        self.assertAlmostEqual(value, 2.0)
        np.testing.assert_allclose(point, [0, 1], atol=1e-9)

    def test_unbounded_support(self):
        value, bounded, _ = Polytope.halfspace([1, 0], 1).support([-1, 0])
        self.assertFalse(bounded)
        self.assertEquals(value, math.inf)

    def test_empty(self):
        self.assertTrue(Polytope.from_box([1], [0]).is_empty())
        self.assertFalse(unit_box().is_empty())

    def test_affine_image_invertible(self):
        image = Polytope.from_box([0], [3]).affine_image([[1.0]], [1.0])
        self.assertTrue(image.equals(Polytope.from_box([1], [4])))

    def test_affine_image_singular(self):
        # Project the unit square onto the first axis, embedded in 2-D.
        image = unit_box().affine_image([[1, 0], [0, 0]], [0, 2])
        self.assertTrue(image.equals(Polytope.from_box([-1, 2], [1, 2])))

    def test_affine_image_permutation(self):
        box = Polytope.from_box([0, 1, 2], [1, 2, 3])
        shift = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]])
        image = box.affine_image(shift)
        self.assertTrue(image.equals(Polytope.from_box([1, 2, 0], [2, 3, 1])))

    def test_preimage(self):
        target = Polytope.from_box([3], [4])
        preimage = target.preimage([[1.0]], [1.0])
        self.assertTrue(preimage.equals(Polytope.from_box([2], [3])))

    def test_difference_cells(self):
        cells = Polytope.from_box([0], [3]).difference(Polytope.from_box([2], [5]))
        self.assertEquals(len(cells), 1)
        self.assertTrue(cells[0].equals(Polytope.from_box([0], [2])))

    def test_difference_covered(self):
        self.assertEquals(unit_box().difference(Polytope.from_box([-2, -2], [2, 2])), [])

    def test_sample_inside(self):
        rng = np.random.default_rng(0)
        triangle = Polytope([[-1, 0], [0, -1], [1, 1]], [0, 0, 1])
        points = triangle.sample(rng, 200)
        self.assertEquals(points.shape, (200, 2))
        self.assertTrue(all(triangle.contains_point(p) for p in points))

    def test_sample_degenerate(self):
        segment = Polytope([[1, -1], [-1, 1], [1, 0], [-1, 0]], [0, 0, 1, 0])
        points = segment.sample(np.random.default_rng(1), 20)
        np.testing.assert_allclose(points[:, 0], points[:, 1], atol=1e-7)

    def test_lift(self):
        lifted = Polytope.from_box([0], [1]).lift(1, 3)
        self.assertEquals(lifted.dim, 3)
        self.assertTrue(lifted.contains_point([100, 0.5, -100]))

    def test_vertices_square(self):
        vertices = unit_box().vertices_2d()
        self.assertEquals(len(vertices), 4)

    def test_round_trip_dict(self):
        box = unit_box(3)
        self.assertTrue(Polytope.from_dict(box.to_dict()).equals(box))

    def test_dimension_check(self):
        with self.assertRaises(ModelError):
            Polytope.from_dict(unit_box().to_dict(), dim=3)


class SupportTestCase(SimpleTestCase):

    def test_unit_box(self):
        self.assertEquals(support(unit_box(), [1, 0]), (1.0, True))

    def test_minkowski(self):
        value, _ = support(MinkowskiSum(unit_box(), unit_box()), [1, 1])
        self.assertAlmostEqual(value, 4.0)

    def test_linear_image(self):
        value, _ = support(LinearImage([[2, 0], [0, 1]], unit_box()), [1, 0])
        self.assertAlmostEqual(value, 2.0)

    def test_additivity(self):
        rng = np.random.default_rng(2)
        left = Polytope([[-1, 0], [0, -1], [1, 1]], [0, 0, 1])
        right = Ball([1, -1], 0.5)
        total = MinkowskiSum(left, right)
        for a in rng.normal(size=(50, 2)):
            self.assertAlmostEqual(support(total, a)[0], support(left, a)[0] + support(right, a)[0])

    def test_unbounded_flag(self):
        value, bounded = support(Polytope.halfspace([1, 0], 0), [1, 0])
        self.assertEquals(value, 0.0)
        value, bounded = support(Polytope.halfspace([1, 0], 0), [0, 1])
        self.assertFalse(bounded)


class TemplateTestCase(SimpleTestCase):

    def test_box_directions(self):
        self.assertEquals(len(TemplateDirections.box(3)), 6)

    def test_octagonal_directions(self):
        self.assertEquals(len(TemplateDirections.octagonal(3)), 6 + 12)

    def test_auto_resolution(self):
        self.assertEquals(len(templates_for(2, 'auto')), 8)
        self.assertEquals(len(templates_for(5, 'auto')), 10)

    def test_unknown_template(self):
        with self.assertRaises(ModelError):
            templates_for(2, 'zonotope')

    def test_disk_to_square(self):
        hull = template_hull(Ball([0, 0], 1.0), TemplateDirections.box(2))
        self.assertTrue(hull.equals(unit_box()))

    def test_box_fixed_point(self):
        hull = template_hull(unit_box(), TemplateDirections.box(2))
        self.assertTrue(hull.equals(unit_box()))

    def test_segment_octagonal(self):
        segment = Polytope([[1, -1], [-1, 1], [1, 0], [-1, 0]], [0, 0, 1, 0])
        hull = template_hull(segment, TemplateDirections.octagonal(2))
        self.assertTrue(hull.contains_point([0.5, 0.5]))
        self.assertFalse(hull.contains_point([0.5, 0.4], tol=1e-9))
        vertices = hull.vertices_2d()
        np.testing.assert_allclose(vertices[:, 0], vertices[:, 1], atol=1e-7)
        self.assertAlmostEqual(vertices.min(), 0.0)
        self.assertAlmostEqual(vertices.max(), 1.0)

    def test_idempotent(self):
        V = TemplateDirections.octagonal(2)
        once = template_hull(Ball([0.3, -0.2], 1.0), V)
        twice = template_hull(once, V)
        self.assertTrue(once.equals(twice))

    def test_containment(self):
        rng = np.random.default_rng(3)
        triangle = Polytope([[-1, 0], [0, -1], [1, 1]], [0, 0, 1])
        hull = template_hull(triangle, TemplateDirections.box(2))
        square = box_hull(triangle)
        for p in triangle.sample(rng, 1000):
            self.assertTrue(hull.contains_point(p))
            self.assertTrue(square.contains_point(p))

    def test_unbounded_hull(self):
        with self.assertRaises(UnboundedError):
            template_hull(Polytope.whole(2), TemplateDirections.box(2))


class BoxHullTestCase(SimpleTestCase):

    def test_symmetric(self):
        hull = box_hull(Polytope.from_box([1, -3], [2, -1]))
        self.assertTrue(hull.equals(Polytope.from_box([-2, -3], [2, 3])))

    def test_point(self):
        self.assertTrue(box_hull(Polytope.point([0, 0])).equals(Polytope.point([0, 0])))

    def test_disk(self):
        self.assertTrue(box_hull(Ball([0, 0], 2.0)).equals(Polytope.from_box([-2, -2], [2, 2])))

    def test_unbounded(self):
        with self.assertRaises(UnboundedError):
            box_hull(Polytope.halfspace([1, 0], 0))


class MatExpTestCase(SimpleTestCase):

    def test_zero(self):
        np.testing.assert_array_equal(mat_exp(np.zeros((3, 3)), 2.0), np.eye(3))

    def test_nilpotent(self):
        np.testing.assert_allclose(mat_exp([[0, 1], [0, 0]], 1.0), [[1, 1], [0, 1]], rtol=1e-12)

    def test_scalar(self):
        np.testing.assert_allclose(mat_exp([[-1.0]], math.log(2)), [[0.5]], rtol=1e-12)

    def test_overflow(self):
        with self.assertRaises(NumericalError):
            mat_exp([[1.0]], 1e6)


class Phi2TestCase(SimpleTestCase):

    def test_zero_matrix(self):
        np.testing.assert_allclose(phi2(np.zeros((2, 2)), 0.3), 0.045 * np.eye(2))

    def test_identity(self):
        np.testing.assert_allclose(phi2(np.eye(2), 1.0), (math.e - 2) * np.eye(2), rtol=1e-13)

    def test_zero_delta(self):
        np.testing.assert_array_equal(phi2(np.eye(2), 0.0), np.zeros((2, 2)))

    def test_not_converged(self):
        with self.assertRaises(NumericalError):
            phi2(np.eye(1) * 50, 1.0, max_terms=5)


class OmegaTestCase(SimpleTestCase):

    def test_constant_dynamics_point(self):
        X = Polytope.point([2.0, -1.0])
        for lam in (0.0, 0.5, 1.0):
            section = template_hull(omega(X, np.zeros((2, 2)), 0.1, lam), TemplateDirections.box(2))
            self.assertTrue(section.equals(X))

    def test_lambda_zero_is_initial_set(self):
        X = Polytope.from_box([1, 2], [2, 3])
        A = np.array([[0.0, 1.0], [-2.0, -0.5]])
        V = TemplateDirections.octagonal(2)
        self.assertTrue(template_hull(omega(X, A, 0.2, 0.0), V).equals(template_hull(X, V)))

    def test_rotation(self):
        A = np.array([[0.0, 1.0], [-1.0, 0.0]])
        X = Polytope.point([1.0, 0.0])
        section = omega(X, A, 0.1, 1.0)
        directions = [np.array([math.cos(k * math.pi / 8), math.sin(k * math.pi / 8)]) for k in range(16)]
        self.assertTrue(section.contains_point([math.cos(0.1), -math.sin(0.1)], directions))

    def test_invalid_lambda(self):
        with self.assertRaises(ModelError):
            omega(unit_box(), np.zeros((2, 2)), 0.1, 1.5)

    def test_containment_random_systems(self):
        rng = np.random.default_rng(4)
        delta = 0.1
        for n in (2, 3, 6):
            V = TemplateDirections.octagonal(n)
            for _ in range(2):
                A = rng.normal(size=(n, n))
                A -= np.eye(n) * max(0.0, np.max(np.linalg.eigvals(A).real))
                lo = rng.uniform(-2, 0, size=n)
                X = Polytope.from_box(lo, lo + rng.uniform(0.1, 1.0, size=n))
                points = X.sample(rng, 100)
                for lam in (0.0, 0.25, 0.5, 0.75, 1.0):
                    section = omega(X, A, delta, lam)
                    propagator = mat_exp(A, lam * delta)
                    for x0 in points:
                        self.assertTrue(section.contains_point(propagator @ x0, V.V))


class DiscretePostTestCase(SimpleTestCase):

    def test_interval(self):
        edge = ShiftEdge(Polytope.from_box([2], [3]), [1.0])
        post = discrete_post_over(Polytope.from_box([0], [3]), edge, TemplateDirections.box(1))
        self.assertTrue(post.equals(Polytope.from_box([3], [4])))

    def test_below_guard(self):
        edge = ShiftEdge(Polytope.from_box([2], [3]), [1.0])
        post = discrete_post_over(Polytope.from_box([0], [1]), edge, TemplateDirections.box(1))
        self.assertTrue(post.is_empty())

    def test_identity_whole(self):
        V = TemplateDirections.octagonal(2)
        edge = ShiftEdge(Polytope.whole(2), [0.0, 0.0])
        X = Ball([0, 0], 1.0)
        self.assertTrue(discrete_post_over(X, edge, V, Polytope.whole(2)).equals(template_hull(X, V)))


class DistanceTestCase(SimpleTestCase):

    def test_boxes(self):
        far = Polytope.from_box([2, -1], [4, 1])
        self.assertAlmostEqual(poly_distance(unit_box(), far), 1.0, places=5)

    def test_overlap(self):
        self.assertEquals(poly_distance(unit_box(), Polytope.from_box([0, 0], [3, 3])), 0.0)

    def test_segments(self):
        left = Polytope.from_box([0, 0], [0, 1])
        right = Polytope.from_box([2, 2], [3, 2])
        self.assertAlmostEqual(poly_distance(left, right), math.sqrt(5), places=5)

    def test_symmetry_and_triangle(self):
        rng = np.random.default_rng(5)
        boxes = []
        for _ in range(3):
            lo = rng.uniform(-5, 5, size=2)
            boxes.append(Polytope.from_box(lo, lo + 1))
        a, b, c = boxes
        self.assertAlmostEqual(poly_distance(a, b), poly_distance(b, a), places=5)
        # Boxes of diameter sqrt(2): d(a, c) <= d(a, b) + diam(b) + d(b, c).
        self.assertLessEqual(poly_distance(a, c), poly_distance(a, b) + math.sqrt(2) + poly_distance(b, c) + 1e-6)

    def test_empty(self):
        with self.assertRaises(EmptySetError):
            poly_distance(Polytope.empty(2), unit_box())
