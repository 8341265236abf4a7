import logging
import math

import cvxpy as cp
import numpy as np
from scipy.linalg import expm

from backend.exceptions import EmptySetError, ModelError, NumericalError, UnboundedError
from setgeom.lp import INFEASIBLE, solve_lp
from setgeom.polytope import Polytope
from setgeom.support import BoxHull, IntersectOver, LinearImage, MinkowskiSum, Scale, as_support_set

logger = logging.getLogger(__name__)

PHI2_RELATIVE_TOL = 1e-15
DEFAULT_PHI2_TERMS = 200


def template_hull(S, V):
    """{x | a.x <= rho(a, S) for every a in V}."""
    S = as_support_set(S)
    rows, rhs = [], []
    for a in V:
        value, bounded = S.support(a)
        if value == -np.inf:
            return Polytope.empty(S.dim)
        if bounded:
            rows.append(a)
            rhs.append(value)
    if not rows:
        raise UnboundedError(d={"directions": len(V)}, m="unbounded_hull")
    return Polytope(np.array(rows), rhs)


def box_hull(S):
    S = as_support_set(S)
    box = BoxHull(S)
    widths = box.half_widths
    if np.any(~np.isfinite(widths)):
        value, _ = S.support(np.ones(S.dim))
        if value == -np.inf:
            return Polytope.empty(S.dim)
        raise UnboundedError(m="unbounded_box_hull")
    return Polytope.from_box(-widths, widths)


def mat_exp(A, delta):
    """e^{delta A} by scaling and squaring with Pade approximants."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not np.all(np.isfinite(A)) or not math.isfinite(delta):
        raise NumericalError(d={"delta": delta}, m="non_finite_input")
    with np.errstate(over="raise", invalid="raise"):
        try:
            result = expm(A * delta)
        except (FloatingPointError, OverflowError):
            raise NumericalError(d={"delta": delta, "norm": float(np.linalg.norm(A, 1))}, m="mat_exp_overflow")
    if not np.all(np.isfinite(result)):
        raise NumericalError(d={"delta": delta, "norm": float(np.linalg.norm(A, 1))}, m="mat_exp_overflow")
    return result


def phi2(A, delta, max_terms=None):
    """sum_{i >= 0} delta^{i+2} / (i+2)! A^i, truncated once a term is negligible."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if delta == 0:
        return np.zeros((n, n))
    max_terms = max_terms or DEFAULT_PHI2_TERMS
    term = np.eye(n) * (delta ** 2 / 2.0)
    total = term.copy()
    for i in range(1, max_terms):
        term = term @ A * (delta / (i + 2))
        total = total + term
        term_norm = np.max(np.abs(term))
        if term_norm <= PHI2_RELATIVE_TOL * np.max(np.abs(total)) or term_norm == 0:
            return total
        if not np.isfinite(term_norm):
            break
    raise NumericalError(d={"delta": delta, "terms": max_terms}, m="phi2_not_converged")


def omega(X, A, delta, lam, expA=None, bloat=None):
    """
    Set containing theta(lam * delta; x0) for every x0 in X:

        (1 - lam) X + lam e^{delta A} X + (lam E+ & (1 - lam) E-)

    with E+ = box(Phi2 box(A^2 X)) and E- = box(Phi2 box(A^2 e^{delta A} X)).
    Phi2 is taken of |A| so the box bounds dominate every entry of the series.
    """
    if not 0.0 <= lam <= 1.0:
        raise ModelError(d={"lambda": [f"{lam} is outside [0, 1]."]}, m="invalid_lambda")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    X = as_support_set(X)
    expA = mat_exp(A, delta) if expA is None else expA
    if bloat is None:
        bloat = phi2(np.abs(A), delta)
    A2 = A @ A
    e_plus = BoxHull(LinearImage(bloat, BoxHull(LinearImage(A2, X))))
    e_minus = BoxHull(LinearImage(bloat, BoxHull(LinearImage(A2 @ expA, X))))
    interpolant = MinkowskiSum(Scale(1.0 - lam, X), Scale(lam, LinearImage(expA, X)))
    return MinkowskiSum(interpolant, IntersectOver(Scale(lam, e_plus), Scale(1.0 - lam, e_minus)))


def discrete_post_over(X, edge, V, inv_dst=None):
    """
    R(TH_V(X) & G) & Inv(dst), re-hulled in V. ``edge`` needs ``guard`` and a
    ``reset`` offering ``image_set(polytope)``.
    """
    hull = template_hull(X, V).intersect(edge.guard)
    if hull.is_empty():
        return Polytope.empty(hull.dim)
    image = template_hull(edge.reset.image_set(hull), V)
    if inv_dst is not None:
        image = image.intersect(inv_dst)
    if image.is_empty():
        return Polytope.empty(image.dim)
    return image


def poly_distance(P, Q):
    """Euclidean distance between two bounded polytopes (a small QP)."""
    if P.dim != Q.dim:
        raise ModelError(d={"dim": [f"{P.dim} vs {Q.dim}"]}, m="dimension_mismatch")
    if P.is_empty() or Q.is_empty():
        raise EmptySetError(m="empty_polytope")
    if not (P.is_bounded() and Q.is_bounded()):
        raise UnboundedError(m="unbounded_polytope")
    joint = P.intersect(Q)
    if not joint.is_empty():
        return 0.0
    p = cp.Variable(P.dim)
    q = cp.Variable(Q.dim)
    constraints = []
    if P.A.size:
        constraints.append(P.A @ p <= P.b)
    if Q.A.size:
        constraints.append(Q.A @ q <= Q.b)
    problem = cp.Problem(cp.Minimize(cp.sum_squares(p - q)), constraints)
    problem.solve()
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise NumericalError(d={"status": problem.status}, m="distance_not_solved")
    return float(np.sqrt(max(problem.value, 0.0)))


def closest_points(P, Q):
    """The pair realising poly_distance, for witnesses."""
    p = cp.Variable(P.dim)
    q = cp.Variable(Q.dim)
    constraints = []
    if P.A.size:
        constraints.append(P.A @ p <= P.b)
    if Q.A.size:
        constraints.append(Q.A @ q <= Q.b)
    cp.Problem(cp.Minimize(cp.sum_squares(p - q)), constraints).solve()
    return p.value, q.value


def feasible_point(P):
    status, x, _ = solve_lp(np.zeros(P.dim), P.A, P.b)
    if status == INFEASIBLE:
        return None
    return x


def point_distance(x, P):
    """Euclidean distance from ``x`` to a (possibly unbounded) polyhedron."""
    x = np.asarray(x, dtype=float)
    if P.is_empty():
        raise EmptySetError(m="empty_polytope")
    if P.contains_point(x, 0.0):
        return 0.0
    if P.A.shape[0] == 1:
        return float(max(P.A[0] @ x - P.b[0], 0.0) / np.linalg.norm(P.A[0]))
    if P.is_box():
        lo, hi = P.bounding_box()
        return float(np.linalg.norm(x - np.clip(x, lo, hi)))
    p = cp.Variable(P.dim)
    problem = cp.Problem(cp.Minimize(cp.sum_squares(p - x)), [P.A @ p <= P.b])
    problem.solve()
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise NumericalError(d={"status": problem.status}, m="distance_not_solved")
    return float(np.sqrt(max(problem.value, 0.0)))
