"""
Lazily composed convex sets evaluated through their support function

    rho(a, S) = sup { a . x | x in S }.

Every node answers ``support(a)`` with ``(value, bounded)``; an unbounded
direction reports ``(inf, False)`` instead of raising.
"""
import abc

import numpy as np

from backend.exceptions import ModelError
from setgeom.polytope import Polytope


class SupportSet(abc.ABC):
    dim = None

    @abc.abstractmethod
    def support(self, a):
        pass

    def __add__(self, other):
        return MinkowskiSum(self, as_support_set(other))

    def __rmul__(self, scalar):
        return Scale(scalar, self)

    def __and__(self, other):
        return IntersectOver(self, as_support_set(other))

    def transform(self, M):
        return LinearImage(M, self)

    def contains_point(self, x, directions, tol=1e-9):
        """Membership test restricted to the given directions (the template the set is judged on)."""
        x = np.asarray(x, dtype=float)
        for a in directions:
            value, bounded = self.support(a)
            if bounded and a @ x > value + tol:
                return False
        return True


class PolytopeSet(SupportSet):

    def __init__(self, polytope):
        self.polytope = polytope
        self.dim = polytope.dim

    def support(self, a):
        value, bounded, _ = self.polytope.support(a)
        return value, bounded


class Ball(SupportSet):

    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.radius < 0:
            raise ModelError(d={"radius": ["Radius must be nonnegative."]}, m="invalid_ball")
        self.dim = self.center.size

    def support(self, a):
        a = np.asarray(a, dtype=float)
        return float(a @ self.center + self.radius * np.linalg.norm(a)), True


class LinearImage(SupportSet):

    def __init__(self, M, inner):
        self.M = np.atleast_2d(np.asarray(M, dtype=float))
        self.inner = as_support_set(inner)
        if self.M.shape[1] != self.inner.dim:
            raise ModelError(d={"M": [f"{self.M.shape} cannot act on dimension {self.inner.dim}."]},
                             m="dimension_mismatch")
        self.dim = self.M.shape[0]

    def support(self, a):
        return self.inner.support(self.M.T @ np.asarray(a, dtype=float))


class MinkowskiSum(SupportSet):

    def __init__(self, left, right):
        self.left = as_support_set(left)
        self.right = as_support_set(right)
        if self.left.dim != self.right.dim:
            raise ModelError(d={"dim": [f"{self.left.dim} vs {self.right.dim}"]}, m="dimension_mismatch")
        self.dim = self.left.dim

    def support(self, a):
        left, left_bounded = self.left.support(a)
        right, right_bounded = self.right.support(a)
        if not (left_bounded and right_bounded):
            return np.inf, False
        return left + right, True


class Scale(SupportSet):

    def __init__(self, factor, inner):
        self.factor = float(factor)
        self.inner = as_support_set(inner)
        self.dim = self.inner.dim

    def support(self, a):
        if self.factor == 0:
            return 0.0, True
        a = np.asarray(a, dtype=float)
        if self.factor > 0:
            value, bounded = self.inner.support(a)
        else:
            value, bounded = self.inner.support(-a)
        if not bounded:
            return np.inf, False
        return abs(self.factor) * value, True


class IntersectOver(SupportSet):
    """Pointwise minimum of two supports; contains the true intersection."""

    def __init__(self, left, right):
        self.left = as_support_set(left)
        self.right = as_support_set(right)
        self.dim = self.left.dim

    def support(self, a):
        left, left_bounded = self.left.support(a)
        right, right_bounded = self.right.support(a)
        if not left_bounded and not right_bounded:
            return np.inf, False
        return min(left, right), True


class BoxHull(SupportSet):
    """The symmetric box [-|x_1|, |x_1|] x ... x [-|x_n|, |x_n|] around a bounded set."""

    def __init__(self, inner):
        self.inner = as_support_set(inner)
        self.dim = self.inner.dim
        self._half_widths = None

    @property
    def half_widths(self):
        if self._half_widths is None:
            eye = np.eye(self.dim)
            widths = np.zeros(self.dim)
            for i in range(self.dim):
                upper, upper_bounded = self.inner.support(eye[i])
                lower, lower_bounded = self.inner.support(-eye[i])
                if not (upper_bounded and lower_bounded):
                    widths[i] = np.inf
                else:
                    widths[i] = max(abs(upper), abs(lower))
            self._half_widths = widths
        return self._half_widths

    def support(self, a):
        a = np.asarray(a, dtype=float)
        widths = self.half_widths
        active = a != 0
        if np.any(~np.isfinite(widths[active])):
            return np.inf, False
        return float(np.abs(a[active]) @ widths[active]), True


def as_support_set(value):
    if isinstance(value, SupportSet):
        return value
    if isinstance(value, Polytope):
        return PolytopeSet(value)
    raise ModelError(d={"set": [f"Cannot use {type(value).__name__} as a set."]}, m="invalid_set")


def support(S, a):
    """rho(a, S) with an explicit boundedness flag."""
    return as_support_set(S).support(np.asarray(a, dtype=float))
