"""
H-representation polytopes {x | A x <= b} with LP-backed queries.

Rows are normalised to unit length on construction so that duplicate
constraints merge and canonical keys can be compared across partitions.
"""
import logging

import numpy as np
from scipy.spatial import ConvexHull, HalfspaceIntersection

from backend.exceptions import EmptySetError, ModelError, UnboundedError
from setgeom.lp import INFEASIBLE, OPTIMAL, UNBOUNDED, solve_lp

logger = logging.getLogger(__name__)

ROW_TOL = 1e-12
MERGE_DECIMALS = 10
# Chebyshev radius below which a cell counts as having no interior.
INTERIOR_TOL = 1e-9


class Polytope:

    def __init__(self, A, b, canonical=True):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.ndim == 1:
            A = A.reshape(1, -1) if b.size == 1 else A.reshape(0, -1)
        if A.shape[0] != b.shape[0]:
            raise ModelError(
                d={"b": [f"{A.shape[0]} rows in A but {b.shape[0]} entries in b."]},
                m="dimension_mismatch",
            )
        self.dim = A.shape[1]
        self.A = A
        self.b = b
        self.infeasible = False
        if canonical:
            self._canonicalize()
        self._support_cache = {}
        self._empty = True if self.infeasible else None
        self._box = None

    # construction

    @classmethod
    def whole(cls, dim):
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros((1, dim)), [-1.0])

    @classmethod
    def from_box(cls, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        eye = np.eye(lo.size)
        rows, rhs = [], []
        for i in range(lo.size):
            if np.isfinite(hi[i]):
                rows.append(eye[i])
                rhs.append(hi[i])
            if np.isfinite(lo[i]):
                rows.append(-eye[i])
                rhs.append(-lo[i])
        return cls(np.array(rows).reshape(-1, lo.size), rhs)

    @classmethod
    def point(cls, p):
        p = np.asarray(p, dtype=float)
        return cls.from_box(p, p)

    @classmethod
    def halfspace(cls, a, b):
        return cls(np.atleast_2d(a), [b])

    @classmethod
    def from_dict(cls, data, dim=None):
        A = np.asarray(data.get("A", []), dtype=float)
        b = np.asarray(data.get("b", []), dtype=float)
        if A.size == 0:
            if dim is None:
                raise ModelError(d={"A": ["Cannot infer the dimension of an empty constraint list."]},
                                 m="dimension_mismatch")
            A = np.zeros((0, dim))
        polytope = cls(A, b)
        if dim is not None and polytope.dim != dim:
            raise ModelError(d={"A": [f"Polytope lives in dimension {polytope.dim}, expected {dim}."]},
                             m="dimension_mismatch")
        return polytope

    def to_dict(self):
        return {"A": self.A.tolist(), "b": self.b.tolist()}

    def _canonicalize(self):
        norms = np.linalg.norm(self.A, axis=1) if self.A.size else np.zeros(self.A.shape[0])
        zero = norms <= ROW_TOL
        if np.any(self.b[zero] < -ROW_TOL):
            self.infeasible = True
            self.A = np.zeros((1, self.dim))
            self.b = np.array([-1.0])
            return
        A = self.A[~zero] / norms[~zero, None]
        b = self.b[~zero] / norms[~zero]
        merged = {}
        for row, rhs in zip(A, b):
            key = tuple(np.round(row, MERGE_DECIMALS) + 0.0)
            if key not in merged or rhs < merged[key][1]:
                merged[key] = (row, rhs)
        keys = sorted(merged)
        self.A = np.array([merged[k][0] for k in keys]).reshape(-1, self.dim)
        self.b = np.array([merged[k][1] for k in keys])

    # queries

    @property
    def rows(self):
        return list(zip(self.A, self.b))

    def is_box(self):
        if self._box is None:
            self._box = bool(np.all(np.sum(np.abs(self.A) > ROW_TOL, axis=1) == 1)) and not self.infeasible
        return self._box

    def _box_bounds(self):
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        for row, rhs in zip(self.A, self.b):
            i = int(np.argmax(np.abs(row)))
            if row[i] > 0:
                hi[i] = min(hi[i], rhs / row[i])
            else:
                lo[i] = max(lo[i], rhs / row[i])
        return lo, hi

    def is_empty(self):
        if self._empty is None:
            if self.is_box():
                lo, hi = self._box_bounds()
                self._empty = bool(np.any(lo > hi + 1e-12))
            else:
                status, _, _ = solve_lp(np.zeros(self.dim), self.A, self.b)
                self._empty = status == INFEASIBLE
        return self._empty

    def support(self, a):
        """Return (value, bounded, maximiser) of sup a.x over the polytope."""
        a = np.asarray(a, dtype=float)
        key = a.tobytes()
        if key in self._support_cache:
            return self._support_cache[key]
        if self.is_empty():
            result = (-np.inf, True, None)
        elif self.is_box():
            lo, hi = self._box_bounds()
            pick = np.where(a > 0, hi, np.where(a < 0, lo, np.where(np.isfinite(lo), lo, hi)))
            pick = np.where(np.isfinite(pick), pick, 0.0)
            unbounded = np.any((a > 0) & ~np.isfinite(hi)) or np.any((a < 0) & ~np.isfinite(lo))
            result = (np.inf, False, None) if unbounded else (float(a @ pick), True, pick)
        else:
            status, x, value = solve_lp(-a, self.A, self.b)
            if status == OPTIMAL:
                result = (-value, True, x)
            elif status == UNBOUNDED:
                result = (np.inf, False, None)
            else:
                result = (-np.inf, True, None)
        self._support_cache[key] = result
        return result

    def bounding_box(self):
        if self.is_empty():
            raise EmptySetError(m="empty_polytope")
        if self.is_box():
            return self._box_bounds()
        eye = np.eye(self.dim)
        hi = np.array([self.support(eye[i])[0] for i in range(self.dim)])
        lo = np.array([-self.support(-eye[i])[0] for i in range(self.dim)])
        return lo, hi

    def is_bounded(self):
        lo, hi = self.bounding_box()
        return bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))

    def contains_point(self, x, tol=1e-9):
        if self.infeasible:
            return False
        if not self.A.size:
            return True
        return bool(np.all(self.A @ np.asarray(x, dtype=float) <= self.b + tol))

    def violation(self, x):
        """Largest constraint residual at ``x``; nonpositive inside."""
        if self.infeasible:
            return np.inf
        if not self.A.size:
            return -np.inf
        return float(np.max(self.A @ x - self.b))

    def contains(self, other, tol=1e-9):
        if other.is_empty():
            return True
        for row, rhs in zip(self.A, self.b):
            value, bounded, _ = other.support(row)
            if not bounded or value > rhs + tol:
                return False
        return True

    def intersect(self, other):
        if other.dim != self.dim:
            raise ModelError(d={"dim": [f"{self.dim} vs {other.dim}"]}, m="dimension_mismatch")
        return Polytope(np.vstack([self.A, other.A]), np.concatenate([self.b, other.b]))

    def chebyshev(self):
        """Chebyshev centre and radius; radius is inf for sets containing a ball of any size."""
        if self.is_empty():
            return None, -np.inf
        if not self.A.size:
            return np.zeros(self.dim), np.inf
        norms = np.linalg.norm(self.A, axis=1).reshape(-1, 1)
        c = np.zeros(self.dim + 1)
        c[-1] = -1.0
        A_lp = np.hstack([self.A, norms])
        bounds = [(None, None)] * self.dim + [(0, None)]
        status, x, value = solve_lp(c, A_lp, self.b, bounds=bounds)
        if status == UNBOUNDED:
            return None, np.inf
        if status != OPTIMAL:
            return None, -np.inf
        return x[:-1], float(x[-1])

    def has_interior(self, tol=INTERIOR_TOL):
        _, radius = self.chebyshev()
        return radius > tol

    # transformations

    def preimage(self, M, c=None):
        """{x | M x + c in P}; exact for any M."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        c = np.zeros(M.shape[0]) if c is None else np.asarray(c, dtype=float)
        if self.infeasible:
            return Polytope.empty(M.shape[1])
        return Polytope(self.A @ M, self.b - self.A @ c)

    def affine_image(self, M, c=None):
        """{M x + c | x in P}, exact. Singular maps go through Fourier-Motzkin elimination."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        c = np.zeros(M.shape[0]) if c is None else np.asarray(c, dtype=float)
        if self.is_empty():
            return Polytope.empty(M.shape[0])
        if M.shape[0] == M.shape[1] and np.linalg.matrix_rank(M) == M.shape[0]:
            Minv = np.linalg.inv(M)
            A = self.A @ Minv
            return Polytope(A, self.b + A @ c)
        return _eliminate(self, M, c)

    def lift(self, offset, total_dim):
        A = np.zeros((self.A.shape[0], total_dim))
        A[:, offset:offset + self.dim] = self.A
        return Polytope(A, self.b, canonical=False)

    def difference(self, other):
        """Convex cells covering self minus other, complementing one constraint at a time."""
        cells = []
        prefix = self
        for row, rhs in zip(other.A, other.b):
            cell = prefix.intersect(Polytope.halfspace(-row, -rhs))
            if not cell.is_empty() and cell.has_interior():
                cells.append(cell)
            prefix = prefix.intersect(Polytope.halfspace(row, rhs))
            if prefix.is_empty():
                break
        return cells

    def remove_redundant(self, tol=1e-9):
        """Drop rows implied by the others (one LP per row)."""
        if self.is_empty() or self.A.shape[0] <= 1:
            return self
        keep = list(range(self.A.shape[0]))
        for i in range(self.A.shape[0]):
            others = [j for j in keep if j != i]
            relaxed = self.b[others]
            status, _, value = solve_lp(-self.A[i], np.vstack([self.A[others], self.A[i]]),
                                        np.concatenate([relaxed, [self.b[i] + 1.0]]))
            if status == OPTIMAL and -value <= self.b[i] + tol:
                keep.remove(i)
        return Polytope(self.A[keep], self.b[keep])

    # comparisons and export

    def canonical_key(self, decimals=9):
        if self.is_empty():
            return ("empty", self.dim)
        rows = [tuple(np.round(np.append(row, rhs), decimals) + 0.0) for row, rhs in zip(self.A, self.b)]
        return tuple(sorted(rows))

    def equals(self, other, tol=1e-9):
        if self.dim != other.dim:
            return False
        return self.contains(other, tol) and other.contains(self, tol)

    def sample(self, rng, count):
        """Points of the polytope: rejection from the bounding box, topped up with vertex mixtures."""
        if self.is_empty():
            raise EmptySetError(m="empty_polytope")
        lo, hi = self.bounding_box()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise UnboundedError(m="unbounded_polytope")
        points = []
        for _ in range(20):
            draws = rng.uniform(lo, hi, size=(max(count, 16), self.dim))
            inside = draws[[self.contains_point(p) for p in draws]]
            points.extend(inside[:count - len(points)])
            if len(points) >= count:
                break
        if len(points) < count:
            corners = []
            for a in rng.normal(size=(2 * self.dim + 2, self.dim)):
                _, _, x = self.support(a)
                if x is not None:
                    corners.append(x)
            corners = np.array(corners)
            while len(points) < count:
                weights = rng.dirichlet(np.ones(len(corners)))
                points.append(weights @ corners)
        return np.array(points[:count])

    def vertices_2d(self, i=0, j=1, directions=64):
        """Ordered vertices of the projection onto coordinates (i, j)."""
        if self.is_empty():
            return np.zeros((0, 2))
        angles = np.linspace(0.0, 2 * np.pi, directions, endpoint=False)
        normals = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        halfspaces, points = [], []
        for normal in normals:
            a = np.zeros(self.dim)
            a[i], a[j] = normal
            value, bounded, x = self.support(a)
            if not bounded:
                raise UnboundedError(m="unbounded_polytope")
            halfspaces.append(np.append(normal, -value))
            points.append(x[[i, j]])
        points = np.array(points)
        if np.linalg.matrix_rank(points - points.mean(axis=0), tol=1e-9) < 2:
            # Degenerate projection: a point or a segment.
            order = np.lexsort((points[:, 1], points[:, 0]))
            return np.unique(points[order].round(12), axis=0)
        interior = points.mean(axis=0)
        vertices = HalfspaceIntersection(np.array(halfspaces), interior).intersections
        vertices = np.unique(vertices.round(12), axis=0)
        hull = ConvexHull(vertices)
        return vertices[hull.vertices]

    def __repr__(self):
        return f"Polytope(dim={self.dim}, rows={self.A.shape[0]})"


def _eliminate(polytope, M, c):
    """Image under a singular map: eliminate x from {(x, y) | A x <= b, y = M x + c}."""
    n = polytope.dim
    m = M.shape[0]
    # Variables are ordered (x, y); equalities E z = e, inequalities G z <= g.
    E = np.hstack([-M, np.eye(m)])
    e = c.copy()
    G = np.hstack([polytope.A, np.zeros((polytope.A.shape[0], m))])
    g = polytope.b.copy()
    for j in range(n):
        pivots = np.flatnonzero(np.abs(E[:, j]) > ROW_TOL)
        if pivots.size:
            p = pivots[np.argmax(np.abs(E[pivots, j]))]
            row, rhs = E[p] / E[p, j], e[p] / E[p, j]
            G, g = G - np.outer(G[:, j], row), g - G[:, j] * rhs
            E, e = E - np.outer(E[:, j], row), e - E[:, j] * rhs
            E, e = np.delete(E, p, axis=0), np.delete(e, p)
            continue
        pos = G[:, j] > ROW_TOL
        neg = G[:, j] < -ROW_TOL
        zero = ~(pos | neg)
        rows, rhs = [G[zero]], [g[zero]]
        for k in np.flatnonzero(pos):
            for l in np.flatnonzero(neg):
                a, b = G[k, j], -G[l, j]
                rows.append((b * G[k] + a * G[l]).reshape(1, -1))
                rhs.append(np.array([b * g[k] + a * g[l]]))
        G = np.vstack(rows)
        g = np.concatenate(rhs)
        if G.shape[0] > 4 * (n + m) + 8:
            pruned = Polytope(G, g).remove_redundant()
            G, g = pruned.A, pruned.b
    A = np.vstack([G[:, n:], E[:, n:], -E[:, n:]])
    b = np.concatenate([g, e, -e])
    return Polytope(A, b).remove_redundant()
