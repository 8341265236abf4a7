"""
Template flowpipes for affine flows. Each step of length delta is covered by
the interpolated sets omega(X_k, A, delta, lambda) over a fixed lambda grid,
hulled once in the template directions, bloated by eps and clipped to the
mode invariant; the next start set is the hulled exact image e^{delta A} X_k.
Non-affine flows that bound their velocity over a box sweep X_k along that
box instead.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, List, Sequence

import numpy as np

from backend import signals
from backend.exceptions import EmptySetError, ModelError, UnboundedError
from config import config
from setgeom.operators import mat_exp, omega, phi2, template_hull
from setgeom.polytope import Polytope
from setgeom.support import Ball, LinearImage
from setgeom.templates import TemplateDirections, templates_for

logger = logging.getLogger(__name__)

# Supports beyond this magnitude are treated as divergence.
DIVERGENCE_LIMIT = 1e12


@dataclass
class ReachConfig:
    delta: float
    lambda_grid: Sequence[float]
    V: TemplateDirections
    eps: float = 0.0
    horizon: float = 30.0

    def __post_init__(self):
        errors = {}
        if not self.delta > 0:
            errors['delta'] = ["Step must be positive."]
        if self.eps < 0:
            errors['eps'] = ["Bloat radius must be nonnegative."]
        if self.horizon < self.delta:
            errors['horizon'] = ["Horizon must be at least one step."]
        if not self.lambda_grid or any(not 0.0 <= lam <= 1.0 for lam in self.lambda_grid):
            errors['lambda_grid'] = ["Interpolation points must lie in [0, 1]."]
        if errors:
            raise ModelError(d=errors, m="invalid_reach_config")
        self.lambda_grid = tuple(float(lam) for lam in self.lambda_grid)

    @classmethod
    def from_config(cls, dim, templates=None, **overrides):
        values = {key: config.get(key) for key in ('delta', 'lambda_grid', 'eps', 'horizon')}
        values.update({key: value for key, value in overrides.items() if value is not None})
        V = templates if isinstance(templates, TemplateDirections) else templates_for(dim, templates)
        return cls(V=V, **values)


@dataclass
class FlowpipeSegment:
    k: int
    t_lo: float
    t_hi: float
    polytope: Polytope


@dataclass
class Flowpipe:
    mode: Any
    eps: float
    segments: List[FlowpipeSegment] = field(default_factory=list)
    truncated: bool = False

    def __iter__(self):
        return iter(self.segments)

    def __len__(self):
        return len(self.segments)

    @property
    def end_time(self):
        return self.segments[-1].t_hi if self.segments else 0.0

    def covering(self, t):
        return [segment for segment in self.segments if segment.t_lo - 1e-12 <= t <= segment.t_hi + 1e-12]

    def contains(self, t, x, tol=1e-9):
        return any(segment.polytope.contains_point(x, tol) for segment in self.covering(t))

    def hull(self, V):
        """Template hull of the union of all sections."""
        if not self.segments:
            return None
        values = np.full(len(V), -np.inf)
        for segment in self.segments:
            for i, a in enumerate(V):
                value, bounded, _ = segment.polytope.support(a)
                values[i] = max(values[i], value if bounded else np.inf)
        finite = np.isfinite(values)
        return Polytope(V.V[finite], values[finite])


def _augmented(flow):
    parts = flow.affine_parts()
    if parts is None:
        raise ModelError(d={"flow": [f"{flow.name} flows have no affine form."]}, m="non_affine_flow")
    A, b = parts
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return A, False
    n = A.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = A
    M[:n, n] = b
    return M, True


def _lift(X):
    """X x {1}."""
    n = X.dim
    e = np.zeros(n + 1)
    e[n] = 1.0
    A = np.vstack([np.hstack([X.A, np.zeros((X.A.shape[0], 1))]), e, -e])
    return Polytope(A, np.concatenate([X.b, [1.0, -1.0]]))


class _Stepper:
    """The per-step operators for one flow and step length, computed once."""

    def __init__(self, generator, affine, delta):
        self.generator = generator
        self.affine = affine
        self.expA = mat_exp(generator, delta)
        self.bloat = phi2(np.abs(generator), delta, config.get('phi2_max_terms'))
        self.delta = delta

    def lift(self, X):
        return _lift(X) if self.affine else X

    def project(self, S, dim):
        if not self.affine:
            return S
        return LinearImage(np.eye(dim + 1)[:dim], S)

    def section(self, X, lambda_grid, V, eps_ball):
        lifted = self.lift(X)
        values = np.full(len(V), -np.inf)
        for lam in lambda_grid:
            omega_set = self.project(omega(lifted, self.generator, self.delta, lam, self.expA, self.bloat), X.dim)
            for i, a in enumerate(V):
                value, bounded = omega_set.support(a)
                values[i] = max(values[i], value if bounded else np.inf)
        if eps_ball is not None:
            values = values + np.array([eps_ball.support(a)[0] for a in V])
        return values

    def advance(self, X, V):
        image = self.project(LinearImage(self.expA, self.lift(X)), X.dim)
        return template_hull(image, V)


class _DriftStepper:
    """Flows with a velocity box [v_lo, v_hi]: each step covers X + [0, delta] [v_lo, v_hi]."""

    def __init__(self, v_lo, v_hi, delta):
        self.v_lo = np.asarray(v_lo, dtype=float)
        self.v_hi = np.asarray(v_hi, dtype=float)
        self.delta = delta

    def drift(self, a):
        return self.delta * float(np.sum(np.maximum(a * self.v_lo, a * self.v_hi)))

    def _supports(self, X, V, swept):
        values = np.empty(len(V))
        for i, a in enumerate(V):
            value, bounded, _ = X.support(a)
            shift = self.drift(a)
            values[i] = (value + (max(shift, 0.0) if swept else shift)) if bounded else np.inf
        return values

    def section(self, X, lambda_grid, V, eps_ball):
        values = self._supports(X, V, swept=True)
        if eps_ball is not None:
            values = values + np.array([eps_ball.support(a)[0] for a in V])
        return values

    def advance(self, X, V):
        values = self._supports(X, V, swept=False)
        finite = np.isfinite(values)
        return Polytope(V.V[finite], values[finite])


def _drift(flow, X):
    """The velocity box of a non-affine flow over X; None for affine flows."""
    if flow.affine_parts() is not None:
        return None
    lo, hi = X.bounding_box()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise UnboundedError(d={"X0": [f"{flow.name} flows need a bounded start set."]}, m="unbounded_polytope")
    bounds = flow.velocity_bounds(lo, hi)
    if bounds is None:
        raise ModelError(d={"flow": [f"{flow.name} flows have no affine form."]}, m="non_affine_flow")
    return bounds


def reach_cont(aut, mode, X0, cfg):
    """Flowpipe of ``mode`` from ``X0`` over [0, cfg.horizon], clipped to the invariant."""
    if X0.dim != aut.dim:
        raise ModelError(d={"X0": [f"Set lives in dimension {X0.dim}, expected {aut.dim}."]}, m="dimension_mismatch")
    invariant = aut.invariant(mode)
    X = X0.intersect(invariant)
    if X.is_empty():
        raise EmptySetError(d={"mode": str(mode)}, m="empty_initial_set")
    flow = aut.flow(mode)
    drift = _drift(flow, X)
    if drift is None:
        generator, affine = _augmented(flow)
    eps_ball = None
    if cfg.eps > 0:
        eps_ball = template_hull(Ball(np.zeros(aut.dim), cfg.eps), TemplateDirections.octagonal(aut.dim))

    flowpipe = Flowpipe(mode, cfg.eps)
    steps = max(1, math.ceil(cfg.horizon / cfg.delta - 1e-9))
    steppers = {}
    X = template_hull(X, cfg.V).intersect(invariant)
    for k in range(steps):
        t_lo = k * cfg.delta
        delta = min(cfg.delta, cfg.horizon - t_lo)
        if delta not in steppers:
            steppers[delta] = _Stepper(generator, affine, delta) if drift is None else _DriftStepper(*drift, delta)
        stepper = steppers[delta]
        values = stepper.section(X, cfg.lambda_grid, cfg.V, eps_ball)
        if np.any(np.abs(values[np.isfinite(values)]) > DIVERGENCE_LIMIT) or np.any(values == np.inf):
            flowpipe.truncated = True
            logger.warning("Flowpipe of %s diverged at step %d (t=%.6g); truncating", mode, k, t_lo)
            signals.flowpipe_truncated.send(sender=reach_cont, mode=mode, step=k, reason="divergence")
            break
        section = Polytope(cfg.V.V, values).intersect(invariant)
        if section.is_empty():
            break
        flowpipe.segments.append(FlowpipeSegment(k, t_lo, t_lo + delta, section))
        X = stepper.advance(X, cfg.V).intersect(invariant)
        if X.is_empty():
            break
    logger.debug("Flowpipe of %s: %d segments up to t=%.6g", mode, len(flowpipe), flowpipe.end_time)
    return flowpipe
