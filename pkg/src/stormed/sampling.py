"""
State sampling for the certificate checks. Explicit automata are sampled
mode by mode inside their invariants; automata too large to enumerate are
sampled along recorded executions.
"""
import logging

import numpy as np

from backend.exceptions import ModelError, UnboundedError
from config import config
from hybrid_core.execution import Jump

logger = logging.getLogger(__name__)

# Step of the finite-difference velocity estimate.
SLOPE_STEP = 1e-4


class StateSampler:

    def __init__(self, aut, rng=None, domain=None, executions=None):
        self.aut = aut
        self.rng = rng if rng is not None else np.random.default_rng(config.get('seed'))
        self.domain = domain
        self.executions = list(executions or [])
        self._regions = {}
        if self.executions:
            self._rows = [(mode, x) for execution in self.executions for _, mode, x in execution.rows()]
            if not self._rows:
                raise ModelError(d={"executions": ["Executions hold no states."]}, m="no_samples")
        elif getattr(aut, "modes", None) is None:
            raise ModelError(d={"executions": [f"{aut.name} has too many modes to enumerate; pass executions."]},
                             m="lazy_modes")

    def modes(self):
        if self.executions:
            return list(dict.fromkeys(mode for mode, _ in self._rows))
        return [mode for mode in self.aut.reachable_modes() if not self.region(mode).is_empty()]

    def region(self, mode):
        """The invariant of ``mode``, cut down to the sampling domain."""
        if mode not in self._regions:
            region = self.aut.invariant(mode)
            if self.domain is not None:
                region = region.intersect(self.domain)
            self._regions[mode] = region
        return self._regions[mode]

    def bounded(self, polytope, what):
        if self.domain is not None:
            polytope = polytope.intersect(self.domain)
        if not polytope.is_empty() and not polytope.is_bounded():
            raise UnboundedError(d={what: ["Unbounded; give a sampling domain."]}, m="unbounded_polytope")
        return polytope

    def states(self, count):
        """``count`` (mode, x) pairs."""
        if self.executions:
            picks = self.rng.integers(len(self._rows), size=count)
            return [self._rows[k] for k in picks]
        modes = self.modes()
        if not modes:
            return []
        picks = self.rng.integers(len(modes), size=count)
        states = []
        for k in range(len(modes)):
            n = int(np.sum(picks == k))
            if n:
                region = self.bounded(self.region(modes[k]), "invariants")
                states.extend((modes[k], x) for x in region.sample(self.rng, n))
        return states

    def edges(self):
        """Every edge leaving a sampled mode, each once."""
        seen, edges = set(), []
        for mode in self.modes():
            for edge in self.aut.edges_from(mode):
                if edge.key not in seen:
                    seen.add(edge.key)
                    edges.append(edge)
        return edges

    def enabled(self, edge):
        """Guard points of ``edge`` that lie in the source invariant."""
        return self.bounded(edge.guard.intersect(self.aut.invariant(edge.src)), edge.name)

    def jumps(self):
        return [segment for execution in self.executions for segment in execution if isinstance(segment, Jump)]


def velocity_boxes(sampler, samples=None, safety=None, step=SLOPE_STEP):
    """
    Per mode, per-coordinate [lo, hi] bounds on finite-difference slopes
    (theta(h; x) - x) / h, widened by ``safety`` about their centre.
    """
    samples = samples or config.get('lipschitz_samples')
    safety = safety or config.get('lipschitz_safety')
    boxes = {}
    for mode, x in sampler.states(samples):
        slope = (sampler.aut.flow(mode).evaluate(x, step) - x) / step
        if mode in boxes:
            lo, hi = boxes[mode]
            boxes[mode] = (np.minimum(lo, slope), np.maximum(hi, slope))
        else:
            boxes[mode] = (slope.copy(), slope.copy())
    widened = {}
    for mode, (lo, hi) in boxes.items():
        centre, half = (lo + hi) / 2.0, (hi - lo) / 2.0 * safety
        widened[mode] = (centre - half, centre + half)
    return widened


def estimate_lipschitz(sampler, samples=None, safety=None):
    """Per-coordinate bound on |xdot_i| over all sampled modes."""
    boxes = velocity_boxes(sampler, samples, safety)
    if not boxes:
        return np.zeros(sampler.aut.dim)
    return np.max([np.maximum(np.abs(lo), np.abs(hi)) for lo, hi in boxes.values()], axis=0)


def displacement_box(sampler, edge, samples=64):
    """
    Bounds on x+ - x- over the enabled guard. Affine resets are bounded exactly
    by support functions, computed resets by sampling. ``None`` when the guard
    is never enabled.
    """
    region = edge.guard.intersect(sampler.aut.invariant(edge.src))
    if sampler.domain is not None:
        region = region.intersect(sampler.domain)
    if region.is_empty():
        return None
    if getattr(edge.reset, "affine", False) and hasattr(edge.reset, "M"):
        D = edge.reset.M - np.eye(edge.reset.dim)
        lo, hi = np.array(edge.reset.c, dtype=float), np.array(edge.reset.c, dtype=float)
        for i, row in enumerate(D):
            if not np.any(row):
                continue
            up, up_bounded, _ = region.support(row)
            down, down_bounded, _ = region.support(-row)
            if not (up_bounded and down_bounded):
                raise UnboundedError(d={edge.name: ["Unbounded reset displacement; give a sampling domain."]},
                                     m="unbounded_polytope")
            hi[i] += up
            lo[i] -= down
        return lo, hi
    points = sampler.enabled(edge).sample(sampler.rng, samples)
    deltas = np.array([edge.reset.apply(x) - x for x in points])
    return deltas.min(axis=0), deltas.max(axis=0)
