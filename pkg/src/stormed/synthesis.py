"""
Certificate synthesis. Flow and reset monotonicity become linear constraints
on (phi, margin) once velocities and reset displacements are bounded
coordinate-wise: for a box [lo, hi] of vectors v,

    min over the box of phi.v = sum_i min(phi_i lo_i, phi_i hi_i) >= margin * |v|max

is linear in phi through one auxiliary variable per coordinate. The margin is
maximised with phi in [-1, 1]^n; an infeasible system is reported with an
irreducible subset of its constraint groups.
"""
import logging
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from backend.exceptions import CertificateError, InfeasibleError, ModelError
from config import config
from setgeom.operators import poly_distance
from stormed.certificate import StormedCertificate, delimited_band
from stormed.sampling import StateSampler, displacement_box, velocity_boxes

logger = logging.getLogger(__name__)

FLOW = "flow"
SELF_LOOP = "self_loop"
MODE_CHANGE = "mode_change"
ZERO = "zero"
NONNEGATIVE = "nonnegative"
SOLVED = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)
# Margins are shrunk by this factor so that rounding phi cannot break them.
MARGIN_SHRINK = 1.0 - 1e-6
# Relative padding of the delimited band around the guards' phi-range.
BAND_PADDING = 1e-3


@dataclass
class ConstraintGroup:
    name: str
    kind: str
    lo: np.ndarray = None
    hi: np.ndarray = None
    coord: int = None

    @property
    def norm(self):
        return float(np.linalg.norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))

    def trivial(self):
        if self.kind == SELF_LOOP:
            return not (np.any(self.lo) or np.any(self.hi))
        return self.kind in (FLOW, MODE_CHANGE) and self.norm == 0.0


def _coord_index(aut, coord):
    return coord if isinstance(coord, (int, np.integer)) else aut.coord(coord)


def constraint_groups(aut, sampler, lipschitz=None, samples=None, safety=None):
    """One group per sampled mode (its velocity box) and per edge (its displacement box)."""
    groups = []
    boxes = velocity_boxes(sampler, samples, safety)
    analytic = {_coord_index(aut, coord): float(L) for coord, L in (lipschitz or {}).items()}
    for mode, (lo, hi) in boxes.items():
        lo, hi = lo.copy(), hi.copy()
        for i, L in analytic.items():
            lo[i], hi[i] = -L, L
        groups.append(ConstraintGroup(f"{FLOW}:{mode}", FLOW, lo, hi))
    for edge in sampler.edges():
        if edge.listens is not None:
            continue
        box = displacement_box(sampler, edge)
        if box is None:
            continue
        kind = SELF_LOOP if edge.src == edge.dst else MODE_CHANGE
        groups.append(ConstraintGroup(f"{kind}:{edge.name}", kind, *box))
    return [group for group in groups if not group.trivial()]


class _Program:
    """The shared LP variables and the constraints of every group."""

    def __init__(self, dim, groups, zero=(), nonnegative=()):
        self.phi = cp.Variable(dim)
        self.margin = cp.Variable()
        self.groups = list(groups)
        self.groups += [ConstraintGroup(f"{ZERO}:phi_{i}", ZERO, coord=i) for i in zero]
        self.groups += [ConstraintGroup(f"{NONNEGATIVE}:phi_{i}", NONNEGATIVE, coord=i) for i in nonnegative]
        self.constraints = {group.name: self._constraints(group) for group in self.groups}

    def _constraints(self, group):
        if group.kind == ZERO:
            return [self.phi[group.coord] == 0]
        if group.kind == NONNEGATIVE:
            return [self.phi[group.coord] >= 0]
        s = cp.Variable(self.phi.shape[0])
        constraints = [s <= cp.multiply(group.lo, self.phi), s <= cp.multiply(group.hi, self.phi)]
        if group.kind == SELF_LOOP:
            constraints.append(cp.sum(s) >= self.margin)
        else:
            constraints.append(cp.sum(s) >= self.margin * group.norm)
        return constraints

    def feasible(self, names):
        constraints = [self.margin >= 1.0] + [c for name in names for c in self.constraints[name]]
        problem = cp.Problem(cp.Minimize(0), constraints)
        problem.solve()
        return problem.status in SOLVED

    def maximise(self):
        constraints = [self.phi >= -1.0, self.phi <= 1.0, self.margin <= 1.0]
        constraints += [c for cs in self.constraints.values() for c in cs]
        problem = cp.Problem(cp.Maximize(self.margin), constraints)
        problem.solve()
        if problem.status not in SOLVED:
            raise CertificateError(d={"status": problem.status}, m="synthesis_not_solved")
        return np.asarray(self.phi.value, dtype=float), float(self.margin.value)


def irreducible_subset(program):
    """Deletion filter: drop every group whose removal keeps the system infeasible."""
    kept = [group.name for group in program.groups]
    for name in list(kept):
        trial = [other for other in kept if other != name]
        if not program.feasible(trial):
            kept = trial
    return kept


def guard_separation(sampler):
    """The smallest distance from a reset image to a following guard (inf without successors)."""
    aut = sampler.aut
    smallest = np.inf
    for edge in sampler.edges():
        enabled = sampler.enabled(edge)
        if enabled.is_empty():
            continue
        image = edge.reset.image(enabled)
        for following in aut.edges_from(edge.dst):
            if following.listens is None:
                target = sampler.enabled(following)
                if not target.is_empty():
                    smallest = min(smallest, poly_distance(image, target))
    return smallest


def _band(sampler, phi):
    lo, hi = np.inf, -np.inf
    for edge in sampler.edges():
        region = edge.guard.intersect(sampler.aut.invariant(edge.src))
        if sampler.domain is not None:
            region = region.intersect(sampler.domain)
        if region.is_empty():
            continue
        low, high = delimited_band(phi, region)
        lo, hi = min(lo, low), max(hi, high)
    if lo > hi:
        return -1.0, 1.0
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise CertificateError(d={"guards": ["phi.x is unbounded on a guard; give a sampling domain."]},
                               m="undelimited_ends")
    pad = max(BAND_PADDING * (hi - lo), BAND_PADDING)
    return lo - pad, hi + pad


def synthesize_phi(aut, lipschitz=None, zero=(), nonnegative=(), d_min=None, rng=None, domain=None,
                   executions=None, samples=None, safety=None):
    """
    A certificate for ``aut``. ``lipschitz`` maps coordinates to analytic
    bounds on |xdot_i| (they replace the sampled velocity range); ``zero`` and
    ``nonnegative`` pin the sign structure of phi. Raises InfeasibleError with
    the irreducible constraint groups when no phi exists.
    """
    sampler = StateSampler(aut, rng=rng, domain=domain, executions=executions)
    groups = constraint_groups(aut, sampler, lipschitz, samples, safety)
    zero = [_coord_index(aut, coord) for coord in zero]
    nonnegative = [_coord_index(aut, coord) for coord in nonnegative]
    program = _Program(aut.dim, groups, zero, nonnegative)
    if not program.feasible(list(program.constraints)):
        core = irreducible_subset(program)
        logger.warning("No certificate for %s; conflicting constraints: %s", aut.name, ", ".join(core))
        raise InfeasibleError(d={"constraints": core}, m="no_certificate")
    phi, margin = program.maximise()
    phi[np.abs(phi) < config.get('coefficient_tolerance')] = 0.0
    margin *= MARGIN_SHRINK
    if margin <= 0:
        raise CertificateError(d={"margin": margin}, m="synthesis_not_solved")

    if d_min is None:
        separation = guard_separation(sampler)
        if separation == 0.0:
            raise CertificateError(d={"guards": ["A reset image meets a following guard."]}, m="inseparable_guards")
        d_min = separation / 2.0 if np.isfinite(separation) else 1.0
    elif d_min <= 0:
        raise ModelError(d={"d_min": ["Must be positive."]}, m="invalid_certificate")
    b_minus, b_plus = _band(sampler, phi)

    bounds = np.zeros(aut.dim)
    for group in groups:
        if group.kind == FLOW:
            bounds = np.maximum(bounds, np.maximum(np.abs(group.lo), np.abs(group.hi)))
    diameter = max((group.norm for group in groups if group.kind in (SELF_LOOP, MODE_CHANGE)), default=0.0)

    cert = StormedCertificate(phi, margin, margin, d_min, b_minus, b_plus, bounds.tolist(), diameter)
    logger.info("Synthesised %r for %s from %d constraint groups", cert, aut.name, len(groups))
    return cert
