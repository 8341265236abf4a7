"""
Urgent simulation: flow until the first guard becomes enabled, locate the
crossing time, jump, and continue. Jumps are checked again immediately after
every reset so that chains of zero-time transitions resolve at one instant.
"""
import logging

import numpy as np

from backend import signals
from backend.exceptions import AmbiguityError, ModelError, NumericalError
from config import config
from hybrid_core.automaton import HybridState
from hybrid_core.execution import Execution, FlowSegment, Jump

logger = logging.getLogger(__name__)

MAX_CROSSING_ITERATIONS = 200


def find_crossing(h, lo, hi, h_lo, h_hi, time_tol, guard_tol):
    """
    Earliest time in (lo, hi] where ``h`` drops to zero or below, given h(lo) > 0 >= h(hi).
    False position with the Illinois modification and a bisection every third
    step; stops once the bracket is narrower than ``time_tol`` or h(hi) is
    within ``guard_tol`` of zero.
    """
    f_lo, f_hi = h_lo, h_hi
    side = 0
    for iteration in range(MAX_CROSSING_ITERATIONS):
        if hi - lo <= time_tol or -guard_tol <= h_hi <= 0:
            return hi, h_hi
        if iteration % 3 == 2 or f_hi == f_lo:
            mid = 0.5 * (lo + hi)
        else:
            mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
            if not lo < mid < hi:
                mid = 0.5 * (lo + hi)
        h_mid = h(mid)
        if h_mid <= 0:
            hi, h_hi, f_hi = mid, h_mid, h_mid
            if side == -1:
                f_lo /= 2.0
            side = -1
        else:
            lo, f_lo = mid, h_mid
            if side == 1:
                f_hi /= 2.0
            side = 1
    raise NumericalError(d={"bracket": [lo, hi]}, m="crossing_not_converged")


def _report_ambiguities(aut, mode, result, t, strict, execution):
    for edges in result.ambiguities:
        execution.ambiguities.append((t, edges))
        logger.warning("Guards of %s enabled together in %s at t=%.9g", ", ".join(edges), mode, t)
        signals.guard_ambiguity.send(sender=aut.__class__, automaton=aut, mode=mode, edges=edges, time=t)
        if strict:
            raise AmbiguityError(d={"edges": list(edges), "time": t, "mode": str(mode)}, m="ambiguous_guards")


def simulate(aut, s0, duration, dt, strict_urgency=None, time_tolerance=None, guard_tolerance=None,
             max_zero_time_jumps=None):
    if dt <= 0:
        raise ModelError(d={"dt": ["Step must be positive."]}, m="invalid_step")
    if duration < 0:
        raise ModelError(d={"duration": ["Duration must be nonnegative."]}, m="negative_time")
    strict = config.get('strict_urgency') if strict_urgency is None else strict_urgency
    time_tol = time_tolerance or config.get('time_tolerance')
    guard_tol = guard_tolerance or config.get('guard_tolerance')
    zeno_cap = max_zero_time_jumps or config.get('max_zero_time_jumps')

    execution = Execution(aut)
    mode, x, t = s0.mode, np.array(s0.x, dtype=float), 0.0
    zero_time_jumps = 0

    while True:
        result = aut.step(mode, x, guard_tol)
        while result is not None:
            _report_ambiguities(aut, mode, result, t, strict, execution)
            jump = Jump(result.edges, HybridState(mode, x), HybridState(result.mode, result.x), t, result.emits)
            execution.segments.append(jump)
            signals.jump_taken.send(sender=aut.__class__, automaton=aut, jump=jump)
            mode, x = result.mode, np.array(result.x, dtype=float)
            zero_time_jumps += 1
            if zero_time_jumps > zeno_cap:
                raise NumericalError(d={"time": t, "jumps": zero_time_jumps}, m="zero_time_jump_limit")
            if aut.is_terminal(mode):
                return execution
            result = aut.step(mode, x, guard_tol)
        if t >= duration - time_tol or aut.is_terminal(mode):
            return execution

        segment = FlowSegment(mode, t)
        segment.record(t, x)
        execution.segments.append(segment)
        flow = aut.flow(mode)
        origin_t = t
        warned = False
        crossed = False
        while t < duration - time_tol:
            step = min(dt, duration - t)
            x_next = flow.evaluate(x, step)
            residuals = aut.guard_residuals(mode, x_next)
            if residuals.size and residuals.min() <= 0:
                # Only guards enabled by the end of the step can cross inside it.
                start, active = x, np.flatnonzero(residuals <= 0)
                tau, _ = find_crossing(
                    lambda s: float(aut.guard_residuals(mode, flow.evaluate(start, s))[active].min()),
                    0.0, step, float(aut.guard_residuals(mode, start)[active].min()),
                    float(residuals[active].min()), time_tol, guard_tol,
                )
                x_next = flow.evaluate(start, tau)
                step = tau
                crossed = True
            t += step
            x = x_next
            segment.record(t, x)
            if not warned and aut.invariant_violation(mode, x) > guard_tol:
                warned = True
                execution.invariant_exits.append((t, mode))
                logger.warning("Left the invariant of %s at t=%.9g", mode, t)
                signals.invariant_exit.send(sender=aut.__class__, automaton=aut, mode=mode, time=t)
            if crossed:
                break
        if t > origin_t:
            zero_time_jumps = 0
        logger.debug("Flowed in %s from %.6g to %.6g (%s)", mode, origin_t, t, "jump" if crossed else "end")
        if not crossed:
            return execution


def initial_state(aut, k=0):
    """The centre of the bounding box of the k-th initial set, with bound coordinates recomputed."""
    if not aut.init:
        raise ModelError(d={"init": [f"{aut.name} has no initial set."]}, m="missing_init")
    mode, region = aut.init[k]
    lo, hi = region.bounding_box()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ModelError(d={"init": ["Initial set is unbounded."]}, m="unbounded_init")
    x = (lo + hi) / 2.0
    if hasattr(aut, "bind"):
        x = aut.bind(x)
    return HybridState(mode, x)
