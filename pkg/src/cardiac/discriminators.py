"""
Rhythm discriminators of the detection algorithm: the fast-interval counter
(TCFI), morphology correlation (VTC), interval stability, and the Duration
timer that frames an episode.
"""
import logging

import numpy as np

from backend import signals
from backend.exceptions import ModelError, NumericalError
from cardiac.layout import Layout, end_edges
from cardiac.params import DURATION_BEGINS, DURATION_ENDS, END, FAST, SLOW, VEVENT, WINDOW_ENDS
from config import config
from hybrid_core.automaton import AffineReset, ComputedReset, Edge, HybridAutomaton
from plugins.flow.constant import Constant
from setgeom.polytope import Polytope

logger = logging.getLogger(__name__)

# Relative size below which a sample variance counts as zero.
FLAT = 1e-12
# Upper bound on the discarded-window counter, for set-valued resets.
MAX_DROPPED = 1e6
NO_BEATS = -1.0
IDLE = "Idle"


def _automaton(lay, modes, flows, edges, init, horizon, name, terminal=(END,), invariants=None):
    return HybridAutomaton(lay.dim, list(modes) + [END], dict(flows, **{END: Constant(lay.dim)}), edges,
                           invariants=invariants, init=init, terminal=terminal, name=name, coords=lay.coords,
                           check_disjoint=horizon is None)


# TCFI

TCFI_COORDS = ("t", "t_p", "z1", "z2", "z3")
SLOW_MODE, FAST_MODE = "Slow", "Fast"


def circulate(lay):
    """L3 <- (z2, z3, t - t_p) and t_p <- t."""
    return lay.reset(copies={"z1": "z2", "z2": "z3", "t_p": "t"}, rows={"z3": {"z3": -1.0, "t": 1.0, "t_p": -1.0}})


def fast_guard(p, tol=None):
    """
    All three recorded intervals below tachy_th. The bound sits two guard
    tolerances inside, so an interval of exactly tachy_th only enables the Slow edges.
    """
    tol = config.get('guard_tolerance') if tol is None else tol
    lay = Layout(TCFI_COORDS)
    return lay.region(*(lay.le(p.tachy_th - 2 * tol, **{z: 1.0}) for z in ("z1", "z2", "z3")))


def build_tcfi(p, horizon=None, name="tcfi"):
    """Keeps the last three beat intervals; every beat is classified Fast or Slow."""
    lay = Layout(TCFI_COORDS)
    shift = circulate(lay)
    th = p.tachy_th
    edges = []
    for mode in (SLOW_MODE, FAST_MODE):
        tag = mode.lower()
        edges += [
            Edge(mode, FAST_MODE, shift.preimage(fast_guard(p)), shift, name=f"{tag}_fast", listens=VEVENT,
                 emits=(FAST,)),
            Edge(mode, SLOW_MODE, lay.ge(th, z2=1.0), shift, name=f"{tag}_slow_a", listens=VEVENT, emits=(SLOW,)),
            Edge(mode, SLOW_MODE, lay.region(lay.le(th, z2=1.0), lay.ge(th, z3=1.0)), shift,
                 name=f"{tag}_slow_b", listens=VEVENT, emits=(SLOW,)),
            Edge(mode, SLOW_MODE, lay.region(lay.le(th, z2=1.0), lay.le(th, z3=1.0), lay.elapsed_at_least(th)),
                 shift, name=f"{tag}_slow_c", listens=VEVENT, emits=(SLOW,)),
        ]
    edges += end_edges(lay, (SLOW_MODE, FAST_MODE), horizon)
    clock = lay.clock(t=1.0)
    x0 = lay.point(z1=p.B, z2=p.B, z3=p.B)
    return _automaton(lay, (SLOW_MODE, FAST_MODE), {SLOW_MODE: clock, FAST_MODE: clock}, edges,
                      [(SLOW_MODE, Polytope.point(x0))], horizon, name)


# VTC

def correlation_from_sums(n, sum_s, sum_m, sum_sm, sum_s2, sum_m2):
    """
    (n sum s m - sum s sum m)^2 / ((n sum s^2 - (sum s)^2)(n sum m^2 - (sum m)^2)),
    or None when either variance vanishes.
    """
    var_s = n * sum_s2 - sum_s ** 2
    var_m = n * sum_m2 - sum_m ** 2
    if var_s <= FLAT * max(1.0, n * sum_s2) or var_m <= FLAT * max(1.0, n * sum_m2):
        return None
    rho = (n * sum_sm - sum_s * sum_m) ** 2 / (var_s * var_m)
    return float(min(1.0, max(0.0, rho)))


def vtc_correlation(s, m):
    """Squared Pearson correlation of the window ``s`` against the template ``m``."""
    s = np.asarray(s, dtype=float).reshape(-1)
    m = np.asarray(m, dtype=float).reshape(-1)
    if s.shape != m.shape or s.size < 2:
        raise ModelError(d={"s": [f"Expected two samples of equal length, got {s.size} and {m.size}."]},
                         m="dimension_mismatch")
    rho = correlation_from_sums(s.size, s.sum(), m.sum(), s @ m, s @ s, m @ m)
    if rho is None:
        raise NumericalError(d={"s": ["Window or template is constant."]}, m="undefined_correlation")
    return rho


def vtc_coords(p):
    return ("t", "t_p", "k", "s", "mu", "alpha", "beta") + tuple(f"nu_{i}" for i in range(1, p.window + 1)) + (
        "w", "dropped")


ARMED, CALCULATE = "Armed", "Calculate"


def flag_guard(p):
    """At least svt_count of the last ``window`` outcomes are +1."""
    lay = Layout(vtc_coords(p))
    return lay.ge(p.flag_level, **{f"nu_{i}": 1.0 for i in range(1, p.window + 1)})


def svt_flagged(p, nu):
    return int(np.sum(np.asarray(nu) > 0)) >= p.svt_count


def build_vtc(p, amplitude=5.0, horizon=None, name="vtc"):
    """
    Samples the bound electrogram s at i * T_s after each declared event
    (i = 1..8), correlates the window with the template at WindowEnds and
    shifts the +1/-1 outcome into nu. ``amplitude`` bounds |s|.
    """
    if p.template is None:
        raise ModelError(d={"template": ["VTC needs a template; acquire one from a sinus-rhythm run."]},
                         m="missing_template")
    lay = Layout(vtc_coords(p))
    template = np.asarray(p.template, dtype=float)
    n = p.SAMPLES
    sum_m, sum_m2 = float(template.sum()), float(template @ template)
    nus = [lay[f"nu_{i}"] for i in range(1, p.window + 1)]
    refill = {"w": 1.0}

    def square_step(x):
        return [x[lay["beta"]] + x[lay["s"]] ** 2]

    def outcome(x):
        nu = list(x[nus])
        rho = correlation_from_sums(n, x[lay["mu"]], sum_m, x[lay["alpha"]], x[lay["beta"]], sum_m2)
        if rho is None:
            logger.warning("Flat electrogram window at t=%.6g; discarded", x[lay["t"]])
            signals.window_discarded.send(sender=HybridAutomaton, time=float(x[lay["t"]]), reason="flat")
            return nu + [x[lay["dropped"]] + 1.0]
        return nu[1:] + [1.0 if rho >= p.vtc_threshold else -1.0, x[lay["dropped"]]]

    edges = [
        Edge(IDLE, ARMED, Polytope.whole(lay.dim), lay.reset(values=refill), name="arm", listens=FAST),
        Edge(ARMED, CALCULATE, Polytope.whole(lay.dim),
             lay.reset(values=dict(refill, k=0.0, mu=0.0, alpha=0.0, beta=0.0), copies={"t_p": "t"}),
             name="open", listens=VEVENT),
        Edge(CALCULATE, ARMED, lay.ge(n - 0.5, k=1.0),
             ComputedReset(outcome, nus + [lay["dropped"]], [[-1.0, 1.0]] * p.window + [[0.0, MAX_DROPPED]],
                           base=lay.reset(values=refill)),
             name="close", listens=WINDOW_ENDS),
        Edge(CALCULATE, ARMED, lay.le(n - 0.5, k=1.0), lay.reset(values=refill, shifts={"dropped": 1.0}),
             name="short", listens=WINDOW_ENDS),
    ]
    for i in range(1, n + 1):
        guard = lay.region(lay.elapsed_at_least(i * p.T_s), lay.ge(i - 1.5, k=1.0), lay.le(i - 0.5, k=1.0))
        base = lay.reset(values=dict(refill, k=float(i)), rows={"mu": {"s": 1.0}, "alpha": {"s": template[i - 1]}})
        edges.append(Edge(CALCULATE, CALCULATE, guard,
                          ComputedReset(square_step, [lay["beta"]], [[0.0, n * amplitude ** 2]], base=base),
                          name=f"sample_{i}"))
    edges += end_edges(lay, (IDLE, ARMED, CALCULATE), horizon)
    clock = lay.clock(t=1.0, w=-p.gamma)
    x0 = lay.point(w=1.0, **{f"nu_{i}": -1.0 for i in range(1, p.window + 1)})
    return _automaton(lay, (IDLE, ARMED, CALCULATE), {IDLE: clock, ARMED: clock, CALCULATE: clock}, edges,
                      [(IDLE, Polytope.point(x0))], horizon, name)


# Stability

STAB_COORDS = ("t", "t_p", "L1", "L2", "kappa", "sigma2")
ACCUMULATE, DONE = "Accumulate", "Done"


def population_variance(L1, L2, kappa):
    """(1/kappa)(L2 - L1^2 / kappa), clipped at zero against rounding."""
    if kappa <= 0:
        raise NumericalError(d={"kappa": ["No beats were recorded."]}, m="no_beats")
    return max(0.0, (L2 - L1 * L1 / kappa) / kappa)


def stable_guard(p):
    lay = Layout(STAB_COORDS)
    return lay.region(lay.ge(0.0, sigma2=1.0), lay.le(p.stab_threshold, sigma2=1.0))


def build_stability(p, horizon=None, name="stab"):
    """
    Variance of the beat intervals seen between DurationBegins and DurationEnds.
    sigma2 holds NO_BEATS while a duration is open.
    """
    lay = Layout(STAB_COORDS)

    def square_step(x):
        interval = x[lay["t"]] - x[lay["t_p"]]
        return [x[lay["L2"]] + interval * interval]

    def variance(x):
        try:
            return [population_variance(x[lay["L1"]], x[lay["L2"]], x[lay["kappa"]])]
        except NumericalError:
            logger.warning("No beats during the duration ending at t=%.6g", x[lay["t"]])
            signals.stability_fault.send(sender=HybridAutomaton, time=float(x[lay["t"]]), reason="no_beats")
            return [NO_BEATS]

    start = lay.reset(values={"L1": 0.0, "L2": 0.0, "kappa": 0.0, "sigma2": NO_BEATS}, copies={"t_p": "t"})
    beat = lay.reset(copies={"t_p": "t"}, shifts={"kappa": 1.0}, rows={"L1": {"t": 1.0, "t_p": -1.0}})
    whole = Polytope.whole(lay.dim)
    edges = [
        Edge(IDLE, ACCUMULATE, whole, start, name="begin", listens=DURATION_BEGINS),
        Edge(DONE, ACCUMULATE, whole, start, name="restart", listens=DURATION_BEGINS),
        Edge(ACCUMULATE, ACCUMULATE, whole,
             ComputedReset(square_step, [lay["L2"]], [[0.0, p.DL ** 2]], base=beat), name="beat", listens=VEVENT),
        Edge(ACCUMULATE, DONE, whole,
             ComputedReset(variance, [lay["sigma2"]], [[NO_BEATS, p.DL ** 2]], base=AffineReset.identity(lay.dim)),
             name="finish", listens=DURATION_ENDS),
    ]
    edges += end_edges(lay, (IDLE, ACCUMULATE, DONE), horizon)
    clock = lay.clock(t=1.0)
    x0 = lay.point(sigma2=NO_BEATS)
    return _automaton(lay, (IDLE, ACCUMULATE, DONE), {IDLE: clock, ACCUMULATE: clock, DONE: clock}, edges,
                      [(IDLE, Polytope.point(x0))], horizon, name,
                      invariants={ACCUMULATE: lay.le(NO_BEATS, sigma2=1.0)})


# Duration

RUNNING = "Running"


def build_duration(p, horizon=None, name="duration"):
    """A DL-long timer started by DurationBegins; emits DurationEnds when it lapses."""
    lay = Layout(("t", "t_p"))
    edges = [
        Edge(IDLE, RUNNING, Polytope.whole(lay.dim), lay.reset(copies={"t_p": "t"}), name="begin",
             listens=DURATION_BEGINS),
        Edge(RUNNING, IDLE, lay.elapsed_at_least(p.DL), name="lapse", emits=(DURATION_ENDS,)),
    ]
    edges += end_edges(lay, (IDLE, RUNNING), horizon)
    clock = lay.clock(t=1.0)
    return _automaton(lay, (IDLE, RUNNING), {IDLE: clock, RUNNING: clock}, edges,
                      [(IDLE, Polytope.point(lay.point()))], horizon, name)
