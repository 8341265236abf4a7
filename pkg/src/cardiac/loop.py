"""
Closed loops: the heart paced by a rhythm source, observed by the ICD
(sensing, discriminators, Duration timer and detection tree), and a reduced
loop in which a beat-interval source replaces heart and sensing.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from backend.exceptions import ModelError
from cardiac.discriminators import NO_BEATS, build_duration, build_stability, build_tcfi, build_vtc
from cardiac.heart import build_heart
from cardiac.layout import Layout, end_edges
from cardiac.params import (END, PACE, VEVENT, DetectionTreeConfig, DiscrimParams, ElectrodeConfig, HeartParams,
                            SenseParams)
from cardiac.sense import build_sense
from cardiac.tree import build_detection_tree
from hybrid_core.automaton import Edge, HybridAutomaton
from hybrid_core.compose import Binding, compose
from hybrid_core.simulate import initial_state, simulate
from plugins.flow.constant import Constant
from setgeom.polytope import Polytope
from setgeom.templates import TemplateDirections

logger = logging.getLogger(__name__)

NSR, SVT, VT = "NSR", "SVT", "VT"
# Pacing period per scenario; VT paces a ventricular cell, the others the SA node.
PERIODS = {NSR: 0.8, SVT: 0.3, VT: 0.3}
TEMPLATE_BEATS = 3
# Half-width of the reduced-domain slab around tcfi.t - tcfi.t_p = beats.c.
BEAT_SLAB = 1e-3
DEFAULT_DT = 0.002


@dataclass
class Scenario:
    name: str
    cell: Optional[Tuple[int, int]] = None
    period: Optional[float] = None
    offset: float = 0.05

    def __post_init__(self):
        if self.name not in PERIODS:
            raise ModelError(d={"scenario": [f"Choose one of {', '.join(PERIODS)}."]}, m="unknown_scenario")
        if self.period is not None and not self.period > 0:
            raise ModelError(d={"period": ["Must be positive."]}, m="invalid_scenario")
        if not self.offset >= 0:
            raise ModelError(d={"offset": ["Must be nonnegative."]}, m="invalid_scenario")

    def pacing(self, h):
        """(cell index, period) of the focus on an h.N grid."""
        if self.cell is not None:
            cell = h.index(*self.cell)
        elif self.name == VT:
            cell = h.index(h.ventricular_rows()[-1], h.N - 1)
        else:
            cell = h.sa_node
        period = self.period if self.period is not None else PERIODS[self.name]
        return cell, period


def build_pacer(period, offset=0.05, event=PACE, name="pacer"):
    """A clock that emits ``event`` every ``period``, first after ``offset``."""
    if not period > 0:
        raise ModelError(d={"period": ["Must be positive."]}, m="invalid_scenario")
    lay = Layout(("c",))
    edges = [Edge("on", "on", lay.ge(period, c=1.0), lay.reset(values={"c": 0.0}), name="pace", emits=(event,))]
    edges += end_edges(lay, ("on",))
    x0 = lay.point(c=period - min(offset, period))
    return HybridAutomaton(1, ["on", END], {"on": lay.clock(c=1.0), END: Constant(1)}, edges,
                           init=[("on", Polytope.point(x0))], terminal=[END], name=name, coords=lay.coords)


def build_beat_source(interval, name="beats"):
    """Beats separated by any interval in [lo, hi]; under urgent simulation every interval is lo."""
    lo, hi = interval
    if not 0 < lo <= hi:
        raise ModelError(d={"interval": ["Need 0 < lo <= hi."]}, m="invalid_scenario")
    lay = Layout(("c",))
    edges = [Edge("beat", "beat", lay.ge(lo, c=1.0), lay.reset(values={"c": 0.0}), name="beat", emits=(VEVENT,))]
    edges += end_edges(lay, ("beat",))
    return HybridAutomaton(1, ["beat", END], {"beat": lay.clock(c=1.0), END: Constant(1)}, edges,
                           invariants={"beat": lay.le(hi, c=1.0)}, init=[("beat", Polytope.point([0.0]))],
                           terminal=[END], name=name, coords=lay.coords)


def sensing_bindings(s, heart="heart", sense="sense"):
    return [Binding((sense, "y"), fn=abs, sources=[(heart, "egm")], bounds=(0.0, s.V_M))]


def egm_at(loop, execution, time, coord=None):
    """The bound electrogram at ``time``, evaluated exactly inside the flow segment that covers it."""
    coord = loop.index("heart", "egm") if coord is None else coord
    for segment in execution.flows:
        if segment.times and segment.times[0] <= time <= segment.t_end:
            j = int(np.searchsorted(segment.times, time, side="right")) - 1
            x = loop.flow(segment.mode).evaluate(segment.states[j], time - segment.times[j])
            return float(x[coord])
    raise ModelError(d={"time": [f"{time:g} is not covered by a flow segment."]}, m="outside_execution")


def egm_series(loop, execution):
    """(time, egm) rows for plot data."""
    coord = loop.index("heart", "egm")
    return [(t, x[coord]) for t, _, x in execution.rows()]


def acquire_template(h, e, s, d, dt=DEFAULT_DT):
    """
    Eight electrogram samples at the fiducial times after the last event of a
    short normal-sinus-rhythm run.
    """
    cell, period = Scenario(NSR).pacing(h)
    offset = 0.05
    heart = build_heart(h, e, pacing={PACE: [cell]}, horizon=False)
    loop = compose([build_pacer(period, offset), heart, build_sense(s)], bindings=sensing_bindings(s))
    duration = offset + (TEMPLATE_BEATS - 1) * period + (d.SAMPLES + 1) * d.T_s
    execution = simulate(loop, initial_state(loop), duration, dt)
    events = [time for time, _ in execution.events(VEVENT) if time + d.SAMPLES * d.T_s <= execution.end_time]
    if not events:
        raise ModelError(d={"template": ["The sinus-rhythm run declared no event."]}, m="no_template_beats")
    start = events[-1]
    template = [egm_at(loop, execution, start + i * d.T_s) for i in range(1, d.SAMPLES + 1)]
    logger.info("Acquired VTC template at t=%.6g: %s", start, ", ".join(f"{v:.4g}" for v in template))
    return d.replace(template=template)


def closed_loop(h=None, e=None, s=None, d=None, t=None, scenario=None, dt=DEFAULT_DT):
    """
    pacer || heart || sense || tcfi || vtc || stab || duration || tree, with
    y = |egm| for sensing, s = egm for VTC, c = sum(nu) and s2 = sigma2 for the tree.
    """
    h, e, s = h or HeartParams(), e or ElectrodeConfig(), s or SenseParams()
    d, t = d or DiscrimParams(), t or DetectionTreeConfig()
    scenario = scenario if isinstance(scenario, Scenario) else Scenario(scenario or NSR)
    if d.SAMPLES * d.T_s >= s.MinTP:
        raise ModelError(d={"T_s": [f"The {d.SAMPLES} fiducial samples must fit in MinTP = {s.MinTP:g} s."]},
                         m="invalid_discrim_params")
    if d.template is None:
        d = acquire_template(h, e, s, d, dt)
    cell, period = scenario.pacing(h)
    vtc = build_vtc(d, amplitude=s.V_M)
    components = [
        build_pacer(period, scenario.offset),
        build_heart(h, e, pacing={PACE: [cell]}),
        build_sense(s),
        build_tcfi(d),
        vtc,
        build_stability(d),
        build_duration(d),
        build_detection_tree(t, d),
    ]
    nus = {("vtc", f"nu_{i}"): 1.0 for i in range(1, d.window + 1)}
    bindings = sensing_bindings(s) + [
        Binding(("vtc", "s"), weights={("heart", "egm"): 1.0}),
        Binding((t.name, "c"), weights=nus),
        Binding((t.name, "s2"), weights={("stab", "sigma2"): 1.0}),
    ]
    loop = compose(components, bindings=bindings, name=f"closed_loop_{scenario.name}")
    logger.info("Closed loop %s: focus cell %d every %.3g s, dim %d", scenario.name, cell, period, loop.dim)
    return loop


def reduced_loop(d=None, t=None, interval=(0.8, 1.0), horizon=None):
    """
    beats || tcfi || duration || tree. The tree's c and s2 start anywhere in
    their ranges, so its discriminator outcomes are nondeterministic. Duration
    shares the horizon since it is busy lapsing when the tree announces End.
    """
    d, t = d or DiscrimParams(), t or DetectionTreeConfig()
    horizon = horizon if horizon is not None else reduced_horizon(d, interval)
    initial = {"c": (-d.window, d.window), "s2": (-1.0, 2.0 * d.stab_threshold)}
    components = [
        build_beat_source(interval),
        build_tcfi(d),
        build_duration(d, horizon=horizon),
        build_detection_tree(t, d, horizon=horizon, initial=initial),
    ]
    return compose(components, name="reduced_loop")


def reduced_horizon(d, interval):
    """Time for three Durations and the beats around them."""
    return 3.0 * d.DL + 3.0 * interval[1]


def reduced_domain(loop, d, interval=(0.8, 1.0), horizon=None):
    """
    A box holding every reachable state of a reduced loop up to its horizon,
    cut to a thin slab around tcfi.t - tcfi.t_p = beats.c: both clocks
    restart on every beat.
    """
    horizon = horizon if horizon is not None else reduced_horizon(d, interval)
    beats = horizon / interval[0] + 1.0
    ranges = {
        "c": (-d.window, d.window), "s2": (NO_BEATS, max(d.DL ** 2, 2.0 * d.stab_threshold)),
        "z1": (0.0, max(d.B, interval[1])), "z2": (0.0, max(d.B, interval[1])), "z3": (0.0, max(d.B, interval[1])),
        "n": (0.0, beats), "f": (0.0, beats),
    }
    lo, hi = np.zeros(loop.dim), np.zeros(loop.dim)
    for k, name in enumerate(loop.coords):
        component, _, coord = name.partition(".")
        if component == "beats":
            lo[k], hi[k] = 0.0, interval[1]
        else:
            lo[k], hi[k] = ranges.get(coord, (0.0, horizon))
    box = Polytope.from_box(lo, hi)
    if "beats" not in loop.names or "tcfi" not in loop.names:
        return box
    a = _beat_clock_row(loop)
    return box.intersect(Polytope(np.vstack([a, -a]), [BEAT_SLAB, BEAT_SLAB]))


def _beat_clock_row(loop):
    a = np.zeros(loop.dim)
    a[loop.index("tcfi", "t")], a[loop.index("tcfi", "t_p")], a[loop.index("beats", "c")] = 1.0, -1.0, -1.0
    return a


def reduced_templates(loop):
    """
    Box directions plus the clock differences the guards of a reduced loop
    read: time since the last beat, in TCFI and against the beat source, and
    time since the Duration began.
    """
    rows = [np.eye(loop.dim), -np.eye(loop.dim)]
    differences = []
    if "tcfi" in loop.names:
        differences.append({("tcfi", "t"): 1.0, ("tcfi", "t_p"): -1.0})
    if "duration" in loop.names:
        differences.append({("duration", "t"): 1.0, ("duration", "t_p"): -1.0})
    for coeffs in differences:
        a = np.zeros(loop.dim)
        for (component, coord), value in coeffs.items():
            a[loop.index(component, coord)] = value
        rows += [a[None, :], -a[None, :]]
    if "beats" in loop.names and "tcfi" in loop.names:
        a = _beat_clock_row(loop)
        rows += [a[None, :], -a[None, :]]
    return TemplateDirections(np.vstack(rows))


def run_scenario(loop, duration=None, dt=DEFAULT_DT):
    """Simulate ``loop`` from its initial state; a closed loop ends by itself at the heart's D."""
    heart = loop.components[loop.names.index("heart")] if "heart" in loop.names else None
    if duration is None:
        duration = heart.params.D if heart is not None else 30.0
    return simulate(loop, initial_state(loop), duration, dt)


def decision(loop, execution, tree="tree"):
    """The tree's last mode."""
    final = execution.final
    return final.mode[loop.names.index(tree)] if final is not None else None
