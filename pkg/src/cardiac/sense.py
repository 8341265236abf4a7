"""
Sensing: event declaration on the rectified electrogram with an
auto-adjusting threshold.

The sensed signal y is bound to |egm| by the closed loop. An event is
declared when y reaches the threshold Th; the running maximum y_M is then
tracked for MinTP, the channel is blanked, and Th restarts at 3/4 of the
peak and decays exponentially towards minTh.
"""
import logging
import math

from cardiac.layout import Layout, end_edges
from cardiac.params import END, VEVENT, WINDOW_ENDS
from hybrid_core.automaton import ComputedReset, Edge, HybridAutomaton
from plugins.flow.constant import Constant
from plugins.flow.threshold_decay import ThresholdDecay
from setgeom.polytope import Polytope

logger = logging.getLogger(__name__)

COORDS = ("t", "t_p", "y", "y_M", "f", "Th", "Th_0", "eF")
PEAK, BLANK, DECAY = "PeakTracking", "Blanking", "ExponentialDecay"
PEAK_FRACTION = 0.75


def decay_factor(th, min_th):
    """eF = -(1/3) ln(minTh / Th): the threshold is back at minTh after three time constants."""
    return -math.log(min_th / th) / 3.0


def restart_threshold(y_M, p):
    return min(p.V_M, max(p.min_th, PEAK_FRACTION * y_M))


def threshold(p, th0, ef, elapsed):
    """Th = max(minTh, Th_0 exp(-(eF / TC) elapsed))."""
    return max(p.min_th, th0 * math.exp(-(ef / p.TC) * elapsed))


def build_sense(p, horizon=None, name="sense"):
    lay = Layout(COORDS)
    t, tp = lay["t"], lay["t_p"]

    def blanking(x):
        th = restart_threshold(x[lay["y_M"]], p)
        return [th, th, decay_factor(th, p.min_th)]

    edges = [
        Edge(DECAY, PEAK,
             lay.region(lay.ge(0.0, y=1.0, Th=-1.0), lay.elapsed_at_least(p.MinDecP)),
             lay.reset(values={"f": 1.0}, copies={"t_p": "t", "y_M": "y"}),
             name="sense", emits=(VEVENT,)),
        Edge(PEAK, PEAK,
             lay.region(lay.ge(p.quantum, y=1.0, y_M=-1.0), lay.elapsed_at_most(p.track_end)),
             lay.reset(copies={"y_M": "y"}, shifts={"f": 1.0}),
             name="track"),
        Edge(PEAK, BLANK,
             lay.region(lay.elapsed_at_least(p.MinTP), lay.ge(1.0, f=1.0)),
             ComputedReset(blanking, [lay["Th"], lay["Th_0"], lay["eF"]],
                           [[p.min_th, p.V_M], [p.min_th, p.V_M], [0.0, decay_factor(p.V_M, p.min_th)]],
                           base=lay.reset(copies={"t_p": "t"})),
             name="blank", emits=(WINDOW_ENDS,)),
        Edge(BLANK, DECAY, lay.elapsed_at_least(p.BlankingPeriod), lay.reset(copies={"t_p": "t"}),
             name="unblank"),
    ]
    edges += end_edges(lay, (PEAK, BLANK, DECAY), horizon)
    flows = {
        PEAK: lay.clock(t=1.0),
        BLANK: lay.clock(t=1.0),
        DECAY: ThresholdDecay(lay.row({"t": 1.0}), lay["Th"], lay["Th_0"], lay["eF"], t, tp, p.min_th, p.TC),
        END: Constant(lay.dim),
    }
    x0 = lay.point(Th=p.min_th, Th_0=p.min_th)
    sense = HybridAutomaton(
        lay.dim, [PEAK, BLANK, DECAY, END], flows, edges, init=[(DECAY, Polytope.point(x0))], terminal=[END],
        name=name, coords=COORDS, check_disjoint=horizon is None,
    )
    logger.debug("Built %s: minTh=%g, refractory %.3g s", sense, p.min_th, p.refractory)
    return sense
