"""
The detection tree and the therapy property.

An episode opens on the first Fast beat and lasts one Duration. At its end
the tree decides from the morphology vote c (the sum of the VTC outcomes)
and the interval variance s2 (the Stability result):

    correlated                      -> SVT
    uncorrelated and stable         -> VT_1
    uncorrelated and unstable       -> a second Duration, opened on the next beat

After the second Duration a stable rhythm is VT_2, an unstable one is VT_3
when at least ``faster_fraction`` of its beats were Fast and SVT otherwise.
A Duration without beats closes the episode. e1 and e2 time the two
Durations; the therapy deadline applies to their sum along each path.
"""
import logging

import numpy as np

from backend.exceptions import ConfigError
from cardiac.discriminators import IDLE, NO_BEATS
from cardiac.layout import Layout, end_edges
from cardiac.params import DURATION_BEGINS, DURATION_ENDS, END, FAST, SLOW, VEVENT, VT_MODES, DiscrimParams
from hybrid_core.automaton import Edge, HybridAutomaton
from plugins.flow.constant import Constant
from setgeom.polytope import Polytope

logger = logging.getLogger(__name__)

TREE_COORDS = ("t", "c", "s2", "n", "f", "e1", "e2")
EPISODE, REDETECT, EPISODE2, SVT = "Episode", "Redetect", "Episode2", "SVT"
VT_1, VT_2, VT_3 = VT_MODES
DECISIONS = VT_MODES + (SVT,)


def build_detection_tree(cfg, d=None, horizon=None, initial=None):
    """
    ``initial`` optionally maps tree coordinates to [lo, hi] ranges; wide c and
    s2 ranges make the discriminator outcomes nondeterministic.
    """
    d = d or DiscrimParams()
    lay = Layout(TREE_COORDS)
    split = d.flag_level - 1.0
    correlated = lay.ge(split, c=1.0)
    uncorrelated = lay.le(split, c=1.0)
    stable = lay.region(uncorrelated, lay.ge(0.0, s2=1.0), lay.le(d.stab_threshold, s2=1.0))
    unstable = lay.region(uncorrelated, lay.ge(d.stab_threshold, s2=1.0))
    quiet = lay.region(uncorrelated, lay.le(NO_BEATS / 2.0, s2=1.0))
    whole = Polytope.whole(lay.dim)
    counters = {"n": 0.0, "f": 0.0}
    close = lay.reset(values=dict(counters, e1=0.0, e2=0.0))

    edges = [
        Edge(IDLE, EPISODE, whole, lay.reset(values=dict(counters, e1=0.0, e2=0.0)), name="open", listens=FAST,
             emits=(DURATION_BEGINS,)),
        Edge(EPISODE, SVT, correlated, name="svt_1", listens=DURATION_ENDS, emits=(END,)),
        Edge(EPISODE, VT_1, stable, name="vt_1", listens=DURATION_ENDS, emits=(END,)),
        Edge(EPISODE, REDETECT, unstable, name="unstable_1", listens=DURATION_ENDS),
        Edge(EPISODE, IDLE, quiet, close, name="quiet_1", listens=DURATION_ENDS),
        Edge(REDETECT, EPISODE2, whole, lay.reset(values=counters), name="rearm", listens=VEVENT,
             emits=(DURATION_BEGINS,)),
        Edge(EPISODE2, EPISODE2, whole, lay.reset(shifts={"n": 1.0, "f": 1.0}), name="count_fast", listens=FAST),
        Edge(EPISODE2, EPISODE2, whole, lay.reset(shifts={"n": 1.0}), name="count_slow", listens=SLOW),
        Edge(EPISODE2, SVT, correlated, name="svt_2", listens=DURATION_ENDS, emits=(END,)),
        Edge(EPISODE2, VT_2, stable, name="vt_2", listens=DURATION_ENDS, emits=(END,)),
        Edge(EPISODE2, VT_3, lay.region(unstable, lay.ge(0.0, f=1.0, n=-d.faster_fraction)), name="faster",
             listens=DURATION_ENDS, emits=(END,)),
        Edge(EPISODE2, SVT, lay.region(unstable, lay.le(0.0, f=1.0, n=-d.faster_fraction)), name="af",
             listens=DURATION_ENDS, emits=(END,)),
        Edge(EPISODE2, IDLE, quiet, close, name="quiet_2", listens=DURATION_ENDS),
    ]
    live = (IDLE, EPISODE, REDETECT, EPISODE2)
    edges += end_edges(lay, live, horizon)
    flows = {
        IDLE: lay.clock(t=1.0),
        EPISODE: lay.clock(t=1.0, e1=1.0),
        REDETECT: lay.clock(t=1.0, e2=1.0),
        EPISODE2: lay.clock(t=1.0, e2=1.0),
    }
    flows.update({mode: Constant(lay.dim) for mode in DECISIONS + (END,)})

    lo = lay.point(c=-d.window, s2=NO_BEATS)
    hi = lo.copy()
    for coord, (low, high) in (initial or {}).items():
        lo[lay[coord]], hi[lay[coord]] = low, high
    tree = HybridAutomaton(
        lay.dim, list(live) + list(DECISIONS) + [END], flows, edges,
        init=[(IDLE, Polytope.from_box(lo, hi))], terminal=list(DECISIONS) + [END], name=cfg.name,
        coords=TREE_COORDS, check_disjoint=horizon is None,
    )
    logger.debug("Built %s with paths %s", tree, cfg.paths)
    return tree


class TherapyTarget:
    """
    Blocks whose tree mode is VT_k with some state satisfying
    sum of the path clocks of VT_k <= deadline. The negation ("missed or late
    therapy") matches blocks in SVT or End and VT_k blocks holding a state
    past the deadline.
    """

    def __init__(self, aut, cfg, negated=False):
        self.cfg = cfg
        self.negated = negated
        self.name = ("not " if negated else "") + f"therapy within {cfg.deadline:g} s"
        self.aut = aut
        names = getattr(aut, "names", None)
        if names is not None:
            if cfg.name not in names:
                raise ConfigError(d={"paths": [f"{aut.name} has no component {cfg.name}."]}, m="unresolved_clock")
            self.position = names.index(cfg.name)
            coords = list(aut.coords)
        else:
            self.position = None
            coords = [f"{aut.name}.{coord}" for coord in aut.coords]
        self.regions = {}
        for mode, clocks in cfg.paths.items():
            a = np.zeros(aut.dim)
            for clock in clocks:
                if clock not in coords:
                    raise ConfigError(d={"paths": [f"{mode}: no clock {clock} in {aut.name}."]},
                                      m="unresolved_clock")
                a[coords.index(clock)] += 1.0
            self.regions[mode] = Polytope.halfspace(a, cfg.deadline)

    def __repr__(self):
        return f"TherapyTarget({self.name})"

    def tree_mode(self, mode):
        return mode if self.position is None else mode[self.position]

    def matches(self, block):
        mode = self.tree_mode(block.mode)
        region = self.regions.get(mode)
        if self.negated:
            if mode in (SVT, END):
                return True
            return region is not None and not region.contains(block.polytope)
        return region is not None and not block.polytope.intersect(region).is_empty()

    def holds(self, mode, x, tol=1e-9):
        mode = self.tree_mode(mode)
        region = self.regions.get(mode)
        if self.negated:
            return mode in (SVT, END) or (region is not None and not region.contains_point(x, tol))
        return region is not None and region.contains_point(x, tol)

    def negate(self):
        return TherapyTarget(self.aut, self.cfg, not self.negated)


def encode_therapy_property(cfg, aut):
    """The therapy predicate over ``aut`` (a tree or a loop containing it) and its negation."""
    target = TherapyTarget(aut, cfg)
    return target, target.negate()
