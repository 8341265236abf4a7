"""Named-coordinate helpers shared by the ICD automata builders."""
from functools import reduce

import numpy as np

from cardiac.params import END
from hybrid_core.automaton import AffineReset, Edge
from plugins.flow.clock import Clock
from setgeom.polytope import Polytope


class Layout:

    def __init__(self, coords):
        self.coords = list(coords)
        self.dim = len(self.coords)
        self._index = {name: i for i, name in enumerate(self.coords)}

    def __getitem__(self, name):
        return self._index[name]

    def row(self, coeffs):
        a = np.zeros(self.dim)
        for name, value in coeffs.items():
            a[self[name]] += value
        return a

    def le(self, bound, **coeffs):
        """sum coeffs * x <= bound."""
        return Polytope.halfspace(self.row(coeffs), bound)

    def ge(self, bound, **coeffs):
        return Polytope.halfspace(-self.row(coeffs), -bound)

    def region(self, *polytopes):
        return reduce(lambda P, Q: P.intersect(Q), polytopes, Polytope.whole(self.dim))

    def elapsed_at_least(self, value, clock="t", since="t_p"):
        return self.ge(value, **{clock: 1.0, since: -1.0})

    def elapsed_at_most(self, value, clock="t", since="t_p"):
        return self.le(value, **{clock: 1.0, since: -1.0})

    def point(self, **values):
        x = np.zeros(self.dim)
        for name, value in values.items():
            x[self[name]] = value
        return x

    def reset(self, values=None, copies=None, shifts=None, rows=None):
        """
        Identity except for constants, copies and shifts by name; ``rows`` maps a
        coordinate to {source: weight} added on top of its own value.
        """
        reset = AffineReset.assign(
            self.dim,
            values={self[k]: v for k, v in (values or {}).items()},
            copies={self[k]: self[v] for k, v in (copies or {}).items()},
            shifts={self[k]: v for k, v in (shifts or {}).items()},
        )
        for target, weights in (rows or {}).items():
            for source, weight in weights.items():
                reset.M[self[target], self[source]] += weight
        return reset

    def clock(self, rates=None, **named):
        rates = dict(rates or {}, **named)
        return Clock(self.row(rates))


def end_edges(layout, modes, horizon=None, clock="t"):
    """Every mode moves to End when End is heard and, given a horizon, once ``clock`` reaches it."""
    edges = []
    for mode in modes:
        edges.append(Edge(mode, END, Polytope.whole(layout.dim), name=f"stop_{mode}", listens=END))
        if horizon is not None:
            edges.append(Edge(mode, END, layout.ge(horizon, **{clock: 1.0}), name=f"timeout_{mode}", emits=(END,)))
    return edges
