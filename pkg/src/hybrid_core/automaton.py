"""
Hybrid automata: modes with flows and invariants, guarded edges with resets,
and the urgent step semantics used by the simulator.

Automata answer every question lazily through methods (``flow``,
``invariant``, ``edges_from``) so that models whose mode set is too large to
enumerate, such as the cardiac grid, can share the same machinery.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Tuple

import numpy as np

from backend.exceptions import ModelError
from setgeom.polytope import Polytope
from setgeom.support import Ball, LinearImage, MinkowskiSum, PolytopeSet, as_support_set

logger = logging.getLogger(__name__)


class AffineReset:
    """x -> M x + c."""

    affine = True

    def __init__(self, M, c=None):
        self.M = np.atleast_2d(np.asarray(M, dtype=float))
        dim = self.M.shape[0]
        if self.M.shape != (dim, dim):
            raise ModelError(d={"M": [f"Reset matrix must be square, got {self.M.shape}."]}, m="dimension_mismatch")
        self.c = np.zeros(dim) if c is None else np.asarray(c, dtype=float).reshape(-1)
        if self.c.shape != (dim,):
            raise ModelError(d={"c": [f"Expected a {dim}-vector."]}, m="dimension_mismatch")
        self.dim = dim

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim))

    @classmethod
    def assign(cls, dim, values=None, copies=None, shifts=None):
        """
        Identity except for ``values`` {coord: constant}, ``copies``
        {coord: source coord} and ``shifts`` {coord: constant increment}.
        """
        M = np.eye(dim)
        c = np.zeros(dim)
        for coord, value in (values or {}).items():
            M[coord] = 0.0
            c[coord] = value
        for coord, source in (copies or {}).items():
            M[coord] = 0.0
            M[coord, source] = 1.0
        for coord, value in (shifts or {}).items():
            c[coord] += value
        return cls(M, c)

    def is_identity(self):
        return bool(np.array_equal(self.M, np.eye(self.dim)) and not np.any(self.c))

    def apply(self, x):
        return self.M @ np.asarray(x, dtype=float) + self.c

    def image(self, polytope):
        return polytope.affine_image(self.M, self.c)

    def image_set(self, S):
        return MinkowskiSum(LinearImage(self.M, as_support_set(S)), Ball(self.c, 0.0))

    def preimage(self, polytope):
        return polytope.preimage(self.M, self.c)

    def then(self, other):
        """The reset applying ``self`` first and ``other`` second."""
        if not other.affine:
            return ResetChain([self, other])
        return AffineReset(other.M @ self.M, other.M @ self.c + other.c)

    def lifted(self, offset, total):
        M = np.eye(total)
        c = np.zeros(total)
        M[offset:offset + self.dim, offset:offset + self.dim] = self.M
        c[offset:offset + self.dim] = self.c
        return AffineReset(M, c)

    def to_dict(self):
        return {"M": self.M.tolist(), "c": self.c.tolist()}

    @classmethod
    def from_dict(cls, data, dim):
        if data is None:
            return cls.identity(dim)
        reset = cls(data.get("M", np.eye(dim)), data.get("c"))
        if reset.dim != dim:
            raise ModelError(d={"M": [f"Reset acts on dimension {reset.dim}, expected {dim}."]},
                             m="dimension_mismatch")
        return reset


class ComputedReset:
    """
    A reset whose ``coords`` are set by ``fn(x)`` (evaluated on the pre-state)
    and whose other coordinates follow an affine map. ``bounds`` bounds the
    computed values and is what set-valued operations see.
    """

    affine = False

    def __init__(self, fn, coords, bounds, base=None, dim=None):
        self.fn = fn
        self.coords = list(coords)
        self.bounds = np.asarray(bounds, dtype=float).reshape(len(self.coords), 2)
        self.base = base if base is not None else AffineReset.identity(dim)
        self.dim = self.base.dim

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        y = self.base.apply(x)
        y[self.coords] = np.asarray(self.fn(x), dtype=float).reshape(-1)
        return y

    def _projected_base(self):
        M = self.base.M.copy()
        c = self.base.c.copy()
        M[self.coords] = 0.0
        c[self.coords] = 0.0
        return M, c

    def image_set(self, S):
        M, c = self._projected_base()
        lo = np.zeros(self.dim)
        hi = np.zeros(self.dim)
        lo[self.coords] = self.bounds[:, 0]
        hi[self.coords] = self.bounds[:, 1]
        box = Polytope.from_box(lo + c, hi + c)
        return MinkowskiSum(LinearImage(M, as_support_set(S)), PolytopeSet(box))

    def image(self, polytope):
        # Exact image of P x bounds under (x, z) -> base(x) with z written into coords.
        M, c = self._projected_base()
        k = len(self.coords)
        lifted = polytope.lift(0, self.dim + k).intersect(
            Polytope.from_box(self.bounds[:, 0], self.bounds[:, 1]).lift(self.dim, self.dim + k))
        E = np.zeros((self.dim, k))
        E[self.coords, np.arange(k)] = 1.0
        return lifted.affine_image(np.hstack([M, E]), c)

    def preimage(self, polytope):
        return None

    def then(self, other):
        return ResetChain([self, other])

    def lifted(self, offset, total):
        inner = self.fn
        width = self.dim

        def fn(x):
            return inner(x[offset:offset + width])

        return ComputedReset(fn, [offset + i for i in self.coords], self.bounds,
                             base=self.base.lifted(offset, total))


class ResetChain:
    """Resets applied in order; affine only when every stage is."""

    def __init__(self, stages):
        self.stages = []
        for stage in stages:
            self.stages.extend(stage.stages if isinstance(stage, ResetChain) else [stage])
        self.dim = self.stages[0].dim
        self.affine = all(stage.affine for stage in self.stages)

    def apply(self, x):
        for stage in self.stages:
            x = stage.apply(x)
        return x

    def image_set(self, S):
        for stage in self.stages:
            S = stage.image_set(S)
        return S

    def image(self, polytope):
        for stage in self.stages:
            polytope = stage.image(polytope)
        return polytope

    def preimage(self, polytope):
        return None

    def then(self, other):
        return ResetChain([self, other])

    def lifted(self, offset, total):
        return ResetChain([stage.lifted(offset, total) for stage in self.stages])


def chain_resets(stages):
    """Collapse consecutive affine stages into one map."""
    merged = []
    for stage in stages:
        if merged and merged[-1].affine and stage.affine:
            merged[-1] = merged[-1].then(stage)
        else:
            merged.append(stage)
    return merged[0] if len(merged) == 1 else ResetChain(merged)


class Edge:

    def __init__(self, src, dst, guard, reset=None, name=None, listens=None, emits=(), group=None):
        self.src = src
        self.dst = dst
        self.guard = guard
        self.reset = reset if reset is not None else AffineReset.identity(guard.dim)
        self.name = name or f"{src}->{dst}"
        self.listens = listens
        self.emits = tuple(emits)
        self.group = group

    @property
    def key(self):
        return str(self.src), str(self.dst), self.name

    def __repr__(self):
        return f"Edge({self.name})"


@dataclass
class HybridState:
    mode: Any
    x: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)


@dataclass
class StepResult:
    mode: Any
    x: np.ndarray
    edges: Tuple[str, ...]
    emits: Tuple[str, ...] = ()
    ambiguities: list = field(default_factory=list)


class HybridAutomaton:
    """
    An explicit automaton. ``flows`` and ``invariants`` map mode ids to flow
    plugins and polytopes; a mode without an invariant is unconstrained.
    """

    def __init__(self, dim, modes, flows, edges=(), invariants=None, init=(), terminal=(), name="automaton",
                 coords=None, check_disjoint=True):
        if dim <= 0:
            raise ModelError(d={"dim": ["Dimension must be positive."]}, m="invalid_dimension")
        self.dim = dim
        self.name = name
        self.modes = list(modes)
        self.coords = list(coords) if coords is not None else [f"x_{i}" for i in range(dim)]
        if len(self.coords) != dim:
            raise ModelError(d={"coords": [f"Expected {dim} coordinate names."]}, m="dimension_mismatch")
        self._flows = dict(flows)
        self._invariants = dict(invariants or {})
        self.init = [(mode, polytope) for mode, polytope in init]
        self.terminal = set(terminal)
        self._edges = {mode: [] for mode in self.modes}
        for mode in self.modes:
            if mode not in self._flows:
                raise ModelError(d={"flows": [f"Mode {mode} has no flow."]}, m="missing_flow")
            if self._flows[mode].dim != dim:
                raise ModelError(d={"flows": [f"Flow of mode {mode} has dimension {self._flows[mode].dim}."]},
                                 m="dimension_mismatch")
        for edge in edges:
            self._check_edge(edge)
            self._edges[edge.src].append(edge)
        for mode, polytope in list(self._invariants.items()) + self.init:
            if mode not in self._edges:
                raise ModelError(d={"modes": [f"Unknown mode {mode}."]}, m="unknown_mode")
            if polytope.dim != dim:
                raise ModelError(d={"invariants": [f"Set for mode {mode} lives in dimension {polytope.dim}."]},
                                 m="dimension_mismatch")
        names = [edge.name for edge in self.all_edges()]
        if len(set(names)) != len(names):
            raise ModelError(d={"edges": ["Edge names must be unique."]}, m="duplicate_edge")
        if check_disjoint:
            overlaps = self.overlapping_guards()
            if overlaps:
                raise ModelError(d={"edges": [f"Guards of {a} and {b} overlap." for a, b in overlaps]},
                                 m="overlapping_guards")

    def _check_edge(self, edge):
        if edge.src not in self._edges or edge.dst not in self._edges:
            raise ModelError(d={"edges": [f"Edge {edge.name} joins unknown modes."]}, m="unknown_mode")
        if edge.guard.dim != self.dim or edge.reset.dim != self.dim:
            raise ModelError(d={"edges": [f"Edge {edge.name} does not act on dimension {self.dim}."]},
                             m="dimension_mismatch")

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} dim={self.dim}>"

    # structure

    def flow(self, mode):
        return self._flows[mode]

    def invariant(self, mode):
        polytope = self._invariants.get(mode)
        return polytope if polytope is not None else Polytope.whole(self.dim)

    def edges_from(self, mode):
        return self._edges[mode]

    def all_edges(self):
        return [edge for mode in self.modes for edge in self._edges[mode]]

    def own_edges(self, mode):
        return [edge for edge in self.edges_from(mode) if edge.listens is None]

    def listening_edges(self, mode, event):
        return [edge for edge in self.edges_from(mode) if edge.listens == event]

    def edge(self, name):
        for edge in self.all_edges():
            if edge.name == name:
                return edge
        raise ModelError(d={"edge": [f"No edge named {name}."]}, m="unknown_edge")

    def is_terminal(self, mode):
        return mode in self.terminal

    def events_listened(self):
        return {edge.listens for edge in self.all_edges() if edge.listens}

    def events_emitted(self):
        return {event for edge in self.all_edges() for event in edge.emits}

    def edge_names(self):
        return {edge.name for edge in self.all_edges()}

    def has_edge(self, name):
        return name in self.edge_names()

    def overlapping_guards(self):
        """Pairs of edges leaving one mode whose guards share interior (listeners per event)."""
        overlaps = []
        for mode in self.modes:
            groups = {}
            for edge in self.edges_from(mode):
                groups.setdefault(edge.listens, []).append(edge)
            for edges in groups.values():
                for a, b in itertools.combinations(edges, 2):
                    joint = a.guard.intersect(b.guard).intersect(self.invariant(mode))
                    if not joint.is_empty() and joint.has_interior():
                        overlaps.append((a.name, b.name))
        return overlaps

    # urgent semantics

    def _guard_stack(self, mode):
        """Own-edge guards of ``mode`` as one constraint system, with the row where each edge starts."""
        stacks = self.__dict__.setdefault("_guard_stacks", {})
        if mode not in stacks:
            edges = self.own_edges(mode)
            fixed = np.full(len(edges), np.nan)
            rows, rhs, starts, stacked = [], [], [], []
            for k, edge in enumerate(edges):
                guard = edge.guard
                if guard.infeasible:
                    fixed[k] = np.inf
                elif not guard.A.size:
                    fixed[k] = -np.inf
                else:
                    starts.append(sum(len(r) for r in rows))
                    stacked.append(k)
                    rows.append(guard.A)
                    rhs.append(guard.b)
            A = np.vstack(rows) if rows else np.zeros((0, self.dim))
            b = np.concatenate(rhs) if rhs else np.zeros(0)
            stacks[mode] = (edges, fixed, A, b, np.array(starts, dtype=int), np.array(stacked, dtype=int))
        return stacks[mode]

    def edge_violations(self, mode, x):
        """Largest guard residual per own edge; an edge is enabled when its residual is <= 0."""
        edges, values = self._violations(mode, x)
        return list(zip(edges, values.tolist()))

    def _violations(self, mode, x):
        edges, fixed, A, b, starts, stacked = self._guard_stack(mode)
        values = fixed.copy()
        if stacked.size:
            values[stacked] = np.maximum.reduceat(A @ np.asarray(x, dtype=float) - b, starts)
        return edges, values

    def guard_residuals(self, mode, x):
        """One residual per guard the simulator watches; the margin is their minimum."""
        return self._violations(mode, x)[1]

    def invariant_violation(self, mode, x):
        return self.invariant(mode).violation(x)

    def _pick(self, enabled):
        ambiguities = []
        chosen = []
        groups = {}
        for edge in enabled:
            groups.setdefault(edge.group, []).append(edge)
        for group in sorted(groups, key=str):
            edges = sorted(groups[group], key=lambda e: e.key)
            chosen.append(edges[0])
            if len(edges) > 1:
                ambiguities.append(tuple(edge.name for edge in edges))
        if len(chosen) > 1 and not self.supports_group_jumps:
            ambiguities.append(tuple(edge.name for edge in chosen))
            chosen = chosen[:1]
        return chosen, ambiguities

    supports_group_jumps = False

    def jump(self, mode, x, edges):
        """Apply one edge (or one per group where supported) and return (mode, x)."""
        edge = edges[0]
        return edge.dst, edge.reset.apply(x)

    def step(self, mode, x, tol):
        enabled = [edge for edge, value in self.edge_violations(mode, x) if value <= tol]
        if not enabled:
            return None
        chosen, ambiguities = self._pick(enabled)
        new_mode, new_x = self.jump(mode, x, chosen)
        return StepResult(new_mode, new_x, tuple(edge.name for edge in chosen),
                          tuple(event for edge in chosen for event in edge.emits), ambiguities)

    def react(self, mode, x, event, tol):
        enabled = [edge for edge in self.listening_edges(mode, event) if edge.guard.violation(x) <= tol]
        if not enabled:
            return None
        chosen, ambiguities = self._pick(enabled)
        new_mode, new_x = self.jump(mode, x, chosen)
        return StepResult(new_mode, new_x, tuple(edge.name for edge in chosen),
                          tuple(e for edge in chosen for e in edge.emits), ambiguities)

    def coord(self, name):
        try:
            return self.coords.index(name)
        except ValueError:
            raise ModelError(d={"coords": [f"{self.name} has no coordinate {name}."]}, m="unknown_coordinate")

    def mode_graph(self, domain=None):
        """Syntactic successors: edges whose guard meets the source invariant (within ``domain``)."""
        graph = {}
        for mode in self.modes:
            successors = set()
            region = self.invariant(mode) if domain is None else self.invariant(mode).intersect(domain)
            for edge in self.edges_from(mode):
                if not edge.guard.intersect(region).is_empty():
                    successors.add(edge.dst)
            graph[mode] = successors
        return graph

    def reachable_modes(self, domain=None):
        seen = {mode for mode, _ in self.init}
        frontier = list(seen)
        graph = self.mode_graph(domain)
        while frontier:
            mode = frontier.pop()
            for successor in graph.get(mode, ()):
                if successor not in seen:
                    seen.add(successor)
                    frontier.append(successor)
        return [mode for mode in self.modes if mode in seen]


def flow(aut, state, t):
    """theta_mode(t; x) for the state's mode."""
    if t < 0:
        raise ModelError(d={"t": ["Flow time must be nonnegative."]}, m="negative_time")
    return aut.flow(state.mode).evaluate(state.x, t)


def post_discrete_exact(aut, mode, P):
    """For every edge out of ``mode``: reset(P & guard) & Inv(dst), dropping empty results."""
    if P.dim != aut.dim:
        raise ModelError(d={"P": [f"Set lives in dimension {P.dim}, expected {aut.dim}."]}, m="dimension_mismatch")
    results = []
    for edge in aut.edges_from(mode):
        enabled = P.intersect(edge.guard)
        if enabled.is_empty():
            continue
        image = edge.reset.image(enabled).intersect(aut.invariant(edge.dst))
        if not image.is_empty():
            results.append((edge.dst, image))
    return results
