"""
Parallel composition.

Components keep their own coordinates, laid out one after another in the
product state. Simultaneously enabled components jump together; named events
emitted by the jumping edges are delivered to listening edges of the other
components in component order, and their emissions cascade. A component
jumps at most once per step.

Bindings make a coordinate of one component an output of others, either a
linear functional (kept exact in flows, resets and guards) or a callable
(simulation only).
"""
import copy
import itertools
import logging
from collections import OrderedDict, deque

import numpy as np

from backend.exceptions import ModelError
from hybrid_core.automaton import AffineReset, ComputedReset, Edge, HybridAutomaton, StepResult, chain_resets
from plugins.flow.base import FlowPlugin
from setgeom.polytope import Polytope

logger = logging.getLogger(__name__)

FLOW_CACHE_SIZE = 256
# Step used to differentiate callable bindings.
BINDING_PROBE = 1e-7


class Binding:
    """
    ``target`` = sum of weights[source] * source + offset, or
    ``target`` = fn(*sources) for callables. Coordinates are (component, name).
    """

    def __init__(self, target, weights=None, offset=0.0, fn=None, sources=(), bounds=None):
        if (weights is None) == (fn is None):
            raise ModelError(d={"bindings": ["Give either weights or fn."]}, m="invalid_binding")
        self.target = target
        self.weights = dict(weights or {})
        self.offset = float(offset)
        self.fn = fn
        self.sources = list(sources)
        self.bounds = bounds if bounds is not None else (-np.inf, np.inf)

    @property
    def linear(self):
        return self.fn is None


class ProductFlow(FlowPlugin):
    """Component flows side by side, with bound coordinates recomputed."""

    name = "product"

    def __init__(self, product, flows):
        super().__init__(product.dim)
        self.product = product
        self.flows = flows

    def evaluate(self, x, t):
        x = self.check_state(x)
        if t == 0:
            return x.copy()
        y = np.empty(self.dim)
        for sl, flow in zip(self.product.slices, self.flows):
            y[sl] = flow.evaluate(x[sl], t)
        return self.product.bind(y)

    def velocity(self, x):
        x = np.asarray(x, dtype=float)
        v = np.empty(self.dim)
        for sl, flow in zip(self.product.slices, self.flows):
            v[sl] = flow.velocity(x[sl])
        for j, w, _ in self.product.linear_bindings:
            v[j] = w @ v
        for j, sources, fn in self.product.callable_bindings:
            ahead = x[sources] + BINDING_PROBE * v[sources]
            v[j] = (fn(*ahead) - fn(*x[sources])) / BINDING_PROBE
        return v

    def affine_parts(self):
        if self.product.callable_bindings:
            return None
        parts = [flow.affine_parts() for flow in self.flows]
        if any(part is None for part in parts):
            return None
        A = np.zeros((self.dim, self.dim))
        b = np.zeros(self.dim)
        for sl, (A_i, b_i) in zip(self.product.slices, parts):
            A[sl, sl] = A_i
            b[sl] = b_i
        rows = [(j, w @ A, w @ b) for j, w, _ in self.product.linear_bindings]
        for j, row, rhs in rows:
            A[j] = row
            b[j] = rhs
        return A, b

    def to_dict(self):
        return {"kind": self.name, "components": [flow.to_dict() for flow in self.flows]}

    @classmethod
    def from_dict(cls, data, dim):
        raise ModelError(d={"kind": ["Product flows are built by composition."]}, m="unknown_flow")


class _Plan:
    """A partially built product edge: guard on the pre-state and the resets applied so far."""

    def __init__(self, product, mode, listens=None):
        self.product = product
        self.src = mode
        self.modes = list(mode)
        self.guard = Polytope.whole(product.dim)
        self.reset = AffineReset.identity(product.dim)
        self.jumped = set()
        self.names = []
        self.emits = []
        self.queue = deque([listens] if listens else [])
        self.listens = listens

    def copy(self):
        clone = copy.copy(self)
        clone.modes = list(self.modes)
        clone.jumped = set(self.jumped)
        clone.names = list(self.names)
        clone.emits = list(self.emits)
        clone.queue = deque(self.queue)
        return clone

    def fire(self, i, edge, pull_back):
        product = self.product
        guard = edge.guard.lift(product.offsets[i], product.dim)
        if not pull_back:
            self.guard = self.guard.intersect(guard)
        elif self.reset.affine:
            self.guard = self.guard.intersect(self.reset.preimage(guard))
        if self.guard.is_empty():
            return False
        self.reset = self.reset.then(edge.reset.lifted(product.offsets[i], product.dim))
        self.modes[i] = edge.dst
        self.jumped.add(i)
        self.names.append(f"{product.names[i]}.{edge.name}")
        fired = product.events_of(i, edge.name, edge.emits)
        self.emits.extend(fired)
        self.queue.extend(fired)
        return True

    def bind(self):
        stage = self.product.binding_reset()
        if stage is not None:
            self.reset = self.reset.then(stage)

    def finish(self):
        return Edge(tuple(self.src), tuple(self.modes), self.guard, chain_resets([self.reset]),
                    name="+".join(self.names), listens=self.listens, emits=tuple(dict.fromkeys(self.emits)))


class ProductAutomaton(HybridAutomaton):
    supports_group_jumps = True

    def __init__(self, components, events=None, bindings=(), name=None):
        if not components:
            raise ModelError(d={"components": ["Nothing to compose."]}, m="empty_composition")
        self.components = list(components)
        self.names = [component.name for component in self.components]
        if len(set(self.names)) != len(self.names):
            raise ModelError(d={"components": ["Component names must be unique."]}, m="duplicate_component")
        self.name = name or "||".join(self.names)
        self.offsets = [int(o) for o in np.cumsum([0] + [component.dim for component in self.components[:-1]])]
        self.dim = int(sum(component.dim for component in self.components))
        self.slices = [slice(o, o + c.dim) for o, c in zip(self.offsets, self.components)]
        self.coords = [f"{n}.{coord}" for n, c in zip(self.names, self.components) for coord in c.coords]
        self._emitters = {}
        for event, emitters in (events or {}).items():
            for component, edge_name in emitters:
                i = self._component_index(component, "events", m="undefined_event")
                if not self.components[i].has_edge(edge_name):
                    raise ModelError(d={"events": [f"{component} has no edge {edge_name} to emit {event}."]},
                                     m="undefined_event")
                self._emitters.setdefault((i, edge_name), []).append(event)
        self.bindings = list(bindings)
        self._compile_bindings()
        emitted = self.events_emitted()
        for event in sorted(self.events_listened() - emitted):
            logger.warning("No component of %s emits %s", self.name, event)
        self._flows = OrderedDict()
        self._edge_cache = {}
        self.init = self._product_init()
        if all(getattr(c, "modes", None) is not None for c in self.components):
            self.modes = [tuple(m) for m in itertools.product(*[c.modes for c in self.components])]
        else:
            self.modes = None

    def _component_index(self, component, field, m="unknown_component"):
        try:
            return self.names.index(component)
        except ValueError:
            raise ModelError(d={field: [f"Unknown component {component}."]}, m=m)

    def index(self, component, coord):
        i = self._component_index(component, "bindings")
        local = coord if isinstance(coord, (int, np.integer)) else self.components[i].coord(coord)
        return self.offsets[i] + int(local)

    def _compile_bindings(self):
        self.linear_bindings = []
        self.callable_bindings = []
        targets = set()
        for binding in self.bindings:
            j = self.index(*binding.target)
            targets.add(j)
            if binding.linear:
                w = np.zeros(self.dim)
                for source, weight in binding.weights.items():
                    w[self.index(*source)] += weight
                self.linear_bindings.append((j, w, binding.offset))
            else:
                sources = [self.index(*source) for source in binding.sources]
                self.callable_bindings.append((j, sources, binding.fn))
        for _, w, _ in self.linear_bindings:
            if any(w[j] for j in targets):
                raise ModelError(d={"bindings": ["A bound coordinate cannot feed another binding."]},
                                 m="invalid_binding")
        for _, sources, _ in self.callable_bindings:
            if targets.intersection(sources):
                raise ModelError(d={"bindings": ["A bound coordinate cannot feed another binding."]},
                                 m="invalid_binding")

    def bind(self, x):
        if not self.bindings:
            return x
        x = np.array(x, dtype=float)
        for j, w, c0 in self.linear_bindings:
            x[j] = w @ x + c0
        for j, sources, fn in self.callable_bindings:
            x[j] = fn(*x[sources])
        return x

    def binding_reset(self):
        if not self.bindings:
            return None
        M = np.eye(self.dim)
        c = np.zeros(self.dim)
        for j, w, c0 in self.linear_bindings:
            M[j] = w
            c[j] = c0
        stage = AffineReset(M, c)
        if self.callable_bindings:
            bounds = [binding.bounds for binding in self.bindings if not binding.linear]
            calls = list(self.callable_bindings)

            def fn(x):
                return [f(*x[sources]) for _, sources, f in calls]

            stage = chain_resets([stage, ComputedReset(fn, [j for j, _, _ in calls], bounds, dim=self.dim)])
        return stage

    def binding_constraints(self):
        """x_j = w.x + c0 for every linear binding, as a pair of halfspaces each."""
        rows, rhs = [], []
        for j, w, c0 in self.linear_bindings:
            row = -w.copy()
            row[j] += 1.0
            rows.extend([row, -row])
            rhs.extend([c0, -c0])
        if not rows:
            return Polytope.whole(self.dim)
        return Polytope(np.array(rows), rhs)

    def events_of(self, i, edge_name, declared=()):
        return list(dict.fromkeys(list(declared) + self._emitters.get((i, edge_name), [])))

    def _product_init(self):
        init = []
        for combo in itertools.product(*[component.init for component in self.components]):
            mode = tuple(m for m, _ in combo)
            polytope = Polytope.whole(self.dim)
            for i, (_, P) in enumerate(combo):
                polytope = polytope.intersect(P.lift(self.offsets[i], self.dim))
            polytope = polytope.intersect(self.binding_constraints())
            init.append((mode, polytope))
        return init

    def split(self, x):
        return [np.asarray(x)[sl] for sl in self.slices]

    # structure

    def flow(self, mode):
        mode = tuple(mode)
        if mode in self._flows:
            self._flows.move_to_end(mode)
            return self._flows[mode]
        flow = ProductFlow(self, [c.flow(m) for c, m in zip(self.components, mode)])
        self._flows[mode] = flow
        if len(self._flows) > FLOW_CACHE_SIZE:
            self._flows.popitem(last=False)
        return flow

    def invariant(self, mode):
        polytope = Polytope.whole(self.dim)
        for i, (component, m) in enumerate(zip(self.components, mode)):
            polytope = polytope.intersect(component.invariant(m).lift(self.offsets[i], self.dim))
        if self.linear_bindings:
            polytope = polytope.intersect(self.binding_constraints())
        return polytope

    def invariant_violation(self, mode, x):
        return max(c.invariant_violation(m, x[sl]) for c, m, sl in zip(self.components, mode, self.slices))

    def is_terminal(self, mode):
        return all(c.is_terminal(m) for c, m in zip(self.components, mode))

    @property
    def terminal(self):
        if self.modes is None:
            return set()
        return {mode for mode in self.modes if self.is_terminal(mode)}

    def events_listened(self):
        return set().union(*[c.events_listened() for c in self.components])

    def events_emitted(self):
        emitted = set().union(*[c.events_emitted() for c in self.components])
        return emitted.union(*[set(events) for events in self._emitters.values()]) if self._emitters else emitted

    def has_edge(self, name):
        parts = name.split("+")
        for part in parts:
            component, _, edge = part.partition(".")
            if component not in self.names or not self.components[self.names.index(component)].has_edge(edge):
                return False
        return True

    def all_edges(self):
        if self.modes is None:
            raise ModelError(d={"modes": ["The product has too many modes to enumerate."]}, m="lazy_modes")
        return [edge for mode in self.modes for edge in self.edges_from(mode)]

    def edges_from(self, mode):
        """Product edges, cascades included; guards of listeners are pulled back through earlier resets."""
        mode = tuple(mode)
        if mode in self._edge_cache:
            return self._edge_cache[mode]
        edges = []
        options = [[None] + c.own_edges(m) for c, m in zip(self.components, mode)]
        for combo in itertools.product(*options):
            if all(edge is None for edge in combo):
                continue
            plan = _Plan(self, mode)
            if all(plan.fire(i, edge, pull_back=False) for i, edge in enumerate(combo) if edge is not None):
                plan.bind()
                edges.extend(plan.finish() for plan in self._expand(plan))
        listened = set()
        for c, m in zip(self.components, mode):
            listened.update(edge.listens for edge in c.edges_from(m) if edge.listens)
        for event in sorted(listened):
            plan = _Plan(self, mode, listens=event)
            edges.extend(plan.finish() for plan in self._expand(plan) if plan.jumped)
        self._edge_cache[mode] = edges
        return edges

    def _expand(self, plan):
        if not plan.queue:
            yield plan
            return
        event = plan.queue.popleft()
        listeners = [j for j, (c, m) in enumerate(zip(self.components, plan.modes))
                     if j not in plan.jumped and c.listening_edges(m, event)]
        yield from self._branch(plan, event, listeners, 0)

    def _branch(self, plan, event, listeners, k):
        if k == len(listeners):
            yield from self._expand(plan)
            return
        j = listeners[k]
        options = self.components[j].listening_edges(plan.modes[j], event)
        for edge in options:
            branch = plan.copy()
            if branch.fire(j, edge, pull_back=True):
                branch.bind()
                yield from self._branch(branch, event, listeners, k + 1)
        if not any(edge.guard.A.shape[0] == 0 for edge in options):
            yield from self._branch(plan.copy(), event, listeners, k + 1)

    # urgent semantics

    def guard_residuals(self, mode, x):
        return np.concatenate([c.guard_residuals(m, x[sl]) for c, m, sl in zip(self.components, mode, self.slices)])

    def step(self, mode, x, tol):
        return self._cascade(mode, x, tol, deque())

    def react(self, mode, x, event, tol):
        return self._cascade(mode, x, tol, deque([event]), own=False)

    def _cascade(self, mode, x, tol, queue, own=True):
        modes = list(mode)
        x = np.array(x, dtype=float)
        jumped, edges, emits, ambiguities = set(), [], [], []

        def apply(i, result):
            modes[i] = result.mode
            x[self.slices[i]] = result.x
            jumped.add(i)
            edges.extend(f"{self.names[i]}.{name}" for name in result.edges)
            fired = list(result.emits)
            for name in result.edges:
                fired.extend(self._emitters.get((i, name), []))
            fired = list(dict.fromkeys(fired))
            emits.extend(fired)
            queue.extend(fired)
            ambiguities.extend(tuple(f"{self.names[i]}.{name}" for name in pair) for pair in result.ambiguities)

        if own:
            results = [(i, c.step(m, x[sl], tol))
                       for i, (c, m, sl) in enumerate(zip(self.components, modes, self.slices))]
            for i, result in results:
                if result is not None:
                    apply(i, result)
            if jumped:
                x[:] = self.bind(x)
        while queue:
            event = queue.popleft()
            for j, (c, sl) in enumerate(zip(self.components, self.slices)):
                if j in jumped:
                    continue
                result = c.react(modes[j], x[sl], event, tol)
                if result is not None:
                    apply(j, result)
                    x[:] = self.bind(x)
        if not jumped:
            return None
        return StepResult(tuple(modes), x, tuple(edges), tuple(dict.fromkeys(emits)), ambiguities)

    def mode_graph(self, domain=None):
        graph = {}
        frontier = [mode for mode, _ in self.init]
        while frontier:
            mode = frontier.pop()
            if mode in graph:
                continue
            successors = set()
            region = self.invariant(mode) if domain is None else self.invariant(mode).intersect(domain)
            for edge in self.edges_from(mode):
                if not edge.guard.intersect(region).is_empty():
                    successors.add(edge.dst)
            graph[mode] = successors
            frontier.extend(successors - set(graph))
        return graph

    def reachable_modes(self, domain=None):
        return list(self.mode_graph(domain))


def compose(components, events=None, bindings=(), name=None):
    """Sigma_1 || ... || Sigma_m over the named event map and coordinate bindings."""
    return ProductAutomaton(components, events=events, bindings=bindings, name=name)
