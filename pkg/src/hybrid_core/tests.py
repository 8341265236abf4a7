import os
import tempfile

import numpy as np
from django.test import SimpleTestCase

from backend import signals
from backend.exceptions import AmbiguityError, ModelError, NumericalError
from hybrid_core.automaton import AffineReset, ComputedReset, Edge, HybridAutomaton, HybridState, flow, \
    post_discrete_exact
from hybrid_core.compose import Binding, compose
from hybrid_core.execution import FlowSegment, Jump
from hybrid_core.io import build_model, write_trace_csv
from hybrid_core.serializers import automaton_to_dict
from hybrid_core.simulate import find_crossing, simulate
from plugins.flow.clock import Clock
from plugins.flow.constant import Constant
from plugins.flow.linear import LinearODE
from setgeom.polytope import Polytope


def at_least(dim, coord, value):
    row = np.zeros(dim)
    row[coord] = -1.0
    return Polytope.halfspace(row, -value)


def at_most(dim, coord, value):
    row = np.zeros(dim)
    row[coord] = 1.0
    return Polytope.halfspace(row, value)


def clock_toy():
    return HybridAutomaton(
        1, ["Run", "End"], {"Run": Clock([1.0]), "End": Constant(1)},
        [Edge("Run", "End", at_least(1, 0, 1.0), name="finish")],
        init=[("Run", Polytope.point([0.0]))], terminal=["End"], name="toy",
    )


def ticker(name="src", period=1.0):
    return HybridAutomaton(
        1, ["on"], {"on": Clock([1.0])},
        [Edge("on", "on", at_least(1, 0, period), AffineReset.assign(1, values={0: 0.0}), name="tick")],
        init=[("on", Polytope.point([0.0]))], name=name, coords=["c"],
    )


def counter(name="cnt", guard=None):
    return HybridAutomaton(
        1, ["wait"], {"wait": Constant(1)},
        [Edge("wait", "wait", guard or Polytope.whole(1), AffineReset.assign(1, shifts={0: 1.0}),
              name="count", listens="Tick")],
        init=[("wait", Polytope.point([0.0]))], name=name, coords=["k"],
    )


def two_mode_clock(name):
    return HybridAutomaton(
        1, [f"{name}0", f"{name}1"], {f"{name}0": Clock([1.0]), f"{name}1": Clock([2.0])},
        [Edge(f"{name}0", f"{name}1", at_least(1, 0, 1.0), name="up")],
        init=[(f"{name}0", Polytope.point([0.0]))], name=name,
    )


class FlowTestCase(SimpleTestCase):

    def test_zero_dynamics(self):
        aut = HybridAutomaton(2, ["m"], {"m": LinearODE(np.zeros((2, 2)))})
        np.testing.assert_array_equal(flow(aut, HybridState("m", [3, -1]), 5), [3, -1])

    def test_nilpotent(self):
        aut = HybridAutomaton(2, ["m"], {"m": LinearODE([[0, 1], [0, 0]])})
        np.testing.assert_allclose(flow(aut, HybridState("m", [0, 1]), 2), [2, 1], atol=1e-12)

    def test_zero_time(self):
        aut = HybridAutomaton(2, ["m"], {"m": LinearODE([[-1, 2], [0.5, -3]], [1, 1])})
        np.testing.assert_array_equal(flow(aut, HybridState("m", [0.3, 0.7]), 0), [0.3, 0.7])

    def test_negative_time(self):
        with self.assertRaises(ModelError):
            flow(clock_toy(), HybridState("Run", [0]), -1)

    def test_dimension_mismatch(self):
        with self.assertRaises(ModelError):
            flow(clock_toy(), HybridState("Run", [0, 0]), 1)


class AutomatonTestCase(SimpleTestCase):

    def test_overlapping_guards_rejected(self):
        with self.assertRaises(ModelError):
            HybridAutomaton(1, ["a", "b"], {"a": Clock([1]), "b": Clock([1])}, [
                Edge("a", "b", at_least(1, 0, 1), name="one"),
                Edge("a", "b", at_least(1, 0, 2), name="two"),
            ])

    def test_touching_guards_allowed(self):
        aut = HybridAutomaton(1, ["a", "b"], {"a": Clock([1]), "b": Clock([1])}, [
            Edge("a", "b", at_least(1, 0, 1), name="one"),
            Edge("a", "b", at_most(1, 0, 1), name="two"),
        ])
        self.assertEquals(len(aut.edges_from("a")), 2)

    def test_unknown_mode(self):
        with self.assertRaises(ModelError):
            HybridAutomaton(1, ["a"], {"a": Clock([1])}, [Edge("a", "z", Polytope.whole(1))])

    def test_reachable_modes(self):
        aut = HybridAutomaton(1, ["a", "b", "c"], {m: Clock([1]) for m in "abc"},
                              [Edge("a", "b", at_least(1, 0, 1)),
                               Edge("c", "a", Polytope.whole(1))],
                              init=[("a", Polytope.point([0]))])
        self.assertEquals(aut.reachable_modes(), ["a", "b"])

    def test_computed_reset_image(self):
        reset = ComputedReset(lambda x: [x[0] ** 2], [1], [(0.0, 4.0)], dim=2)
        np.testing.assert_allclose(reset.apply([2.0, 7.0]), [2.0, 4.0])
        image = reset.image(Polytope.from_box([-2, 0], [2, 0]))
        self.assertTrue(image.equals(Polytope.from_box([-2, 0], [2, 4])))

    def test_stacked_guard_residuals(self):
        band = Polytope.from_box([1.0, -1.0], [2.0, 1.0])
        aut = HybridAutomaton(2, ["a", "b"], {"a": Clock([1, 0]), "b": Clock([1, 0])}, [
            Edge("a", "b", band, name="band"),
            Edge("a", "b", at_least(2, 0, 5.0), name="late"),
            Edge("a", "a", Polytope.empty(2), name="never"),
            Edge("a", "b", Polytope.whole(2), name="always", listens="Go"),
        ], check_disjoint=False)
        x = np.array([0.5, 3.0])
        values = dict((edge.name, value) for edge, value in aut.edge_violations("a", x))
        self.assertEquals(set(values), {"band", "late", "never"})
        self.assertAlmostEqual(values["band"], band.violation(x))
        self.assertAlmostEqual(values["late"], 4.5)
        self.assertEquals(values["never"], np.inf)
        np.testing.assert_allclose(aut.guard_residuals("a", x), [values["band"], 4.5, np.inf])
        self.assertEquals(aut.guard_residuals("b", x).size, 0)


class SimulateTestCase(SimpleTestCase):

    def test_single_urgent_jump(self):
        execution = simulate(clock_toy(), HybridState("Run", [0.0]), 2.0, 0.25)
        self.assertEquals(len(execution), 2)
        segment, jump = execution.segments
        self.assertIsInstance(segment, FlowSegment)
        self.assertIsInstance(jump, Jump)
        self.assertEquals((segment.t_start, segment.t_end), (0.0, 1.0))
        self.assertEquals(jump.time, 1.0)
        self.assertEquals(jump.post.mode, "End")

    def test_jump_lands_in_guard(self):
        aut = clock_toy()
        execution = simulate(aut, HybridState("Run", [0.0]), 2.0, 0.3)
        jump = execution.jumps[0]
        self.assertLessEqual(aut.edge("finish").guard.violation(jump.pre.x), 1e-6)
        np.testing.assert_array_equal(jump.post.x, aut.edge("finish").reset.apply(jump.pre.x))
        self.assertAlmostEqual(jump.time, 1.0, places=8)

    def test_no_edges(self):
        aut = HybridAutomaton(1, ["m"], {"m": Clock([1.0])})
        execution = simulate(aut, HybridState("m", [0.0]), 2.0, 0.5)
        self.assertEquals(len(execution), 1)
        self.assertEquals(execution.flows[0].t_end, 2.0)
        np.testing.assert_allclose(execution.final.x, [2.0])

    def test_jump_at_time_zero(self):
        execution = simulate(clock_toy(), HybridState("Run", [5.0]), 2.0, 0.5)
        self.assertEquals(execution.jumps[0].time, 0.0)

    def test_ambiguity_reported(self):
        aut = HybridAutomaton(1, ["a", "b", "c"], {m: Clock([1.0]) for m in "abc"}, [
            Edge("a", "c", at_least(1, 0, 1.0), name="late"),
            Edge("a", "b", at_least(1, 0, 1.0), name="early"),
        ], check_disjoint=False, terminal=["b", "c"])
        received = []

        def receiver(sender, **kwargs):
            received.append(kwargs["edges"])

        signals.guard_ambiguity.connect(receiver)
        try:
            execution = simulate(aut, HybridState("a", [0.0]), 2.0, 0.5)
        finally:
            signals.guard_ambiguity.disconnect(receiver)
        self.assertEquals(execution.final.mode, "b")
        self.assertEquals(received, [("early", "late")])
        with self.assertRaises(AmbiguityError):
            simulate(aut, HybridState("a", [0.0]), 2.0, 0.5, strict_urgency=True)

    def test_zero_time_loop(self):
        aut = HybridAutomaton(1, ["a"], {"a": Clock([1.0])}, [Edge("a", "a", Polytope.whole(1), name="spin")])
        with self.assertRaises(NumericalError):
            simulate(aut, HybridState("a", [0.0]), 1.0, 0.5, max_zero_time_jumps=10)

    def test_invariant_exit(self):
        aut = HybridAutomaton(1, ["a"], {"a": Clock([1.0])}, invariants={"a": at_most(1, 0, 0.5)})
        execution = simulate(aut, HybridState("a", [0.0]), 1.0, 0.25)
        self.assertEquals(len(execution.invariant_exits), 1)
        self.assertEquals(execution.end_time, 1.0)

    def test_crossing_of_curve(self):
        tau, value = find_crossing(lambda s: 1.0 - s * s, 0.0, 2.0, 1.0, -3.0, 1e-9, 1e-6)
        self.assertAlmostEqual(tau, 1.0, places=6)
        self.assertLessEqual(value, 0.0)

    def test_linear_crossing(self):
        # x' = -x from 1, guard x <= 0.5: crossing at ln 2.
        aut = HybridAutomaton(1, ["a", "b"], {"a": LinearODE([[-1.0]]), "b": Constant(1)},
                              [Edge("a", "b", at_most(1, 0, 0.5))], terminal=["b"])
        execution = simulate(aut, HybridState("a", [1.0]), 2.0, 0.1)
        self.assertAlmostEqual(execution.jumps[0].time, np.log(2.0), places=6)


class PostDiscreteTestCase(SimpleTestCase):

    def aut(self, guard, reset=None, invariant=None):
        return HybridAutomaton(1, ["i", "j"], {"i": Clock([1.0]), "j": Clock([1.0])},
                               [Edge("i", "j", guard, reset)], invariants={"j": invariant} if invariant else None)

    def test_interval_shift(self):
        aut = self.aut(Polytope.from_box([2], [3]), AffineReset([[1.0]], [1.0]))
        (mode, image), = post_discrete_exact(aut, "i", Polytope.from_box([0], [3]))
        self.assertEquals(mode, "j")
        self.assertTrue(image.equals(Polytope.from_box([3], [4])))

    def test_disjoint(self):
        aut = self.aut(Polytope.from_box([5], [6]))
        self.assertEquals(post_discrete_exact(aut, "i", Polytope.from_box([0], [3])), [])

    def test_identity_half_plane(self):
        aut = HybridAutomaton(2, ["i", "j"], {"i": Clock([1.0, 0.0]), "j": Clock([1.0, 0.0])},
                              [Edge("i", "j", at_least(2, 0, 0.5))])
        square = Polytope.from_box([0, 0], [1, 1])
        (_, image), = post_discrete_exact(aut, "i", square)
        self.assertTrue(image.equals(Polytope.from_box([0.5, 0], [1, 1])))

    def test_inside_invariant(self):
        aut = self.aut(Polytope.whole(1), AffineReset([[2.0]]), invariant=Polytope.from_box([0], [1]))
        (_, image), = post_discrete_exact(aut, "i", Polytope.from_box([0], [3]))
        self.assertTrue(Polytope.from_box([0], [1]).contains(image))


class ComposeTestCase(SimpleTestCase):

    def test_independent_clocks(self):
        product = compose([two_mode_clock("a"), two_mode_clock("b")])
        self.assertEquals(len(product.modes), 4)
        self.assertEquals(product.dim, 2)
        np.testing.assert_allclose(product.flow(("a0", "b0")).velocity([0, 0]), [1, 1])

    def test_single_component(self):
        toy = clock_toy()
        product = compose([toy])
        self.assertEquals(product.modes, [("Run",), ("End",)])
        (edge,) = product.edges_from(("Run",))
        self.assertEquals(edge.dst, ("End",))
        self.assertTrue(edge.guard.equals(toy.edge("finish").guard))
        execution = simulate(product, HybridState(("Run",), [0.0]), 2.0, 0.25)
        self.assertEquals(execution.jumps[0].time, 1.0)

    def test_associativity(self):
        a, b, c = two_mode_clock("a"), two_mode_clock("b"), two_mode_clock("c")
        left = compose([compose([a, b], name="ab"), c])
        right = compose([a, compose([b, c], name="bc")])

        def flatten(mode):
            return tuple(m for part in mode for m in (part if isinstance(part, tuple) else (part,)))

        self.assertEquals({flatten(m) for m in left.modes}, {flatten(m) for m in right.modes})
        rng = np.random.default_rng(0)
        lookup = {flatten(m): m for m in right.modes}
        for mode in left.modes:
            x = rng.normal(size=3)
            np.testing.assert_allclose(left.flow(mode).evaluate(x, 0.7),
                                       right.flow(lookup[flatten(mode)]).evaluate(x, 0.7))

    def test_event_cascade(self):
        product = compose([ticker(), counter()], events={"Tick": [("src", "tick")]})
        execution = simulate(product, HybridState(("on", "wait"), [0.0, 0.0]), 3.5, 0.25)
        self.assertEquals([jump.time for jump in execution.jumps], [1.0, 2.0, 3.0])
        self.assertEquals(execution.jumps[0].edges, ("src.tick", "cnt.count"))
        self.assertEquals(execution.events("Tick"), [(1.0, "Tick"), (2.0, "Tick"), (3.0, "Tick")])
        self.assertEquals(execution.final.x[1], 3.0)

    def test_declared_emission(self):
        emitter = ticker()
        emitter.edge("tick").emits = ("Tick",)
        product = compose([emitter, counter()])
        execution = simulate(product, HybridState(("on", "wait"), [0.0, 0.0]), 2.5, 0.25)
        self.assertEquals(execution.final.x[1], 2.0)

    def test_undefined_event(self):
        with self.assertRaises(ModelError):
            compose([ticker(), counter()], events={"Tick": [("src", "tock")]})
        with self.assertRaises(ModelError):
            compose([ticker(), counter()], events={"Tick": [("nobody", "tick")]})

    def test_linear_binding(self):
        watcher = HybridAutomaton(1, ["w"], {"w": Constant(1)}, name="watch", coords=["age"])
        binding = Binding(("watch", "age"), weights={("src", "c"): 2.0}, offset=1.0)
        product = compose([ticker(), watcher], bindings=[binding])
        A, b = product.flow(("on", "w")).affine_parts()
        np.testing.assert_allclose(A, np.zeros((2, 2)))
        np.testing.assert_allclose(b, [1.0, 2.0])
        execution = simulate(product, HybridState(("on", "w"), [0.0, 1.0]), 1.5, 0.25)
        c, age = execution.final.x
        self.assertAlmostEqual(age, 2 * c + 1)
        self.assertTrue(product.init[0][1].contains_point([0.0, 1.0]))
        self.assertFalse(product.init[0][1].contains_point([0.0, 0.0]))

    def test_callable_binding(self):
        watcher = HybridAutomaton(1, ["w"], {"w": Constant(1)}, name="watch", coords=["sq"])
        binding = Binding(("watch", "sq"), fn=lambda c: c * c, sources=[("src", "c")])
        product = compose([ticker(), watcher], bindings=[binding])
        self.assertIsNone(product.flow(("on", "w")).affine_parts())
        y = product.flow(("on", "w")).evaluate([0.0, 0.0], 0.5)
        np.testing.assert_allclose(y, [0.5, 0.25])

    def test_product_edges(self):
        product = compose([ticker(), counter()], events={"Tick": [("src", "tick")]})
        edges = product.edges_from(("on", "wait"))
        names = sorted(edge.name for edge in edges)
        self.assertEquals(names, ["cnt.count", "src.tick+cnt.count"])
        joint = [edge for edge in edges if edge.name == "src.tick+cnt.count"][0]
        self.assertEquals(joint.emits, ("Tick",))
        self.assertIsNone(joint.listens)
        np.testing.assert_allclose(joint.reset.apply([1.0, 5.0]), [0.0, 6.0])

    def test_listener_guard_pulled_back(self):
        product = compose([ticker(), counter(guard=at_most(1, 0, 2.0))], events={"Tick": [("src", "tick")]})
        own = [edge for edge in product.edges_from(("on", "wait")) if edge.listens is None]
        self.assertEquals(len(own), 2)
        responding = [edge for edge in own if "cnt.count" in edge.name][0]
        self.assertTrue(responding.guard.contains_point([1.0, 2.0]))
        self.assertFalse(responding.guard.contains_point([1.0, 2.5]))


class ModelFileTestCase(SimpleTestCase):

    def document(self):
        return {
            "dim": 1,
            "modes": ["Run", "End"],
            "flows": {"Run": {"kind": "clock", "rates": [1.0]}, "End": {"kind": "constant"}},
            "edges": [{"src": "Run", "dst": "End", "name": "finish", "guard": {"A": [[-1.0]], "b": [-1.0]}}],
            "init": [{"mode": "Run", "set": {"A": [[1.0], [-1.0]], "b": [0.0, 0.0]}}],
            "terminal": ["End"],
        }

    def test_build(self):
        aut = build_model(self.document())
        self.assertEquals(aut.modes, ["Run", "End"])
        self.assertTrue(aut.is_terminal("End"))
        self.assertTrue(aut.edge("finish").reset.is_identity())

    def test_missing_flow(self):
        document = self.document()
        del document["flows"]["End"]
        with self.assertRaises(ModelError) as context:
            build_model(document)
        self.assertIn("flows", context.exception.d)

    def test_unknown_flow_kind(self):
        document = self.document()
        document["flows"]["End"] = {"kind": "spline"}
        with self.assertRaises(ModelError) as context:
            build_model(document)
        self.assertIn("flows", context.exception.d)

    def test_ragged_guard(self):
        document = self.document()
        document["edges"][0]["guard"] = {"A": [[-1.0]], "b": [-1.0, 2.0]}
        with self.assertRaises(ModelError) as context:
            build_model(document)
        self.assertIn("edges", context.exception.d)

    def test_round_trip(self):
        aut = build_model(self.document())
        again = build_model(automaton_to_dict(aut))
        self.assertEquals(again.modes, aut.modes)
        self.assertTrue(again.edge("finish").guard.equals(aut.edge("finish").guard))

    def test_trace_csv(self):
        execution = simulate(build_model(self.document()), HybridState("Run", [0.0]), 2.0, 1.0)
        with tempfile.TemporaryDirectory() as directory:
            path = write_trace_csv(execution, os.path.join(directory, "trace.csv"))
            with open(path) as f:
                lines = f.read().splitlines()
        self.assertEquals(lines[0], "time,mode,x_0")
        self.assertEquals(len(lines), 4)
        self.assertTrue(lines[-1].startswith("1.0,End,"))

    def test_trace_events(self):
        document = self.document()
        document["edges"][0]["emits"] = ["done"]
        execution = simulate(build_model(document), HybridState("Run", [0.0]), 2.0, 1.0)
        with tempfile.TemporaryDirectory() as directory:
            path = write_trace_csv(execution, os.path.join(directory, "trace.csv"), events=True)
            with open(path) as f:
                lines = f.read().splitlines()
        self.assertEquals(lines[0], "time,mode,x_0,event")
        self.assertEquals([line.rsplit(",", 1)[1] for line in lines[1:]], ["", "", "done"])
