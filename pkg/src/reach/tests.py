import os
import tempfile

import numpy as np
from django.test import SimpleTestCase

from backend.exceptions import ModelError
from hybrid_core.automaton import AffineReset, Edge, HybridAutomaton, HybridState, post_discrete_exact
from hybrid_core.simulate import simulate
from plugins.flow.clock import Clock
from plugins.flow.constant import Constant
from plugins.flow.linear import LinearODE
from plugins.flow.threshold_decay import ThresholdDecay
from plugins.providers import get_provider
from reach.export import write_flowpipe_csv, write_flowpipe_vertices
from reach.flowpipe import ReachConfig, reach_cont
from reach.post import post_edge_over, post_tau_over
from setgeom.polytope import Polytope
from setgeom.templates import TemplateDirections


def single_mode(flow, invariant=None):
    return HybridAutomaton(flow.dim, ["m"], {"m": flow}, invariants={"m": invariant} if invariant else None)


def reach_config(dim, delta=0.1, horizon=1.0, eps=0.0, V=None):
    return ReachConfig(delta, (0.0, 0.25, 0.5, 0.75, 1.0), V or TemplateDirections.octagonal(dim), eps, horizon)


class ReachConfigTestCase(SimpleTestCase):

    def test_invalid_step(self):
        with self.assertRaises(ModelError) as context:
            reach_config(1, delta=0.0)
        self.assertIn("delta", context.exception.d)

    def test_invalid_lambda(self):
        with self.assertRaises(ModelError):
            ReachConfig(0.1, (0.0, 1.5), TemplateDirections.box(1))

    def test_short_horizon(self):
        with self.assertRaises(ModelError):
            reach_config(1, delta=1.0, horizon=0.5)

    def test_from_config(self):
        cfg = ReachConfig.from_config(2, templates="box", delta=0.2)
        self.assertEquals(cfg.delta, 0.2)
        self.assertEquals(len(cfg.V), 4)


class ReachContTestCase(SimpleTestCase):

    def test_clock(self):
        aut = single_mode(Clock([1.0]))
        cfg = ReachConfig(1.0, (0.0, 0.25, 0.5, 0.75, 1.0), TemplateDirections.box(1), 0.0, 3.0)
        flowpipe = reach_cont(aut, "m", Polytope.point([0.0]), cfg)
        self.assertEquals([(s.t_lo, s.t_hi) for s in flowpipe], [(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)])
        for k, segment in enumerate(flowpipe):
            self.assertTrue(segment.polytope.contains(Polytope.from_box([k], [k + 1])))

    def test_constant_dynamics(self):
        box = Polytope.from_box([-1, -1], [1, 1])
        flowpipe = reach_cont(single_mode(Constant(2)), "m", box, reach_config(2, horizon=0.5))
        self.assertEquals(len(flowpipe), 5)
        for segment in flowpipe:
            self.assertTrue(segment.polytope.equals(box))

    def test_rotation(self):
        aut = single_mode(LinearODE([[0.0, 1.0], [-1.0, 0.0]]))
        cfg = reach_config(2, delta=0.05, horizon=np.pi / 2)
        flowpipe = reach_cont(aut, "m", Polytope.point([1.0, 0.0]), cfg)
        self.assertAlmostEqual(flowpipe.end_time, np.pi / 2)
        self.assertTrue(flowpipe.segments[-1].polytope.contains_point([0.0, -1.0]))

    def test_invariant_exit_stops(self):
        aut = single_mode(Clock([1.0]), Polytope.from_box([0], [3]))
        cfg = ReachConfig(1.0, (0.0, 0.5, 1.0), TemplateDirections.box(1), 0.0, 30.0)
        flowpipe = reach_cont(aut, "m", Polytope.from_box([0], [1]), cfg)
        self.assertLessEqual(len(flowpipe), 4)
        self.assertTrue(flowpipe.hull(cfg.V).equals(Polytope.from_box([0], [3])))

    def test_eps_bloat(self):
        aut = single_mode(Constant(1))
        cfg = ReachConfig(0.5, (0.0, 1.0), TemplateDirections.box(1), 0.25, 0.5)
        (segment,) = reach_cont(aut, "m", Polytope.point([0.0]), cfg)
        self.assertTrue(segment.polytope.equals(Polytope.from_box([-0.25], [0.25])))

    def test_non_affine_flow(self):
        flow = ThresholdDecay([1.0, 0.0, 0.0, 0.0, 0.0], 2, 3, 4, 0, 1, min_th=0.1, tc=1.0)
        with self.assertRaises(ModelError):
            reach_cont(single_mode(flow), "m", Polytope.point([0.0, 0.0, 1.0, 1.0, -1.0]), reach_config(5))

    def test_threshold_decay_sweeps_velocity_box(self):
        flow = ThresholdDecay([1.0, 0.0, 0.0, 0.0, 0.0], 2, 3, 4, 0, 1, min_th=0.1, tc=1.0)
        X0 = Polytope.from_box([0.0, 0.0, 0.5, 0.8, 0.5], [0.2, 0.0, 1.0, 1.0, 1.0])
        cfg = ReachConfig(0.25, (0.0, 1.0), TemplateDirections.box(5), 0.0, 2.0)
        flowpipe = reach_cont(single_mode(flow), "m", X0, cfg)
        self.assertEquals(len(flowpipe), 8)
        rng = np.random.default_rng(5)
        for x0 in X0.sample(rng, 20):
            x0[2] = flow.threshold(x0)
            execution = simulate(single_mode(flow), HybridState("m", x0), 2.0, 0.05)
            for t, _, x in execution.rows():
                self.assertTrue(flowpipe.contains(t, x, tol=1e-9), f"{x} at t={t} escapes the flowpipe")

    def test_affine_offset(self):
        # x' = -x + 1 converges to 1.
        aut = single_mode(LinearODE([[-1.0]], [1.0]))
        cfg = ReachConfig(0.25, (0.0, 0.25, 0.5, 0.75, 1.0), TemplateDirections.box(1), 0.0, 2.0)
        flowpipe = reach_cont(aut, "m", Polytope.point([0.0]), cfg)
        for t in np.linspace(0.0, 2.0, 17):
            self.assertTrue(flowpipe.contains(t, [1.0 - np.exp(-t)]))

    def test_soundness_against_simulation(self):
        rng = np.random.default_rng(3)
        for _ in range(3):
            n = 3
            A = rng.normal(size=(n, n)) * 0.5 - np.eye(n)
            aut = single_mode(LinearODE(A, rng.normal(size=n) * 0.2))
            X0 = Polytope.from_box(-np.ones(n) * 0.5, np.ones(n) * 0.5)
            cfg = reach_config(n, delta=0.1, horizon=2.0)
            flowpipe = reach_cont(aut, "m", X0, cfg)
            for x0 in X0.sample(rng, 40):
                execution = simulate(aut, HybridState("m", x0), 2.0, 0.05)
                for t, _, x in execution.rows():
                    self.assertTrue(flowpipe.contains(t, x, tol=1e-9), f"{x} at t={t} escapes the flowpipe")

    def test_monotone_in_initial_set(self):
        aut = single_mode(LinearODE([[-0.5, 1.0], [-1.0, -0.5]]))
        cfg = reach_config(2, delta=0.1, horizon=1.0)
        small = reach_cont(aut, "m", Polytope.from_box([0, 0], [0.5, 0.5]), cfg)
        large = reach_cont(aut, "m", Polytope.from_box([-1, -1], [1, 1]), cfg)
        for inner, outer in zip(small, large):
            for a in cfg.V:
                self.assertLessEqual(inner.polytope.support(a)[0], outer.polytope.support(a)[0] + 1e-9)


class PostTestCase(SimpleTestCase):

    def test_zero_dynamics(self):
        box = Polytope.from_box([0, 0], [1, 2])
        ((mode, image),) = post_tau_over(single_mode(Constant(2)), [("m", box)], reach_config(2))
        self.assertEquals(mode, "m")
        self.assertTrue(image.equals(box))

    def test_clock_fills_invariant(self):
        aut = single_mode(Clock([1.0]), Polytope.from_box([0], [3]))
        cfg = ReachConfig(0.5, (0.0, 0.5, 1.0), TemplateDirections.box(1), 0.0, 30.0)
        ((_, image),) = post_tau_over(aut, [("m", Polytope.from_box([0], [1]))], cfg)
        self.assertTrue(image.equals(Polytope.from_box([0], [3])))

    def test_sections(self):
        aut = single_mode(Clock([1.0]), Polytope.from_box([0], [3]))
        cfg = ReachConfig(1.0, (0.0, 1.0), TemplateDirections.box(1), 0.0, 30.0)
        sections = post_tau_over(aut, [("m", Polytope.from_box([0], [1]))], cfg, merge=False)
        self.assertGreater(len(sections), 1)

    def edge_automaton(self, guard, reset=None):
        return HybridAutomaton(1, ["i", "j"], {"i": Constant(1), "j": Constant(1)}, [Edge("i", "j", guard, reset)])

    def test_no_guard_met(self):
        aut = self.edge_automaton(Polytope.from_box([5], [6]))
        self.assertEquals(post_edge_over(aut, [("i", Polytope.from_box([0], [1]))], TemplateDirections.box(1)), [])

    def test_identity_full_guard(self):
        aut = HybridAutomaton(2, ["i", "j"], {"i": Constant(2), "j": Constant(2)}, [Edge("i", "j", Polytope.whole(2))])
        block = Polytope(np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]), [1.0, 0.0, 0.0])
        ((mode, image),) = post_edge_over(aut, [("i", block)], TemplateDirections.octagonal(2))
        self.assertEquals(mode, "j")
        self.assertTrue(image.equals(block))

    def test_permutation_is_exact(self):
        shift = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
        reset = AffineReset(shift, [0.0, 0.0, 0.25])
        aut = HybridAutomaton(3, ["i", "j"], {"i": Constant(3), "j": Constant(3)},
                              [Edge("i", "j", Polytope.whole(3), reset)])
        block = Polytope.from_box([0.4, 0.3, 0.2], [0.5, 0.4, 0.3])
        ((_, image),) = post_edge_over(aut, [("i", block)], TemplateDirections.box(3))
        exact = reset.image(block)
        self.assertTrue(image.equals(exact))
        self.assertTrue(image.equals(Polytope.from_box([0.3, 0.2, 0.25], [0.4, 0.3, 0.25])))

    def test_contains_exact_post(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            M = rng.normal(size=(2, 2))
            reset = AffineReset(M, rng.normal(size=2))
            guard = Polytope.halfspace(rng.normal(size=2), 0.3)
            aut = HybridAutomaton(2, ["i", "j"], {"i": Constant(2), "j": Constant(2)}, [Edge("i", "j", guard, reset)])
            block = Polytope.from_box([-1, -1], [1, 1])
            exact = post_discrete_exact(aut, "i", block)
            over = post_edge_over(aut, [("i", block)], TemplateDirections.octagonal(2))
            self.assertEquals(len(exact), len(over))
            for (_, P), (_, Q) in zip(exact, over):
                for point in P.sample(rng, 50):
                    self.assertTrue(Q.contains_point(point, 1e-7))

    def test_provider(self):
        provider = get_provider('post', 'flowpipe')
        aut = self.edge_automaton(Polytope.from_box([0.5], [2]))
        cfg = ReachConfig(0.5, (0.0, 1.0), TemplateDirections.box(1), 0.0, 1.0)
        (image,) = provider.tau(aut, "i", Polytope.from_box([0], [1]), cfg)
        self.assertTrue(image.equals(Polytope.from_box([0], [1])))
        ((edge, dst, post),) = provider.edges(aut, "i", Polytope.from_box([0], [1]), cfg)
        self.assertEquals(dst, "j")
        self.assertTrue(post.equals(Polytope.from_box([0.5], [1])))


class ExportTestCase(SimpleTestCase):

    def test_csv_and_vertices(self):
        aut = single_mode(LinearODE([[0.0, 1.0], [-1.0, 0.0]]))
        flowpipe = reach_cont(aut, "m", Polytope.from_box([0.9, -0.1], [1.1, 0.1]), reach_config(2, horizon=0.3))
        with tempfile.TemporaryDirectory() as directory:
            rows_path = write_flowpipe_csv([flowpipe], os.path.join(directory, "flowpipe.csv"))
            vertex_path = write_flowpipe_vertices([flowpipe], os.path.join(directory, "vertices.csv"))
            with open(rows_path) as f:
                rows = f.read().splitlines()
            with open(vertex_path) as f:
                vertices = f.read().splitlines()
        self.assertEquals(rows[0], "mode,k,t_lo,t_hi,rows")
        self.assertEquals(len(rows), len(flowpipe) + 1)
        self.assertEquals(vertices[0], "mode,k,vertex,x_0,x_1")
        self.assertGreater(len(vertices), 3 * len(flowpipe))
