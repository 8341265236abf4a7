import os
import tempfile

import numpy as np
from django.test import SimpleTestCase

from backend.exceptions import ModelError
from cardiac.certificates import sense_certificate, tcfi_certificate
from cardiac.loop import reduced_domain, reduced_horizon, reduced_loop, reduced_templates
from cardiac.params import DetectionTreeConfig, DiscrimParams, SenseParams
from hybrid_core.automaton import AffineReset, Edge, HybridAutomaton
from plugins.flow.clock import Clock
from plugins.flow.constant import Constant
from plugins.providers import get_provider
from quotient.export import to_graphviz, write_quotient
from quotient.partition import Partition, initial_partition, new_block
from quotient.query import Target, reach_query
from quotient.refine import fd, fixpoint, ft_eps, refine
from quotient.transition import check_simulation
from reach.flowpipe import ReachConfig
from setgeom.polytope import Polytope
from setgeom.templates import TemplateDirections


def interval(lo, hi):
    return Polytope.from_box([lo], [hi])


def partition(*blocks):
    return Partition([new_block(mode, interval(lo, hi)) for mode, lo, hi in blocks])


def intervals(P, mode):
    bounds = [block.polytope.bounding_box() for block in P.by_mode(mode)]
    return sorted((round(float(lo[0]), 9), round(float(hi[0]), 9)) for lo, hi in bounds)


class QuotientSetupMixin:

    def setUp(self):
        self.cfg = ReachConfig(0.5, (0.0, 0.5, 1.0), TemplateDirections.box(1), 0.0, 30.0)
        self.post = get_provider('post', 'flowpipe')
        self.line = HybridAutomaton(1, ["m"], {"m": Clock([1.0])}, invariants={"m": interval(0, 3)},
                                    init=[("m", interval(0, 1))])
        self.still = HybridAutomaton(1, ["m"], {"m": Constant(1)}, invariants={"m": interval(0, 3)},
                                     init=[("m", interval(0, 3))])
        self.toy = HybridAutomaton(
            1, ["p", "q"], {"p": Constant(1), "q": Constant(1)},
            [Edge("p", "q", Polytope.halfspace([-1.0], -2.0), name="go")],
            invariants={"p": interval(0, 3), "q": interval(0, 3)}, init=[("p", interval(0, 3))], name="toy",
        )
        self.clock_toy = HybridAutomaton(
            1, ["p", "q"], {"p": Clock([1.0]), "q": Constant(1)},
            [Edge("p", "q", Polytope.halfspace([-1.0], -2.0), name="go")],
            invariants={"p": interval(0, 3), "q": interval(0, 3)}, init=[("p", interval(0, 1))], name="clock_toy",
        )

    def toy_partition(self):
        return initial_partition(self.toy, cuts=[("prop", interval(0, 3), ["q"])])


class InitialPartitionTestCase(QuotientSetupMixin, SimpleTestCase):

    def test_cuts_and_labels(self):
        P = initial_partition(self.line, cuts=[("low", interval(0, 1))])
        self.assertEquals(intervals(P, "m"), [(0, 1), (1, 3)])
        labelled = [block for block in P if block.labels]
        self.assertEquals(len(labelled), 1)
        self.assertEquals(labelled[0].labels, frozenset({"low"}))

    def test_mode_restricted_cut(self):
        P = self.toy_partition()
        self.assertEquals(len(P), 2)
        self.assertEquals(P.by_mode("q")[0].labels, frozenset({"prop"}))
        self.assertEquals(P.by_mode("p")[0].labels, frozenset())

    def test_unreachable_modes_pruned(self):
        aut = HybridAutomaton(1, ["a", "b"], {"a": Constant(1), "b": Constant(1)},
                              invariants={"a": interval(0, 1), "b": interval(0, 1)}, init=[("a", interval(0, 1))])
        self.assertEquals(initial_partition(aut).modes, ["a"])

    def test_domain_prunes_modes(self):
        aut = HybridAutomaton(1, ["a", "b"], {"a": Constant(1), "b": Constant(1)},
                              [Edge("a", "b", Polytope.halfspace([-1.0], -2.0), name="go")],
                              invariants={"a": interval(0, 3), "b": interval(0, 3)}, init=[("a", interval(0, 1))])
        self.assertEquals(initial_partition(aut).modes, ["a", "b"])
        self.assertEquals(initial_partition(aut, domain=interval(0, 1)).modes, ["a"])

    def test_domain(self):
        aut = HybridAutomaton(1, ["a"], {"a": Constant(1)}, init=[("a", interval(0, 1))])
        P = initial_partition(aut, domain=interval(-2, 2))
        self.assertEquals(intervals(P, "a"), [(-2, 2)])

    def test_empty(self):
        with self.assertRaises(ModelError):
            initial_partition(self.line, domain=interval(5, 6))


class RefineTestCase(QuotientSetupMixin, SimpleTestCase):

    def test_flow_toy_stable(self):
        P = partition(("m", 0, 1), ("m", 1, 3))
        refined = refine(self.line, P, self.post, cfg=self.cfg)
        self.assertTrue(refined.stable)
        self.assertTrue(refined.equals(P))

    def test_no_transitions(self):
        P = partition(("m", 0, 1), ("m", 1, 3))
        self.assertTrue(refine(self.still, P, self.post, cfg=self.cfg).equals(P))

    def test_discrete_toy_splits_destination(self):
        refined = refine(self.toy, self.toy_partition(), self.post, cfg=self.cfg)
        self.assertEquals(intervals(refined, "p"), [(0, 3)])
        self.assertEquals(intervals(refined, "q"), [(0, 2), (2, 3)])
        self.assertTrue(all(block.labels == {"prop"} for block in refined.by_mode("q")))

    def test_respects_initial_blocks(self):
        initial = self.toy_partition()
        refined = refine(self.toy, initial, self.post, cfg=self.cfg)
        self.assertGreaterEqual(len(refined), len(initial))
        for block in refined:
            parents = [b for b in initial if b.mode == block.mode and b.polytope.contains(block.polytope)]
            self.assertEquals([b.id for b in parents], [block.origin])

    def test_budget(self):
        refined = refine(self.toy, self.toy_partition(), self.post, max_blocks=2, cfg=self.cfg)
        self.assertFalse(refined.stable)
        self.assertEquals(len(refined), 2)


class FtEpsTestCase(QuotientSetupMixin, SimpleTestCase):

    def test_idempotent(self):
        for aut, P in [(self.line, partition(("m", 0, 1), ("m", 1, 3))),
                       (self.clock_toy, initial_partition(self.clock_toy, cuts=[("early", interval(0, 0.5))]))]:
            once = ft_eps(aut, P, self.cfg, self.post)
            self.assertTrue(ft_eps(aut, once, self.cfg, self.post).equals(once))

    def test_zero_dynamics(self):
        P = partition(("m", 0, 1), ("m", 1, 2), ("m", 2, 3))
        self.assertTrue(ft_eps(self.still, P, self.cfg, self.post).equals(P))

    def test_ignores_edges(self):
        P = self.toy_partition()
        self.assertTrue(ft_eps(self.toy, P, self.cfg, self.post).equals(P))

    def assert_idempotent(self, aut, P, cfg):
        once = ft_eps(aut, P, cfg, self.post)
        self.assertTrue(once.stable)
        self.assertTrue(ft_eps(aut, once, cfg, self.post).equals(once))

    def test_idempotent_on_reduced_loop(self):
        d, interval = DiscrimParams(DL=2.0), (0.8, 1.0)
        loop = reduced_loop(d, DetectionTreeConfig(), interval=interval)
        cfg = ReachConfig(interval[0] / 2, (0.0, 1.0), reduced_templates(loop), 0.0, reduced_horizon(d, interval))
        self.assert_idempotent(loop, initial_partition(loop, domain=reduced_domain(loop, d, interval)), cfg)

    def test_idempotent_on_sensing_and_intervals(self):
        s = SenseParams()
        for template in (sense_certificate(s, horizon=2.0), tcfi_certificate(DiscrimParams(), s.refractory, 2.0)):
            aut = template.automaton
            cfg = ReachConfig(0.25, (0.0, 1.0), TemplateDirections.box(aut.dim), 0.0, 2.0)
            self.assert_idempotent(aut, initial_partition(aut, domain=template.domain), cfg)


class FdTestCase(QuotientSetupMixin, SimpleTestCase):

    def test_no_edges(self):
        P = partition(("m", 0, 3))
        self.assertTrue(fd(self.still, P).equals(P))

    def test_identity_reset(self):
        P = partition(("p", 0, 3), ("q", 0, 2), ("q", 2, 3))
        self.assertEquals(intervals(fd(self.toy, P), "p"), [(0, 2), (2, 3)])

    def test_shift_preimage(self):
        aut = HybridAutomaton(1, ["i", "j"], {"i": Constant(1), "j": Constant(1)},
                              [Edge("i", "j", interval(2, 3), AffineReset([[1.0]], [1.0]))],
                              invariants={"i": interval(0, 3), "j": interval(0, 4)})
        P = partition(("i", 0, 3), ("j", 0, 3), ("j", 3, 4))
        self.assertEquals(intervals(fd(aut, P), "i"), [(0, 2), (2, 3)])


class FixpointTestCase(QuotientSetupMixin, SimpleTestCase):

    def test_no_edges(self):
        quotient, iterations = fixpoint(self.line, partition(("m", 0, 1), ("m", 1, 3)), self.cfg, post=self.post)
        self.assertEquals(iterations, 0)
        self.assertTrue(quotient.converged)
        self.assertEquals(len(quotient.nodes), 2)

    def test_discrete_toy(self):
        quotient, iterations = fixpoint(self.toy, self.toy_partition(), self.cfg, post=self.post)
        self.assertLessEqual(iterations, 2)
        self.assertTrue(quotient.converged)
        self.assertEquals(intervals(quotient.partition, "p"), [(0, 2), (2, 3)])
        self.assertEquals(len(quotient.nodes), 3)
        (late,) = [b for b in quotient.partition.by_mode("p") if b.polytope.contains_point([2.5])]
        (q,) = quotient.partition.by_mode("q")
        self.assertIn((late.id, q.id, "go"), quotient.edges)
        self.assertEquals(len(quotient.initial), 2)

    def test_fixed_point_at_bound(self):
        quotient, iterations = fixpoint(self.clock_toy, initial_partition(self.clock_toy), self.cfg, U=3,
                                        post=self.post, check_convergence=False)
        self.assertEquals(iterations, 3)
        W = quotient.partition
        self.assertTrue(ft_eps(self.clock_toy, fd(self.clock_toy, W), self.cfg, self.post).equals(W))
        self.assertTrue(quotient.converged)


class SimulationCheckTestCase(QuotientSetupMixin, SimpleTestCase):

    def test_no_edge_automaton(self):
        quotient, _ = fixpoint(self.line, partition(("m", 0, 1), ("m", 1, 3)), self.cfg, post=self.post)
        report = check_simulation(self.line, quotient, samples=2000, rng=np.random.default_rng(1))
        self.assertTrue(report.passed, report.violations[:3])
        self.assertGreater(report.checked, 0)

    def test_guard_toy(self):
        quotient, _ = fixpoint(self.clock_toy, initial_partition(self.clock_toy), self.cfg, post=self.post)
        report = check_simulation(self.clock_toy, quotient, samples=10000, rng=np.random.default_rng(2))
        self.assertTrue(report.passed, report.violations[:3])

    def test_deleted_edge_detected(self):
        quotient, _ = fixpoint(self.toy, self.toy_partition(), self.cfg, post=self.post)
        (late,) = [b for b in quotient.partition.by_mode("p") if b.polytope.contains_point([2.5])]
        (jump,) = [edge for edge in quotient.edges if edge[0] == late.id and edge[2] == "go"]
        report = check_simulation(self.toy, quotient.without_edge(jump), samples=2000, rng=np.random.default_rng(3))
        self.assertFalse(report.passed)
        self.assertEquals(report.violations[0]["kind"], "missing_edge")


class ReachQueryTestCase(QuotientSetupMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.quotient, _ = fixpoint(self.toy, self.toy_partition(), self.cfg, post=self.post)

    def test_initial_target(self):
        reachable, path = reach_query(self.quotient, Target(modes=["p"]))
        self.assertTrue(reachable)
        self.assertEquals(path, [])

    def test_destination_mode(self):
        reachable, path = reach_query(self.quotient, Target(modes=["q"]))
        self.assertTrue(reachable)
        self.assertEquals([label for _, _, label in path], ["go"])

    def test_unreachable_region(self):
        reachable, path = reach_query(self.quotient, Target(region=Polytope.halfspace([1.0], -0.5)))
        self.assertFalse(reachable)
        self.assertIsNone(path)

    def test_disconnected_block(self):
        isolated = new_block("q", interval(5, 6))
        self.assertFalse(reach_query(self.quotient, [isolated.id])[0])

    def test_negated_target(self):
        target = Target(modes=["p"], region=interval(0, 3))
        self.assertTrue(reach_query(self.quotient, target.negate())[0])
        self.assertTrue(target.holds("p", [1.0]))
        self.assertFalse(target.negate().holds("p", [1.0]))

    def test_export(self):
        with tempfile.TemporaryDirectory() as directory:
            nodes, edges, dot = write_quotient(self.quotient, directory)
            with open(nodes) as f:
                self.assertEquals(len(f.read().splitlines()), len(self.quotient.nodes) + 1)
            with open(edges) as f:
                self.assertEquals(len(f.read().splitlines()), len(self.quotient.edges) + 1)
            self.assertTrue(os.path.exists(dot))
        self.assertTrue(to_graphviz(self.quotient).startswith("digraph quotient {"))
