import os
import tempfile

import numpy as np
from django.test import SimpleTestCase

from backend.exceptions import InfeasibleError, ModelError, UnboundedError
from hybrid_core.automaton import AffineReset, Edge, HybridAutomaton, HybridState
from hybrid_core.compose import compose
from hybrid_core.simulate import simulate
from plugins.flow.base import FlowPlugin
from plugins.flow.clock import Clock
from plugins.flow.constant import Constant
from plugins.flow.linear import LinearODE
from setgeom.polytope import Polytope
from stormed.certificate import StormedCertificate, delimited_band, transition_bound
from stormed.checks import check_all, check_ends_delimited, check_flow_monotonic, check_reset_monotonic, \
    check_separability, check_tisg, check_transition_bound, phi_progress
from stormed.composition import check_collection_separability, compose_certificate
from stormed.io import build_certificate, dump_certificate, load_certificate, write_report
from stormed.synthesis import synthesize_phi


def interval(lo, hi):
    return Polytope.from_box([lo], [hi])


def certificate(phi=(1.0,), eps=0.5, zeta=1.0, d_min=0.5, band=(-10.0, 10.0), **kwargs):
    return StormedCertificate(list(phi), eps, zeta, d_min, *band, **kwargs)


def ticker(name, start=0.0):
    return HybridAutomaton(
        1, ["on"], {"on": Clock([1.0])},
        [Edge("on", "on", Polytope.halfspace([-1.0], -1.0), AffineReset.assign(1, values={0: 0.0}), name="tick")],
        init=[("on", Polytope.point([start]))], name=name, coords=["c"],
    )


class SquaredClock(FlowPlugin):
    """x + t^2: time-independent but not a semigroup."""

    name = "squared"

    def __init__(self):
        super().__init__(1)

    def evaluate(self, x, t):
        return self.check_state(x) + t ** 2

    def velocity(self, x):
        return np.zeros(1)

    def to_dict(self):
        return {"kind": self.name}

    @classmethod
    def from_dict(cls, data, dim):
        return cls()


class StormedSetupMixin:

    def setUp(self):
        self.rng = np.random.default_rng(0)
        self.domain = interval(0, 3)
        self.clock = HybridAutomaton(1, ["run"], {"run": Clock([1.0])}, init=[("run", Polytope.point([0.0]))],
                                     name="clock")
        self.line = HybridAutomaton(
            1, ["a", "b", "c"], {m: Constant(1) for m in "abc"},
            [Edge("a", "b", interval(0, 1), name="first"), Edge("b", "c", interval(3, 4), name="second")],
            init=[("a", Polytope.point([0.0]))], name="line",
        )
        # a -> b at x = 1, b -> c at x = 2; identity resets.
        self.stairs = HybridAutomaton(
            1, ["a", "b", "c"], {"a": Clock([1.0]), "b": Clock([1.0]), "c": Constant(1)},
            [Edge("a", "b", Polytope.halfspace([-1.0], -1.0), name="up"),
             Edge("b", "c", Polytope.halfspace([-1.0], -2.0), name="stop")],
            invariants={"a": Polytope.halfspace([1.0], 1.0), "b": Polytope.halfspace([1.0], 2.0)},
            init=[("a", interval(0, 0.5))], terminal=["c"], name="stairs",
        )
        self.stairs_cert = certificate(eps=1.0, zeta=1.0, d_min=0.5, band=(0.5, 2.5))


class CertificateTestCase(StormedSetupMixin, SimpleTestCase):

    def test_invalid_fields(self):
        with self.assertRaises(ModelError) as cm:
            certificate(eps=0.0, band=(1.0, 1.0))
        self.assertIn("eps", cm.exception.d)
        self.assertIn("b_plus", cm.exception.d)

    def test_lipschitz_length(self):
        with self.assertRaises(ModelError):
            certificate(lipschitz=[1.0, 2.0])

    def test_transition_bound(self):
        self.assertEquals(transition_bound(certificate(eps=0.5, zeta=1.0, d_min=1.0, band=(-5.0, 5.0))), 20)

    def test_transition_bound_flow_driven(self):
        self.assertEquals(transition_bound(certificate(eps=0.1, zeta=100.0, d_min=1.0, band=(-5.0, 5.0))), 100)

    def test_transition_bound_degenerate(self):
        with self.assertRaises(ModelError):
            transition_bound(certificate(band=(0.0, np.inf)))

    def test_delimited_band(self):
        self.assertEquals(delimited_band([1.0, -2.0], Polytope.from_box([-1, -1], [1, 1])), (-3.0, 3.0))
        self.assertEquals(delimited_band([1.0], Polytope.halfspace([-1.0], 0.0)), (-np.inf, np.inf))

    def test_scaled_keeps_bound(self):
        cert = certificate(eps=0.5, zeta=1.0, d_min=1.0, band=(-5.0, 5.0))
        self.assertEquals(transition_bound(cert.scaled(2.5)), transition_bound(cert))
        with self.assertRaises(ModelError):
            cert.scaled(0.0)


class SeparabilityTestCase(StormedSetupMixin, SimpleTestCase):

    def test_separated_guards(self):
        result = check_separability(self.line, 1.0)
        self.assertTrue(result.passed)
        self.assertAlmostEqual(result.margin, 1.0, places=6)

    def test_touching_image(self):
        line = HybridAutomaton(
            1, ["a", "b", "c"], {m: Constant(1) for m in "abc"},
            [Edge("a", "b", interval(0, 1), name="first"), Edge("b", "c", interval(1, 2), name="second")],
            init=[("a", Polytope.point([0.0]))],
        )
        result = check_separability(line, 1.0)
        self.assertFalse(result.passed)
        self.assertEquals(result.witness["edge"], "first")
        self.assertEquals(result.witness["next"], "second")
        self.assertAlmostEqual(result.witness["state"][0], 1.0, places=6)

    def test_unbounded_guard(self):
        line = HybridAutomaton(
            1, ["a", "b"], {m: Constant(1) for m in "ab"},
            [Edge("a", "b", interval(0, 1), name="first"),
             Edge("b", "a", Polytope.halfspace([-1.0], -3.0), name="back")],
            init=[("a", Polytope.point([0.0]))],
        )
        with self.assertRaises(UnboundedError):
            check_separability(line, 1.0)
        self.assertTrue(check_separability(line, 1.0, domain=interval(-5, 5)).passed)

    def test_listening_edges_optional(self):
        line = HybridAutomaton(
            1, ["a", "b", "c"], {m: Constant(1) for m in "abc"},
            [Edge("a", "b", interval(0, 1), name="heard", listens="Ping"),
             Edge("b", "c", interval(1, 2), name="second")],
            init=[("a", Polytope.point([0.0]))],
        )
        self.assertFalse(check_separability(line, 0.5).passed)
        result = check_separability(line, 0.5, listening=False)
        self.assertTrue(result.passed)
        self.assertEquals(result.samples, 0)


class TisgTestCase(StormedSetupMixin, SimpleTestCase):

    def test_clock(self):
        result = check_tisg(self.clock, samples=200, tol=1e-12, rng=self.rng, domain=self.domain)
        self.assertTrue(result.passed)
        self.assertEquals(result.samples, 200)

    def test_linear(self):
        aut = HybridAutomaton(2, ["m"], {"m": LinearODE([[-1.0, 2.0], [0.5, -3.0]], [1.0, 0.0])},
                              init=[("m", Polytope.point([0.0, 0.0]))])
        result = check_tisg(aut, samples=200, tol=1e-9, rng=self.rng, domain=Polytope.from_box([-1, -1], [1, 1]))
        self.assertTrue(result.passed)

    def test_squared_flow(self):
        aut = HybridAutomaton(1, ["m"], {"m": SquaredClock()}, init=[("m", Polytope.point([0.0]))])
        result = check_tisg(aut, samples=200, tol=1e-9, rng=self.rng, domain=self.domain)
        self.assertFalse(result.passed)
        self.assertGreater(result.witness["error"], 1e-9)
        self.assertIsNotNone(result.witness["time"])

    def test_unbounded_invariant(self):
        with self.assertRaises(UnboundedError):
            check_tisg(self.clock, samples=10)


class FlowMonotonicTestCase(StormedSetupMixin, SimpleTestCase):

    def test_clock(self):
        result = check_flow_monotonic(self.clock, certificate(eps=0.5), samples=200, rng=self.rng,
                                      domain=self.domain)
        self.assertTrue(result.passed)
        self.assertGreaterEqual(result.margin, 0.0)

    def test_opposing_phi(self):
        result = check_flow_monotonic(self.clock, certificate(phi=(-1.0,)), samples=50, rng=self.rng,
                                      domain=self.domain)
        self.assertFalse(result.passed)
        self.assertEquals(result.witness["mode"], "run")
        self.assertLess(result.witness["advance"], 0.0)

    def test_shrinks_into_invariant(self):
        result = check_flow_monotonic(self.stairs, self.stairs_cert, samples=200, rng=self.rng,
                                      domain=self.domain)
        self.assertTrue(result.passed)


class ResetMonotonicTestCase(StormedSetupMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.loop = HybridAutomaton(
            1, ["m"], {"m": Clock([1.0])},
            [Edge("m", "m", interval(1, 2), AffineReset.assign(1, shifts={0: 1.0}), name="bump")],
            init=[("m", Polytope.point([0.0]))],
        )

    def test_identity_mode_change(self):
        result = check_reset_monotonic(self.line, certificate(), samples=20, rng=self.rng)
        self.assertTrue(result.passed)

    def test_self_loop(self):
        self.assertTrue(check_reset_monotonic(self.loop, certificate(zeta=0.5), samples=20, rng=self.rng).passed)

    def test_zeta_too_high(self):
        result = check_reset_monotonic(self.loop, certificate(zeta=2.0), samples=20, rng=self.rng)
        self.assertFalse(result.passed)
        self.assertAlmostEqual(result.margin, -1.0)
        self.assertEquals(result.witness["edge"], "bump")

    def test_recorded_jumps(self):
        execution = simulate(self.stairs, HybridState("a", [0.0]), 3.0, 0.25)
        result = check_reset_monotonic(self.stairs, self.stairs_cert, executions=[execution])
        self.assertTrue(result.passed)
        self.assertEquals(result.samples, 2)


class EndsDelimitedTestCase(StormedSetupMixin, SimpleTestCase):

    def test_box_band(self):
        box = interval(-2, 2)
        band = delimited_band([1.0], box)
        self.assertEquals(band, (-2.0, 2.0))
        line = HybridAutomaton(1, ["a", "b"], {m: Constant(1) for m in "ab"},
                               [Edge("a", "b", interval(0, 1), name="first")],
                               init=[("a", Polytope.point([0.0]))])
        self.assertTrue(check_ends_delimited(line, certificate(band=band)).passed)

    def test_whole_line_guard(self):
        line = HybridAutomaton(1, ["a", "b"], {m: Constant(1) for m in "ab"},
                               [Edge("a", "b", Polytope.whole(1), name="always")],
                               init=[("a", Polytope.point([0.0]))])
        result = check_ends_delimited(line, certificate())
        self.assertFalse(result.passed)
        self.assertTrue(result.witness["unbounded"])

    def test_band_too_narrow(self):
        result = check_ends_delimited(self.line, certificate(band=(-1.0, 2.0)))
        self.assertFalse(result.passed)
        self.assertEquals(result.witness["edge"], "second")
        self.assertAlmostEqual(result.witness["state"][0], 4.0, places=6)

    def test_no_guards(self):
        result = check_ends_delimited(self.clock, certificate())
        self.assertTrue(result.passed)
        self.assertEquals(result.note, "no enabled guards")


class CheckAllTestCase(StormedSetupMixin, SimpleTestCase):

    def test_stairs_pass(self):
        report = check_all(self.stairs, self.stairs_cert, samples=200, rng=self.rng, domain=self.domain)
        self.assertTrue(report.passed)
        self.assertEquals(list(report.results), ["separability", "tisg", "o_minimal", "flow_monotonic",
                                                 "reset_monotonic", "ends_delimited"])
        self.assertIn("structural", report.results["o_minimal"].note)

    def test_scaling_keeps_status(self):
        for cert in (self.stairs_cert, certificate(phi=(-1.0,), band=(-2.5, -0.5))):
            plain = check_all(self.stairs, cert, samples=100, rng=np.random.default_rng(1), domain=self.domain)
            scaled = check_all(self.stairs, cert.scaled(3.0), samples=100, rng=np.random.default_rng(1),
                               domain=self.domain)
            self.assertEquals({name: r.passed for name, r in plain.results.items()},
                              {name: r.passed for name, r in scaled.results.items()})

    def test_executions_advance(self):
        for x0 in (0.0, 0.25, 0.5):
            execution = simulate(self.stairs, HybridState("a", [x0]), 3.0, 0.25)
            self.assertEquals(phi_progress(execution, self.stairs_cert.phi), 0.0)

    def test_transition_census(self):
        self.assertEquals(transition_bound(self.stairs_cert), 4)
        result = check_transition_bound(self.stairs, self.stairs_cert, runs=50, duration=5.0, rng=self.rng)
        self.assertTrue(result.passed)
        self.assertEquals(result.margin, 2.0)

    def test_report_files(self):
        report = check_all(self.stairs, self.stairs_cert, samples=50, rng=self.rng, domain=self.domain)
        with tempfile.TemporaryDirectory() as directory:
            text_path, yaml_path = write_report(report, directory)
            with open(text_path) as f:
                self.assertTrue(f.readline().startswith("STORMED certificate report: PASS"))
            self.assertTrue(os.path.exists(yaml_path))


class SynthesisTestCase(StormedSetupMixin, SimpleTestCase):

    def test_clock(self):
        cert = synthesize_phi(self.clock, rng=self.rng, domain=self.domain, samples=200)
        np.testing.assert_allclose(cert.phi, [1.0], atol=1e-6)
        self.assertLessEqual(cert.eps, 1.0)
        self.assertAlmostEqual(cert.eps, 1.0, places=4)
        self.assertEquals(cert.d_min, 1.0)
        self.assertEquals((cert.b_minus, cert.b_plus), (-1.0, 1.0))

    def test_zero_hint(self):
        aut = HybridAutomaton(2, ["run"], {"run": Clock([1.0, 0.0])}, init=[("run", Polytope.point([0.0, 0.0]))],
                              coords=["t", "v"])
        cert = synthesize_phi(aut, zero=["v"], rng=self.rng, domain=Polytope.from_box([0, 0], [1, 1]), samples=200)
        np.testing.assert_allclose(cert.phi, [1.0, 0.0], atol=1e-6)

    def test_stairs(self):
        cert = synthesize_phi(self.stairs, rng=self.rng, domain=self.domain, samples=200)
        self.assertGreater(cert.phi[0], 0.0)
        self.assertAlmostEqual(cert.d_min, 0.5, places=4)
        report = check_all(self.stairs, cert, samples=200, rng=self.rng, domain=self.domain)
        self.assertTrue(report.passed)

    def test_infeasible(self):
        aut = HybridAutomaton(
            1, ["a"], {"a": Clock([1.0])},
            [Edge("a", "a", Polytope.halfspace([-1.0], -1.0), AffineReset.assign(1, shifts={0: -1.0}), name="e")],
            init=[("a", Polytope.point([0.0]))],
        )
        with self.assertRaises(InfeasibleError) as cm:
            synthesize_phi(aut, rng=self.rng, domain=interval(0, 2), samples=200)
        self.assertEquals(sorted(cm.exception.d["constraints"]), ["flow:a", "self_loop:e"])


class CompositionTestCase(StormedSetupMixin, SimpleTestCase):

    def test_formulas(self):
        first = certificate(eps=0.1, zeta=1.0, d_min=0.5, diameter=10.0)
        second = certificate(eps=0.2, zeta=2.0, d_min=0.5, diameter=10.0)
        composed = compose_certificate([first, second], cross_dmin={(0, 1): 0.3})
        self.assertEquals(composed.eps, 0.1)
        self.assertEquals(composed.zeta, 1.0)
        self.assertEquals(composed.d_min, 0.3)
        np.testing.assert_array_equal(composed.phi, [1.0, 1.0])
        self.assertEquals((composed.b_minus, composed.b_plus), (-20.0, 20.0))
        self.assertAlmostEqual(composed.diameter, np.sqrt(200.0))

    def test_single_component(self):
        cert = certificate(lipschitz=[1.0])
        composed = compose_certificate([cert], state_box=interval(-3, 3))
        np.testing.assert_array_equal(composed.phi, cert.phi)
        self.assertEquals((composed.eps, composed.zeta, composed.d_min), (cert.eps, cert.zeta, cert.d_min))
        self.assertEquals((composed.b_minus, composed.b_plus), (-3.0, 3.0))

    def test_cross_separation_dominates(self):
        composed = compose_certificate([certificate(), certificate()], cross_dmin=[[0.0, 0.05], [0.05, 0.0]])
        self.assertEquals(composed.d_min, 0.05)

    def test_random_tuples(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            m = int(rng.integers(1, 5))
            certs = [certificate(eps=rng.uniform(0.01, 1), zeta=rng.uniform(0.01, 1), d_min=rng.uniform(0.01, 1),
                                 diameter=rng.uniform(0, 5)) for _ in range(m)]
            cross = {(i, j): rng.uniform(0.01, 1) for i in range(m) for j in range(i + 1, m)}
            composed = compose_certificate(certs, cross_dmin=cross)
            ratios = [c.zeta / c.diameter for c in certs if c.diameter > 0]
            self.assertEquals(composed.eps, min([c.eps for c in certs] + ratios))
            self.assertEquals(composed.zeta, min(c.zeta for c in certs))
            self.assertEquals(composed.d_min, min([c.d_min for c in certs] + list(cross.values())))

    def test_missing_cross_entry(self):
        with self.assertRaises(ModelError) as cm:
            compose_certificate([certificate(), certificate(), certificate()], cross_dmin={(0, 1): 0.1})
        self.assertEquals(cm.exception.m, "missing_cross_dmin")

    def test_disjoint_phases(self):
        product = compose([ticker("a"), ticker("b", start=0.5)])
        result = check_collection_separability(product, {(0, 1): 0.1}, samples=2, duration=3.0, dt=0.25,
                                                rng=self.rng)
        self.assertTrue(result.passed)
        self.assertGreater(result.samples, 0)
        self.assertAlmostEqual(result.margin, 0.4, places=6)

    def test_simultaneous_clocks(self):
        product = compose([ticker("a"), ticker("b")])
        result = check_collection_separability(product, {(0, 1): 0.1}, samples=1, duration=1.5, dt=0.25,
                                                rng=self.rng)
        self.assertFalse(result.passed)
        self.assertEquals(result.witness["jumper"], "a")
        self.assertEquals(result.witness["neighbour"], "b")
        self.assertAlmostEqual(result.witness["time"], 1.0)


class CertificateFileTestCase(SimpleTestCase):

    def test_build(self):
        cert = build_certificate({"phi": [1, 0], "eps": 0.5, "zeta": 1, "d_min": 0.1, "b_minus": -1, "b_plus": 1})
        self.assertEquals(cert.dim, 2)
        self.assertEquals(cert.lipschitz, [])

    def test_invalid(self):
        with self.assertRaises(ModelError) as cm:
            build_certificate({"phi": [1], "eps": -1, "zeta": 1, "d_min": 0.1, "b_minus": -1, "b_plus": 1})
        self.assertIn("eps", cm.exception.d)
        with self.assertRaises(ModelError):
            build_certificate({"phi": [1], "eps": 1, "zeta": 1, "d_min": 0.1, "b_minus": 1, "b_plus": 1})

    def test_file(self):
        cert = certificate(phi=(0.5, 0.0), lipschitz=[1.0, 2.0], diameter=3.0)
        with tempfile.TemporaryDirectory() as directory:
            path = dump_certificate(cert, os.path.join(directory, "cert.yaml"))
            loaded = load_certificate(path, dim=2)
            self.assertEquals(loaded.to_dict(), cert.to_dict())
            with self.assertRaises(ModelError):
                load_certificate(path, dim=3)
