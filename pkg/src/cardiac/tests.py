import dataclasses
import math
import time

import numpy as np
from django.test import SimpleTestCase

from backend.exceptions import ConfigError, ModelError, NumericalError
from cardiac.certificates import (duration_certificate, heart_certificate, sense_certificate, stability_certificate,
                                  tcfi_certificate, vtc_certificate)
from cardiac.discriminators import (ARMED, CALCULATE, DONE, IDLE, NO_BEATS, SLOW_MODE, FAST_MODE, build_duration,
                                    build_stability, build_tcfi, build_vtc, fast_guard, flag_guard,
                                    population_variance, svt_flagged, vtc_correlation)
from cardiac.heart import P0, P1, P2, P3E, P3R, P4, U2, build_heart, coupling_matrix, egm, kernel
from cardiac.layout import Layout
from cardiac.loop import (NSR, SVT as SVT_SCENARIO, VT as VT_SCENARIO, Scenario, acquire_template, build_beat_source,
                          build_pacer, closed_loop, decision, reduced_domain, reduced_loop, run_scenario)
from cardiac.params import (DURATION_BEGINS, DURATION_ENDS, END, FAST, PACE, SLOW, VEVENT, VT_MODES, WINDOW_ENDS,
                            DetectionTreeConfig, DiscrimParams, ElectrodeConfig, HeartParams, SenseParams)
from cardiac.sense import BLANK, COORDS, DECAY, PEAK, build_sense, decay_factor, restart_threshold, threshold
from cardiac.serializers import build_scenario, is_scenario_document
from cardiac.tree import (EPISODE, EPISODE2, REDETECT, SVT, VT_1, VT_2, VT_3, TherapyTarget, build_detection_tree,
                          encode_therapy_property)
from config import config
from hybrid_core.automaton import Edge, HybridAutomaton, HybridState
from hybrid_core.compose import Binding, compose
from hybrid_core.simulate import initial_state, simulate
from plugins.flow.linear import LinearODE
from quotient.partition import new_block
from setgeom.polytope import Polytope
from stormed.certificate import transition_bound
from stormed.checks import check_all, check_reset_monotonic, check_transition_bound
from stormed.composition import check_collection_separability, compose_certificate

TOL = 1e-9
TEMPLATE = [0.1, 0.5, 1.0, 0.4, -0.3, -0.6, -0.2, 0.0]
SPIKE = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]


class CardiacSetupMixin:

    def setUp(self):
        self.heart_params = HeartParams(N=3, D=5.0)
        self.sense_params = SenseParams()
        self.discrim = DiscrimParams(DL=2.0, template=TEMPLATE)
        self.tree_cfg = DetectionTreeConfig()

    def at(self, aut, x, **values):
        x = np.array(x, dtype=float)
        for name, value in values.items():
            x[aut.coord(name)] = value
        return x

    def get(self, aut, x, name):
        return float(x[aut.coord(name)])


class ParamsTestCase(SimpleTestCase):

    def test_voltage_ordering(self):
        with self.assertRaises(ModelError) as context:
            HeartParams(V_th=-30.0)
        self.assertEquals(context.exception.m, "invalid_heart_params")
        self.assertIn("V_th2", context.exception.d)

    def test_voltage_range(self):
        with self.assertRaises(ModelError) as context:
            HeartParams(V_min=-90.0)
        self.assertIn("V_min", context.exception.d)

    def test_sense_ordering(self):
        with self.assertRaises(ModelError) as context:
            SenseParams(MinTP=0.2)
        self.assertIn("MaxTP", context.exception.d)

    def test_beat_separation(self):
        with self.assertRaises(ModelError) as context:
            DiscrimParams(m=3.0)
        self.assertIn("B", context.exception.d)

    def test_constant_template(self):
        with self.assertRaises(ModelError) as context:
            DiscrimParams(template=[1.0] * 8)
        self.assertIn("template", context.exception.d)

    def test_short_template(self):
        with self.assertRaises(ModelError):
            DiscrimParams(template=[1.0, 2.0])

    def test_replace(self):
        params = HeartParams().replace(N=2)
        self.assertEquals(params.N, 2)
        self.assertEquals(params.cells, 4)

    def test_replace_unknown(self):
        with self.assertRaises(ModelError) as context:
            SenseParams().replace(bogus=1.0)
        self.assertEquals(context.exception.m, "unknown_parameter")

    def test_flag_level(self):
        self.assertEquals(DiscrimParams().flag_level, -4)

    def test_tree_paths(self):
        with self.assertRaises(ModelError):
            DetectionTreeConfig(paths={"VT_9": ["tree.e1"]})

    def test_cell_outside_grid(self):
        with self.assertRaises(ModelError):
            HeartParams(N=2).index(2, 0)


class HeartFormulaTestCase(SimpleTestCase):

    def test_row_sums(self):
        A = coupling_matrix(4, 0.05, 0.1)
        self.assertTrue(np.all(A.sum(axis=1) == 0.0))
        self.assertTrue(np.all(np.diag(A) <= 0.0))

    def test_interior_row(self):
        A = coupling_matrix(3, 0.05, 0.1)
        self.assertEquals(A[4, 4], -2 * (20.0 + 10.0))
        self.assertEquals(A[4, 3], 20.0)
        self.assertEquals(A[4, 1], 10.0)

    def test_egm_single_cell(self):
        electrodes = ElectrodeConfig(p0=(1.0, 0.0), p1=(2.0, 0.0), K=1.0)
        self.assertAlmostEqual(egm([1.0], electrodes), 0.5, places=12)

    def test_egm_swapped(self):
        electrodes = ElectrodeConfig(p0=(2.0, 0.0), p1=(1.0, 0.0), K=1.0)
        self.assertAlmostEqual(egm([1.0], electrodes), -0.5, places=12)

    def test_egm_at_rest(self):
        self.assertEquals(egm(np.zeros(9), ElectrodeConfig(p0=(0.5, 0.5), p1=(1.5, 2.5))), 0.0)

    def test_egm_antisymmetry(self):
        rng = np.random.default_rng(3)
        a, b = (0.37, -0.41), (2.6, 2.3)
        for _ in range(50):
            Vdot = rng.normal(scale=1000.0, size=9)
            forward = egm(Vdot, ElectrodeConfig(p0=a, p1=b, K=1.0))
            backward = egm(Vdot, ElectrodeConfig(p0=b, p1=a, K=1.0))
            self.assertLessEqual(abs(forward + backward), 1e-12 * max(1.0, abs(forward)))

    def test_egm_linearity(self):
        electrodes = ElectrodeConfig(p0=(0.5, 2.5), p1=(0.5, -0.5), K=2.0)
        u, v = np.arange(9.0), np.linspace(-1.0, 1.0, 9)
        self.assertAlmostEqual(egm(3 * u - v, electrodes), 3 * egm(u, electrodes) - egm(v, electrodes), places=9)

    def test_electrode_on_cell(self):
        with self.assertRaises(ModelError) as context:
            kernel(2, ElectrodeConfig(p0=(1.0, 1.0), p1=(5.0, 5.0)))
        self.assertEquals(context.exception.m, "electrode_on_cell")

    def test_not_square(self):
        with self.assertRaises(ModelError):
            egm(np.zeros(5), ElectrodeConfig(p0=(0.5, 0.5), p1=(1.5, 2.5)))


class HeartAutomatonTestCase(SimpleTestCase):

    def test_uniform_fixed_point(self):
        heart = build_heart(HeartParams(N=2, D=5.0))
        state = initial_state(heart)
        x = heart.flow(state.mode).evaluate(state.x, 2.0)
        np.testing.assert_allclose(x[:4], -80.0)
        self.assertAlmostEqual(x[heart.T], 2.0)
        self.assertIsNone(heart.step(state.mode, x, TOL))

    def test_end_at_horizon(self):
        heart = build_heart(HeartParams(N=2, D=1.0))
        execution = simulate(heart, initial_state(heart), 2.0, 0.1)
        self.assertEquals(execution.final.mode, END)
        self.assertAlmostEqual(execution.end_time, 1.0, places=6)
        self.assertEquals(execution.events(END), [(execution.end_time, END)])

    def test_single_cell_cycle(self):
        heart = build_heart(HeartParams(N=1), horizon=False, initial_v=[-55.0])
        execution = simulate(heart, initial_state(heart), 0.4, 0.001)
        self.assertEquals(execution.modes_visited(), [(P0,), (P1,), (P2,), (P3E,), (P3R,), (P4,)])
        self.assertAlmostEqual(float(execution.final.x[0]), -80.0, places=4)

    def test_plateau_length(self):
        heart = build_heart(HeartParams(N=1), horizon=False, initial_v=[-55.0])
        execution = simulate(heart, initial_state(heart), 0.4, 0.001)
        times = {jump.edge: jump.time for jump in execution.jumps}
        self.assertAlmostEqual(times["c0:P2>P3E"] - times["c0:P1>P2"], 0.2, places=6)

    def test_reexcitation(self):
        heart = build_heart(HeartParams(N=1), horizon=False)
        x = np.zeros(heart.dim)
        x[0] = -39.0
        result = heart.step((P3R,), x, TOL)
        self.assertEquals(result.mode, (U2,))
        self.assertEquals(result.edges, ("c0:P3R>U2",))

    def test_upstroke_two_ends_in_plateau(self):
        heart = build_heart(HeartParams(N=1), horizon=False)
        x = np.zeros(heart.dim)
        x[0] = 10.0
        self.assertEquals(heart.step((U2,), x, TOL).mode, (P2,))

    def test_pacing(self):
        heart = build_heart(HeartParams(N=2), pacing={PACE: [3]})
        state = initial_state(heart)
        x = state.x.copy()
        x[heart.T] = 0.7
        result = heart.react(state.mode, x, PACE, TOL)
        self.assertEquals(result.mode, (P4, P4, P4, P0))
        self.assertEquals(result.x[heart.n + 3], 0.7)
        self.assertGreater(abs(result.x[heart.EGM]), 0.0)

    def test_pacing_refractory_cell(self):
        heart = build_heart(HeartParams(N=1), pacing={PACE: [0]})
        self.assertIsNone(heart.react((P2,), np.zeros(heart.dim), PACE, TOL))

    def test_normalised_upstroke(self):
        params = HeartParams(N=3)
        heart = build_heart(params)
        upstroke = np.max(np.abs(heart.weights)) * (params.V_max - params.V_th) / params.T0
        self.assertAlmostEqual(upstroke, 1.0, places=9)

    def test_lazy_edges(self):
        heart = build_heart(HeartParams(N=2), pacing={PACE: [0]})
        names = {edge.name for edge in heart.edges_from((P4,) * 4)}
        self.assertIn("c0:Pace", names)
        self.assertIn("c3:P4>P0", names)
        self.assertIn("end", names)
        self.assertTrue(heart.has_edge("c1:P3R>U2"))
        self.assertFalse(heart.has_edge("c1:P4>P2"))
        with self.assertRaises(ModelError):
            heart.all_edges()

    def test_egm_follows_flow(self):
        heart = build_heart(HeartParams(N=2), horizon=False)
        mode = (P0, P4, P4, P4)
        x = np.full(heart.dim, 0.0)
        x[:4] = [-50.0, -80.0, -80.0, -80.0]
        x[heart.EGM] = heart.egm_value(mode, x[:4])
        y = heart.flow(mode).evaluate(x, 0.001)
        self.assertAlmostEqual(y[heart.EGM], heart.egm_value(mode, y[:4]), places=6)

    def test_eigen_flow_matches_matrix_exponential(self):
        heart = build_heart(HeartParams(N=3), horizon=False)
        mode = (P4, P3R, P0, P4, P2, P3E, P4, P1, P4)
        rng = np.random.default_rng(3)
        x = np.zeros(heart.dim)
        x[:heart.n] = rng.uniform(-80.0, 20.0, heart.n)
        x[heart.n:2 * heart.n] = rng.uniform(0.0, 0.5, heart.n)
        x[heart.T] = 1.0
        x[heart.EGM] = heart.egm_value(mode, x[:heart.n])
        exact = LinearODE(*heart.affine_flow(mode))
        flow = heart.flow(mode)
        for t in (0.0, 1e-4, 0.003, 0.05):
            np.testing.assert_allclose(flow.evaluate(x, t), exact.evaluate(x, t), rtol=1e-7, atol=1e-7)
        np.testing.assert_allclose(flow.velocity(x), exact.velocity(x), rtol=1e-9, atol=1e-9)

    def test_guard_residuals(self):
        heart = build_heart(HeartParams(N=2, D=1.0))
        mode = (P4,) * 4
        x = np.zeros(heart.dim)
        x[:4] = [-55.0, -80.0, -80.0, -80.0]
        x[heart.T] = 0.5
        residuals = heart.guard_residuals(mode, x)
        self.assertLessEqual(residuals.min(), 0.0)
        self.assertAlmostEqual(residuals[-1], 0.5)
        self.assertEquals(heart.step(mode, x, TOL).edges, ("c0:P4>P0",))
        x[0] = -80.0
        self.assertGreater(heart.guard_residuals(mode, x).min(), 0.0)
        self.assertIsNone(heart.step(mode, x, TOL))


class SenseTestCase(CardiacSetupMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.sense = build_sense(self.sense_params)

    def test_restart_threshold(self):
        self.assertAlmostEqual(restart_threshold(0.8, self.sense_params), 0.6)

    def test_restart_threshold_clipped(self):
        self.assertEquals(restart_threshold(0.1, self.sense_params), 0.25)
        self.assertEquals(restart_threshold(10.0, self.sense_params), 5.0)

    def test_decay_factor(self):
        self.assertAlmostEqual(decay_factor(1.0, math.exp(-3.0)), 1.0)

    def test_threshold(self):
        p = SenseParams(min_th=0.1, TC=1.0)
        self.assertAlmostEqual(threshold(p, 1.0, 1.0, math.log(2.0)), 0.5)
        self.assertEquals(threshold(p, 1.0, 1.0, 100.0), 0.1)

    def test_declare_event(self):
        x = self.at(self.sense, np.zeros(len(COORDS)), t=0.5, y=1.0, Th=0.25, Th_0=0.25)
        result = self.sense.step(DECAY, x, TOL)
        self.assertEquals(result.mode, PEAK)
        self.assertEquals(result.emits, (VEVENT,))
        self.assertEquals(self.get(self.sense, result.x, "y_M"), 1.0)
        self.assertEquals(self.get(self.sense, result.x, "f"), 1.0)
        self.assertEquals(self.get(self.sense, result.x, "t_p"), 0.5)

    def test_no_event_below_threshold(self):
        x = self.at(self.sense, np.zeros(len(COORDS)), t=0.5, y=0.2, Th=0.25)
        self.assertIsNone(self.sense.step(DECAY, x, TOL))

    def test_no_event_before_min_decay(self):
        x = self.at(self.sense, np.zeros(len(COORDS)), t=0.01, y=1.0, Th=0.25)
        self.assertIsNone(self.sense.step(DECAY, x, TOL))

    def test_track_and_blank(self):
        x = self.at(self.sense, np.zeros(len(COORDS)), t=0.01, t_p=0.0, y=1.5, y_M=1.0, f=1.0)
        result = self.sense.step(PEAK, x, TOL)
        self.assertEquals(result.edges, ("track",))
        self.assertEquals(self.get(self.sense, result.x, "y_M"), 1.5)
        self.assertEquals(self.get(self.sense, result.x, "f"), 2.0)

        x = self.at(self.sense, result.x, t=0.1)
        result = self.sense.step(PEAK, x, TOL)
        self.assertEquals(result.mode, BLANK)
        self.assertEquals(result.emits, (WINDOW_ENDS,))
        self.assertAlmostEqual(self.get(self.sense, result.x, "Th"), 1.125)
        self.assertAlmostEqual(self.get(self.sense, result.x, "Th_0"), 1.125)
        self.assertAlmostEqual(self.get(self.sense, result.x, "eF"), decay_factor(1.125, 0.25))

    def test_unblank(self):
        x = self.at(self.sense, np.zeros(len(COORDS)), t=0.2, t_p=0.1)
        self.assertEquals(self.sense.step(BLANK, x, TOL).mode, DECAY)

    def test_refractory(self):
        self.assertAlmostEqual(self.sense_params.refractory, 0.22)


class TCFITestCase(CardiacSetupMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.tcfi = build_tcfi(self.discrim)

    def beat(self, mode, x, t):
        result = self.tcfi.react(mode, self.at(self.tcfi, x, t=t), VEVENT, TOL)
        return result.mode, result.x, result.emits

    def intervals(self, x):
        return [round(self.get(self.tcfi, x, z), 9) for z in ("z1", "z2", "z3")]

    def test_circulate(self):
        x = self.at(self.tcfi, np.zeros(5), t_p=1.0, z1=0.5, z2=0.4, z3=0.3)
        mode, x, emits = self.beat(SLOW_MODE, x, 1.25)
        self.assertEquals(self.intervals(x), [0.4, 0.3, 0.25])
        self.assertEquals(mode, SLOW_MODE)
        self.assertEquals(emits, (SLOW,))
        self.assertEquals(self.get(self.tcfi, x, "t_p"), 1.25)

    def test_fast(self):
        x = self.at(self.tcfi, np.zeros(5), t_p=1.0, z1=0.5, z2=0.2, z3=0.21)
        mode, x, emits = self.beat(SLOW_MODE, x, 1.19)
        self.assertEquals(self.intervals(x), [0.2, 0.21, 0.19])
        self.assertEquals(mode, FAST_MODE)
        self.assertEquals(emits, (FAST,))

    def test_fast_guard(self):
        lay = Layout(("t", "t_p", "z1", "z2", "z3"))
        self.assertTrue(fast_guard(self.discrim).contains_point(lay.point(z1=0.2, z2=0.21, z3=0.19)))
        self.assertFalse(fast_guard(self.discrim).contains_point(lay.point(z1=0.2, z2=0.4, z3=0.19)))

    def enabled_on_beat(self, interval):
        th = self.discrim.tachy_th
        x = self.at(self.tcfi, np.zeros(5), t_p=1.0, z1=0.5, z2=th - 0.01, z3=th - 0.01, t=1.0 + interval)
        tol = config.get('guard_tolerance')
        return [e.name for e in self.tcfi.listening_edges(SLOW_MODE, VEVENT) if e.guard.violation(x) <= tol]

    def test_threshold_interval_is_slow_only(self):
        self.assertEquals(self.enabled_on_beat(self.discrim.tachy_th), ["slow_slow_c"])

    def test_interval_below_threshold_is_fast_only(self):
        self.assertEquals(self.enabled_on_beat(self.discrim.tachy_th - 1e-5), ["slow_fast"])

    def test_sentinel(self):
        state = initial_state(self.tcfi)
        mode, x, emits = self.beat(state.mode, state.x, 0.2)
        mode, x, emits = self.beat(mode, x, 0.4)
        self.assertEquals(self.intervals(x), [2.0, 0.2, 0.2])
        self.assertEquals(mode, SLOW_MODE)
        self.assertFalse(fast_guard(self.discrim).contains_point(x))

    def test_third_fast_interval(self):
        state = initial_state(self.tcfi)
        mode, x = state.mode, state.x
        modes = []
        for t in (0.2, 0.4, 0.6, 0.8):
            mode, x, _ = self.beat(mode, x, t)
            modes.append(mode)
        self.assertEquals(modes, [SLOW_MODE, SLOW_MODE, FAST_MODE, FAST_MODE])

    def test_slow_after_fast(self):
        x = self.at(self.tcfi, np.zeros(5), t_p=1.0, z1=0.2, z2=0.2, z3=0.2)
        mode, x, emits = self.beat(FAST_MODE, x, 1.5)
        self.assertEquals(mode, SLOW_MODE)
        self.assertEquals(emits, (SLOW,))


class VTCCorrelationTestCase(SimpleTestCase):

    def test_identical(self):
        self.assertAlmostEqual(vtc_correlation(TEMPLATE, TEMPLATE), 1.0, places=9)

    def test_affine(self):
        self.assertAlmostEqual(vtc_correlation(2 * np.array(TEMPLATE) + 5, TEMPLATE), 1.0, places=9)
        self.assertAlmostEqual(vtc_correlation(-3 * np.array(TEMPLATE) + 1, TEMPLATE), 1.0, places=9)

    def test_symmetric(self):
        self.assertAlmostEqual(vtc_correlation(SPIKE, TEMPLATE), vtc_correlation(TEMPLATE, SPIKE), places=12)

    def test_pearson_oracle(self):
        m = np.arange(1.0, 9.0)
        s = np.array([1, 1, 2, 2, 3, 3, 4, 4], dtype=float)
        self.assertAlmostEqual(vtc_correlation(s, m), np.corrcoef(s, m)[0, 1] ** 2, places=12)

    def test_random_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            s, m = rng.normal(size=8), rng.normal(size=8)
            rho = vtc_correlation(s, m)
            self.assertGreaterEqual(rho, 0.0)
            self.assertLessEqual(rho, 1.0)
            self.assertAlmostEqual(rho, np.corrcoef(s, m)[0, 1] ** 2, places=9)

    def test_constant(self):
        with self.assertRaises(NumericalError) as context:
            vtc_correlation([2.0] * 8, TEMPLATE)
        self.assertEquals(context.exception.m, "undefined_correlation")

    def test_length_mismatch(self):
        with self.assertRaises(ModelError):
            vtc_correlation([1.0, 2.0], TEMPLATE)


class VTCAutomatonTestCase(CardiacSetupMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.vtc = build_vtc(self.discrim)
        state = initial_state(self.vtc)
        self.x = self.vtc.react(state.mode, state.x, FAST, TOL).x
        self.start = 1.0

    def window(self, samples):
        x = self.at(self.vtc, self.x, t=self.start)
        result = self.vtc.react(ARMED, x, VEVENT, TOL)
        self.assertEquals(result.mode, CALCULATE)
        x = result.x
        for i, value in enumerate(samples, start=1):
            x = self.at(self.vtc, x, t=self.start + i * self.discrim.T_s, s=value)
            result = self.vtc.step(CALCULATE, x, TOL)
            self.assertEquals(result.edges, (f"sample_{i}",))
            x = result.x
        result = self.vtc.react(CALCULATE, x, WINDOW_ENDS, TOL)
        self.assertEquals(result.mode, ARMED)
        self.x = result.x
        self.start += 0.5
        return self.nu()

    def nu(self):
        return [self.get(self.vtc, self.x, f"nu_{i}") for i in range(1, self.discrim.window + 1)]

    def test_armed_by_fast(self):
        state = initial_state(self.vtc)
        self.assertEquals(state.mode, IDLE)
        self.assertIsNone(self.vtc.react(IDLE, state.x, VEVENT, TOL))
        self.assertEquals(self.vtc.react(IDLE, state.x, FAST, TOL).mode, ARMED)

    def test_accumulators(self):
        x = self.at(self.vtc, self.x, t=self.start)
        x = self.vtc.react(ARMED, x, VEVENT, TOL).x
        x = self.at(self.vtc, x, t=self.start + self.discrim.T_s, s=2.0)
        x = self.vtc.step(CALCULATE, x, TOL).x
        self.assertEquals(self.get(self.vtc, x, "k"), 1.0)
        self.assertEquals(self.get(self.vtc, x, "mu"), 2.0)
        self.assertAlmostEqual(self.get(self.vtc, x, "alpha"), 2.0 * TEMPLATE[0])
        self.assertEquals(self.get(self.vtc, x, "beta"), 4.0)

    def test_no_early_sample(self):
        x = self.at(self.vtc, self.x, t=self.start)
        x = self.vtc.react(ARMED, x, VEVENT, TOL).x
        x = self.at(self.vtc, x, t=self.start + 0.5 * self.discrim.T_s)
        self.assertIsNone(self.vtc.step(CALCULATE, x, TOL))

    def test_three_of_ten(self):
        flags = []
        for _ in range(10):
            nu = self.window(TEMPLATE)
            flags.append(svt_flagged(self.discrim, nu))
        self.assertEquals(flags, [False, False] + [True] * 8)
        self.assertEquals(self.nu(), [1.0] * 10)
        self.assertTrue(flag_guard(self.discrim).contains_point(self.x))

    def test_anti_template(self):
        nu = self.window(-2.0 * np.array(TEMPLATE) + 1.0)
        self.assertEquals(nu[-1], 1.0)

    def test_alternating(self):
        self.assertLess(vtc_correlation(SPIKE, TEMPLATE), self.discrim.vtc_threshold)
        counts = []
        for k in range(6):
            nu = self.window(TEMPLATE if k % 2 == 0 else SPIKE)
            counts.append(sum(1 for v in nu if v > 0))
            self.assertEquals(svt_flagged(self.discrim, nu), counts[-1] >= 3)
            self.assertEquals(flag_guard(self.discrim).contains_point(self.x), counts[-1] >= 3)
        self.assertEquals(counts, [1, 1, 2, 2, 3, 3])

    def test_flat_window(self):
        with self.assertLogs("cardiac.discriminators", "WARNING"):
            nu = self.window([0.3] * 8)
        self.assertEquals(nu, [-1.0] * 10)
        self.assertEquals(self.get(self.vtc, self.x, "dropped"), 1.0)

    def test_short_window(self):
        x = self.at(self.vtc, self.x, t=self.start)
        x = self.vtc.react(ARMED, x, VEVENT, TOL).x
        result = self.vtc.react(CALCULATE, x, WINDOW_ENDS, TOL)
        self.assertEquals(result.edges, ("short",))
        self.assertEquals(self.get(self.vtc, result.x, "dropped"), 1.0)

    def test_missing_template(self):
        with self.assertRaises(ModelError) as context:
            build_vtc(DiscrimParams())
        self.assertEquals(context.exception.m, "missing_template")


class StabilityTestCase(CardiacSetupMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.stab = build_stability(self.discrim)

    def run_duration(self, beats, end=None):
        state = initial_state(self.stab)
        x = self.stab.react(IDLE, state.x, DURATION_BEGINS, TOL).x
        mode = "Accumulate"
        for t in beats:
            result = self.stab.react(mode, self.at(self.stab, x, t=t), VEVENT, TOL)
            mode, x = result.mode, result.x
        end = end if end is not None else (beats[-1] if beats else 1.0)
        result = self.stab.react(mode, self.at(self.stab, x, t=end), DURATION_ENDS, TOL)
        self.assertEquals(result.mode, DONE)
        return self.get(self.stab, result.x, "sigma2")

    def test_constant_intervals(self):
        self.assertAlmostEqual(self.run_duration([0.4, 0.8, 1.2, 1.6, 2.0]), 0.0, places=12)

    def test_two_intervals(self):
        self.assertAlmostEqual(self.run_duration([0.3, 0.7]), 0.0025, places=12)

    def test_single_interval(self):
        self.assertEquals(self.run_duration([0.5]), 0.0)

    def test_no_beats(self):
        with self.assertLogs("cardiac.discriminators", "WARNING"):
            self.assertEquals(self.run_duration([]), NO_BEATS)

    def test_variance_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            intervals = rng.uniform(0.2, 1.5, size=int(rng.integers(1, 20)))
            sigma2 = population_variance(intervals.sum(), intervals @ intervals, intervals.size)
            self.assertAlmostEqual(sigma2, float(np.var(intervals)), delta=1e-9)

    def test_no_beats_error(self):
        with self.assertRaises(NumericalError):
            population_variance(0.0, 0.0, 0)

    def test_restart(self):
        self.run_duration([0.3, 0.7])
        state = initial_state(self.stab)
        x = self.at(self.stab, state.x, t=3.0, L1=1.0, L2=1.0, kappa=2.0)
        result = self.stab.react(DONE, x, DURATION_BEGINS, TOL)
        self.assertEquals(result.mode, "Accumulate")
        self.assertEquals(self.get(self.stab, result.x, "kappa"), 0.0)
        self.assertEquals(self.get(self.stab, result.x, "sigma2"), NO_BEATS)


class DurationTestCase(CardiacSetupMixin, SimpleTestCase):

    def test_lapse(self):
        duration = build_duration(self.discrim)
        state = initial_state(duration)
        x = self.at(duration, state.x, t=1.0)
        result = duration.react(IDLE, x, DURATION_BEGINS, TOL)
        self.assertEquals(result.mode, "Running")
        self.assertIsNone(duration.step("Running", self.at(duration, result.x, t=2.5), TOL))
        result = duration.step("Running", self.at(duration, result.x, t=3.0), TOL)
        self.assertEquals(result.mode, IDLE)
        self.assertEquals(result.emits, (DURATION_ENDS,))


class DetectionTreeTestCase(CardiacSetupMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.tree = build_detection_tree(self.tree_cfg, self.discrim)
        self.x = initial_state(self.tree).x

    def open(self):
        result = self.tree.react(IDLE, self.x, FAST, TOL)
        self.assertEquals(result.mode, EPISODE)
        self.assertEquals(result.emits, (DURATION_BEGINS,))
        return result.x

    def decide(self, mode, x, **values):
        return self.tree.react(mode, self.at(self.tree, x, **values), DURATION_ENDS, TOL)

    def test_never_fast(self):
        self.assertIsNone(self.tree.react(IDLE, self.x, SLOW, TOL))
        self.assertIsNone(self.tree.react(IDLE, self.x, DURATION_ENDS, TOL))

    def test_stable_uncorrelated(self):
        result = self.decide(EPISODE, self.open(), c=-10.0, s2=0.0)
        self.assertEquals(result.mode, VT_1)
        self.assertEquals(result.emits, (END,))

    def test_correlated(self):
        for s2 in (0.0, 0.01):
            self.assertEquals(self.decide(EPISODE, self.open(), c=-4.0, s2=s2).mode, SVT)

    def test_quiet(self):
        result = self.decide(EPISODE, self.open(), c=-10.0, s2=NO_BEATS)
        self.assertEquals(result.mode, IDLE)

    def redetect(self, fast, slow):
        x = self.decide(EPISODE, self.open(), c=-10.0, s2=0.01)
        self.assertEquals(x.mode, REDETECT)
        self.assertIsNone(self.tree.react(REDETECT, x.x, DURATION_ENDS, TOL))
        result = self.tree.react(REDETECT, x.x, VEVENT, TOL)
        self.assertEquals(result.mode, EPISODE2)
        self.assertEquals(result.emits, (DURATION_BEGINS,))
        x = result.x
        for event in [FAST] * fast + [SLOW] * slow:
            x = self.tree.react(EPISODE2, x, event, TOL).x
        self.assertEquals(self.get(self.tree, x, "n"), fast + slow)
        self.assertEquals(self.get(self.tree, x, "f"), fast)
        return x

    def test_second_duration_stable(self):
        self.assertEquals(self.decide(EPISODE2, self.redetect(5, 1), s2=0.0).mode, VT_2)

    def test_second_duration_faster(self):
        self.assertEquals(self.decide(EPISODE2, self.redetect(9, 1), s2=0.01).mode, VT_3)

    def test_second_duration_not_faster(self):
        self.assertEquals(self.decide(EPISODE2, self.redetect(2, 5), s2=0.01).mode, SVT)

    def test_second_duration_correlated(self):
        self.assertEquals(self.decide(EPISODE2, self.redetect(9, 0), c=0.0, s2=0.0).mode, SVT)

    def test_initial_ranges(self):
        tree = build_detection_tree(self.tree_cfg, self.discrim, horizon=20.0, initial={"c": (-10.0, 10.0)})
        lo, hi = tree.init[0][1].bounding_box()
        self.assertEquals((lo[tree.coord("c")], hi[tree.coord("c")]), (-10.0, 10.0))
        self.assertTrue(tree.has_edge("timeout_Idle"))


class TherapyPropertyTestCase(CardiacSetupMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.tree = build_detection_tree(self.tree_cfg, self.discrim)
        self.target, self.negation = encode_therapy_property(self.tree_cfg, self.tree)
        self.x = initial_state(self.tree).x

    def test_within_deadline(self):
        self.assertTrue(self.target.holds(VT_1, self.at(self.tree, self.x, e1=25.0)))
        self.assertFalse(self.negation.holds(VT_1, self.at(self.tree, self.x, e1=25.0)))

    def test_late(self):
        self.assertFalse(self.target.holds(VT_1, self.at(self.tree, self.x, e1=31.0)))
        self.assertTrue(self.negation.holds(VT_1, self.at(self.tree, self.x, e1=31.0)))

    def test_path_sum(self):
        x = self.at(self.tree, self.x, e1=20.0, e2=11.0)
        self.assertFalse(self.target.holds(VT_2, x))
        self.assertTrue(self.target.holds(VT_1, x))

    def test_svt(self):
        self.assertFalse(self.target.holds(SVT, self.x))
        self.assertTrue(self.negation.holds(SVT, self.x))

    def test_blocks(self):
        lo, hi = self.x.copy(), self.x.copy()
        lo[self.tree.coord("e1")], hi[self.tree.coord("e1")] = 29.0, 31.0
        block = new_block(VT_1, Polytope.from_box(lo, hi))
        self.assertTrue(self.target.matches(block))
        self.assertTrue(self.negation.matches(block))
        self.assertFalse(self.target.matches(new_block(EPISODE, Polytope.from_box(lo, hi))))

    def test_unresolved_clock(self):
        with self.assertRaises(ConfigError) as context:
            TherapyTarget(self.tree, DetectionTreeConfig(paths={"VT_1": ["tree.missing"]}))
        self.assertEquals(context.exception.m, "unresolved_clock")


class SourceTestCase(SimpleTestCase):

    def test_pacer(self):
        pacer = build_pacer(0.3, offset=0.05)
        execution = simulate(pacer, initial_state(pacer), 0.8, 0.01)
        times = [round(t, 6) for t, _ in execution.events(PACE)]
        self.assertEquals(times, [0.05, 0.35, 0.65])

    def test_beat_source(self):
        beats = build_beat_source((0.25, 0.3))
        execution = simulate(beats, initial_state(beats), 0.9, 0.01)
        self.assertEquals([round(t, 6) for t, _ in execution.events(VEVENT)], [0.25, 0.5, 0.75])

    def test_invalid_interval(self):
        with self.assertRaises(ModelError):
            build_beat_source((0.5, 0.2))

    def test_scenario_cells(self):
        params = HeartParams(N=4)
        self.assertEquals(Scenario(VT_SCENARIO).pacing(params), (15, 0.3))
        self.assertEquals(Scenario(NSR).pacing(params), (0, 0.8))
        self.assertEquals(Scenario(SVT_SCENARIO, cell=(0, 1), period=0.25).pacing(params), (1, 0.25))

    def test_unknown_scenario(self):
        with self.assertRaises(ModelError) as context:
            Scenario("AF")
        self.assertEquals(context.exception.m, "unknown_scenario")


class ReducedLoopTestCase(CardiacSetupMixin, SimpleTestCase):

    def test_decision(self):
        loop = reduced_loop(self.discrim, self.tree_cfg, interval=(0.25, 0.3))
        execution = run_scenario(loop)
        self.assertEquals(decision(loop, execution), SVT)
        self.assertTrue(loop.is_terminal(execution.final.mode))

    def test_slow_beats_never_open(self):
        loop = reduced_loop(self.discrim, self.tree_cfg, interval=(0.8, 1.0), horizon=5.0)
        execution = run_scenario(loop)
        self.assertEquals(decision(loop, execution), END)
        self.assertEquals(execution.events(DURATION_BEGINS), [])

    def test_initial_ranges(self):
        loop = reduced_loop(self.discrim, self.tree_cfg)
        lo, hi = loop.init[0][1].bounding_box()
        j = loop.index("tree", "c")
        self.assertEquals((lo[j], hi[j]), (-10.0, 10.0))

    def test_domain_holds_initial_set(self):
        loop = reduced_loop(self.discrim, self.tree_cfg, interval=(0.5, 0.6))
        domain = reduced_domain(loop, self.discrim, interval=(0.5, 0.6))
        for _, P in loop.init:
            self.assertTrue(domain.contains(P))

    def test_domain_holds_run(self):
        interval = (0.25, 0.3)
        loop = reduced_loop(self.discrim, self.tree_cfg, interval=interval)
        domain = reduced_domain(loop, self.discrim, interval)
        execution = run_scenario(loop)
        self.assertTrue(all(domain.contains_point(x, 1e-6) for _, _, x in execution.rows()))


class ClosedLoopTestCase(CardiacSetupMixin, SimpleTestCase):

    def run_loop(self, scenario):
        loop = closed_loop(self.heart_params, ElectrodeConfig(), self.sense_params, self.discrim.replace(template=None),
                           self.tree_cfg, scenario)
        return loop, run_scenario(loop)

    def test_sinus_rhythm(self):
        loop, execution = self.run_loop(NSR)
        self.assertEquals(decision(loop, execution), END)
        self.assertEquals(execution.events(FAST), [])
        self.assertGreaterEqual(len(execution.events(VEVENT)), 5)

    def test_event_separation(self):
        loop, execution = self.run_loop(VT_SCENARIO)
        times = [t for t, _ in execution.events(VEVENT)]
        self.assertTrue(all(b - a >= self.sense_params.MinTP + self.sense_params.BlankingPeriod - 1e-6
                            for a, b in zip(times, times[1:])))

    def test_ventricular_tachycardia(self):
        loop, execution = self.run_loop(VT_SCENARIO)
        mode = decision(loop, execution)
        self.assertIn(mode, VT_MODES)
        target = TherapyTarget(loop, self.tree_cfg)
        jump = [j for j in execution.jumps if j.post.mode[loop.names.index("tree")] == mode][0]
        self.assertTrue(target.holds(jump.post.mode, jump.post.x))

    def test_supraventricular_tachycardia(self):
        loop, execution = self.run_loop(SVT_SCENARIO)
        self.assertEquals(decision(loop, execution), SVT)

    def test_ends_by_horizon(self):
        loop, execution = self.run_loop(NSR)
        self.assertLessEqual(execution.end_time, self.heart_params.D + 1e-6)
        self.assertTrue(loop.is_terminal(execution.final.mode))

    def test_samples_must_fit(self):
        with self.assertRaises(ModelError):
            closed_loop(self.heart_params, ElectrodeConfig(), self.sense_params, self.discrim.replace(T_s=0.02))


class FullGridLoopTestCase(SimpleTestCase):
    """The 8 x 8 grid with default parameters, one run per scenario."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.heart_params, cls.tree_cfg = HeartParams(N=8), DetectionTreeConfig()
        cls.discrim = acquire_template(cls.heart_params, ElectrodeConfig(), SenseParams(), DiscrimParams())
        cls.runs = {}
        for scenario in (NSR, SVT_SCENARIO, VT_SCENARIO):
            loop = closed_loop(cls.heart_params, ElectrodeConfig(), SenseParams(), cls.discrim, cls.tree_cfg,
                               scenario)
            start = time.perf_counter()
            execution = run_scenario(loop)
            cls.runs[scenario] = (loop, execution, time.perf_counter() - start)

    def test_template_has_a_complex(self):
        self.assertGreater(float(np.var(self.discrim.template)), 0.0)

    def test_sinus_rhythm(self):
        loop, execution, _ = self.runs[NSR]
        self.assertEquals(decision(loop, execution), END)
        self.assertEquals(execution.events(FAST), [])

    def test_one_event_per_sinus_beat(self):
        loop, execution, _ = self.runs[NSR]
        times = np.array([t for t, _ in execution.events(VEVENT)])
        np.testing.assert_allclose(np.diff(times), 0.8, atol=0.02)

    def test_supraventricular_tachycardia(self):
        loop, execution, _ = self.runs[SVT_SCENARIO]
        self.assertEquals(decision(loop, execution), SVT)
        self.assertEquals(execution.final.x[loop.coord("vtc.dropped")], 0.0)

    def test_ventricular_tachycardia(self):
        loop, execution, _ = self.runs[VT_SCENARIO]
        mode = decision(loop, execution)
        self.assertIn(mode, VT_MODES)
        target = TherapyTarget(loop, self.tree_cfg)
        jump = [j for j in execution.jumps if j.post.mode[loop.names.index("tree")] == mode][0]
        self.assertTrue(target.holds(jump.post.mode, jump.post.x))
        self.assertLessEqual(jump.time, 30.0)

    def test_runs_in_time(self):
        for scenario, (_, _, seconds) in self.runs.items():
            self.assertLess(seconds, 30.0, scenario)


class ScenarioFileTestCase(SimpleTestCase):

    def test_overrides(self):
        setup = build_scenario({"scenario": "VT", "N": 3, "params": {"discriminators": {"DL": 2}}})
        self.assertEquals(setup.heart.N, 3)
        self.assertEquals(setup.discriminators.DL, 2.0)
        self.assertEquals(setup.scenario.pacing(setup.heart), (8, 0.3))
        self.assertEquals(setup.run_duration, 30.0)

    def test_pacing(self):
        setup = build_scenario({"scenario": "SVT", "pacing": {"cell": [0, 1], "period": 0.25}, "duration": 4})
        self.assertEquals(setup.scenario.pacing(setup.heart), (1, 0.25))
        self.assertEquals(setup.run_duration, 4.0)

    def test_unknown_scenario(self):
        with self.assertRaises(ModelError) as context:
            build_scenario({"scenario": "AF"})
        self.assertIn("scenario", context.exception.d)

    def test_invalid_params(self):
        with self.assertRaises(ModelError) as context:
            build_scenario({"scenario": "NSR", "params": {"sense": {"MinTP": 0.5}}})
        self.assertIn("params", context.exception.d)

    def test_unknown_param(self):
        with self.assertRaises(ModelError) as context:
            build_scenario({"scenario": "NSR", "params": {"heart": {"bogus": 1}}})
        self.assertIn("params", context.exception.d)

    def test_cell_outside_grid(self):
        with self.assertRaises(ModelError) as context:
            build_scenario({"scenario": "VT", "N": 2, "pacing": {"cell": [3, 3]}})
        self.assertIn("pacing", context.exception.d)

    def test_document_kind(self):
        self.assertTrue(is_scenario_document({"scenario": "VT"}))
        self.assertFalse(is_scenario_document({"modes": ["m"], "dim": 1}))


class CertificateTemplateTestCase(CardiacSetupMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.rng = np.random.default_rng(7)

    def test_sense_passes(self):
        report = sense_certificate(self.sense_params).check(samples=200, rng=self.rng)
        self.assertTrue(report.passed, report.to_text())
        self.assertGreater(report.results["separability"].samples, 0)

    def test_sense_needs_event_stamp(self):
        template = sense_certificate(self.sense_params)
        phi = template.certificate.phi.copy()
        phi[COORDS.index("t_p")] = 0.0
        template.certificate = dataclasses.replace(template.certificate, phi=phi)
        report = template.check(samples=200, rng=self.rng)
        self.assertFalse(report.results["reset_monotonic"].passed)
        self.assertIsNotNone(report.results["reset_monotonic"].witness)

    def test_tcfi_passes(self):
        template = tcfi_certificate(self.discrim, self.sense_params.refractory)
        report = template.check(samples=200, rng=self.rng)
        self.assertTrue(report.passed, report.to_text())
        self.assertGreater(report.results["reset_monotonic"].samples, 0)

    def test_tcfi_beats_are_listening(self):
        template = tcfi_certificate(self.discrim, self.sense_params.refractory)
        result = check_reset_monotonic(template.automaton, template.certificate, samples=50, rng=self.rng,
                                       domain=template.domain)
        self.assertTrue(result.passed)
        self.assertEquals(result.samples, 0)

    def test_duration_passes(self):
        template = duration_certificate(self.discrim)
        report = template.check(samples=100, rng=self.rng)
        self.assertTrue(report.passed, report.to_text())
        self.assertGreater(transition_bound(template.certificate), 0)

    def test_vtc_passes(self):
        template = vtc_certificate(self.discrim)
        report = template.check(samples=200, rng=self.rng)
        self.assertTrue(report.passed, report.to_text())
        self.assertGreater(report.results["separability"].samples, 0)
        self.assertGreater(report.results["reset_monotonic"].samples, 0)

    def test_vtc_needs_refill_clock(self):
        template = vtc_certificate(self.discrim)
        phi = template.certificate.phi.copy()
        phi[template.automaton.coord("w")] = 0.0
        template.certificate = dataclasses.replace(template.certificate, phi=phi)
        report = template.check(samples=200, rng=self.rng)
        self.assertFalse(report.results["reset_monotonic"].passed)

    def test_vtc_separation_follows_sampling_gap(self):
        wide = vtc_certificate(self.discrim, min_interval=self.discrim.T_s)
        narrow = vtc_certificate(self.discrim)
        self.assertAlmostEqual(wide.certificate.d_min, 2.0 * narrow.certificate.d_min)

    def test_stability_passes(self):
        template = stability_certificate(self.discrim, self.sense_params.refractory)
        report = template.check(samples=200, rng=self.rng)
        self.assertTrue(report.passed, report.to_text())
        self.assertGreater(report.results["reset_monotonic"].samples, 0)
        self.assertGreater(transition_bound(template.certificate), 0)

    def test_stability_beat_advances_by_zeta(self):
        template = stability_certificate(self.discrim, self.sense_params.refractory)
        aut, cert = template.automaton, template.certificate
        beat = aut.edge("beat")
        x = self.at(aut, np.zeros(aut.dim), t=2.0, t_p=2.0 - self.sense_params.refractory, sigma2=NO_BEATS)
        self.assertGreaterEqual(cert.phi @ (beat.reset.apply(x) - x), cert.zeta)

    def test_band_covers_domain(self):
        template = sense_certificate(self.sense_params, horizon=2.0)
        cert = template.certificate
        for x in template.domain.sample(self.rng, 20):
            self.assertLess(cert.b_minus, cert.phi @ x)
            self.assertLess(cert.phi @ x, cert.b_plus)

    def test_heart_passes(self):
        template = heart_certificate(HeartParams(N=2, D=0.5))
        self.assertTrue(template.executions[0].jumps)
        report = template.check(samples=100, rng=self.rng)
        self.assertTrue(report.passed, report.to_text())
        self.assertGreater(report.results["separability"].samples, 0)
        self.assertGreater(report.results["reset_monotonic"].samples, 0)

    def test_heart_needs_phase_stamps(self):
        template = heart_certificate(HeartParams(N=2, D=0.5))
        phi = np.zeros_like(template.certificate.phi)
        phi[template.automaton.T] = 1.0
        template.certificate = dataclasses.replace(template.certificate, phi=phi)
        report = template.check(samples=100, rng=self.rng)
        self.assertFalse(report.results["reset_monotonic"].passed)
        self.assertTrue(report.results["flow_monotonic"].passed)


def peak_source(count, gap=0.4, rise=5.0, fall=50.0):
    """``count`` triangular peaks of height 1 on v, each ``gap`` after the last one ended."""
    lay = Layout(("c", "v", "k"))
    edges = [
        Edge("rest", "rise", lay.region(lay.ge(gap, c=1.0), lay.le(count - 0.5, k=1.0)), name="rise"),
        Edge("rise", "fall", lay.ge(1.0, v=1.0), name="top"),
        Edge("fall", "rest", lay.le(0.0, v=1.0), lay.reset(values={"c": 0.0, "v": 0.0}, shifts={"k": 1.0}),
             name="bottom"),
    ]
    flows = {"rest": lay.clock(c=1.0), "rise": lay.clock(c=1.0, v=rise), "fall": lay.clock(c=1.0, v=-fall)}
    return HybridAutomaton(lay.dim, ["rest", "rise", "fall"], flows, edges,
                           init=[("rest", Polytope.point(lay.point()))], name="egm", coords=lay.coords)


class SensingChainTestCase(CardiacSetupMixin, SimpleTestCase):
    """Sense || TCFI driven by synthetic peaks bound to y."""

    def run_peaks(self, count, duration):
        product = compose([peak_source(count), build_sense(self.sense_params), build_tcfi(self.discrim)],
                          bindings=[Binding(("sense", "y"), weights={("egm", "v"): 1.0})])
        return product, simulate(product, initial_state(product), duration, 0.01)

    def test_intervals_follow_sensed_events(self):
        product, execution = self.run_peaks(3, 2.0)
        events = [t for t, _ in execution.events(VEVENT)]
        self.assertEquals(len(events), 3)
        shifts = [jump for jump in execution.jumps if any(name.startswith("tcfi.") for name in jump.edges)]
        self.assertEquals([jump.time for jump in shifts], events)
        t, t_p = product.coord("tcfi.t"), product.coord("tcfi.t_p")
        for jump in shifts:
            self.assertEquals(jump.post.x[t_p], jump.pre.x[t])
            self.assertAlmostEqual(jump.post.x[t_p], jump.time, places=9)
        np.testing.assert_allclose(np.diff(events), 0.62, atol=1e-3)
        self.assertAlmostEqual(execution.final.x[product.coord("tcfi.z3")], 0.62, places=3)
        self.assertEquals(execution.final.mode[product.names.index("tcfi")], SLOW_MODE)

    def test_single_peak_is_one_cycle(self):
        product, execution = self.run_peaks(1, 1.5)
        k = product.names.index("sense")
        changes = [jump.post.mode[k] for jump in execution.jumps if jump.pre.mode[k] != jump.post.mode[k]]
        self.assertEquals(changes, [PEAK, BLANK, DECAY])
        self.assertEquals(len(execution.events(VEVENT)), 1)
        self.assertEquals(len(execution.events(WINDOW_ENDS)), 1)
        self.assertTrue(any("sense.track" in jump.edges for jump in execution.jumps))


class ComposedCertificateTestCase(CardiacSetupMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.rng = np.random.default_rng(11)
        self.sense = sense_certificate(self.sense_params)
        self.tcfi = tcfi_certificate(self.discrim, self.sense_params.refractory)
        self.product = compose([build_sense(self.sense_params, horizon=20.0), build_tcfi(self.discrim, horizon=20.0)])
        self.cross = {(0, 1): 0.01}

    def held_input_run(self, y=1.0):
        state = initial_state(self.product)
        x = state.x.copy()
        x[self.product.coord("sense.y")] = y
        return simulate(self.product, HybridState(state.mode, x), 2.0, 0.01)

    def test_components_keep_apart(self):
        execution = self.held_input_run()
        self.assertGreaterEqual(len(execution.events(VEVENT)), 8)
        result = check_collection_separability(self.product, self.cross, executions=[execution])
        self.assertTrue(result.passed)
        self.assertGreater(result.samples, 0)
        self.assertGreater(result.margin, 0.0)

    def test_composed_certificate_passes_on_product(self):
        sense_dim = self.sense.automaton.dim
        domain = self.sense.domain.lift(0, self.product.dim).intersect(
            self.tcfi.domain.lift(sense_dim, self.product.dim))
        diameters = []
        for template in (self.sense, self.tcfi):
            lo, hi = template.domain.bounding_box()
            diameters.append(float(np.linalg.norm(hi - lo)))
        cert = compose_certificate([self.sense.certificate, self.tcfi.certificate], cross_dmin=self.cross,
                                   diameters=diameters, state_box=domain)
        self.assertEquals(cert.d_min, min(self.sense.certificate.d_min, self.tcfi.certificate.d_min, 0.01))
        report = check_all(self.product, cert, samples=200, rng=self.rng, domain=domain)
        self.assertTrue(report.passed, report.to_text())
        self.assertGreater(report.results["separability"].samples, 0)
        self.assertGreater(report.results["reset_monotonic"].samples, 0)


class TransitionBoundCensusTestCase(CardiacSetupMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.rng = np.random.default_rng(13)
        refractory = self.sense_params.refractory
        self.templates = {
            "sense": sense_certificate(self.sense_params),
            "tcfi": tcfi_certificate(self.discrim, refractory),
            "duration": duration_certificate(self.discrim),
            "vtc": vtc_certificate(self.discrim),
            "stab": stability_certificate(self.discrim, refractory),
        }

    def test_standalone_runs(self):
        for name, template in self.templates.items():
            result = check_transition_bound(template.automaton, template.certificate, runs=5, duration=10.0,
                                            dt=0.05, rng=self.rng)
            self.assertTrue(result.passed, name)
            self.assertGreaterEqual(result.margin, 0.0, name)

    def test_closed_loop_components(self):
        loop = closed_loop(self.heart_params, ElectrodeConfig(), self.sense_params,
                           self.discrim.replace(template=None), self.tree_cfg, VT_SCENARIO)
        execution = run_scenario(loop)
        for name, template in self.templates.items():
            jumps = [jump for jump in execution.jumps
                     if jump.time <= 10.0 and any(edge.partition(".")[0] == name for edge in jump.edges)]
            self.assertLessEqual(len(jumps), transition_bound(template.certificate), name)
            if name in ("sense", "tcfi"):
                self.assertTrue(jumps, name)
