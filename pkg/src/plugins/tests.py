import numpy as np
from django.test import SimpleTestCase

from backend.exceptions import ConfigError, ModelError
from config import config
from plugins import plugins, providers
from plugins.flow.clock import Clock
from plugins.flow.constant import Constant
from plugins.flow.linear import LinearODE
from plugins.flow.threshold_decay import ThresholdDecay
from plugins.template.box import BoxTemplatePlugin
from plugins.template.octagonal import OctagonalTemplatePlugin
from setgeom.operators import mat_exp


def decay_flow():
    # state (t, t_p, Th, Th0, eF)
    return ThresholdDecay([1.0, 0.0, 0.0, 0.0, 0.0], th=2, th0=3, ef=4, t=0, tp=1, min_th=0.1, tc=1.0)


class FlowSetupMixin:

    def setUp(self):
        self.rng = np.random.default_rng(7)
        self.flows = [
            Clock([1.0, 0.5, 0.0]),
            Constant(3),
            LinearODE([[-1.0, 2.0, 0.0], [0.0, -0.5, 1.0], [0.3, 0.0, -2.0]], [1.0, 0.0, -1.0]),
            LinearODE([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
        ]


class SemigroupTestCase(FlowSetupMixin, SimpleTestCase):

    def test_semigroup(self):
        for flow in self.flows:
            for _ in range(50):
                x = self.rng.normal(size=3) * 3
                t, s = self.rng.uniform(0, 2, size=2)
                joint = flow.evaluate(x, t + s)
                stepped = flow.evaluate(flow.evaluate(x, t), s)
                self.assertLessEqual(np.linalg.norm(joint - stepped), 1e-9 * (1 + np.linalg.norm(x)))

    def test_zero_time_exact(self):
        for flow in self.flows:
            x = self.rng.normal(size=3)
            np.testing.assert_array_equal(flow.evaluate(x, 0), x)

    def test_threshold_decay_semigroup(self):
        flow = decay_flow()
        x = np.array([0.0, 0.0, 1.0, 1.0, 1.0])
        np.testing.assert_allclose(flow.evaluate(flow.evaluate(x, 0.3), 0.4), flow.evaluate(x, 0.7), atol=1e-12)


class LinearODETestCase(SimpleTestCase):

    def test_taylor_matches_expm(self):
        A = np.array([[-0.2, 0.1], [0.05, -0.3]])
        flow = LinearODE(A, [0.4, -0.1])
        x = np.array([1.0, 2.0])
        expected = (mat_exp(flow.augmented(), 0.5) @ np.append(x, 1.0))[:2]
        np.testing.assert_allclose(flow.evaluate(x, 0.5), expected, rtol=1e-12, atol=1e-12)

    def test_long_step_uses_cache(self):
        flow = LinearODE([[-3.0]])
        np.testing.assert_allclose(flow.evaluate([1.0], 2.0), [np.exp(-6.0)], rtol=1e-12)
        self.assertIn(2.0, flow._propagators)

    def test_propagator(self):
        flow = LinearODE([[0.0, 1.0], [0.0, 0.0]])
        np.testing.assert_allclose(flow.propagator(1.0), [[1.0, 1.0], [0.0, 1.0]], atol=1e-12)

    def test_not_square(self):
        with self.assertRaises(ModelError):
            LinearODE([[1.0, 2.0]])

    def test_bad_offset(self):
        with self.assertRaises(ModelError):
            LinearODE([[1.0]], [1.0, 2.0])

    def test_affine_parts(self):
        A, b = LinearODE([[1.0]], [2.0]).affine_parts()
        np.testing.assert_array_equal(A, [[1.0]])
        np.testing.assert_array_equal(b, [2.0])


class ThresholdDecayTestCase(SimpleTestCase):

    def test_half_life(self):
        x = np.array([0.0, 0.0, 1.0, 1.0, 1.0])
        y = decay_flow().evaluate(x, np.log(2.0))
        self.assertAlmostEqual(y[2], 0.5)
        self.assertAlmostEqual(y[0], np.log(2.0))

    def test_floor(self):
        y = decay_flow().evaluate(np.array([0.0, 0.0, 1.0, 1.0, 1.0]), 10.0)
        self.assertEquals(y[2], 0.1)

    def test_velocity_on_floor(self):
        self.assertEquals(decay_flow().velocity(np.array([10.0, 0.0, 0.1, 1.0, 1.0]))[2], 0.0)

    def test_invalid_parameters(self):
        with self.assertRaises(ModelError):
            ThresholdDecay([1.0, 0.0, 0.0, 0.0, 0.0], 2, 3, 4, 0, 1, min_th=0.0, tc=1.0)


class FlowRegistryTestCase(SimpleTestCase):

    def test_kinds_loaded(self):
        self.assertEquals(set(plugins.plugins['flow']), {'linear', 'clock', 'constant', 'threshold_decay'})

    def test_round_trip(self):
        for flow in [Clock([1.0, 2.0]), Constant(2), LinearODE([[0.0, 1.0], [-1.0, 0.0]], [0.0, 1.0])]:
            data = flow.to_dict()
            again = plugins.get_plugin('flow', data['kind']).from_dict(data, 2)
            np.testing.assert_allclose(again.evaluate([1.0, 1.0], 0.3), flow.evaluate([1.0, 1.0], 0.3))

    def test_clock_on_coords(self):
        flow = Clock.from_dict({"kind": "clock", "coords": [1]}, 3)
        np.testing.assert_array_equal(flow.rates, [0.0, 1.0, 0.0])

    def test_clock_dimension(self):
        with self.assertRaises(ModelError):
            Clock.from_dict({"kind": "clock", "rates": [1.0]}, 2)

    def test_unknown_kind(self):
        with self.assertRaises(ModelError):
            plugins.get_plugin('flow', 'spline')

    def test_missing_module(self):
        with self.assertRaises(ConfigError) as context:
            plugins.load_plugins(["plugins.flow.spline"])
        self.assertEquals(context.exception.m, "invalid_plugin")

    def test_state_dimension(self):
        with self.assertRaises(ModelError):
            Clock([1.0]).evaluate([1.0, 2.0], 1.0)


class TemplatePluginTestCase(SimpleTestCase):

    def test_box(self):
        self.assertEquals(len(BoxTemplatePlugin().directions(3)), 6)

    def test_octagonal(self):
        self.assertEquals(len(OctagonalTemplatePlugin().directions(3)), 6 + 12)

    def test_registered(self):
        self.assertIs(plugins.get_plugin('template', 'oct'), OctagonalTemplatePlugin)


class ProviderTestCase(SimpleTestCase):

    def test_flowpipe_post_registered(self):
        self.assertEquals(providers.get_provider('post').name, config.get('post_provider'))

    def test_unknown_provider(self):
        with self.assertRaises(ConfigError):
            providers.get_provider('post', 'telepathy')
