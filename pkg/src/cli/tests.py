import csv
import os
import tempfile
from io import StringIO
from unittest import mock

import yaml
from django.core.management import call_command
from django.test import SimpleTestCase

from backend.exceptions import EXIT_INPUT
from cardiac.params import VT_MODES
from cli.manifest import MANIFEST_NAME, RunManifest, read_manifest
from cli.receivers import EventCounter
from hybrid_core.io import build_model
from hybrid_core.simulate import initial_state, simulate


def box(lo, hi):
    """{A, b} rows of the interval [lo, hi]."""
    return {"A": [[1.0], [-1.0]], "b": [hi, -lo]}


class CommandSetupMixin:

    def setUp(self):
        self._directory = tempfile.TemporaryDirectory()
        self.directory = self._directory.name
        self.out = os.path.join(self.directory, "out")

    def tearDown(self):
        self._directory.cleanup()

    def write(self, name, document):
        path = os.path.join(self.directory, name)
        with open(path, "w") as f:
            yaml.safe_dump(document, f)
        return path

    def clock_model(self):
        return {
            "dim": 1,
            "modes": ["Run", "End"],
            "flows": {"Run": {"kind": "clock", "rates": [1.0]}, "End": {"kind": "constant"}},
            "edges": [{"src": "Run", "dst": "End", "name": "finish", "guard": {"A": [[-1.0]], "b": [-1.0]}}],
            "init": [{"mode": "Run", "set": box(0.0, 0.0)}],
            "terminal": ["End"],
        }

    def discrete_toy(self):
        return {
            "dim": 1,
            "modes": ["p", "q"],
            "flows": {"p": {"kind": "constant"}, "q": {"kind": "constant"}},
            "edges": [{"src": "p", "dst": "q", "name": "go", "guard": {"A": [[-1.0]], "b": [-2.0]}}],
            "invariants": {"p": box(0.0, 3.0), "q": box(0.0, 3.0)},
            "init": [{"mode": "p", "set": box(0.0, 3.0)}],
            "name": "toy",
        }

    def call(self, name, **options):
        stdout, stderr = StringIO(), StringIO()
        options.setdefault("out", self.out)
        call_command(name, stdout=stdout, stderr=stderr, **options)
        return yaml.safe_load(stdout.getvalue())

    def fail(self, name, **options):
        stderr = StringIO()
        options.setdefault("out", self.out)
        with self.assertRaises(SystemExit) as context:
            call_command(name, stdout=StringIO(), stderr=stderr, **options)
        return context.exception.code, stderr.getvalue()

    def manifest(self):
        return read_manifest(os.path.join(self.out, MANIFEST_NAME))


class SimulateCommandTestCase(CommandSetupMixin, SimpleTestCase):

    def test_trace(self):
        model = self.write("clock.yaml", self.clock_model())
        response = self.call("simulate", model=model, duration=2.0, dt=1.0)
        self.assertEquals(response["m"], "simulate_ok")
        self.assertEquals(response["d"]["final_mode"], "End")
        self.assertEquals(response["d"]["jumps"], 1)
        with open(os.path.join(self.out, "trace.csv")) as f:
            rows = list(csv.reader(f))
        self.assertEquals(rows[0], ["time", "mode", "x_0", "event"])
        self.assertEquals(len(rows), 4)

    def test_scenario(self):
        scenario = self.write("vt.yaml", {"scenario": "VT", "N": 3,
                                          "params": {"heart": {"D": 5.0}, "discriminators": {"DL": 2.0}}})
        response = self.call("simulate", scenario=scenario)
        self.assertIn(response["d"]["decision"], VT_MODES)
        with open(os.path.join(self.out, "egm.csv")) as f:
            self.assertEquals(next(csv.reader(f)), ["time", "egm"])
        with open(os.path.join(self.out, "trace.csv")) as f:
            header = next(csv.reader(f))
        self.assertEquals(header[-3:], ["egm", "Th", "event"])
        self.assertGreater(self.manifest().events["jump_taken"], 0)

    def test_manifest(self):
        model = self.write("clock.yaml", self.clock_model())
        self.call("simulate", model=model, duration=2.0, dt=1.0, seed=3)
        manifest = self.manifest()
        self.assertEquals(manifest.command, "simulate")
        self.assertEquals(manifest.seed, 3)
        self.assertEquals(manifest.inputs, {"model": model})
        self.assertEquals(manifest.outputs, ["trace.csv"])
        self.assertEquals(manifest.overrides, {"duration": 2.0, "dt": 1.0})
        self.assertEquals(manifest.events.get("jump_taken"), 1)

    def test_manifest_is_deterministic(self):
        model = self.write("clock.yaml", self.clock_model())
        contents = []
        for run in ("a", "b"):
            out = os.path.join(self.directory, run)
            self.call("simulate", model=model, duration=2.0, dt=1.0, out=out)
            with open(os.path.join(out, MANIFEST_NAME)) as f:
                contents.append(f.read())
        self.assertEquals(contents[0], contents[1])

    def test_malformed_model(self):
        document = self.clock_model()
        del document["flows"]["End"]
        code, stderr = self.fail("simulate", model=self.write("bad.yaml", document))
        self.assertEquals(code, EXIT_INPUT)
        self.assertIn("flows", stderr)
        self.assertIn("invalid_model", stderr)

    def test_needs_one_input(self):
        model = self.write("clock.yaml", self.clock_model())
        code, stderr = self.fail("simulate")
        self.assertEquals(code, EXIT_INPUT)
        self.assertIn("missing_input", stderr)
        code, _ = self.fail("simulate", model=model, scenario=model)
        self.assertEquals(code, EXIT_INPUT)

    def test_missing_file(self):
        code, stderr = self.fail("simulate", model=os.path.join(self.directory, "absent.yaml"))
        self.assertEquals(code, EXIT_INPUT)

    def test_failed_run_still_writes_manifest(self):
        self.fail("simulate")
        self.assertEquals(self.manifest().outputs, [])


class CertCommandTestCase(CommandSetupMixin, SimpleTestCase):

    def stairs(self):
        """a -> b at x = 1, b -> c at x = 2."""
        return {
            "dim": 1,
            "modes": ["a", "b", "c"],
            "flows": {"a": {"kind": "clock", "rates": [1.0]}, "b": {"kind": "clock", "rates": [1.0]},
                      "c": {"kind": "constant"}},
            "edges": [{"src": "a", "dst": "b", "name": "up", "guard": {"A": [[-1.0]], "b": [-1.0]}},
                      {"src": "b", "dst": "c", "name": "stop", "guard": {"A": [[-1.0]], "b": [-2.0]}}],
            "invariants": {"a": {"A": [[1.0]], "b": [1.0]}, "b": {"A": [[1.0]], "b": [2.0]}},
            "init": [{"mode": "a", "set": box(0.0, 0.5)}],
            "terminal": ["c"],
            "name": "stairs",
        }

    def test_synthesize(self):
        model = self.write("stairs.yaml", self.stairs())
        domain = self.write("domain.yaml", box(0.0, 3.0))
        response = self.call("cert", model=model, synthesize=True, domain=domain, samples=200)
        self.assertTrue(response["d"]["passed"])
        self.assertGreaterEqual(response["d"]["transition_bound"], 1)
        for name in ("certificate.yaml", "certificate.txt", MANIFEST_NAME):
            self.assertTrue(os.path.exists(os.path.join(self.out, name)))
        self.assertIn("certificate.yaml", self.manifest().outputs)

    def test_rejected_certificate(self):
        model = self.write("stairs.yaml", self.stairs())
        domain = self.write("domain.yaml", box(0.0, 3.0))
        cert = self.write("cert.yaml", {"phi": [-1.0], "eps": 0.5, "zeta": 1.0, "d_min": 0.5,
                                        "b_minus": -10.0, "b_plus": 10.0})
        code, stderr = self.fail("cert", model=model, cert=cert, domain=domain, samples=50)
        self.assertEquals(code, 3)
        self.assertIn("flow_monotonic", stderr)

    def test_template(self):
        response = self.call("cert", template="sense", samples=100)
        self.assertTrue(response["d"]["passed"])

    def test_heart_template(self):
        scenario = self.write("small.yaml", {"scenario": "NSR", "N": 2, "params": {"heart": {"D": 0.5}}})
        response = self.call("cert", template="heart", scenario=scenario)
        self.assertTrue(response["d"]["passed"])
        self.assertEquals(self.manifest().inputs, {"scenario": scenario})

    def test_stability_template(self):
        response = self.call("cert", template="stab", samples=100)
        self.assertTrue(response["d"]["passed"])

    def test_vtc_template_acquires_its_template(self):
        scenario = self.write("small.yaml", {"scenario": "NSR", "N": 3, "params": {"heart": {"D": 2.0}}})
        response = self.call("cert", template="vtc", scenario=scenario, samples=100)
        self.assertTrue(response["d"]["passed"])
        self.assertGreater(response["d"]["transition_bound"], 0)

    def test_one_certificate_source(self):
        code, stderr = self.fail("cert", template="sense", synthesize=True)
        self.assertEquals(code, EXIT_INPUT)
        self.assertIn("missing_input", stderr)


class VerifyCommandTestCase(CommandSetupMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.model = self.write("toy.yaml", self.discrete_toy())
        self.partition = self.write("partition.yaml", {
            "cuts": [{"name": "split", "region": {"A": [[1.0]], "b": [2.0]}}],
        })
        self.options = {"delta": 0.5, "lambda_grid": [0.0, 0.5, 1.0], "templates": "box"}

    def test_unreachable(self):
        target = self.write("target.yaml", {"region": {"A": [[1.0]], "b": [-0.5]}, "name": "negative"})
        response = self.call("verify", model=self.model, partition=self.partition, target=target, **self.options)
        self.assertEquals(response["d"]["answer"], "unreachable")
        self.assertEquals(response["d"]["blocks"], 4)
        self.assertTrue(response["d"]["converged"])
        with open(os.path.join(self.out, "answer.yaml")) as f:
            self.assertEquals(yaml.safe_load(f)["answer"], "unreachable")
        self.assertEquals(self.manifest().outputs, ["answer.yaml", "quotient.dot", "quotient_edges.csv",
                                                    "quotient_nodes.csv"])

    def test_reachable_with_witness(self):
        target = self.write("target.yaml", {"modes": ["q"], "name": "q"})
        code, _ = self.fail("verify", model=self.model, partition=self.partition, target=target, **self.options)
        self.assertEquals(code, 3)
        with open(os.path.join(self.out, "answer.yaml")) as f:
            answer = yaml.safe_load(f)
        self.assertEquals(answer["answer"], "reachable")
        self.assertEquals(answer["witness"]["mode"], "q")
        self.assertEquals([label for _, _, label in answer["path"]], ["go"])

    def test_config_override(self):
        target = self.write("target.yaml", {"region": {"A": [[1.0]], "b": [-0.5]}})
        self.call("verify", model=self.model, partition=self.partition, target=target, set=["max_iters=2"],
                  **self.options)
        self.assertEquals(self.manifest().overrides["max_iters"], 2)

    def test_unknown_config_key(self):
        target = self.write("target.yaml", {"modes": ["q"]})
        code, stderr = self.fail("verify", model=self.model, target=target, set=["max_depth=2"], **self.options)
        self.assertEquals(code, EXIT_INPUT)
        self.assertIn("unknown_config_key", stderr)

    def test_auto_needs_certificate(self):
        target = self.write("target.yaml", {"modes": ["q"]})
        code, stderr = self.fail("verify", model=self.model, target=target, auto=True, **self.options)
        self.assertEquals(code, EXIT_INPUT)
        self.assertIn("missing_certificate", stderr)

    def test_model_needs_target(self):
        code, stderr = self.fail("verify", model=self.model, **self.options)
        self.assertEquals(code, EXIT_INPUT)
        self.assertIn("target", stderr)

    def scenario(self, name):
        return self.write(f"{name}.yaml", {"scenario": name, "N": 4, "params": {"discriminators": {"DL": 2}}})

    def test_sinus_rhythm_never_decides_vt(self):
        response = self.call("verify", scenario=self.scenario("NSR"), vt_decision=True)
        self.assertEquals(response["d"]["answer"], "unreachable")
        self.assertEquals(response["d"]["target"], "therapy within 30 s")
        overrides = self.manifest().overrides
        self.assertEquals(overrides["templates"], "reduced")
        self.assertEquals(overrides["max_iters"], 1)
        self.assertAlmostEqual(overrides["delta"], 0.4)

    @mock.patch("cli.management.commands.verify.find_witness", return_value=None)
    def test_tachycardia_may_decide_vt(self, mock_obj):
        response = self.call("verify", scenario=self.scenario("VT"), vt_decision=True)
        self.assertEquals(response["d"]["answer"], "possibly reachable")
        self.assertEquals(response["d"]["target"], "therapy within 30 s")
        self.assertTrue(response["d"]["path"])
        mock_obj.assert_called_once()

    def test_vt_decision_needs_scenario(self):
        code, stderr = self.fail("verify", model=self.model, vt_decision=True, **self.options)
        self.assertEquals(code, EXIT_INPUT)
        self.assertIn("vt_decision", stderr)


class ExportCommandTestCase(CommandSetupMixin, SimpleTestCase):

    def test_flowpipe(self):
        model = self.write("plane.yaml", {
            "dim": 2,
            "modes": ["m"],
            "flows": {"m": {"kind": "clock", "rates": [1.0, 0.5]}},
            "init": [{"mode": "m", "set": {"A": [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
                                           "b": [1.0, 0.0, 1.0, 0.0]}}],
        })
        response = self.call("export", model=model, delta=0.5, horizon=2.0, templates="box")
        self.assertEquals(response["d"]["flowpipes"], 1)
        self.assertGreater(response["d"]["sections"], 0)
        with open(os.path.join(self.out, "flowpipe_vertices.csv")) as f:
            self.assertEquals(next(csv.reader(f)), ["mode", "k", "vertex", "x_0", "x_1"])

    def test_bad_projection(self):
        model = self.write("clock.yaml", self.clock_model())
        code, stderr = self.fail("export", model=model, project="0,0")
        self.assertEquals(code, EXIT_INPUT)
        self.assertIn("invalid_projection", stderr)


class EventCounterTestCase(CommandSetupMixin, SimpleTestCase):

    def test_counts_jumps(self):
        aut = build_model(self.clock_model())
        with EventCounter() as counter:
            simulate(aut, initial_state(aut), 2.0, 1.0)
        self.assertEquals(counter.as_dict(), {"jump_taken": 1})

    def test_disconnects(self):
        aut = build_model(self.clock_model())
        counter = EventCounter()
        with counter:
            pass
        simulate(aut, initial_state(aut), 2.0, 1.0)
        self.assertEquals(counter.as_dict(), {})


class ManifestTestCase(CommandSetupMixin, SimpleTestCase):

    def test_round_trip(self):
        manifest = RunManifest("verify", inputs={"model": "toy.yaml"}, seed=4)
        manifest.output(os.path.join(self.out, "b.csv"))
        manifest.output(os.path.join(self.out, "a.csv"))
        again = read_manifest(manifest.write(self.out))
        self.assertEquals(again.outputs, ["a.csv", "b.csv"])
        self.assertEquals(again.seed, 4)
