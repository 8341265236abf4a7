import os

from cardiac.loop import DEFAULT_DT, decision, egm_series, run_scenario
from cli.command import ToolCommand
from cli.inputs import load_source
from config import config
from hybrid_core.io import mode_label, write_series, write_trace_csv
from hybrid_core.simulate import initial_state, simulate


def _coord_column(loop, component, coord):
    k = loop.index(component, coord)
    return lambda t, mode, x: repr(float(x[k]))


class Command(ToolCommand):
    help = "Simulate a model or a closed-loop scenario and write its trace"

    def add_tool_arguments(self, parser):
        parser.add_argument('--model', help="Model file")
        parser.add_argument('--scenario', help="Scenario file")
        parser.add_argument('--duration', type=float, default=None)
        parser.add_argument('--dt', type=float, default=None)

    def run(self, options, manifest, rng):
        out = options['out']
        os.makedirs(out, exist_ok=True)
        aut, setup = load_source(options, manifest)
        manifest.overrides.update({key: options[key] for key in ('duration', 'dt') if options[key] is not None})
        data = {}
        if setup is not None:
            dt = options['dt'] or DEFAULT_DT
            loop = setup.build(dt)
            duration = options['duration'] if options['duration'] is not None else setup.run_duration
            execution = run_scenario(loop, duration, dt)
            columns = {"egm": _coord_column(loop, "heart", "egm"), "Th": _coord_column(loop, "sense", "Th")}
            manifest.output(write_trace_csv(execution, os.path.join(out, "trace.csv"), columns, events=True))
            manifest.output(write_series(os.path.join(out, "egm.csv"), egm_series(loop, execution),
                                         header=("time", "egm")))
            data["decision"] = decision(loop, execution)
            data["events"] = len(execution.events())
        else:
            dt = options['dt'] or config.get('delta')
            duration = options['duration'] if options['duration'] is not None else config.get('horizon')
            execution = simulate(aut, initial_state(aut), duration, dt)
            manifest.output(write_trace_csv(execution, os.path.join(out, "trace.csv"), events=True))
        final = execution.final
        data.update({
            "final_mode": mode_label(final.mode) if final is not None else None,
            "end_time": float(execution.end_time),
            "jumps": len(execution.jumps),
        })
        return data
