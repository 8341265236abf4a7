import os

from backend.exceptions import ModelError
from cli.command import ToolCommand
from cli.inputs import load_source
from reach.export import write_flowpipe_csv, write_flowpipe_vertices
from reach.flowpipe import ReachConfig, reach_cont


def _projection(value):
    try:
        i, j = (int(k) for k in value.split(","))
    except ValueError:
        raise ModelError(d={"project": ["Expected two coordinates, e.g. 0,1."]}, m="invalid_projection")
    return i, j


class Command(ToolCommand):
    help = "Compute the flowpipes of a model's initial sets and write them for plotting"

    def add_tool_arguments(self, parser):
        parser.add_argument('--model', help="Model file")
        parser.add_argument('--delta', type=float, default=None)
        parser.add_argument('--horizon', type=float, default=None)
        parser.add_argument('--eps', type=float, default=None)
        parser.add_argument('--templates', choices=('auto', 'box', 'oct'), default=None)
        parser.add_argument('--project', default="0,1", help="Coordinates i,j of the vertex projection")

    def run(self, options, manifest, rng):
        out = options['out']
        os.makedirs(out, exist_ok=True)
        options['scenario'] = None
        aut, _ = load_source(options, manifest)
        i, j = _projection(options['project'])
        if not (0 <= i < aut.dim and 0 <= j < aut.dim) or i == j:
            raise ModelError(d={"project": [f"Need two distinct coordinates below {aut.dim}."]},
                             m="invalid_projection")
        manifest.overrides.update({key: options[key] for key in ('delta', 'horizon', 'eps', 'templates', 'project')
                                   if options[key] is not None})
        cfg = ReachConfig.from_config(aut.dim, templates=options['templates'], delta=options['delta'],
                                      eps=options['eps'], horizon=options['horizon'])
        flowpipes = [reach_cont(aut, mode, X0, cfg) for mode, X0 in aut.init]
        manifest.output(write_flowpipe_csv(flowpipes, os.path.join(out, "flowpipe.csv")))
        manifest.output(write_flowpipe_vertices(flowpipes, os.path.join(out, "flowpipe_vertices.csv"), i, j))
        return {"flowpipes": len(flowpipes), "sections": sum(len(flowpipe) for flowpipe in flowpipes)}
