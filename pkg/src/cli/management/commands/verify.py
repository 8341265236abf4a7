import logging
import os

import yaml

from backend.exceptions import BudgetExhausted, EmptySetError, ModelError, PropertyRefuted, UnboundedError
from cardiac.loop import reduced_domain, reduced_horizon, reduced_loop, reduced_templates
from cardiac.tree import TherapyTarget
from cli.command import ToolCommand
from cli.inputs import load_partition, load_source, load_target
from config import config
from hybrid_core.automaton import HybridState
from hybrid_core.io import mode_label
from hybrid_core.simulate import initial_state, simulate
from quotient.export import write_quotient
from quotient.partition import initial_partition
from quotient.query import reach_query
from quotient.refine import fixpoint
from reach.flowpipe import ReachConfig
from stormed.certificate import transition_bound
from stormed.io import load_certificate

logger = logging.getLogger(__name__)

UNREACHABLE = "unreachable"
POSSIBLY_REACHABLE = "possibly reachable"
REACHABLE = "reachable"

WITNESS_RUNS = 20
SCENARIO_ITERS = 1


def _lambda_grid(value):
    return [float(lam) for lam in value.split(",")]


def find_witness(aut, target, cfg, rng, runs=WITNESS_RUNS, domain=None):
    """
    Simulates from the default initial state and from points sampled in the
    initial sets; returns the first (time, mode, x) satisfying ``target``.
    """
    starts = [initial_state(aut)]
    for mode, P in aut.init:
        region = P.intersect(domain) if domain is not None else P
        try:
            starts.extend(HybridState(mode, x) for x in region.sample(rng, runs))
        except (EmptySetError, UnboundedError):
            continue
    for state in starts:
        execution = simulate(aut, state, cfg.horizon, cfg.delta)
        for t, mode, x in execution.rows():
            if target.holds(mode, x):
                return t, mode, x
    return None


def scenario_defaults(interval):
    """
    Coarse settings for a reduced loop: steps of half the shortest beat
    interval, the interval endpoints as the only interpolation points,
    templates reading only the clock differences its guards use, and a single
    round of guard splitting.
    """
    return {
        'delta': interval[0] / 2.0,
        'lambda_grid': [0.0, 1.0],
        'templates': 'reduced',
        'max_iters': SCENARIO_ITERS,
    }


class Command(ToolCommand):
    help = "Build a quotient by partition refinement and decide reachability of a target"

    def add_tool_arguments(self, parser):
        parser.add_argument('--model', help="Model file")
        parser.add_argument('--scenario', help="Scenario file; its discriminators are verified on the reduced loop")
        parser.add_argument('--partition', help="Initial partition file: a domain and cuts")
        parser.add_argument('--target', help="Target file; a scenario defaults to late or missed therapy")
        parser.add_argument('--vt-decision', action='store_true',
                            help="On a scenario, target a VT decision within the therapy deadline instead")
        parser.add_argument('--cert', help="Certificate whose transition bound sets the iteration budget")
        parser.add_argument('--auto', action='store_true', help="Iterate to the certificate's transition bound")
        parser.add_argument('--delta', type=float, default=None)
        parser.add_argument('--lambda-grid', type=_lambda_grid, default=None)
        parser.add_argument('--eps', type=float, default=None)
        parser.add_argument('--templates', choices=('auto', 'box', 'oct', 'reduced'), default=None)
        parser.add_argument('--max-blocks', type=int, default=None)
        parser.add_argument('--max-iters', type=int, default=None)

    def source(self, options, manifest):
        """(automaton, domain, cuts, target) for a model or for a scenario's reduced loop."""
        aut, setup = load_source(options, manifest)
        domain, cuts, target = None, [], None
        if setup is not None:
            _, period = setup.scenario.pacing(setup.heart)
            interval = (period, 1.2 * period)
            aut = reduced_loop(setup.discriminators, setup.tree, interval=interval)
            domain = reduced_domain(aut, setup.discriminators, interval)
            target = TherapyTarget(aut, setup.tree, negated=not options['vt_decision'])
            options['horizon'] = reduced_horizon(setup.discriminators, interval)
            for key, value in scenario_defaults(interval).items():
                if options.get(key) is None:
                    options[key] = value
        elif options['vt_decision']:
            raise ModelError(d={"vt_decision": ["Only scenarios have a detection tree."]}, m="unsupported_input")
        if setup is None and options['templates'] == 'reduced':
            raise ModelError(d={"templates": ["Reduced templates belong to a scenario's reduced loop."]},
                             m="unsupported_input")
        if options['partition']:
            manifest.inputs["partition"] = options['partition']
            file_domain, cuts = load_partition(options['partition'], aut.dim)
            domain = file_domain if file_domain is not None else domain
        if options['target']:
            manifest.inputs["target"] = options['target']
            target = load_target(options['target'], aut.dim)
        if target is None:
            raise ModelError(d={"target": ["A model needs a --target file."]}, m="missing_input")
        return aut, domain, cuts, target

    def run(self, options, manifest, rng):
        out = options['out']
        os.makedirs(out, exist_ok=True)
        options.setdefault('horizon', None)
        aut, domain, cuts, target = self.source(options, manifest)
        overrides = {key: options[key] for key in ('delta', 'lambda_grid', 'eps', 'templates', 'max_blocks',
                                                   'max_iters', 'horizon') if options.get(key) is not None}
        manifest.overrides.update(overrides)
        templates = reduced_templates(aut) if options['templates'] == 'reduced' else options['templates']
        cfg = ReachConfig.from_config(aut.dim, templates=templates, delta=options['delta'],
                                      lambda_grid=options['lambda_grid'], eps=options['eps'],
                                      horizon=options['horizon'])
        U = options['max_iters'] if options['max_iters'] is not None else config.get('max_iters')
        if options['auto']:
            if not options['cert']:
                raise ModelError(d={"auto": ["--auto needs the certificate's transition bound; run cert first "
                                             "and pass it with --cert."]}, m="missing_certificate")
            manifest.inputs["cert"] = options['cert']
            U = transition_bound(load_certificate(options['cert'], aut.dim))
            manifest.overrides["max_iters"] = U
        max_blocks = options['max_blocks'] if options['max_blocks'] is not None else config.get('max_blocks')

        P0 = initial_partition(aut, domain=domain, cuts=cuts)
        quotient, iterations = fixpoint(aut, P0, cfg, U=U, max_blocks=max_blocks)
        for path in write_quotient(quotient, out):
            manifest.output(path)
        summary = {
            "blocks": len(quotient.nodes),
            "edges": len(quotient.edges),
            "iterations": iterations,
            "converged": quotient.converged,
            "target": target.name,
        }
        if not quotient.partition.stable:
            raise BudgetExhausted(d=summary, m="block_budget_exhausted")

        found, path = reach_query(quotient, target)
        answer = UNREACHABLE
        if found:
            answer = POSSIBLY_REACHABLE
            summary["path"] = [[src, dst, str(label)] for src, dst, label in path]
            witness = find_witness(aut, target, cfg, rng, domain=domain)
            if witness is not None:
                answer = REACHABLE
                t, mode, x = witness
                summary["witness"] = {"time": float(t), "mode": mode_label(mode), "state": [float(v) for v in x]}
        summary["answer"] = answer
        answer_path = os.path.join(out, "answer.yaml")
        with open(answer_path, "w") as f:
            yaml.safe_dump(summary, f, sort_keys=True)
        manifest.output(answer_path)
        logger.info("%s: %s after %d iterations", target.name, answer, iterations)
        if answer == REACHABLE:
            raise PropertyRefuted(d=summary, m="target_reachable")
        return summary
