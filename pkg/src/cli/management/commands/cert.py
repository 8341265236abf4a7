import os

from backend.exceptions import CertificateError, ModelError
from cardiac.certificates import (duration_certificate, heart_certificate, sense_certificate, stability_certificate,
                                  tcfi_certificate, vtc_certificate)
from cardiac.loop import acquire_template
from cardiac.params import DiscrimParams, ElectrodeConfig, HeartParams, SenseParams
from cardiac.serializers import build_scenario
from cli.command import ToolCommand
from cli.inputs import load_domain, load_source
from hybrid_core.io import load_document
from stormed.certificate import transition_bound
from stormed.checks import check_all
from stormed.io import dump_certificate, load_certificate, write_report
from stormed.synthesis import synthesize_phi

TEMPLATES = ("heart", "sense", "tcfi", "vtc", "stab", "duration")


def build_template(name, setup=None):
    heart = setup.heart if setup else HeartParams()
    electrodes = setup.electrodes if setup else ElectrodeConfig()
    sense = setup.sense if setup else SenseParams()
    discriminators = setup.discriminators if setup else DiscrimParams()
    if name == "heart":
        return heart_certificate(heart, electrodes)
    if name == "sense":
        return sense_certificate(sense)
    if name == "tcfi":
        return tcfi_certificate(discriminators, sense.refractory)
    if name == "vtc":
        if discriminators.template is None:
            discriminators = acquire_template(heart, electrodes, sense, discriminators)
        return vtc_certificate(discriminators)
    if name == "stab":
        return stability_certificate(discriminators, sense.refractory)
    return duration_certificate(discriminators)


class Command(ToolCommand):
    help = "Check a STORMED certificate for a model, synthesising it or taking a proof template on request"

    def add_tool_arguments(self, parser):
        parser.add_argument('--model', help="Model file")
        parser.add_argument('--scenario', help="Scenario file supplying the parameters of --template")
        parser.add_argument('--cert', help="Certificate file to check")
        parser.add_argument('--synthesize', action='store_true', help="Synthesise phi by linear programming")
        parser.add_argument('--template', choices=TEMPLATES, help="Proof-template certificate of an ICD component")
        parser.add_argument('--domain', help="Polytope file bounding the sampled states")
        parser.add_argument('--samples', type=int, default=None)
        parser.add_argument('--tol', type=float, default=None)

    def run(self, options, manifest, rng):
        out = options['out']
        os.makedirs(out, exist_ok=True)
        chosen = [key for key in ('cert', 'synthesize', 'template') if options[key]]
        if len(chosen) != 1:
            raise ModelError(d={"cert": ["Give exactly one of --cert, --synthesize and --template."]},
                             m="missing_input")
        manifest.overrides.update({key: options[key] for key in ('samples', 'tol', 'template') if options[key]})
        if options['template']:
            setup = None
            if options['scenario']:
                manifest.inputs["scenario"] = options['scenario']
                setup = build_scenario(load_document(options['scenario']))
            template = build_template(options["template"], setup)
            report = template.check(options['samples'], rng=rng)
            cert = template.certificate
        else:
            aut, setup = load_source(options, manifest)
            if setup is not None:
                raise ModelError(d={"scenario": ["Closed loops are certified per component; use --template."]},
                                 m="unsupported_input")
            domain = None
            if options['domain']:
                manifest.inputs["domain"] = options['domain']
                domain = load_domain(options['domain'], aut.dim)
            if options['cert']:
                manifest.inputs["cert"] = options['cert']
                cert = load_certificate(options['cert'], aut.dim)
            else:
                cert = synthesize_phi(aut, rng=rng, domain=domain, samples=options['samples'])
            report = check_all(aut, cert, options['samples'], options['tol'], rng=rng, domain=domain)
        manifest.output(dump_certificate(cert, os.path.join(out, "certificate.yaml")))
        for path in write_report(report, out):
            manifest.output(path)
        if not report.passed:
            raise CertificateError(d={"failed": report.failed()}, m="certificate_rejected")
        return {"passed": True, "transition_bound": transition_bound(cert)}
