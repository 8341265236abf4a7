"""Reading model, scenario and partition files for the commands."""
from backend.exceptions import ModelError
from cardiac.serializers import build_scenario, is_scenario_document
from hybrid_core.io import build_model, load_document
from quotient.query import Target
from setgeom.polytope import Polytope


def load_source(options, manifest):
    """
    ``(automaton, setup)`` from ``--model`` or ``--scenario``; ``setup`` is the
    validated scenario, or ``None`` for a plain model file.
    """
    model, scenario = options.get('model'), options.get('scenario')
    if bool(model) == bool(scenario):
        raise ModelError(d={"model": ["Give exactly one of --model and --scenario."]}, m="missing_input")
    path = model or scenario
    manifest.inputs["model" if model else "scenario"] = path
    document = load_document(path)
    if scenario or is_scenario_document(document):
        return None, build_scenario(document)
    return build_model(document), None


def load_partition(path, dim):
    """
    ``(domain, cuts)`` from a partition file: an optional ``domain`` polytope
    and ``cuts`` entries ``{name, region, modes}``.
    """
    document = load_document(path) or {}
    if not isinstance(document, dict):
        raise ModelError(d={"partition": ["Expected a mapping."]}, m="invalid_partition")
    domain = Polytope.from_dict(document["domain"], dim) if document.get("domain") else None
    cuts = []
    for k, entry in enumerate(document.get("cuts", [])):
        if "region" not in entry:
            raise ModelError(d={"cuts": [f"Cut {k} has no region."]}, m="invalid_partition")
        region = Polytope.from_dict(entry["region"], dim)
        name = entry.get("name", f"cut_{k}")
        cuts.append((name, region, entry["modes"]) if entry.get("modes") else (name, region))
    return domain, cuts


def load_target(path, dim):
    document = load_document(path)
    if not isinstance(document, dict):
        raise ModelError(d={"target": ["Expected a mapping."]}, m="invalid_target")
    return Target.from_dict(document, dim)


def load_domain(path, dim):
    document = load_document(path)
    if not isinstance(document, dict):
        raise ModelError(d={"domain": ["Expected a polytope {A, b}."]}, m="invalid_domain")
    return Polytope.from_dict(document, dim)
