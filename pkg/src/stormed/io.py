import logging
import os

import yaml

from backend.exceptions import ModelError
from hybrid_core.io import load_document
from stormed.serializers import CertificateSerializer

logger = logging.getLogger(__name__)


def build_certificate(document):
    serializer = CertificateSerializer(data=document)
    if not serializer.is_valid():
        raise ModelError(d=serializer.errors, m="invalid_certificate")
    return serializer.save()


def load_certificate(path, dim=None):
    cert = build_certificate(load_document(path))
    if dim is not None and cert.dim != dim:
        raise ModelError(d={"phi": [f"Certificate has {cert.dim} entries, the model has dimension {dim}."]},
                         m="dimension_mismatch")
    logger.info("Loaded %r from %s", cert, path)
    return cert


def dump_certificate(cert, path):
    with open(path, "w") as f:
        yaml.safe_dump(cert.to_dict(), f, sort_keys=False)
    return path


def write_report(report, directory, prefix="certificate"):
    """The human-readable report and its YAML twin; returns both paths."""
    os.makedirs(directory, exist_ok=True)
    text_path = os.path.join(directory, f"{prefix}_report.txt")
    yaml_path = os.path.join(directory, f"{prefix}_report.yaml")
    with open(text_path, "w") as f:
        f.write(report.to_text())
    with open(yaml_path, "w") as f:
        yaml.safe_dump(report.to_dict(), f, sort_keys=False)
    return text_path, yaml_path
