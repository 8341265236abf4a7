"""
Run manifests: what a command read, which seed and overrides it used, and
what it wrote. Re-running a command with its manifest's arguments reproduces
the outputs.
"""
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List

import yaml

VERSION = "0.1.0"
MANIFEST_NAME = "manifest.yaml"


@dataclass
class RunManifest:
    command: str
    inputs: Dict[str, str] = field(default_factory=dict)
    seed: int = 0
    overrides: Dict[str, object] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)
    events: Dict[str, int] = field(default_factory=dict)
    version: str = VERSION

    def output(self, path):
        self.outputs.append(os.path.basename(path))
        return path

    def to_dict(self):
        data = asdict(self)
        data["outputs"] = sorted(self.outputs)
        return data

    def write(self, directory):
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, MANIFEST_NAME)
        with open(path, "w") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=True)
        return path


def read_manifest(path):
    with open(path) as f:
        return RunManifest(**yaml.safe_load(f))
