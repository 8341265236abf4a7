import logging

import numpy as np
import yaml
from django.core.management import BaseCommand

from backend.exception_handler import handle_exception
from backend.exceptions import ConfigError
from backend.response import FormattedResponse
from cli.manifest import RunManifest
from cli.receivers import EventCounter
from config import config

logger = logging.getLogger(__name__)


def parse_settings(entries):
    """``KEY=VALUE`` strings as a dict of config values; values are read as YAML."""
    values = {}
    for entry in entries or ():
        key, sep, raw = entry.partition("=")
        if not sep or not key:
            raise ConfigError(d={"set": [f"Expected KEY=VALUE, got '{entry}'."]}, m="invalid_setting")
        config.get(key)
        values[key] = yaml.safe_load(raw)
    return values


class ToolCommand(BaseCommand):
    """
    Shared surface of the toolkit commands: ``--out``, ``--seed`` and config
    overrides, one seeded generator per run, a manifest written next to the
    outputs and the exit codes of the formatted exceptions.
    """

    def add_arguments(self, parser):
        parser.add_argument('--out', default='out', help="Output directory")
        parser.add_argument('--seed', type=int, default=None, help="Seed of the run's random generator")
        parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                            help="Override a config key for this run")
        self.add_tool_arguments(parser)

    def add_tool_arguments(self, parser):
        pass

    def run(self, options, manifest, rng):
        raise NotImplementedError

    def handle(self, *args, **options):
        manifest = RunManifest(self.name)
        counter = EventCounter()
        previous = config.get_all()
        try:
            settings = parse_settings(options['set'])
            config.set_bulk(settings)
            manifest.overrides.update(settings)
            seed = options['seed'] if options['seed'] is not None else config.get('seed')
            manifest.seed = int(seed)
            with counter:
                data = self.run(options, manifest, np.random.default_rng(manifest.seed))
        except Exception as e:
            manifest.events = counter.as_dict()
            manifest.write(options['out'])
            response = handle_exception(e, self.name)
            self.stderr.write(response.render())
            raise SystemExit(response.exit_code)
        finally:
            config.set_bulk(previous)
        manifest.events = counter.as_dict()
        manifest.write(options['out'])
        logger.info("%s wrote %s to %s", self.name, ", ".join(sorted(manifest.outputs)), options['out'])
        self.stdout.write(FormattedResponse(d=data, m=f"{self.name}_ok").render())

    @property
    def name(self):
        return self.__class__.__module__.rsplit(".", 1)[-1]
