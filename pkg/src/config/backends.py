import abc
import copy
import logging
import os

import yaml
from django.conf import settings

from backend.exceptions import ConfigError

logger = logging.getLogger(__name__)


class ConfigBackend(abc.ABC):
    @abc.abstractmethod
    def get(self, key):
        pass

    @abc.abstractmethod
    def set(self, key, value):
        pass

    @abc.abstractmethod
    def get_all(self):
        pass

    def load(self, defaults):
        pass

    def save(self):
        pass


class MemoryBackend(ConfigBackend):
    """Defaults only. Nothing outlives the process."""

    def __init__(self):
        self.values = {}

    def get(self, key):
        if key not in self.values:
            raise ConfigError(d={"key": key}, m="unknown_config_key")
        return self.values[key]

    def set(self, key, value):
        self.values[key] = value

    def get_all(self):
        return dict(self.values)

    def load(self, defaults):
        self.values = copy.deepcopy(defaults)


class FileBackend(MemoryBackend):

    def __init__(self):
        super().__init__()
        self.path = settings.CONFIG.get('FILE')

    def load(self, defaults):
        super().load(defaults)
        if not self.path or not os.path.exists(self.path):
            return
        with open(self.path) as handle:
            stored = yaml.safe_load(handle) or {}
        if not isinstance(stored, dict):
            raise ConfigError(d={"file": self.path}, m="config_not_a_mapping")
        if stored.get('config_version', 0) < defaults['config_version']:
            logger.warning("Ignoring stale config file %s", self.path)
            return
        unknown = sorted(set(stored) - set(defaults))
        if unknown:
            raise ConfigError(d={"keys": unknown}, m="unknown_config_key")
        self.values.update(stored)

    def save(self):
        with open(self.path, "w") as handle:
            yaml.safe_dump(self.values, handle, sort_keys=True)
