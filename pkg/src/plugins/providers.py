import abc
from collections import defaultdict

from backend.exceptions import ConfigError
from config import config

providers = defaultdict(dict)


def register_provider(provider_type, provider):
    providers[provider_type][provider.name] = provider


def get_provider(provider_type, name=None):
    name = name or config.get(provider_type + '_provider')
    try:
        return providers[provider_type][name]
    except KeyError:
        raise ConfigError(d={provider_type + '_provider': name}, m="unknown_provider")


class Provider(abc.ABC):
    type = None
    name = None
