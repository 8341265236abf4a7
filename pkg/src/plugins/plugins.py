import logging
import inspect
from collections import defaultdict
from pydoc import locate

from backend.exceptions import ConfigError, ModelError
from plugins.flow.base import FlowPlugin
from plugins.template.base import TemplatePlugin

logger = logging.getLogger(__name__)

plugins = defaultdict(dict)


def load_plugins(plugin_list):
    global plugins
    for plugin in plugin_list:
        module = locate(plugin)
        if module is None:
            raise ConfigError(d={"INSTALLED_PLUGINS": [f"Cannot import {plugin}."]}, m="invalid_plugin")
        for name, obj in inspect.getmembers(module):
            if inspect.isclass(obj):
                if obj.__module__ != plugin:
                    continue
                if issubclass(obj, FlowPlugin) or issubclass(obj, TemplatePlugin):
                    plugins[obj.plugin_type][obj.name] = obj
                    logger.debug("Loaded %s plugin: %s(%s)", obj.plugin_type, obj.name, plugin)


def get_plugin(plugin_type, name):
    try:
        return plugins[plugin_type][name]
    except KeyError:
        raise ModelError(
            d={plugin_type: [f"Unknown {plugin_type} kind '{name}'."]},
            m=f"unknown_{plugin_type}",
        )
