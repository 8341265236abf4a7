from plugins.apps import PluginConfig


class ReachAppConfig(PluginConfig):
    name = 'reach'
    provides = ['reach.providers.FlowpipePostProvider']
