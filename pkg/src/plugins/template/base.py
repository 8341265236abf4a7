import abc


class TemplatePlugin(abc.ABC):
    plugin_type = "template"

    @abc.abstractmethod
    def directions(self, dim):
        pass
