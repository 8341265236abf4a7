from plugins.template.base import TemplatePlugin
from setgeom.templates import TemplateDirections


class OctagonalTemplatePlugin(TemplatePlugin):
    name = "oct"

    def directions(self, dim):
        return TemplateDirections.octagonal(dim)
