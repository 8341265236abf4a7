from plugins.template.base import TemplatePlugin
from setgeom.templates import TemplateDirections


class BoxTemplatePlugin(TemplatePlugin):
    name = "box"

    def directions(self, dim):
        return TemplateDirections.box(dim)
