from django.apps import AppConfig


class SetgeomConfig(AppConfig):
    name = "setgeom"
