from django.apps import AppConfig


class StormedConfig(AppConfig):
    name = 'stormed'
