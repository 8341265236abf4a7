from django.apps import AppConfig


class HybridCoreConfig(AppConfig):
    name = 'hybrid_core'
