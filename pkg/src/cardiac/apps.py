from django.apps import AppConfig


class CardiacConfig(AppConfig):
    name = 'cardiac'
