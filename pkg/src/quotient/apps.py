from django.apps import AppConfig


class QuotientConfig(AppConfig):
    name = 'quotient'
