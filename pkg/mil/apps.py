from django.apps import AppConfig


class MilConfig(AppConfig):
    name = 'mil'
    verbose_name = 'Multiple instance learning'
