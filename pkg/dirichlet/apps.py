from django.apps import AppConfig


class DirichletConfig(AppConfig):
    name = 'dirichlet'
    verbose_name = 'Dirichlet process mixtures'
