"""
Flux-mortar app configuration.
"""
from django.apps import AppConfig


class FluxmortarConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'fluxmortar'
    verbose_name = 'Flux-mortar domain decomposition'
