from django.apps import AppConfig


class ManifoldConfig(AppConfig):
    verbose_name = "Complex circle manifold"
    name = "manifold"
