from django.apps import AppConfig


class ConvexConfig(AppConfig):
    verbose_name = "Convex QCQP engine"
    name = "convex"
