from django.apps import AppConfig


class PowminConfig(AppConfig):
    verbose_name = "Power minimization"
    name = "powmin"
