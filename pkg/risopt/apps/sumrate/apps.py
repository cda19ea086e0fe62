from django.apps import AppConfig


class SumrateConfig(AppConfig):
    verbose_name = "Sum-rate maximization"
    name = "sumrate"
