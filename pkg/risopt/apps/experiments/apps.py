from django.apps import AppConfig


class ExperimentsConfig(AppConfig):
    verbose_name = "Experiment commands"
    name = "experiments"
