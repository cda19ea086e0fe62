from django.apps import AppConfig


class ScenariosConfig(AppConfig):
    verbose_name = "Scenario generation"
    name = "scenarios"
