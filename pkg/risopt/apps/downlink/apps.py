from django.apps import AppConfig


class DownlinkConfig(AppConfig):
    verbose_name = "Downlink system model"
    name = "downlink"
