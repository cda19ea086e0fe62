import os

from django.conf import settings
from django.test.runner import DiscoverRunner


class AppsDiscoverRunner(DiscoverRunner):
    """Runs the project apps' tests; ``slow`` tagged cases are opt-in."""

    def __init__(self, *args, exclude_tags=None, **kwargs):
        exclude_tags = set(exclude_tags or ())
        if os.environ.get("RIS_OPTIM_SLOW_TESTS", "0") != "1":
            exclude_tags.add("slow")
        super().__init__(*args, exclude_tags=exclude_tags, **kwargs)

    def build_suite(self, test_labels=None, *args, **kwargs):
        if not test_labels:
            test_labels = list(settings.RIS_OPTIM_APPS)
        return super().build_suite(test_labels, *args, **kwargs)
