"""pytest wiring for the Django test suites under risopt/apps/*/tests.py.

Mirrors risopt.runner.AppsDiscoverRunner: cases tagged ``slow`` are
skipped unless RIS_OPTIM_SLOW_TESTS=1.
"""

import os

import django
import pytest

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "risopt.settings")
django.setup()


def _tags(item):
    tags = set(getattr(getattr(item, "cls", None), "tags", ()) or ())
    tags |= set(getattr(getattr(item, "obj", None), "tags", ()) or ())
    return tags


def pytest_collection_modifyitems(config, items):
    if os.environ.get("RIS_OPTIM_SLOW_TESTS", "0") == "1":
        return
    skip_slow = pytest.mark.skip(reason="slow; set RIS_OPTIM_SLOW_TESTS=1")
    for item in items:
        if "slow" in _tags(item):
            item.add_marker(skip_slow)
