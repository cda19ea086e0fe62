"""
Django settings for the risopt project.

The project hosts no web surface and no database: Django provides the
settings layer, the management-command front end, logging configuration
and the test runner for the optimization apps under ``risopt/apps``.
"""

import os
import sys
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get("RIS_OPTIM_SECRET_KEY", "risopt-offline-no-secret")

DEBUG = os.environ.get("RIS_OPTIM_DEBUG", "0") == "1"

ALLOWED_HOSTS = []


# Application definition

RIS_OPTIM_APPS = [
    "scenarios",
    "downlink",
    "convex",
    "manifold",
    "sumrate",
    "powmin",
    "experiments",
]

INSTALLED_APPS = [
    "rest_framework",
] + RIS_OPTIM_APPS

MIDDLEWARE = []


# No persistence: every run rebuilds its scenario from config and seed.

DATABASES = {}


# Internationalization

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True


REST_FRAMEWORK = {
    "COERCE_DECIMAL_TO_STRING": False,
    "UNAUTHENTICATED_USER": None,
}


# Scenario preset used when a command gets no --config.

RIS_OPTIM_PRESET = os.environ.get("RIS_OPTIM_PRESET", "paper-default")

# Solver defaults, read by the *Params.from_settings constructors.

RIS_OPTIM = {
    "QCQP": {
        "TOL": 1e-8,
        "MAX_ITER": 500,
    },
    "MANIFOLD": {
        "MAX_ITER": 500,
        "REL_TOL": 1e-8,
        "SHRINK": 0.5,
        "SUFFICIENT_DECREASE": 1e-4,
    },
    "SUMRATE": {
        "MAX_ITER": 100,
        "REL_TOL": 1e-4,
        "DELTA": 1e-6,
        "VARSIGMA_TOL": 1e-6,
        "VARSIGMA_MAX_SWEEPS": 50,
        "PAIR_MAX_SWEEPS": 10,
        "PAIR_TOL": 1e-6,
    },
    "POWMIN": {
        "ALPHA": 0.5,
        "EPSILON": 1e-3,
        "MAX_ITER": 100,
        "REL_TOL": 1e-4,
        "DINKELBACH_TOL": 1e-6,
        "DINKELBACH_MAX_ITER": 20,
        "VARSIGMA_GRID": 101,
        "VARSIGMA_XATOL": 1e-6,
        "VARSIGMA_MAX_SWEEPS": 10,
        "SCALE_UP_CAP": 30,
        "PAIR_MAX_SWEEPS": 10,
        "PAIR_TOL": 1e-6,
    },
}


# Logging

RIS_OPTIM_LOG_LEVEL = os.environ.get("RIS_OPTIM_LOG_LEVEL", "INFO")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "formatter": "plain",
        },
    },
    "loggers": {
        app: {
            "handlers": ["console"],
            "level": RIS_OPTIM_LOG_LEVEL,
            "propagate": False,
        }
        for app in RIS_OPTIM_APPS
    },
}


# Tests: discover every project app, skip the minutes-scale acceptance
# runs unless RIS_OPTIM_SLOW_TESTS=1.

TEST_RUNNER = "risopt.runner.AppsDiscoverRunner"

PROJECT_ROOT = os.path.dirname(__file__)
sys.path.insert(0, os.path.join(PROJECT_ROOT, "apps"))
