"""Base Django settings for the stormed toolkit."""

# flake8: noqa

import os
from pathlib import Path


DEBUG = bool(os.getenv("DEBUG"))

BASE_DIR = str(Path(__file__).parent.parent.parent.absolute())
SECRET_KEY = os.getenv("SECRET_KEY", "stormed-toolkit-has-no-web-surface")

ALLOWED_HOSTS = []

INSTALLED_APPS = [
    "config.apps.ConfigConfig",
    "plugins.apps.PluginsConfig",
    "setgeom.apps.SetgeomConfig",
    "hybrid_core.apps.HybridCoreConfig",
    "reach.apps.ReachAppConfig",
    "quotient.apps.QuotientConfig",
    "stormed.apps.StormedConfig",
    "cardiac.apps.CardiacConfig",
    "cli.apps.CliConfig",
    "rest_framework",
]

# The toolkit keeps no records; the database only exists so the test runner starts.
DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": ":memory:",
    }
}

DEFAULT_AUTO_FIELD = "django.db.models.AutoField"

LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True

REST_FRAMEWORK = {
    "UNAUTHENTICATED_USER": None,
}

INSTALLED_PLUGINS = [
    "plugins.flow.linear",
    "plugins.flow.clock",
    "plugins.flow.constant",
    "plugins.flow.threshold_decay",
    "plugins.template.box",
    "plugins.template.octagonal",
]

CONFIG = {
    "BACKEND": "config.backends.FileBackend",
    "FILE": os.getenv("STORMED_CONFIG", os.path.join(BASE_DIR, "stormed.yaml")),
}

LOG_LEVEL = os.getenv("STORMED_LOG_LEVEL", "INFO")

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '%(levelname)s %(message)s'
        },
    },
    'handlers': {
        'console': {
            'level': 'DEBUG',
            'class': 'logging.StreamHandler',
            'formatter': 'simple'
        },
    },
    'loggers': {
        app: {
            'handlers': ['console'],
            'propagate': False,
            'level': LOG_LEVEL,
        }
        for app in (
            "config", "plugins", "setgeom", "hybrid_core", "reach",
            "quotient", "stormed", "cardiac", "cli",
        )
    },
}
