"""
Django settings for embermine_project project.

embermine has no web surface: Django provides the management-command CLI,
the ORM that backs the per-commit analysis cache, logging configuration and
the test runner.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.1/ref/settings/
"""

from pathlib import Path
from environs import Env
from embermine_project.version import __version__


# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# Initialize `environs`
env = Env()
env.read_env()  # Reads the .env file

# Load environment variables
SECRET_KEY = env.str("SECRET_KEY", default="embermine-cli-no-web-surface")
DEBUG = env.bool("DEBUG", default=False)
ALLOWED_HOSTS = env.list("ALLOWED_HOSTS", default=[])

# Tool settings. Everything here can be overridden per run by the TOML run
# configuration except the analyzer override, which wins over both.
EMBERMINE_VERSION = __version__
EMBERMINE_EXTERNAL_PATH = env.str("EMBERMINE_EXTERNAL_PATH", default=None)
EMBERMINE_CONFIG = env.str("EMBERMINE_CONFIG", default=None)
EMBERMINE_OUTPUT_DIR = env.path("EMBERMINE_OUTPUT_DIR", default=Path.cwd() / "embermine-out")
EMBERMINE_WORKERS = env.int("EMBERMINE_WORKERS", default=4)
EMBERMINE_LOG_LEVEL = env.log_level("EMBERMINE_LOG_LEVEL", default="INFO")


# Application definition
INSTALLED_APPS = [
    "quality",
]

MIDDLEWARE = []


# Database
# https://docs.djangoproject.com/en/5.1/ref/settings/#databases
# Holds only the content-addressed analysis cache.

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": env.path("EMBERMINE_DB_PATH", default=BASE_DIR / "db.sqlite3"),
    }
}


# Logging
# https://docs.djangoproject.com/en/5.1/topics/logging/
# Diagnostics go to stdout through the commands; log records go to stderr.

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{asctime} {levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "formatter": "verbose",
        },
    },
    "loggers": {
        "quality": {
            "handlers": ["console"],
            "level": EMBERMINE_LOG_LEVEL,
            "propagate": False,
        },
        "git": {
            "handlers": ["console"],
            "level": "WARNING",
            "propagate": False,
        },
    },
}


# Internationalization
# https://docs.djangoproject.com/en/5.1/topics/i18n/

LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True  # Timezone support


# Default primary key field type
# https://docs.djangoproject.com/en/5.1/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"
