"""
apps.py
=======

Configures the 'quality' Django application, which holds the C analyzers,
the repository miner, the lifecycle tracker and the statistics used by the
embermine management commands.
"""

from django.apps import AppConfig


class QualityConfig(AppConfig):
    """
    The AppConfig subclass for the 'quality' app. Django loads the management
    commands and the analysis-cache model from here.
    """

    # Specifies the type of auto-generated primary key fields for models in this app.
    default_auto_field = "django.db.models.BigAutoField"

    # The name attribute must match the app folder ("quality") for Django to load it properly.
    name = "quality"
    verbose_name = "Embedded C code quality"
