#!/usr/bin/env python
"""embermine command-line entry point (Django's manage.py).

    python manage.py check_quality <tree>
    python manage.py mine <repo>
    python manage.py cohort <manifest.toml>
    python manage.py rules list
"""
import os
import sys


def main():
    """Run embermine (and Django administrative) commands."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'embermine_project.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
