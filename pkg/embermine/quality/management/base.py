"""
Shared plumbing for the embermine management commands.

Exit codes: 0 clean, 1 issues found, 2 tool error. Library errors
(EmbermineError) become CommandError(returncode=2).
"""

from contextlib import contextmanager

from django.core.management import call_command
from django.core.management.base import BaseCommand, CommandError

from quality.config import RunConfig, load_run_config
from quality.exceptions import EmbermineError

EXIT_ISSUES = 1
EXIT_ERROR = 2


class EmbermineCommand(BaseCommand):
    def add_config_argument(self, parser):
        parser.add_argument(
            "--config",
            help="TOML run configuration (defaults to EMBERMINE_CONFIG, then built-in defaults).",
        )

    @contextmanager
    def tool_errors(self):
        try:
            yield
        except EmbermineError as exc:
            raise CommandError(str(exc), returncode=EXIT_ERROR) from exc

    def load_config(self, options) -> RunConfig:
        with self.tool_errors():
            return load_run_config(options.get("config"))

    def migrate(self):
        """Creates or upgrades the analysis cache tables."""
        call_command("migrate", "quality", verbosity=0, interactive=False)

    def warn(self, message: str):
        self.stderr.write(self.style.WARNING(message))
