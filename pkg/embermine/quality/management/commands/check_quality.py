from pathlib import Path

from django.core.management.base import CommandError

from quality.exceptions import AnalyzerUnavailable
from quality.management.base import EXIT_ERROR, EXIT_ISSUES, EmbermineCommand
from quality.pipeline import check_tree
from quality.reports import check_document, dumps, format_diagnostic


class Command(EmbermineCommand):
    help = (
        "Runs the embedded C rules, and the external analyzer when available, on a source tree. "
        "Exits 0 when there are no issues of any kind, 1 when there are, 2 on errors."
    )

    def add_arguments(self, parser):
        parser.add_argument("path", help="Source tree (or a single .c/.h file).")
        self.add_config_argument(parser)
        parser.add_argument("--format", choices=("text", "json"), default="text")
        parser.add_argument("--external-report", help="Use this analyzer XML report instead of running the analyzer.")
        parser.add_argument("--no-external", action="store_true", help="Run the embedded rules only.")

    def handle(self, *args, **options):
        cfg = self.load_config(options)
        external_report = Path(options["external_report"]) if options["external_report"] else None
        with self.tool_errors():
            result = check_tree(Path(options["path"]), cfg, external_report, not options["no_external"])

        external = {"mode": "report" if external_report else "run", "error": None}
        if options["no_external"] or not cfg.external.enabled:
            external["mode"] = "disabled"
        error = result.external_error
        if error is not None:
            external.update(mode="unavailable" if isinstance(error, AnalyzerUnavailable) else "failed", error=str(error))
            if not isinstance(error, AnalyzerUnavailable):
                raise CommandError(str(error), returncode=EXIT_ERROR)
            self.warn(f"{error}; embedded rules only.")

        for warning in result.warnings:
            self.warn(warning)

        if options["format"] == "json":
            self.stdout.write(dumps(check_document(result.diagnostics, result.warnings, external)), ending="")
        else:
            for diag in result.diagnostics:
                self.stdout.write(format_diagnostic(diag))

        if result.diagnostics:
            raise CommandError(f"{len(result.diagnostics)} issue(s) found.", returncode=EXIT_ISSUES)
        if options["format"] == "text":
            self.stdout.write(self.style.SUCCESS("No issues found."))
