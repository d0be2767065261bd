import dataclasses
from pathlib import Path

from quality.management.base import EmbermineCommand
from quality.pipeline import mine_repo


class Command(EmbermineCommand):
    help = (
        "Analyzes every commit of a git repository and writes its issue lifecycles "
        "(issues.jsonl), metrics (metrics.json) and per-commit failures (failures.json)."
    )

    def add_arguments(self, parser):
        parser.add_argument("repo", help="Path to the git repository.")
        self.add_config_argument(parser)
        parser.add_argument("--branch", help="Branch or ref to mine (default: HEAD).")
        parser.add_argument(
            "--gap",
            type=int,
            help="Absent commits tolerated before an issue counts as fixed. An issue still absent "
            "at the last commit is fixed at its first absence.",
        )
        parser.add_argument("--total-order", action="store_true", help="Walk every commit, not just first parents.")
        parser.add_argument("--external-reports", help="Directory of <commit hash>.xml analyzer reports.")
        parser.add_argument("--no-external", action="store_true", help="Run the embedded rules only.")
        parser.add_argument("--out", help="Output directory.")
        parser.add_argument("--workers", type=int, help="Commit analysis threads.")

    def handle(self, *args, **options):
        cfg = self.load_config(options)
        overrides = {
            "branch": options["branch"],
            "gap": options["gap"],
            "workers": options["workers"],
            "output_dir": Path(options["out"]) if options["out"] else None,
        }
        cfg = dataclasses.replace(cfg, **{key: value for key, value in overrides.items() if value is not None})
        if options["total_order"]:
            cfg = dataclasses.replace(cfg, total_order=True)

        self.migrate()
        reports = Path(options["external_reports"]) if options["external_reports"] else None
        with self.tool_errors():
            result = mine_repo(Path(options["repo"]), cfg, reports, use_external=not options["no_external"])

        failures = result.failures["failures"]
        for failure in failures:
            where = f"commit {failure['commit'][:10]}" if failure["commit"] else "analyzer"
            self.warn(f"{where}: {failure['kind']}: {failure['message']}")

        metrics = result.metrics
        self.stdout.write(
            self.style.SUCCESS(
                f"{result.name}: {metrics['commits']} commit(s), {metrics['issues']} issue(s) "
                f"({metrics['fixed']} fixed), written to {result.out_dir}"
            )
        )
