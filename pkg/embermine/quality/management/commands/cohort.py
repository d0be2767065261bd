import dataclasses
from pathlib import Path

from django.core.management.base import CommandError

from quality.cohort import METRICS, cohort_summary, load_grades, load_labs, load_mined_repo
from quality.config import load_manifest
from quality.exceptions import EmbermineError
from quality.management.base import EXIT_ERROR, EmbermineCommand
from quality.pipeline import mine_repo
from quality.reports import write_cohort_artifacts


class Command(EmbermineCommand):
    help = (
        "Builds the cohort report (report.json, report.md and figure CSVs) from the mined "
        "repositories listed in a manifest."
    )

    def add_arguments(self, parser):
        parser.add_argument("manifest", help="TOML manifest with [[repos]] entries.")
        self.add_config_argument(parser)
        parser.add_argument("--metric", choices=METRICS, help="Issue count used for group comparisons.")
        parser.add_argument("--mine", action="store_true", help="Mine every repository first.")
        parser.add_argument("--no-external", action="store_true", help="With --mine: embedded rules only.")
        parser.add_argument(
            "--allow-partial", action="store_true", help="Exit 0 even when some repositories could not be used."
        )
        parser.add_argument("--out", help="Output directory (the report goes to <out>/cohort).")

    def handle(self, *args, **options):
        cfg = self.load_config(options)
        if options["out"]:
            cfg = dataclasses.replace(cfg, output_dir=Path(options["out"]))
        stats = cfg.stats
        if options["metric"]:
            stats = dataclasses.replace(stats, metric=options["metric"])
        out_dir = cfg.resolved_output_dir()

        with self.tool_errors():
            entries = load_manifest(options["manifest"])
            labs = load_labs(stats.labs) if stats.labs else None
            grades = load_grades(stats.grades) if stats.grades else None

        skipped = []
        if options["mine"]:
            self.migrate()
        repos = []
        for entry in entries:
            try:
                if options["mine"]:
                    mine_repo(entry, cfg, out_dir=out_dir, use_external=not options["no_external"])
                repos.append(load_mined_repo(entry, out_dir))
            except EmbermineError as exc:
                self.warn(f"Skipping {entry.name}: {exc}")
                skipped.append({"repo": entry.name, "reason": str(exc)})

        with self.tool_errors():
            cohort = cohort_summary(repos, labs, grades, stats, skipped)
            target = write_cohort_artifacts(out_dir / "cohort", cohort)

        self.stdout.write(self.style.SUCCESS(f"Cohort report for {len(repos)} repositories written to {target}"))
        if skipped and not options["allow_partial"]:
            raise CommandError(
                f"{len(skipped)} repositor{'y' if len(skipped) == 1 else 'ies'} skipped "
                "(use --allow-partial to accept).",
                returncode=EXIT_ERROR,
            )
