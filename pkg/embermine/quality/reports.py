"""
reports.py
==========

Writes embermine's artifacts and formats `check_quality` output.

JSON artifacts are written with sorted keys and no timestamps, so two runs
over the same inputs produce identical bytes.
"""

import json
import logging
from pathlib import Path
from typing import Iterable

from .cohort import CohortReport
from .diagnostics import Diagnostic
from .lifecycle import IssueLifecycle

logger = logging.getLogger(__name__)

MISSING = "n/a"


def dumps(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_repo_artifacts(
    repo_dir: Path, lifecycles: Iterable[IssueLifecycle], metrics: dict, failures: dict
) -> Path:
    """`issues.jsonl`, `metrics.json` and `failures.json` for one mined repository."""
    repo_dir = Path(repo_dir)
    repo_dir.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(lc.to_dict(), sort_keys=True, ensure_ascii=False) for lc in lifecycles]
    (repo_dir / "issues.jsonl").write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    (repo_dir / "metrics.json").write_text(dumps(metrics), encoding="utf-8")
    (repo_dir / "failures.json").write_text(dumps(failures), encoding="utf-8")
    logger.debug("Wrote %d issue record(s) to %s", len(lines), repo_dir)
    return repo_dir


def write_cohort_artifacts(out_dir: Path, cohort: CohortReport) -> Path:
    """`report.json`, `report.md` and the figure CSVs under `<out>/cohort/`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(dumps(cohort.report), encoding="utf-8")
    (out_dir / "report.md").write_text(render_markdown(cohort.report), encoding="utf-8")
    for name, frame in cohort.figures.items():
        frame.to_csv(out_dir / name, index=False, lineterminator="\n")
    return out_dir


# =======================================================================
# MARKDOWN
# =======================================================================


def _cell(value) -> str:
    if value is None:
        return MISSING
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.4g}" if abs(value) < 1e-3 and value != 0 else f"{value:.2f}"
    if isinstance(value, (list, tuple)):
        return ", ".join(str(item) for item in value) or MISSING
    return str(value).replace("|", "\\|")


def _table(headers: list[str], rows: list[list]) -> list[str]:
    lines = ["| " + " | ".join(headers) + " |", "|" + "---|" * len(headers)]
    lines += ["| " + " | ".join(_cell(value) for value in row) + " |" for row in rows]
    if not rows:
        lines.append("| " + " | ".join([MISSING] * len(headers)) + " |")
    return lines + [""]


def _test(result: dict) -> list:
    if "skipped" in result:
        return [MISSING, MISSING, MISSING, f"skipped: {result['skipped']}"]
    return [result.get("statistic", result.get("r")), result["p_value"], result.get("n1", result.get("n")),
            result.get("method", "pearson")]


def _summary(summary: dict) -> list:
    return [summary["n"], summary["mean"], summary["sd"]]


def render_markdown(report: dict) -> str:
    meta = report["metadata"]
    lines = [
        "# Cohort report",
        "",
        f"Repositories: {len(meta['repos'])}. Metric: {meta['metric']}. "
        f"Cluster threshold: {meta['cluster_threshold']:.2f}.",
        "",
        meta["methods"],
        "",
    ]
    if meta["skipped_repos"]:
        lines += ["## Skipped repositories", ""]
        lines += _table(["repo", "reason"], [[item["repo"], item["reason"]] for item in meta["skipped_repos"]])

    lines += ["## Issues per rule", ""]
    for scope in ("project", "lab"):
        rows = [
            [rule, row["source"], row["critical"], row["occurrence"], row["total"]]
            for rule, row in report["table"][scope].items()
        ]
        totals = report["table"]["totals"][scope]
        rows.append(["**all**", "", "", totals["occurrence"], totals["total"]])
        lines += [f"### {scope.capitalize()} repositories", ""]
        lines += _table(["rule", "source", "critical", "occurrence", "total"], rows)

    contribution = report["contribution"]
    lines += ["## Contribution and issues", "", "### Groups", ""]
    lines += _table(
        ["repo", "group", "cluster", "dominant member", "occurrence", "total", "grade"],
        [[g["repo"], g["group_id"], g["cluster"], g["dominant_member"], g["occurrence"], g["total"], g["grade"]]
         for g in contribution["groups"]],
    )
    if contribution["unclustered"]:
        lines += _table(["repo", "not clustered because"], [[u["repo"], u["reason"]] for u in contribution["unclustered"]])
    lines += ["### Clusters", ""]
    lines += _table(
        ["cluster", "groups", "n", "mean", "sd"],
        [[label, len(c["groups"]), *_summary(c[contribution["metric"]])] for label, c in contribution["clusters"].items()],
    )
    lines += _table(["comparison", "U", "p", "n1", "method"], [["cluster 0 vs 1", *_test(contribution["cluster_test"])]])
    lines += ["### Dominant vs. minor member", ""]
    lines += _table(
        ["cluster", "dominant mean", "dominant sd", "minor mean", "minor sd", "U", "p", "n", "method"],
        [
            [label, m["dominant"]["mean"], m["dominant"]["sd"], m["minor"]["mean"], m["minor"]["sd"], *_test(m["test"])]
            for label, m in contribution["members"].items()
        ],
    )
    lines += ["### Correlations", ""]
    lines += _table(["pair", "r", "p", "n", "method"], [[name, *_test(pair)] for name, pair in contribution["pearson"].items()])

    fixers = report["fixers"]
    share = fixers["same_fixer"]
    lines += ["## Who fixes issues", ""]
    lines += _table(
        ["fixed (attributed)", "same fixer", "different fixer", "same fixer %"],
        [[share["fixed"], share["same"], share["different"], share["percent"]]],
    )
    latency = fixers["latency"]
    lines += _table(
        ["fixer", "n", "mean commits", "sd commits", "mean days", "sd days"],
        [
            [who, latency[who]["commits"]["n"], latency[who]["commits"]["mean"], latency[who]["commits"]["sd"],
             latency[who]["days"]["mean"], latency[who]["days"]["sd"]]
            for who in ("same", "different")
        ],
    )
    lines += _table(
        ["comparison", "U", "p", "n1", "method"],
        [["commits, same vs. different", *_test(latency["commits_test"])],
         ["days, same vs. different", *_test(latency["days_test"])]],
    )
    template = fixers["template"]
    lines += _table(
        ["template issues", "fixed", "mean commits", "mean days"],
        [[template["count"], template["fixed"], template["commits"]["mean"], template["days"]["mean"]]],
    )

    timeline = report["timeline"]
    lines += ["## When issues appear and disappear", ""]
    position = timeline["intro_position"]
    lines += _table(
        ["axis", "same mean", "different mean", "U", "p", "n1", "method"],
        [[axis, position[axis]["same"]["mean"], position[axis]["different"]["mean"], *_test(position[axis]["test"])]
         for axis in ("commits", "days")],
    )
    last = timeline["fixed_in_last_commit"]
    lines += _table(
        ["fixed in last commit", "of which same fixer", "fixed on last day", "introduced on last day",
         "mean intro day", "sd intro day"],
        [[last["count"], last["same_fixer"], timeline["fixed_on_last_day"], timeline["introduced_on_last_day"],
          timeline["intro_day"]["mean"], timeline["intro_day"]["sd"]]],
    )
    lines += ["### Commits to fix per rule", ""]
    lines += _table(
        ["rule", "source", "critical", "fixed", "mean", "sd"],
        [[rule, r["source"], r["critical"], r["count"], r["mean"], r["sd"]] for rule, r in timeline["per_rule"].items()],
    )
    critical, origin = timeline["critical_vs_noncritical"], timeline["embedded_vs_external"]
    lines += _table(
        ["comparison", "mean a", "mean b", "U", "p", "n1", "method"],
        [
            ["critical vs. non-critical", critical["critical"]["mean"], critical["non_critical"]["mean"],
             *_test(critical["test"])],
            ["embedded vs. external", origin["embedded"]["mean"], origin["external"]["mean"], *_test(origin["test"])],
        ],
    )

    counts = report["counts"]
    lines += ["## Counts", ""]
    lines += _table(list(counts), [list(counts.values())])
    return "\n".join(lines)


# =======================================================================
# CHECK OUTPUT
# =======================================================================


def format_diagnostic(diag: Diagnostic) -> str:
    """GCC-style line: `path:line: [rule] message`."""
    flag = " (critical)" if diag.critical else ""
    return f"{diag.path}:{diag.line}: [{diag.rule_id}]{flag} {diag.message}"


def check_document(diagnostics: list[Diagnostic], warnings: list[str], external: dict) -> dict:
    return {
        "diagnostics": [diag.to_dict() for diag in diagnostics],
        "count": len(diagnostics),
        "warnings": list(warnings),
        "external": external,
    }
