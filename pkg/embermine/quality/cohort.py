"""
cohort.py
=========

Aggregates the mined repositories of a course cohort into one report:

- per-rule occurrence/total table, split by project and lab repositories;
- contribution clusters and the issue comparisons between them, plus the
  configured correlation pairs (lab vs. project, project vs. project,
  grade vs. issues);
- who fixes what: same-fixer share, fix latency in commits and days,
  template-origin issues;
- when issues appear and disappear: normalized positions, last-commit and
  last-day fixes, per-rule latency with critical flags.

Statistics that need an optional input (labs.csv, grades.csv, a second
project) are reported as skipped with the reason, never estimated.
"""

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .diagnostics import DEFAULT_CRITICAL_RULES, EMBEDDED, EXTERNAL
from .exceptions import InputError, ShareError, StatsError
from .gitminer import TEMPLATE, UNKNOWN
from .lifecycle import ISSUES_SCHEMA, IssueLifecycle
from .stats import (
    DEFAULT_CLUSTER_THRESHOLD,
    GroupProfile,
    cluster_groups,
    describe,
    mann_whitney_u,
    pearson_test,
)

logger = logging.getLogger(__name__)

METRICS = ("occurrence", "total")
REPORT_SCHEMA = 1
DAY_HISTOGRAM_BINS = 10
PROJECT = "project"
LAB = "lab"

TEST_METHOD_NOTE = (
    "Two-sided Mann-Whitney U with midranks for ties; exact enumeration when n1+n2 <= 12 "
    "and there are no ties, otherwise normal approximation with tie and continuity correction. "
    "Pearson r with a two-sided t-test p-value. Unfixed issues are excluded from latency statistics."
)


@dataclass(frozen=True)
class StatsConfig:
    labs: Path | None = None
    grades: Path | None = None
    cluster_threshold: float = DEFAULT_CLUSTER_THRESHOLD
    metric: str = "occurrence"
    critical_rules: frozenset[str] = DEFAULT_CRITICAL_RULES


@dataclass(frozen=True)
class RepoEntry:
    path: Path
    group_id: str
    members: tuple[str, ...]
    name: str
    scope: str = PROJECT
    project: str | None = None


@dataclass
class MinedRepo:
    entry: RepoEntry
    issues: list[IssueLifecycle] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.entry.name

    @property
    def occurrence(self) -> int:
        return len({lc.fingerprint for lc in self.issues})

    @property
    def total(self) -> int:
        return sum(len(lc.present_in) for lc in self.issues)

    def count(self, metric: str) -> int:
        return self.total if metric == "total" else self.occurrence

    def introduced_by(self, author_id: str) -> int:
        """Distinct issues whose introduction is blamed on `author_id`."""
        return len({lc.fingerprint for lc in self.issues if lc.introduced_by == author_id})


@dataclass
class CohortReport:
    report: dict
    figures: dict[str, pd.DataFrame]


# =======================================================================
# INPUTS
# =======================================================================


def read_issues(path: Path) -> list[IssueLifecycle]:
    issues = []
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            if record.get("schema") != ISSUES_SCHEMA:
                raise InputError(f"{path}:{number}: unsupported issue schema {record.get('schema')!r}")
            issues.append(IssueLifecycle.from_dict(record))
    return issues


def load_mined_repo(entry: RepoEntry, out_dir: Path) -> MinedRepo:
    """
    Reads `<out_dir>/<name>/issues.jsonl` and `metrics.json`.

    Raises:
        InputError: The repository has not been mined into `out_dir`.
    """
    repo_dir = Path(out_dir) / entry.name
    issues_path, metrics_path = repo_dir / "issues.jsonl", repo_dir / "metrics.json"
    if not issues_path.is_file() or not metrics_path.is_file():
        raise InputError(f"'{entry.name}' has no mined results in {repo_dir}")
    metrics = json.loads(metrics_path.read_text(encoding="utf-8"))
    return MinedRepo(entry, read_issues(issues_path), metrics)


def load_labs(path: Path) -> pd.DataFrame:
    """labs.csv: author_id,assessment_id,occurrence_count"""
    return _read_csv(path, {"author_id": str, "assessment_id": str, "occurrence_count": float})


def load_grades(path: Path) -> dict[str, float]:
    """grades.csv: group_id,grade"""
    frame = _read_csv(path, {"group_id": str, "grade": float})
    return dict(zip(frame["group_id"], frame["grade"].astype(float)))


def _read_csv(path: Path, columns: dict) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=columns, skipinitialspace=True)
    except (OSError, ValueError, pd.errors.ParserError) as exc:
        raise InputError(f"Cannot read '{path}': {exc}") from exc
    missing = [column for column in columns if column not in frame.columns]
    if missing:
        raise InputError(f"'{path}' lacks column(s) {', '.join(missing)}")
    if frame[list(columns)].isna().any().any():
        raise InputError(f"'{path}' has empty cells")
    return frame


# =======================================================================
# HELPERS
# =======================================================================


def _skipped(reason: str) -> dict:
    return {"skipped": reason}


def _u_test(a: Sequence[float], b: Sequence[float]) -> dict:
    try:
        return mann_whitney_u(a, b).to_dict()
    except StatsError as exc:
        return _skipped(str(exc))


def _correlation(pairs: list[tuple[float, float]]) -> dict:
    try:
        result = pearson_test([x for x, _ in pairs], [y for _, y in pairs])
    except StatsError as exc:
        return _skipped(str(exc))
    return {"r": result.statistic, "p_value": result.p_value, "n": result.n1}


def _summary(values: Iterable[float]) -> dict:
    return describe(list(values)).to_dict()


def _rule_table(repos: Sequence[MinedRepo], critical_rules: frozenset[str]) -> dict:
    fingerprints: dict[str, set] = defaultdict(set)
    totals: dict[str, int] = defaultdict(int)
    sources: dict[str, str] = {}
    for repo in repos:
        for lc in repo.issues:
            fingerprints[lc.rule_id].add((repo.name, lc.fingerprint))
            totals[lc.rule_id] += len(lc.present_in)
            sources.setdefault(lc.rule_id, lc.source)
    return {
        rule: {
            "occurrence": len(fingerprints[rule]),
            "total": totals[rule],
            "source": sources[rule],
            "critical": rule in critical_rules,
        }
        for rule in sorted(fingerprints)
    }


def _table_totals(table: dict) -> dict:
    return {
        "occurrence": sum(row["occurrence"] for row in table.values()),
        "total": sum(row["total"] for row in table.values()),
    }


# =======================================================================
# Contribution and issues
# =======================================================================


def _profiles(repos: Sequence[MinedRepo], grades: dict | None, cfg: StatsConfig):
    profiles, unclustered = [], []
    for repo in repos:
        profile = GroupProfile(
            group_id=repo.entry.group_id,
            members=repo.entry.members,
            loc_shares=dict(repo.metrics.get("loc_share", {})),
            issue_occurrence_count=repo.occurrence,
            issue_total_count=repo.total,
            member_issue_counts={member: repo.introduced_by(member) for member in repo.entry.members},
            grade=(grades or {}).get(repo.entry.group_id),
        )
        try:
            profiles.append((repo, cluster_groups([profile], cfg.cluster_threshold)[0]))
        except ShareError as exc:
            unclustered.append({"repo": repo.name, "reason": str(exc)})
    return profiles, unclustered


def _contribution(repos: Sequence[MinedRepo], labs: pd.DataFrame | None, grades: dict | None, cfg: StatsConfig) -> dict:
    metric = cfg.metric
    profiles, unclustered = _profiles(repos, grades, cfg)

    clusters = {}
    members = {}
    for label in (0, 1):
        chosen = [profile for _, profile in profiles if profile.cluster == label]
        counts = [profile.issue_total_count if metric == "total" else profile.issue_occurrence_count for profile in chosen]
        clusters[str(label)] = {"groups": sorted(p.group_id for p in chosen), metric: _summary(counts)}
        dominant = [p.member_issue_counts.get(p.dominant_member, 0) for p in chosen]
        minor = [p.member_issue_counts.get(p.minor_member, 0) for p in chosen]
        members[str(label)] = {
            "dominant": _summary(dominant),
            "minor": _summary(minor),
            "test": _u_test(dominant, minor),
        }

    cluster_counts = {
        label: [
            p.issue_total_count if metric == "total" else p.issue_occurrence_count
            for _, p in profiles
            if p.cluster == label
        ]
        for label in (0, 1)
    }

    return {
        "metric": metric,
        "groups": [
            {
                "repo": repo.name,
                "group_id": p.group_id,
                "cluster": p.cluster,
                "loc_shares": dict(sorted(p.loc_shares.items())),
                "dominant_member": p.dominant_member,
                "occurrence": p.issue_occurrence_count,
                "total": p.issue_total_count,
                "member_issues": dict(sorted(p.member_issue_counts.items())),
                "grade": p.grade,
            }
            for repo, p in profiles
        ],
        "unclustered": unclustered,
        "clusters": clusters,
        "cluster_test": _u_test(cluster_counts[0], cluster_counts[1]),
        "members": members,
        "pearson": _pearson_pairs(repos, labs, grades, metric),
    }


def _student_project_issues(repos: Sequence[MinedRepo]) -> dict[str, int]:
    counts: dict[str, int] = defaultdict(int)
    for repo in repos:
        for member in repo.entry.members:
            counts[member] += repo.introduced_by(member)
    return counts


def _pearson_pairs(repos, labs: pd.DataFrame | None, grades: dict | None, metric: str) -> dict:
    pairs: dict[str, dict] = {}
    project_issues = _student_project_issues(repos)

    if labs is None:
        pairs["lab_vs_project"] = _skipped("missing input: labs.csv")
        pairs["group_lab_vs_project"] = _skipped("missing input: labs.csv")
    else:
        lab_issues = labs.groupby("author_id")["occurrence_count"].sum().to_dict()
        pairs["lab_vs_project"] = _correlation(
            [(float(lab_issues[s]), float(project_issues[s])) for s in sorted(project_issues) if s in lab_issues]
        )
        pairs["group_lab_vs_project"] = _correlation(
            [
                (float(sum(lab_issues[m] for m in repo.entry.members)), float(repo.count(metric)))
                for repo in repos
                if all(m in lab_issues for m in repo.entry.members)
            ]
        )

    projects = sorted({repo.entry.project for repo in repos if repo.entry.project})
    if len(projects) < 2:
        pairs["project_vs_project"] = _skipped("missing input: needs repositories from two projects")
    else:
        first, second = projects[:2]
        per_project = {
            project: _student_project_issues([r for r in repos if r.entry.project == project])
            for project in (first, second)
        }
        both = sorted(set(per_project[first]) & set(per_project[second]))
        result = _correlation([(float(per_project[first][s]), float(per_project[second][s])) for s in both])
        result["projects"] = [first, second]
        pairs["project_vs_project"] = result

    if grades is None:
        pairs["grade_vs_issues"] = _skipped("missing input: grades.csv")
    else:
        pairs["grade_vs_issues"] = _correlation(
            [(float(grades[r.entry.group_id]), float(r.count(metric))) for r in repos if r.entry.group_id in grades]
        )
    return pairs


# =======================================================================
# Fixers and timelines
# =======================================================================


def _latency(issues: Sequence[IssueLifecycle]) -> dict:
    return {
        "commits": _summary(lc.alive_commit_count for lc in issues),
        "days": _summary(lc.alive_days for lc in issues),
    }


def _fixers(issues: Sequence[IssueLifecycle]) -> dict:
    fixed = [lc for lc in issues if lc.fixed]
    attributed = [lc for lc in fixed if lc.introduced_by not in (TEMPLATE, UNKNOWN, None)]
    same = [lc for lc in attributed if lc.same_fixer]
    different = [lc for lc in attributed if not lc.same_fixer]
    template = [lc for lc in issues if lc.introduced_by == TEMPLATE]
    template_fixed = [lc for lc in template if lc.fixed]

    share = {"fixed": len(attributed), "same": len(same), "different": len(different)}
    if attributed:
        share["percent"] = 100.0 * len(same) / len(attributed)
    else:
        share["percent"] = None
        share["note"] = "undefined: no fixed student-introduced issues"

    return {
        "same_fixer": share,
        "latency": {
            "same": _latency(same),
            "different": _latency(different),
            "commits_test": _u_test([lc.alive_commit_count for lc in same], [lc.alive_commit_count for lc in different]),
            "days_test": _u_test([lc.alive_days for lc in same], [lc.alive_days for lc in different]),
        },
        "template": {"count": len(template), "fixed": len(template_fixed), **_latency(template_fixed)},
    }


def _grouped_latency(issues: Sequence[IssueLifecycle], selector) -> tuple[list[int], list[int]]:
    first = [lc.alive_commit_count for lc in issues if selector(lc)]
    second = [lc.alive_commit_count for lc in issues if not selector(lc)]
    return first, second


def _timeline(issues: Sequence[IssueLifecycle], critical_rules: frozenset[str]) -> dict:
    fixed = [lc for lc in issues if lc.fixed]
    attributed = [lc for lc in fixed if lc.introduced_by not in (TEMPLATE, UNKNOWN, None)]
    same = [lc for lc in attributed if lc.same_fixer]
    different = [lc for lc in attributed if not lc.same_fixer]
    last_commit = [lc for lc in fixed if lc.fixed_in_last_commit]

    per_rule = {}
    by_rule: dict[str, list[IssueLifecycle]] = defaultdict(list)
    for lc in fixed:
        by_rule[lc.rule_id].append(lc)
    for rule in sorted(by_rule):
        summary = describe([lc.alive_commit_count for lc in by_rule[rule]])
        per_rule[rule] = {
            "mean": summary.mean,
            "sd": summary.sd,
            "count": summary.n,
            "critical": rule in critical_rules,
            "source": by_rule[rule][0].source,
        }

    critical, non_critical = _grouped_latency(fixed, lambda lc: lc.rule_id in critical_rules)
    embedded, external = _grouped_latency(fixed, lambda lc: lc.source == EMBEDDED)

    return {
        "intro_position": {
            "commits": {
                "same": _summary(lc.norm_intro_commit for lc in same),
                "different": _summary(lc.norm_intro_commit for lc in different),
                "test": _u_test([lc.norm_intro_commit for lc in same], [lc.norm_intro_commit for lc in different]),
            },
            "days": {
                "same": _summary(lc.norm_intro_day for lc in same),
                "different": _summary(lc.norm_intro_day for lc in different),
                "test": _u_test([lc.norm_intro_day for lc in same], [lc.norm_intro_day for lc in different]),
            },
        },
        "fixed_in_last_commit": {
            "count": len(last_commit),
            "same_fixer": sum(1 for lc in last_commit if lc.same_fixer),
        },
        "fixed_on_last_day": sum(1 for lc in fixed if lc.fixed_on_last_day),
        "introduced_on_last_day": sum(1 for lc in issues if lc.introduced_on_last_day),
        "intro_day": _summary(lc.norm_intro_day for lc in issues if lc.norm_intro_day is not None),
        "per_rule": per_rule,
        "critical_vs_noncritical": {
            "critical": _summary(critical),
            "non_critical": _summary(non_critical),
            "test": _u_test(critical, non_critical),
        },
        "embedded_vs_external": {
            EMBEDDED: _summary(embedded),
            EXTERNAL: _summary(external),
            "test": _u_test(embedded, external),
        },
    }


# =======================================================================
# FIGURE SERIES
# =======================================================================


def _figures(repos: Sequence[MinedRepo], critical_rules: frozenset[str]) -> dict[str, pd.DataFrame]:
    latency_rows, timeline_rows, intro_days = [], [], []
    for repo in sorted(repos, key=lambda r: r.name):
        for lc in sorted(repo.issues, key=lambda lc: lc.id):
            timeline_rows.append(
                {
                    "repo": repo.name,
                    "issue_id": lc.id,
                    "rule_id": lc.rule_id,
                    "norm_intro_commit": lc.norm_intro_commit,
                    "norm_fix_commit": lc.norm_fix_commit,
                    "norm_intro_day": lc.norm_intro_day,
                    "norm_fix_day": lc.norm_fix_day,
                }
            )
            if lc.norm_intro_day is not None:
                intro_days.append(lc.norm_intro_day)
            if lc.fixed:
                latency_rows.append(
                    {
                        "repo": repo.name,
                        "issue_id": lc.id,
                        "rule_id": lc.rule_id,
                        "critical": lc.rule_id in critical_rules,
                        "same_fixer": lc.same_fixer,
                        "commits": lc.alive_commit_count,
                        "days": lc.alive_days,
                    }
                )

    counts, edges = np.histogram(intro_days, bins=DAY_HISTOGRAM_BINS, range=(0.0, 1.0))
    histogram = pd.DataFrame({"bin_start": edges[:-1], "bin_end": edges[1:], "count": counts})
    return {
        "fig_fix_latency.csv": pd.DataFrame(
            latency_rows, columns=["repo", "issue_id", "rule_id", "critical", "same_fixer", "commits", "days"]
        ),
        "fig_intro_removed.csv": pd.DataFrame(
            timeline_rows,
            columns=["repo", "issue_id", "rule_id", "norm_intro_commit", "norm_fix_commit", "norm_intro_day", "norm_fix_day"],
        ),
        "fig_day_hist.csv": histogram,
    }


# =======================================================================


def cohort_summary(
    repos: Sequence[MinedRepo],
    labs: pd.DataFrame | None = None,
    grades: dict[str, float] | None = None,
    cfg: StatsConfig = StatsConfig(),
    skipped: Sequence[dict] = (),
) -> CohortReport:
    """
    Builds the cohort report.

    Args:
        repos (Sequence[MinedRepo]): Mined repositories, project and lab scope.
        labs (pd.DataFrame | None): labs.csv contents, if available.
        grades (dict | None): grade per group id, if available.
        cfg (StatsConfig): Threshold, metric and critical rule set.
        skipped (Sequence[dict]): Manifest repositories left out, with reasons.

    Returns:
        CohortReport: JSON-ready report dict and the figure tables.

    Raises:
        InputError: No repository to summarize.
    """
    if not repos:
        raise InputError("The cohort has no mined repositories")

    repos = sorted(repos, key=lambda repo: repo.name)
    project_repos = [repo for repo in repos if repo.entry.scope == PROJECT]
    lab_repos = [repo for repo in repos if repo.entry.scope == LAB]
    project_issues = [lc for repo in project_repos for lc in repo.issues]
    critical_rules = frozenset(cfg.critical_rules)

    table = {
        PROJECT: _rule_table(project_repos, critical_rules),
        LAB: _rule_table(lab_repos, critical_rules),
        "all": _rule_table(repos, critical_rules),
    }
    table["totals"] = {scope: _table_totals(table[scope]) for scope in (PROJECT, LAB, "all")}

    report = {
        "metadata": {
            "schema": REPORT_SCHEMA,
            "repos": [repo.name for repo in repos],
            "skipped_repos": list(skipped),
            "metric": cfg.metric,
            "cluster_threshold": cfg.cluster_threshold,
            "critical_rules": sorted(critical_rules),
            "methods": TEST_METHOD_NOTE,
        },
        "table": table,
        "contribution": _contribution(project_repos, labs, grades, cfg),
        "fixers": _fixers(project_issues),
        "timeline": _timeline(project_issues, critical_rules),
        "counts": {
            "issues": len(project_issues),
            "fixed": sum(1 for lc in project_issues if lc.fixed),
            "unfixed": sum(1 for lc in project_issues if not lc.fixed),
            "unknown_attribution": sum(1 for lc in project_issues if lc.introduced_by == UNKNOWN),
            "template_origin": sum(1 for lc in project_issues if lc.introduced_by == TEMPLATE),
        },
    }
    logger.info("Cohort of %d repositories, %d project issues", len(repos), len(project_issues))
    return CohortReport(report, _figures(project_repos, critical_rules))
