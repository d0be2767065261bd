"""
pipeline.py
===========

Orchestration behind the management commands.

check_tree() analyzes one working tree. mine_repo() sweeps a repository's
history:

    enumerate -> snapshot -> analyze -> fingerprint -> timelines
              -> attribute -> normalize -> metrics

Commit analysis runs on a thread pool. Everything that touches GitPython or
the database (blob reads, renames, blame, cache writes) stays on the calling
thread, and the timeline fold is a sequential pass in commit order.
"""

import hashlib
import json
import logging
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from django.conf import settings
from django.db import transaction

from .cohort import RepoEntry
from .config import RunConfig
from .diagnostics import EMBEDDED, EXTERNAL, Diagnostic
from .exceptions import AnalyzerError, InputError, ReportParseError
from .extingest import (
    ANALYZER_NAME,
    ExternalReport,
    analyzer_version,
    read_external_report,
    run_external_analyzer,
)
from .gitminer import UNKNOWN, CommitRecord, RepositoryMiner, is_source_path
from .lexparse import SourceModel, decode_source, parse_source, registration_targets
from .lifecycle import (
    Fingerprint,
    IssueLifecycle,
    IssueMetrics,
    Observation,
    attribute,
    build_timelines,
    check_conservation,
    compute_metrics,
    fingerprint_all,
    normalize,
)
from .models import CommitAnalysis
from .reports import write_repo_artifacts
from .rules import run_embedded_rules

logger = logging.getLogger(__name__)

CACHE_SCHEMA = 1
OUTPUT_TRUNCATE = 2000

# External analyzer modes recorded in metrics.json
RUN = "run"
REPORTS = "reports"
DISABLED = "disabled"
UNAVAILABLE = "unavailable"


@dataclass
class TreeAnalysis:
    """Result of analyzing one source tree."""

    diagnostics: list[Diagnostic] = field(default_factory=list)
    models: dict[str, SourceModel] = field(default_factory=dict)
    sources: frozenset[str] = frozenset({EMBEDDED})
    warnings: list[str] = field(default_factory=list)
    external_error: AnalyzerError | None = None


def analyze_sources(
    files: dict[str, bytes],
    cfg: RunConfig,
    tree_dir: Path | None = None,
    external: ExternalReport | None = None,
    run_external: bool = False,
) -> TreeAnalysis:
    """
    Runs the embedded rules, and the external analyzer when asked, over the
    `.c`/`.h` files of one tree.

    Args:
        files (dict[str, bytes]): Contents keyed by tree-relative path.
        cfg (RunConfig): Run configuration.
        tree_dir (Path | None): The same files on disk, for the external
            analyzer. Written to a temporary directory when missing.
        external (ExternalReport | None): A report produced earlier; used
            instead of running the analyzer.
        run_external (bool): Run the analyzer when no report is given.

    Returns:
        TreeAnalysis: Sorted diagnostics, parsed models and the analyzers that
        produced a result. An analyzer error is returned, not raised.
    """
    result = TreeAnalysis()
    for path in sorted(files):
        text = decode_source(files[path])
        if text is None:
            result.warnings.append(f"{path}: not UTF-8 or Windows-1252 text, skipped")
            continue
        result.models[path] = parse_source(text, path)

    registered = registration_targets(result.models.values(), cfg.rules.isr)
    for model in result.models.values():
        result.diagnostics += run_embedded_rules(model, cfg.rules, registered)

    if external is None and run_external:
        try:
            external = _run_external(files, cfg, tree_dir)
        except AnalyzerError as exc:
            result.external_error = exc
    if external is not None:
        # the analyzer repeats entries once per preprocessor configuration
        result.diagnostics += dict.fromkeys(external.diagnostics(cfg.rules.critical_rules))
        result.sources = frozenset({EMBEDDED, EXTERNAL})

    result.diagnostics.sort()
    return result


def _run_external(files: dict[str, bytes], cfg: RunConfig, tree_dir: Path | None) -> ExternalReport:
    if tree_dir is not None:
        return run_external_analyzer(tree_dir, cfg.external)
    with tempfile.TemporaryDirectory(prefix="embermine-") as tmp:
        for path, data in files.items():
            target = Path(tmp) / path
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
        return run_external_analyzer(Path(tmp), cfg.external)


# =======================================================================
# CHECK
# =======================================================================


def read_tree(path: Path) -> dict[str, bytes]:
    """
    The `.c`/`.h` files below `path` (or `path` itself), keyed by their
    POSIX path relative to the tree. Hidden directories are skipped.

    Raises:
        InputError: `path` does not exist.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"'{path}' does not exist")
    if path.is_file():
        return {path.name: path.read_bytes()} if is_source_path(path.name) else {}
    files = {}
    for item in sorted(path.rglob("*")):
        relative = item.relative_to(path)
        if any(part.startswith(".") for part in relative.parts[:-1]):
            continue
        if item.is_file() and is_source_path(item.name):
            files[relative.as_posix()] = item.read_bytes()
    return files


def check_tree(
    path: Path, cfg: RunConfig, external_report: Path | None = None, use_external: bool = True
) -> TreeAnalysis:
    """
    Analyzes a working tree. A report file replaces the analyzer run; with
    `use_external` off (or external.enabled false) only embedded rules run.

    Raises:
        InputError: `path` does not exist.
        ReportParseError: `external_report` is not well-formed XML.
    """
    path = Path(path)
    files = read_tree(path)
    report = read_external_report(external_report) if external_report else None
    run_external = use_external and cfg.external.enabled and report is None
    tree_dir = path if path.is_dir() else None
    result = analyze_sources(files, cfg, tree_dir, report, run_external)
    logger.info("%s: %d file(s), %d diagnostic(s)", path, len(files), len(result.diagnostics))
    return result


# =======================================================================
# MINE
# =======================================================================


@dataclass
class MineResult:
    name: str
    commits: list[CommitRecord]
    lifecycles: list[IssueLifecycle]
    metrics: dict
    failures: dict
    out_dir: Path | None = None


@dataclass
class _CommitWork:
    commit: CommitRecord
    cache_key: str
    payload: dict | None = None
    files: dict[str, bytes] | None = None
    report: ExternalReport | None = None
    report_missing: bool = False


class _ExternalMode:
    """How the external analyzer takes part in one sweep."""

    def __init__(self, cfg: RunConfig, reports_dir: Path | None, use_external: bool = True):
        self.mode = DISABLED
        self.version = ""
        self.signature = "off"
        self.reports_dir = Path(reports_dir) if reports_dir else None
        self.unavailable: AnalyzerError | None = None
        if self.reports_dir is not None:
            if not self.reports_dir.is_dir():
                raise InputError(f"'{self.reports_dir}' is not a directory")
            self.mode = REPORTS
        elif use_external and cfg.external.enabled:
            try:
                self.version = analyzer_version(cfg.external)
                self.mode = RUN
                self.signature = json.dumps([ANALYZER_NAME, self.version, list(cfg.external.extra_args)])
            except AnalyzerError as exc:
                logger.warning("%s; mining with embedded rules only", exc)
                self.mode = UNAVAILABLE
                self.unavailable = exc

    def report_path(self, commit: CommitRecord) -> Path:
        return self.reports_dir / f"{commit.hash}.xml"

    def signature_for(self, commit: CommitRecord) -> str:
        if self.mode != REPORTS:
            return self.signature
        path = self.report_path(commit)
        if not path.is_file():
            return "report:missing"
        return "report:" + hashlib.sha256(path.read_bytes()).hexdigest()

    def to_dict(self) -> dict:
        return {"name": ANALYZER_NAME, "mode": self.mode, "version": self.version}


def cache_key(tree_key: str, cfg: RunConfig, external_signature: str) -> str:
    raw = json.dumps([tree_key, cfg.rules.digest(), external_signature, settings.EMBERMINE_VERSION, CACHE_SCHEMA])
    return hashlib.sha256(raw.encode()).hexdigest()


def _encode(analysis: TreeAnalysis, entries: list[tuple[Fingerprint, Diagnostic]]) -> dict:
    return {
        "entries": [{"fingerprint": fp.to_dict(), "diagnostic": diag.to_dict()} for fp, diag in entries],
        "sources": sorted(analysis.sources),
        "warnings": list(analysis.warnings),
    }


def _decode(payload: dict) -> tuple[list[tuple[Fingerprint, Diagnostic]], frozenset[str], list[str]]:
    entries = [
        (Fingerprint.from_dict(item["fingerprint"]), Diagnostic.from_dict(item["diagnostic"]))
        for item in payload["entries"]
    ]
    return entries, frozenset(payload["sources"]), list(payload.get("warnings", []))


def _analyze_commit(work: _CommitWork, cfg: RunConfig, run_external: bool) -> tuple[dict, AnalyzerError | None]:
    """Worker body: pure computation over blobs already read from the repository."""
    analysis = analyze_sources(work.files, cfg, external=work.report, run_external=run_external)
    entries = fingerprint_all(analysis.diagnostics, analysis.models)
    return _encode(analysis, entries), analysis.external_error


def _failure(commit: CommitRecord | None, kind: str, message: str, output: str = "") -> dict:
    return {
        "commit": commit.hash if commit else None,
        "index": commit.index if commit else None,
        "kind": kind,
        "message": message,
        "output": output[:OUTPUT_TRUNCATE],
    }


def _store(work: _CommitWork, repo_name: str, version: str) -> None:
    with transaction.atomic():
        CommitAnalysis.objects.update_or_create(
            cache_key=work.cache_key,
            defaults={
                "repo": repo_name,
                "commit_hash": work.commit.hash,
                "analyzer_version": version,
                "payload": work.payload,
            },
        )


def mine_repo(
    entry: RepoEntry | Path | str,
    cfg: RunConfig = RunConfig(),
    external_reports: Path | None = None,
    out_dir: Path | None = None,
    workers: int | None = None,
    use_external: bool = True,
    write: bool = True,
) -> MineResult:
    """
    Mines one repository and writes `<out>/<name>/{issues.jsonl,
    metrics.json, failures.json}`.

    Per-commit analyzer problems never abort the sweep: they are listed in
    failures.json, and the external analyzer's issues at those commits are
    treated as unobserved rather than fixed.

    Args:
        entry (RepoEntry | Path | str): Manifest entry or repository path.
        cfg (RunConfig): Run configuration.
        external_reports (Path | None): Directory of `<commit hash>.xml`
            analyzer reports to ingest instead of running the analyzer.
        out_dir (Path | None): Output root; defaults to the configured one.
        workers (int | None): Analysis threads; defaults to the configured
            count.
        use_external (bool): Set to False to skip the external analyzer.
        write (bool): Write the artifacts.

    Raises:
        RepoOpenError: The path is not a repository or the branch is missing.
        InputError: `external_reports` is not a directory.
    """
    if not isinstance(entry, RepoEntry):
        path = Path(entry)
        entry = RepoEntry(path=path, group_id=path.name, members=(), name=path.name)

    miner = RepositoryMiner(entry.path, cfg.author_map(), cfg.branch)
    commits = miner.enumerate_commits(cfg.total_order)
    external = _ExternalMode(cfg, external_reports, use_external)
    failures: list[dict] = []
    warnings: list[dict] = []
    if external.unavailable is not None:
        failures.append(_failure(None, external.unavailable.kind, str(external.unavailable)))

    observations = _sweep(miner, entry.name, commits, cfg, external, workers or cfg.resolved_workers(),
                          failures, warnings)

    lifecycles = build_timelines(observations, cfg.gap)
    lifecycles = [attribute(lc, miner) for lc in lifecycles]
    lifecycles = normalize(lifecycles, commits, cfg.dates)
    issue_metrics = compute_metrics(lifecycles, observations)

    metrics = _metrics_document(entry, commits, lifecycles, observations, issue_metrics, miner, external)
    failure_document = {"analyzer": external.to_dict(), "failures": failures, "warnings": warnings}
    result = MineResult(entry.name, commits, lifecycles, metrics, failure_document)
    if write:
        result.out_dir = write_repo_artifacts(
            Path(out_dir or cfg.resolved_output_dir()) / entry.name, lifecycles, metrics, failure_document
        )
    logger.info(
        "%s: %d commit(s), %d issue(s), %d failure(s)", entry.name, len(commits), len(lifecycles), len(failures)
    )
    return result


def _sweep(
    miner: RepositoryMiner,
    repo_name: str,
    commits: list[CommitRecord],
    cfg: RunConfig,
    external: _ExternalMode,
    workers: int,
    failures: list[dict],
    warnings: list[dict],
) -> list[Observation]:
    observations: list[Observation] = []
    hits = 0
    batch_size = max(1, workers) * 2
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for start in range(0, len(commits), batch_size):
            batch = [_prepare(miner, commit, cfg, external, failures) for commit in commits[start : start + batch_size]]
            futures = {
                work.commit.hash: pool.submit(_analyze_commit, work, cfg, external.mode == RUN)
                for work in batch
                if work.payload is None
            }
            hits += len(batch) - len(futures)
            for work in batch:
                renames = _renames(miner, commits, work.commit)
                if work.payload is None:
                    try:
                        work.payload, error = futures[work.commit.hash].result()
                    except Exception as exc:
                        logger.exception("Analysis of %s failed", work.commit.hash[:10])
                        failures.append(_failure(work.commit, "AnalysisError", str(exc)))
                        # nothing observed: every open issue stays open
                        observations.append(Observation(work.commit, [], frozenset(), renames))
                        continue
                    # incomplete results are retried on the next run
                    if error is not None:
                        failures.append(_failure(work.commit, error.kind, str(error), error.output))
                    elif not work.report_missing:
                        _store(work, repo_name, external.version)
                # a failed external run leaves EXTERNAL out of the payload's sources
                entries, sources, notes = _decode(work.payload)
                warnings.extend({"commit": work.commit.hash, "message": note} for note in notes)
                observations.append(Observation(work.commit, entries, sources, renames))
    logger.info("%s: %d of %d commit(s) served from the analysis cache", repo_name, hits, len(commits))
    return observations


def _prepare(
    miner: RepositoryMiner, commit: CommitRecord, cfg: RunConfig, external: _ExternalMode, failures: list[dict]
) -> _CommitWork:
    """Reads everything a worker needs for `commit`, or its cached result."""
    work = _CommitWork(commit, cache_key(miner.source_tree_key(commit.hash), cfg, external.signature_for(commit)))
    work.payload = CommitAnalysis.lookup(work.cache_key)
    if work.payload is not None:
        return work
    work.files = miner.read_sources(commit.hash)
    if external.mode == REPORTS:
        path = external.report_path(commit)
        if not path.is_file():
            work.report_missing = True
            failures.append(_failure(commit, "ReportMissing", f"No analyzer report at {path}"))
        else:
            try:
                work.report = read_external_report(path)
            except ReportParseError as exc:
                work.report_missing = True
                failures.append(_failure(commit, "ReportParseError", str(exc)))
    return work


def _renames(miner: RepositoryMiner, commits: list[CommitRecord], commit: CommitRecord):
    if commit.index == 0:
        return None
    return miner.renames(commits[commit.index - 1].hash, commit.hash)


def _metrics_document(
    entry: RepoEntry,
    commits: list[CommitRecord],
    lifecycles: list[IssueLifecycle],
    observations: list[Observation],
    issue_metrics: IssueMetrics,
    miner: RepositoryMiner,
    external: _ExternalMode,
) -> dict:
    return {
        "schema": CACHE_SCHEMA,
        "repo": entry.name,
        "group_id": entry.group_id,
        "members": list(entry.members),
        "commits": len(commits),
        "head": commits[-1].hash if commits else None,
        "per_rule": issue_metrics.to_dict(),
        "occurrence": issue_metrics.occurrence,
        "total": issue_metrics.total,
        "issues": len(lifecycles),
        "fixed": sum(1 for lc in lifecycles if lc.fixed),
        "unknown_attribution": sum(1 for lc in lifecycles if lc.introduced_by == UNKNOWN),
        "conserved": check_conservation(lifecycles, observations),
        "loc_share": miner.loc_share(commits[-1].hash) if commits else {},
        "analyzer": external.to_dict(),
    }
