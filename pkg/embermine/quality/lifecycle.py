"""
lifecycle.py
============

Turns per-commit diagnostics into issue lifecycles.

An issue is identified across commits by its Fingerprint: rule, path (renames
followed), symbol, a context hash and an ordinal. Line numbers are not part
of it, so edits elsewhere in a file do not create new issues.

A lifecycle opens at the first commit where a fingerprint is seen and closes
at the first commit where it is absent (the fix commit). A fingerprint that
comes back later opens a new lifecycle.
"""

import dataclasses
import hashlib
import logging
import posixpath
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from .diagnostics import EMBEDDED, EXTERNAL, NO_INCLUDE_GUARD, Diagnostic
from .exceptions import BlameRangeError, ConfigError, ObjectMissing
from .gitminer import TEMPLATE, UNKNOWN, CommitRecord, RenameMap
from .lexparse import COMMENT, SourceModel

logger = logging.getLogger(__name__)

ISSUES_SCHEMA = 1
SECONDS_PER_DAY = 86400.0
FILE_SCOPE = "<file>"
CONTEXT_LINES = 2
# findings about the file as a whole; their line carries no meaning
FILE_LEVEL_RULES = frozenset({NO_INCLUDE_GUARD})


# =======================================================================
# FINGERPRINTS
# =======================================================================


@dataclass(frozen=True, order=True)
class Fingerprint:
    rule_id: str
    path: str
    symbol: str
    context_hash: str
    ordinal: int = 0

    @property
    def key(self) -> str:
        raw = "\0".join([self.rule_id, self.path, self.symbol, self.context_hash, str(self.ordinal)])
        return hashlib.sha1(raw.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Fingerprint":
        return cls(**data)


class _LineIndex:
    """Normalized token text per line, for the lines that carry code."""

    def __init__(self, model: SourceModel):
        lines: dict[int, list[str]] = defaultdict(list)
        for token in model.tokens:
            if token.kind != COMMENT:
                lines[token.line].append(token.text)
        self.text = {line: " ".join(texts) for line, texts in lines.items()}
        self.significant = sorted(self.text)

    def window(self, line: int) -> str:
        above = [n for n in self.significant if n < line][-CONTEXT_LINES:]
        below = [n for n in self.significant if n > line][:CONTEXT_LINES]
        return "\n".join(self.text.get(n, "") for n in above + [line] + below)


def _context(diag: Diagnostic, model: SourceModel | None, index: _LineIndex | None) -> str:
    if diag.rule_id in FILE_LEVEL_RULES:
        return FILE_SCOPE
    if diag.symbol:
        fn = model.function_at(diag.line) if model else None
        return fn.name if fn else FILE_SCOPE
    if model is None or index is None or diag.line <= 0:
        return "<none>"
    return hashlib.sha1(index.window(diag.line).encode()).hexdigest()[:16]


def fingerprint_all(
    diagnostics: Iterable[Diagnostic], models: dict[str, SourceModel]
) -> list[tuple[Fingerprint, Diagnostic]]:
    """
    Fingerprints every diagnostic of one commit. Diagnostics sharing rule,
    path, symbol and context get ordinals 0, 1, ... in line order.
    """
    indexes: dict[str, _LineIndex] = {}
    groups: dict[tuple, list[Diagnostic]] = defaultdict(list)
    for diag in sorted(diagnostics):
        model = models.get(diag.path)
        index = None
        if model is not None and not diag.symbol:
            index = indexes.setdefault(diag.path, _LineIndex(model))
        groups[(diag.rule_id, diag.path, diag.symbol, _context(diag, model, index))].append(diag)

    result = []
    for (rule_id, path, symbol, context), members in groups.items():
        for ordinal, diag in enumerate(members):
            result.append((Fingerprint(rule_id, path, symbol, context, ordinal), diag))
    return sorted(result, key=lambda pair: (pair[1], pair[0]))


def fingerprint(diag: Diagnostic, model: SourceModel | None) -> Fingerprint:
    """Fingerprint of a single diagnostic (ordinal 0)."""
    index = _LineIndex(model) if model is not None and not diag.symbol else None
    return Fingerprint(diag.rule_id, diag.path, diag.symbol, _context(diag, model, index))


# =======================================================================
# TIMELINES
# =======================================================================


@dataclass
class Observation:
    """
    Everything known about one commit: its record, the fingerprinted
    diagnostics, which analyzers produced a result, and the renames since
    the previous commit.
    """

    commit: CommitRecord
    entries: list[tuple[Fingerprint, Diagnostic]] = field(default_factory=list)
    sources: frozenset[str] = frozenset({EMBEDDED, EXTERNAL})
    renames: RenameMap | None = None


def observe(
    commit: CommitRecord,
    diagnostics: Iterable[Diagnostic],
    models: dict[str, SourceModel],
    sources: Iterable[str] = (EMBEDDED, EXTERNAL),
    renames: RenameMap | None = None,
) -> Observation:
    return Observation(commit, fingerprint_all(diagnostics, models), frozenset(sources), renames)


@dataclass
class IssueLifecycle:
    fingerprint: Fingerprint
    source: str
    critical: bool
    introduced_index: int
    introduced_hash: str
    introduced_timestamp: int
    introduced_path: str
    introduced_line: int
    present_in: list[int] = field(default_factory=list)
    last_path: str = ""
    fixed_index: int | None = None
    fixed_hash: str | None = None
    fixed_timestamp: int | None = None
    fixed_author: str | None = None
    direct_fix: bool | None = None
    introduced_by: str | None = None
    fixed_by: str | None = None
    same_fixer: bool | None = None
    norm_intro_commit: float | None = None
    norm_fix_commit: float | None = None
    norm_intro_day: float | None = None
    norm_fix_day: float | None = None
    fixed_in_last_commit: bool = False
    fixed_on_last_day: bool = False
    introduced_on_last_day: bool = False

    @property
    def rule_id(self) -> str:
        return self.fingerprint.rule_id

    @property
    def fixed(self) -> bool:
        return self.fixed_index is not None

    @property
    def alive_commit_count(self) -> int | None:
        return None if self.fixed_index is None else self.fixed_index - self.introduced_index

    @property
    def alive_days(self) -> float | None:
        if self.fixed_timestamp is None:
            return None
        return (self.fixed_timestamp - self.introduced_timestamp) / SECONDS_PER_DAY

    @property
    def id(self) -> str:
        return f"{self.fingerprint.key}@{self.introduced_index}"

    def to_dict(self) -> dict:
        data = {"schema": ISSUES_SCHEMA, "id": self.id, "rule_id": self.rule_id}
        for item in dataclasses.fields(self):
            value = getattr(self, item.name)
            data[item.name] = value.to_dict() if isinstance(value, Fingerprint) else value
        data["fixed"] = self.fixed
        data["alive_commit_count"] = self.alive_commit_count
        data["alive_days"] = self.alive_days
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "IssueLifecycle":
        names = {item.name for item in dataclasses.fields(cls)}
        values = {key: value for key, value in data.items() if key in names}
        values["fingerprint"] = Fingerprint.from_dict(data["fingerprint"])
        return cls(**values)


@dataclass
class _Open:
    lifecycle: IssueLifecycle
    misses: int = 0
    first_miss: CommitRecord | None = None


class _PathAliases:
    """
    Maps the current path of a file to the path it had when first seen. A path
    vacated by a rename gets a fresh alias, so a new file created there does
    not resume the lifecycles that moved away.
    """

    def __init__(self):
        self._alias: dict[str, str] = {}

    def __call__(self, path: str) -> str:
        return self._alias.get(path, path)

    def follow(self, renames: RenameMap | None, index: int = 0) -> None:
        if not renames:
            return
        moves = dict(renames.exact)
        for new, olds in renames.ambiguous.items():
            same_name = [old for old in olds if posixpath.basename(old) == posixpath.basename(new)]
            if len(same_name) == 1:
                moves[new] = same_name[0]
        updates = {new: self(old) for new, old in moves.items()}
        vacated = {old: f"{old}@{index}" for old in moves.values() if old not in moves}
        self._alias.update(vacated)
        self._alias.update(updates)


def _close(entry: _Open) -> IssueLifecycle:
    lifecycle = entry.lifecycle
    fix = entry.first_miss
    lifecycle.fixed_index = fix.index
    lifecycle.fixed_hash = fix.hash
    lifecycle.fixed_timestamp = fix.timestamp
    lifecycle.fixed_author = fix.author_id
    lifecycle.direct_fix = lifecycle.last_path in fix.changed_paths
    return lifecycle


def _introduction_order(lc: IssueLifecycle) -> tuple:
    return lc.introduced_index, lc.fingerprint


def build_timelines(observations: list[Observation], gap: int = 0) -> list[IssueLifecycle]:
    """
    Folds per-commit observations into lifecycles.

    Args:
        observations (list[Observation]): One per commit, in index order.
        gap (int): Number of consecutive absent commits tolerated before a
            lifecycle closes. Absent commits inside a tolerated gap are not
            part of `present_in`. An issue still absent at the last commit
            is closed at its first absence, however short the gap.

    Returns:
        list[IssueLifecycle]: Closed lifecycles first by introduction, then
        the ones still open at the last commit (unfixed).
    """
    aliases = _PathAliases()
    open_issues: dict[Fingerprint, _Open] = {}
    finished: list[IssueLifecycle] = []

    for observation in observations:
        commit = observation.commit
        aliases.follow(observation.renames, commit.index)

        current: dict[Fingerprint, Diagnostic] = {}
        for fp, diag in observation.entries:
            key = dataclasses.replace(fp, path=aliases(fp.path))
            if key in current:
                # two current paths share an alias; keep both issues
                key = fp
            current[key] = diag

        for fp, diag in current.items():
            entry = open_issues.get(fp)
            if entry is None:
                entry = _Open(
                    IssueLifecycle(
                        fingerprint=fp,
                        source=diag.source,
                        critical=diag.critical,
                        introduced_index=commit.index,
                        introduced_hash=commit.hash,
                        introduced_timestamp=commit.timestamp,
                        introduced_path=diag.path,
                        introduced_line=diag.line,
                    )
                )
                open_issues[fp] = entry
            entry.misses = 0
            entry.first_miss = None
            entry.lifecycle.present_in.append(commit.index)
            entry.lifecycle.last_path = diag.path

        for fp in list(open_issues):
            if fp in current:
                continue
            entry = open_issues[fp]
            # no result from this analyzer here: neither present nor absent
            if entry.lifecycle.source not in observation.sources:
                continue
            entry.misses += 1
            if entry.first_miss is None:
                entry.first_miss = commit
            if entry.misses > gap:
                finished.append(_close(entry))
                del open_issues[fp]

    unfixed = []
    for entry in open_issues.values():
        if entry.first_miss is not None:
            # absent through the last commit, still inside the gap
            finished.append(_close(entry))
        else:
            unfixed.append(entry.lifecycle)
    return sorted(finished, key=_introduction_order) + sorted(unfixed, key=_introduction_order)


# =======================================================================
# ATTRIBUTION AND NORMALIZATION
# =======================================================================


def attribute(lifecycle: IssueLifecycle, miner) -> IssueLifecycle:
    """
    Fills introduced_by (blame of the issue line at the introducing commit),
    fixed_by (author of the fix commit) and same_fixer. A failed blame is
    recorded as UNKNOWN.
    """
    try:
        if lifecycle.introduced_line <= 0:
            raise BlameRangeError("diagnostic has no line")
        introduced_by = miner.blame_line(
            lifecycle.introduced_hash, lifecycle.introduced_path, lifecycle.introduced_line
        ).author_id
    except (BlameRangeError, ObjectMissing) as exc:
        logger.debug("Blame failed for %s: %s", lifecycle.id, exc)
        introduced_by = UNKNOWN

    fixed_by = lifecycle.fixed_author if lifecycle.fixed else None
    same_fixer = None
    if lifecycle.fixed:
        same_fixer = introduced_by == fixed_by and introduced_by != TEMPLATE
    return dataclasses.replace(lifecycle, introduced_by=introduced_by, fixed_by=fixed_by, same_fixer=same_fixer)


@dataclass(frozen=True)
class ProjectDates:
    """Start and deadline as UTC epoch seconds; None means "use the commits"."""

    start: float | None = None
    deadline: float | None = None


def _clamp(value: float) -> float:
    return min(1.0, max(0.0, value))


def normalize(
    lifecycles: list[IssueLifecycle], commits: list[CommitRecord], dates: ProjectDates | None = None
) -> list[IssueLifecycle]:
    """
    Places every lifecycle on the project's commit axis (i / (N-1)) and day
    axis ((t - start) / (deadline - start), clamped to [0, 1]).

    Raises:
        ConfigError: Configured dates put the deadline at or before the start.
    """
    if not commits:
        return list(lifecycles)
    dates = dates or ProjectDates()
    start = dates.start if dates.start is not None else commits[0].timestamp
    deadline = dates.deadline if dates.deadline is not None else commits[-1].timestamp
    configured = dates.start is not None or dates.deadline is not None
    if configured and deadline <= start:
        raise ConfigError("project deadline must be after the project start")

    span = deadline - start
    last_index = len(commits) - 1
    last_day_from = deadline - SECONDS_PER_DAY

    def commit_position(index: int) -> float:
        return index / last_index if last_index > 0 else 0.0

    def day_position(timestamp: float) -> float:
        return _clamp((timestamp - start) / span) if span > 0 else 0.0

    result = []
    for lc in lifecycles:
        updates = {
            "norm_intro_commit": commit_position(lc.introduced_index),
            "norm_intro_day": day_position(lc.introduced_timestamp),
            "introduced_on_last_day": lc.introduced_timestamp >= last_day_from,
        }
        if lc.fixed:
            updates.update(
                norm_fix_commit=commit_position(lc.fixed_index),
                norm_fix_day=day_position(lc.fixed_timestamp),
                fixed_in_last_commit=lc.fixed_index == last_index,
                fixed_on_last_day=lc.fixed_timestamp >= last_day_from,
            )
        result.append(dataclasses.replace(lc, **updates))
    return result


# =======================================================================
# METRICS
# =======================================================================


@dataclass
class RuleMetrics:
    occurrence: int = 0
    total: int = 0


@dataclass
class IssueMetrics:
    per_rule: dict[str, RuleMetrics] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {rule: dataclasses.asdict(m) for rule, m in sorted(self.per_rule.items())}

    @property
    def occurrence(self) -> int:
        return sum(m.occurrence for m in self.per_rule.values())

    @property
    def total(self) -> int:
        return sum(m.total for m in self.per_rule.values())


def compute_metrics(lifecycles: list[IssueLifecycle], observations: list[Observation]) -> IssueMetrics:
    """
    occurrence: distinct fingerprints ever seen, per rule.
    total: per-commit instance counts summed over commits, per rule.
    """
    metrics = IssueMetrics()
    fingerprints: dict[str, set[Fingerprint]] = defaultdict(set)
    for lc in lifecycles:
        fingerprints[lc.rule_id].add(lc.fingerprint)
    totals: Counter = Counter()
    for observation in observations:
        totals.update(fp.rule_id for fp, _ in observation.entries)
    for rule in sorted(set(fingerprints) | set(totals)):
        metrics.per_rule[rule] = RuleMetrics(len(fingerprints[rule]), totals[rule])

    if not check_conservation(lifecycles, observations):
        logger.error("Instance counts disagree between lifecycles and commits")
    return metrics


def check_conservation(lifecycles: list[IssueLifecycle], observations: list[Observation]) -> bool:
    """Sum of |present_in| over lifecycles equals the number of per-commit instances."""
    return sum(len(lc.present_in) for lc in lifecycles) == sum(len(o.entries) for o in observations)
