"""
config.py
=========

Loads the run configuration (one TOML file) and the cohort manifest.

Both are validated with marshmallow schemas that reject unknown keys.
Relative paths are resolved against the directory of the file that names
them, and every referenced side file must exist at load time.

Example run configuration:

    [rules]
    slow_call_names = ["sleep_ms", "delay_ms", "printf", "lcd_write"]
    critical_rules = ["zerodivcond", "syntaxError", "uninitvar", "notVolatileVarIrs"]

    [isr]
    patterns = ["*_Handler", "*_IRQHandler", "*_callback"]

    [external]
    timeout_s = 120

    [authors]
    map = "authors.map"
    template_patterns = ["*@instructor.example"]

    [project]
    start = "2024-03-01"
    deadline = "2024-04-12"

    [stats]
    labs = "labs.csv"
    grades = "grades.csv"
"""

import logging

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path

from django.conf import settings
from django.utils.dateparse import parse_date, parse_datetime
from marshmallow import RAISE, Schema, ValidationError, fields, validate

from .cohort import METRICS, RepoEntry, StatsConfig
from .diagnostics import DEFAULT_CRITICAL_RULES
from .exceptions import ConfigError
from .extingest import DEFAULT_EXTRA_ARGS, ExternalConfig
from .gitminer import AuthorMap
from .lexparse import IsrConfig
from .lifecycle import ProjectDates
from .rules import DEFAULT_SLOW_CALLS, RuleConfig

logger = logging.getLogger(__name__)


# =======================================================================
# SCHEMAS
# =======================================================================


class StrictSchema(Schema):
    class Meta:
        unknown = RAISE


class RulesSchema(StrictSchema):
    slow_call_names = fields.List(fields.String(), load_default=lambda: sorted(DEFAULT_SLOW_CALLS))
    allow_static_inline_in_headers = fields.Boolean(load_default=False)
    accept_pragma_once_as_guard = fields.Boolean(load_default=True)
    global_var_allowlist = fields.List(fields.String(), load_default=list)
    critical_rules = fields.List(fields.String(), load_default=lambda: sorted(DEFAULT_CRITICAL_RULES))


class IsrSchema(StrictSchema):
    patterns = fields.List(fields.String(validate=validate.Length(min=1)), load_default=lambda: list(IsrConfig.patterns))
    registration_calls = fields.List(fields.String(), load_default=lambda: list(IsrConfig.registration_calls))


class ExternalSchema(StrictSchema):
    enabled = fields.Boolean(load_default=True)
    path = fields.String(load_default=None, allow_none=True)
    extra_args = fields.List(fields.String(), load_default=lambda: list(DEFAULT_EXTRA_ARGS))
    timeout_s = fields.Float(load_default=120.0, validate=validate.Range(min=0, min_inclusive=False))


class AuthorsSchema(StrictSchema):
    map = fields.String(load_default=None, allow_none=True)
    template_patterns = fields.List(fields.String(), load_default=list)


class ProjectSchema(StrictSchema):
    start = fields.String(load_default=None, allow_none=True)
    deadline = fields.String(load_default=None, allow_none=True)


class MiningSchema(StrictSchema):
    branch = fields.String(load_default=None, allow_none=True)
    gap = fields.Integer(load_default=0, validate=validate.Range(min=0))
    total_order = fields.Boolean(load_default=False)
    workers = fields.Integer(load_default=None, allow_none=True, validate=validate.Range(min=1))


class StatsSchema(StrictSchema):
    labs = fields.String(load_default=None, allow_none=True)
    grades = fields.String(load_default=None, allow_none=True)
    cluster_threshold = fields.Float(load_default=0.70, validate=validate.Range(min=0, max=1))
    metric = fields.String(load_default="occurrence", validate=validate.OneOf(METRICS))


class OutputSchema(StrictSchema):
    dir = fields.String(load_default=None, allow_none=True)


class RunConfigSchema(StrictSchema):
    rules = fields.Nested(RulesSchema)
    isr = fields.Nested(IsrSchema)
    external = fields.Nested(ExternalSchema)
    authors = fields.Nested(AuthorsSchema)
    project = fields.Nested(ProjectSchema)
    mining = fields.Nested(MiningSchema)
    stats = fields.Nested(StatsSchema)
    output = fields.Nested(OutputSchema)


class RepoSchema(StrictSchema):
    path = fields.String(required=True)
    group_id = fields.String(required=True)
    members = fields.List(fields.String(), required=True, validate=validate.Length(min=1))
    name = fields.String(load_default=None, allow_none=True)
    scope = fields.String(load_default="project", validate=validate.OneOf(("project", "lab")))
    project = fields.String(load_default=None, allow_none=True)


class ManifestSchema(StrictSchema):
    repos = fields.List(fields.Nested(RepoSchema), load_default=list)


# =======================================================================
# RUN CONFIGURATION
# =======================================================================


@dataclass(frozen=True)
class RunConfig:
    rules: RuleConfig = field(default_factory=RuleConfig)
    external: ExternalConfig = field(default_factory=ExternalConfig)
    authors_map: Path | None = None
    template_patterns: tuple[str, ...] = ()
    dates: ProjectDates = field(default_factory=ProjectDates)
    branch: str | None = None
    gap: int = 0
    total_order: bool = False
    workers: int | None = None
    stats: StatsConfig = field(default_factory=StatsConfig)
    output_dir: Path | None = None
    source: Path | None = None

    def author_map(self) -> AuthorMap:
        template_before = self.dates.start
        if self.authors_map:
            return AuthorMap.from_file(self.authors_map, self.template_patterns, template_before)
        return AuthorMap(template_patterns=self.template_patterns, template_before=template_before)

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or settings.EMBERMINE_OUTPUT_DIR)

    def resolved_workers(self) -> int:
        return self.workers or settings.EMBERMINE_WORKERS


def _read_toml(path: Path) -> dict:
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"Configuration file '{path}' does not exist") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _load(schema: Schema, data: dict, path: Path | None) -> dict:
    try:
        return schema.load(data)
    except ValidationError as exc:
        where = f"{path}: " if path else ""
        raise ConfigError(f"{where}{exc.messages}") from exc


def _existing(base: Path, value: str | None, key: str) -> Path | None:
    if not value:
        return None
    path = Path(value)
    if not path.is_absolute():
        path = base / path
    if not path.exists():
        raise ConfigError(f"'{key}' refers to '{path}', which does not exist")
    return path


def parse_project_date(value: str | None, end_of_day: bool = False) -> float | None:
    """
    ISO-8601 date or datetime to UTC epoch seconds. A bare date is midnight
    UTC, or the following midnight when `end_of_day` is set. Naive datetimes
    are taken as UTC.
    """
    if not value:
        return None
    try:
        # parse_datetime also accepts bare dates, so those are matched first
        day = parse_date(value)
        if day is not None:
            moment = datetime.combine(day, time.min)
            if end_of_day:
                moment += timedelta(days=1)
        else:
            moment = parse_datetime(value)
    except ValueError as exc:
        raise ConfigError(f"'{value}' is not a valid date: {exc}") from exc
    if moment is None:
        raise ConfigError(f"'{value}' is not an ISO-8601 date")
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return moment.timestamp()


def load_run_config(path: Path | str | None = None) -> RunConfig:
    """
    Reads and validates a run configuration. Without a path, the file named
    by EMBERMINE_CONFIG is used, and without that the defaults apply.

    Raises:
        ConfigError: Unreadable TOML, unknown keys, invalid values, missing
            side files, or a deadline not after the start.
    """
    path = path or settings.EMBERMINE_CONFIG
    if not path:
        return RunConfig()
    path = Path(path)
    schema = RunConfigSchema()
    # absent sections still get their defaults
    raw = {**{name: {} for name in schema.fields}, **_read_toml(path)}
    if isinstance(raw["project"], dict):
        # unquoted TOML dates arrive as date/datetime objects
        raw["project"] = {
            key: value.isoformat() if isinstance(value, (date, datetime)) else value
            for key, value in raw["project"].items()
        }
    data = _load(schema, raw, path)
    base = path.resolve().parent

    rules, isr, external = data["rules"], data["isr"], data["external"]
    rule_config = RuleConfig(
        slow_call_names=frozenset(rules["slow_call_names"]),
        isr_patterns=tuple(isr["patterns"]),
        isr_registration_calls=tuple(isr["registration_calls"]),
        allow_static_inline_in_headers=rules["allow_static_inline_in_headers"],
        accept_pragma_once_as_guard=rules["accept_pragma_once_as_guard"],
        global_var_allowlist=frozenset(rules["global_var_allowlist"]),
        critical_rules=frozenset(rules["critical_rules"]),
    )
    external_config = ExternalConfig(
        path=external["path"],
        extra_args=tuple(external["extra_args"]),
        timeout_s=external["timeout_s"],
        enabled=external["enabled"],
    )

    dates = ProjectDates(
        start=parse_project_date(data["project"]["start"]),
        deadline=parse_project_date(data["project"]["deadline"], end_of_day=True),
    )
    if dates.start is not None and dates.deadline is not None and dates.deadline <= dates.start:
        raise ConfigError("project.deadline must be after project.start")

    stats = data["stats"]
    output_dir = data["output"]["dir"]
    config = RunConfig(
        rules=rule_config,
        external=external_config,
        authors_map=_existing(base, data["authors"]["map"], "authors.map"),
        template_patterns=tuple(data["authors"]["template_patterns"]),
        dates=dates,
        branch=data["mining"]["branch"],
        gap=data["mining"]["gap"],
        total_order=data["mining"]["total_order"],
        workers=data["mining"]["workers"],
        stats=StatsConfig(
            labs=_existing(base, stats["labs"], "stats.labs"),
            grades=_existing(base, stats["grades"], "stats.grades"),
            cluster_threshold=stats["cluster_threshold"],
            metric=stats["metric"],
            critical_rules=rule_config.critical_rules,
        ),
        output_dir=(base / output_dir) if output_dir else None,
        source=path,
    )
    logger.debug("Loaded run configuration from %s", path)
    return config


# =======================================================================
# COHORT MANIFEST
# =======================================================================


def load_manifest(path: Path | str) -> list[RepoEntry]:
    """
    Reads a cohort manifest:

        [[repos]]
        path = "repos/group-01"
        group_id = "g01"
        members = ["ana@uni.example", "bo@uni.example"]
        scope = "project"       # or "lab"
        project = "p1"

    Raises:
        ConfigError: Invalid manifest, or one without repositories.
    """
    path = Path(path)
    data = _load(ManifestSchema(), _read_toml(path), path)
    if not data["repos"]:
        raise ConfigError(f"{path}: the manifest lists no repositories")
    base = path.resolve().parent
    entries = []
    for repo in data["repos"]:
        repo_path = Path(repo["path"])
        if not repo_path.is_absolute():
            repo_path = base / repo_path
        entries.append(
            RepoEntry(
                path=repo_path,
                group_id=repo["group_id"],
                members=tuple(repo["members"]),
                name=repo["name"] or repo_path.name,
                scope=repo["scope"],
                project=repo["project"],
            )
        )
    names = [entry.name for entry in entries]
    duplicates = sorted({name for name in names if names.count(name) > 1})
    if duplicates:
        raise ConfigError(f"{path}: repository names must be unique ({', '.join(duplicates)})")
    return entries
