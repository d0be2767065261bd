"""
extingest.py
============

Runs the external C analyzer (cppcheck) over a snapshot directory, or reads
a report it produced earlier, and turns the version-2 XML results into
Diagnostic records with source=external.

cppcheck writes its XML to stderr:

    cppcheck --xml --xml-version=2 --enable=all --quiet . 2> report.xml
"""

import logging
import posixpath
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import lxml.etree
from django.conf import settings

from .diagnostics import EXTERNAL, Diagnostic, catalog
from .exceptions import AnalyzerFailed, AnalyzerTimeout, AnalyzerUnavailable, ReportParseError
from .lexparse import SOURCE_SUFFIXES

logger = logging.getLogger(__name__)

ANALYZER_NAME = "cppcheck"

# Analyzer bookkeeping, not findings about the code.
DEFAULT_EXTRA_ARGS = (
    "--suppress=missingIncludeSystem",
    "--suppress=missingInclude",
    "--suppress=checkersReport",
    "--suppress=unmatchedSuppression",
)


@dataclass(frozen=True)
class ExternalConfig:
    path: str | None = None
    extra_args: tuple[str, ...] = DEFAULT_EXTRA_ARGS
    timeout_s: float = 120.0
    enabled: bool = True


@dataclass(frozen=True)
class ReportEntry:
    rule_id: str
    path: str
    line: int
    severity: str
    message: str
    symbol: str = ""


@dataclass
class ExternalReport:
    tool: str = ANALYZER_NAME
    version: str = ""
    entries: list[ReportEntry] = field(default_factory=list)

    def diagnostics(self, critical_rules=frozenset()) -> list[Diagnostic]:
        """One Diagnostic per entry, in report order."""
        critical = set(critical_rules)
        results = []
        for entry in self.entries:
            catalog.register_external(entry.rule_id, entry.severity)
            results.append(
                Diagnostic(
                    path=entry.path,
                    line=entry.line,
                    rule_id=entry.rule_id,
                    symbol=entry.symbol,
                    message=entry.message,
                    source=EXTERNAL,
                    severity=entry.severity,
                    critical=entry.rule_id in critical,
                )
            )
        return results


def _normalize_path(path: str) -> str:
    path = path.replace("\\", "/")
    path = posixpath.normpath(path)
    return path[2:] if path.startswith("./") else path


def parse_external_report(xml_text: str | bytes) -> ExternalReport:
    """
    Reads a cppcheck version-2 XML document.

    Args:
        xml_text (str | bytes): The XML document.

    Returns:
        ExternalReport: One entry per `<error>` element. Entries without a
        `<location>` are reported at line 0.

    Raises:
        ReportParseError: The document is not well-formed.
    """
    if isinstance(xml_text, str):
        xml_text = xml_text.encode("utf-8")
    try:
        tree = lxml.etree.fromstring(xml_text)
    except lxml.etree.XMLSyntaxError as exc:
        raise ReportParseError(str(exc), _byte_offset(xml_text, exc)) from exc

    report = ExternalReport()
    cppcheck = tree.find("cppcheck")
    if cppcheck is not None:
        report.version = cppcheck.get("version", "")

    for error in tree.xpath("//results/errors/error | //results/error"):
        location = error.find("location")
        if location is not None:
            path, line = location.get("file", ""), int(location.get("line", "0") or 0)
        else:
            path, line = error.get("file", ""), int(error.get("line", "0") or 0)
        symbol = error.findtext("symbol") or ""
        report.entries.append(
            ReportEntry(
                rule_id=error.get("id", ""),
                path=_normalize_path(path) if path else "",
                line=line,
                severity=error.get("severity", "style"),
                message=error.get("msg", ""),
                symbol=symbol.strip(),
            )
        )
    return report


def _byte_offset(data: bytes, exc: lxml.etree.XMLSyntaxError) -> int:
    line, column = exc.position if exc.position else (1, 0)
    lines = data.split(b"\n")
    if line - 1 >= len(lines):
        return len(data)
    return sum(len(chunk) + 1 for chunk in lines[: max(line - 1, 0)]) + max(column - 1, 0)


def read_external_report(path: Path) -> ExternalReport:
    return parse_external_report(Path(path).read_bytes())


# -----------------------------------------------------------------------
# Running the analyzer


def resolve_executable(cfg: ExternalConfig) -> str:
    """
    EMBERMINE_EXTERNAL_PATH wins over the run configuration, which wins over
    whatever is on PATH.
    """
    for candidate in (settings.EMBERMINE_EXTERNAL_PATH, cfg.path):
        if candidate:
            found = shutil.which(candidate) or (candidate if Path(candidate).is_file() else None)
            if found:
                return found
            raise AnalyzerUnavailable(f"{ANALYZER_NAME} not found at '{candidate}'")
    found = shutil.which(ANALYZER_NAME)
    if not found:
        raise AnalyzerUnavailable(f"{ANALYZER_NAME} is not installed or not on PATH")
    return found


def analyzer_version(cfg: ExternalConfig) -> str:
    executable = resolve_executable(cfg)
    try:
        completed = subprocess.run(
            [executable, "--version"], capture_output=True, text=True, timeout=cfg.timeout_s
        )
    except subprocess.TimeoutExpired as exc:
        raise AnalyzerTimeout(f"{ANALYZER_NAME} --version timed out") from exc
    # "Cppcheck 2.13.0"
    return completed.stdout.strip().split()[-1] if completed.stdout.strip() else ""


def run_external_analyzer(tree_path: Path, cfg: ExternalConfig = ExternalConfig()) -> ExternalReport:
    """
    Runs the analyzer over every C file below `tree_path`.

    Raises:
        AnalyzerUnavailable: No executable could be found.
        AnalyzerTimeout: The run exceeded cfg.timeout_s.
        AnalyzerFailed: The analyzer produced no parsable XML.
    """
    tree_path = Path(tree_path)
    executable = resolve_executable(cfg)
    version = analyzer_version(cfg)

    has_sources = any(p.suffix.lower() in SOURCE_SUFFIXES for p in tree_path.rglob("*") if p.is_file())
    if not has_sources:
        return ExternalReport(version=version)

    command = [
        executable,
        "--xml",
        "--xml-version=2",
        "--enable=all",
        "--quiet",
        *cfg.extra_args,
        ".",
    ]
    logger.debug("Running %s in %s", " ".join(command), tree_path)
    try:
        completed = subprocess.run(
            command, cwd=tree_path, capture_output=True, timeout=cfg.timeout_s
        )
    except subprocess.TimeoutExpired as exc:
        raise AnalyzerTimeout(
            f"{ANALYZER_NAME} exceeded {cfg.timeout_s:g}s", output=_text(exc.stderr)
        ) from exc

    try:
        report = parse_external_report(completed.stderr)
    except ReportParseError as exc:
        raise AnalyzerFailed(
            f"{ANALYZER_NAME} exited with {completed.returncode} and unparsable output",
            output=_text(completed.stderr) + _text(completed.stdout),
        ) from exc

    report.version = report.version or version
    return report


def _text(data) -> str:
    if data is None:
        return ""
    return data.decode("utf-8", "replace") if isinstance(data, bytes) else data
