"""
diagnostics.py
==============

The Diagnostic record shared by the embedded rules, the external analyzer
ingestion and the lifecycle tracker, plus the rule catalog that lists every
rule id embermine knows about.
"""

import threading
from dataclasses import asdict, dataclass
from typing import Iterable

EMBEDDED = "embedded"
EXTERNAL = "external"

# Rule ids of the six embedded checks.
NO_INCLUDE_GUARD = "noIncludeGuard"
C_IN_HEAD_FILE = "cInHeadFile"
SLOW_ISR = "slowIRS"
NOT_VOLATILE_VAR_ISR = "notVolatileVarIrs"
WRONG_USE_OF_VOLATILE = "wrongUseOfVolatile"
WRONG_USE_GLOBAL_VAR = "wrongUseGlobalVar"

# Problems found while reading the source itself.
PARSE_ERROR = "parseError"
LEX_ERROR = "lexError"

DEFAULT_CRITICAL_RULES = frozenset(
    {"zerodivcond", "syntaxError", "uninitvar", NOT_VOLATILE_VAR_ISR}
)


@dataclass(frozen=True, order=True)
class Diagnostic:
    """
    One rule violation at a source location.

    Field order is the sort order: diagnostics sort by path, then line,
    then rule id.
    """

    path: str
    line: int
    rule_id: str
    symbol: str = ""
    message: str = ""
    source: str = EMBEDDED
    severity: str = "style"
    critical: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Diagnostic":
        return cls(**data)


@dataclass(frozen=True)
class RuleSpec:
    rule_id: str
    description: str
    source: str
    severity: str
    header_only: bool = False


_BUILTIN_RULES = (
    RuleSpec(NO_INCLUDE_GUARD, "Header file has no include guard", EMBEDDED, "style", True),
    RuleSpec(C_IN_HEAD_FILE, "Function definition or variable definition in a header file", EMBEDDED, "style", True),
    RuleSpec(SLOW_ISR, "Slow operation (delay, formatting, output, loop) inside an interrupt service routine", EMBEDDED, "warning"),
    RuleSpec(NOT_VOLATILE_VAR_ISR, "Global variable accessed by an interrupt service routine is not volatile", EMBEDDED, "error"),
    RuleSpec(WRONG_USE_OF_VOLATILE, "Local variable or parameter declared volatile", EMBEDDED, "style"),
    RuleSpec(WRONG_USE_GLOBAL_VAR, "Global variable whose scope could be narrowed to one function", EMBEDDED, "style"),
    RuleSpec(PARSE_ERROR, "Source could not be fully parsed", EMBEDDED, "error"),
    RuleSpec(LEX_ERROR, "Unterminated string, character constant or comment", EMBEDDED, "error"),
    # Ids the external C analyzer is known to report on student code.
    RuleSpec("constParameterPointer", "Pointer parameter could point to const", EXTERNAL, "style"),
    RuleSpec("unreadVariable", "Variable is assigned a value that is never used", EXTERNAL, "style"),
    RuleSpec("invalidPrintfArgType", "printf format string does not match argument type", EXTERNAL, "warning"),
    RuleSpec("uninitvar", "Uninitialized variable", EXTERNAL, "error"),
    RuleSpec("variableScope", "Scope of the variable can be reduced", EXTERNAL, "style"),
    RuleSpec("constVariablePointer", "Pointer variable could point to const", EXTERNAL, "style"),
    RuleSpec("shadowVariable", "Local variable shadows an outer variable", EXTERNAL, "style"),
    RuleSpec("zerodivcond", "Possible division by zero", EXTERNAL, "warning"),
    RuleSpec("unusedVariable", "Unused variable", EXTERNAL, "style"),
    RuleSpec("missingReturn", "Missing return statement", EXTERNAL, "error"),
    RuleSpec("redundantInitialization", "Redundant initialization", EXTERNAL, "style"),
    RuleSpec("unusedStructMember", "Struct member is never used", EXTERNAL, "style"),
    RuleSpec("legacyUninitvar", "Uninitialized variable (legacy check)", EXTERNAL, "error"),
    RuleSpec("constVariable", "Variable could be declared const", EXTERNAL, "style"),
    RuleSpec("syntaxError", "Syntax error", EXTERNAL, "error"),
)


class RuleCatalog:
    """
    Registry of rule ids. External analyzer ids are opaque strings, so any id
    seen in an analyzer report is registered on ingestion.
    """

    def __init__(self, specs: Iterable[RuleSpec] = _BUILTIN_RULES):
        self._specs = {spec.rule_id: spec for spec in specs}
        self._lock = threading.Lock()

    def __contains__(self, rule_id: str) -> bool:
        return rule_id in self._specs

    def get(self, rule_id: str) -> RuleSpec | None:
        return self._specs.get(rule_id)

    def register_external(self, rule_id: str, severity: str = "style") -> RuleSpec:
        with self._lock:
            spec = self._specs.get(rule_id)
            if spec is None:
                spec = RuleSpec(rule_id, "Reported by the external C analyzer", EXTERNAL, severity)
                self._specs[rule_id] = spec
            return spec

    def source_of(self, rule_id: str) -> str:
        spec = self._specs.get(rule_id)
        return spec.source if spec else EXTERNAL

    def listing(self, critical_rules: Iterable[str] = DEFAULT_CRITICAL_RULES) -> list[dict]:
        """
        Machine-readable rule listing used by `rules list` and report legends.
        """
        critical = set(critical_rules)
        with self._lock:
            specs = sorted(self._specs.values(), key=lambda s: (s.source, s.rule_id))
        return [
            {
                "id": spec.rule_id,
                "description": spec.description,
                "source": spec.source,
                "severity": spec.severity,
                "header_only": spec.header_only,
                "critical": spec.rule_id in critical,
            }
            for spec in specs
        ]


catalog = RuleCatalog()
