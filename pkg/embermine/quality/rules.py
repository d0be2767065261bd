"""
rules.py
========

The six embedded code-quality checks. Each check is a pure function over a
SourceModel; run_embedded_rules() runs the ones that apply to a file and
returns a deterministically ordered list of Diagnostic.

| id                  | applies to | finds                                              |
|---------------------|------------|----------------------------------------------------|
| noIncludeGuard      | .h         | header without an include guard                    |
| cInHeadFile         | .h         | function or variable definitions in a header       |
| slowIRS             | all        | delays, formatting, output and loops inside an ISR |
| notVolatileVarIrs   | all        | non-volatile global shared with an ISR             |
| wrongUseOfVolatile  | all        | volatile locals and parameters                     |
| wrongUseGlobalVar   | all        | globals whose scope could be one function          |
"""

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass
from typing import Iterable

from .diagnostics import (
    C_IN_HEAD_FILE,
    DEFAULT_CRITICAL_RULES,
    NO_INCLUDE_GUARD,
    NOT_VOLATILE_VAR_ISR,
    SLOW_ISR,
    WRONG_USE_GLOBAL_VAR,
    WRONG_USE_OF_VOLATILE,
    Diagnostic,
    catalog,
)
from .lexparse import IsrConfig, SourceModel, VarModel, classify_isr

logger = logging.getLogger(__name__)

DEFAULT_SLOW_CALLS = frozenset(
    {"sleep_ms", "delay_ms", "delay_us", "printf", "sprintf", "snprintf", "scanf"}
)


@dataclass(frozen=True)
class RuleConfig:
    slow_call_names: frozenset[str] = DEFAULT_SLOW_CALLS
    isr_patterns: tuple[str, ...] = IsrConfig.patterns
    isr_registration_calls: tuple[str, ...] = IsrConfig.registration_calls
    allow_static_inline_in_headers: bool = False
    accept_pragma_once_as_guard: bool = True
    global_var_allowlist: frozenset[str] = frozenset()
    critical_rules: frozenset[str] = DEFAULT_CRITICAL_RULES

    @property
    def isr(self) -> IsrConfig:
        return IsrConfig(self.isr_patterns, self.isr_registration_calls)

    def digest(self) -> str:
        """Stable hash of every setting that can change a diagnostic."""
        payload = {
            field.name: sorted(value) if isinstance(value, (frozenset, set, tuple)) else value
            for field in dataclasses.fields(self)
            for value in [getattr(self, field.name)]
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _diagnostic(model: SourceModel, line: int, rule_id: str, symbol: str, message: str) -> Diagnostic:
    spec = catalog.get(rule_id)
    return Diagnostic(
        path=model.path,
        line=line,
        rule_id=rule_id,
        symbol=symbol,
        message=message,
        severity=spec.severity if spec else "style",
    )


def _file_scope_variables(model: SourceModel) -> dict[str, list[VarModel]]:
    """File-scope declarations grouped by name, in line order."""
    grouped: dict[str, list[VarModel]] = {}
    for var in model.global_vars:
        grouped.setdefault(var.name, []).append(var)
    return grouped


# -----------------------------------------------------------------------
# Header rules


def check_noIncludeGuard(model: SourceModel, cfg: RuleConfig = RuleConfig()) -> list[Diagnostic]:
    guard = model.guard
    if guard.has_ifndef_define_pair or (cfg.accept_pragma_once_as_guard and guard.has_pragma_once):
        return []
    return [_diagnostic(model, 1, NO_INCLUDE_GUARD, "", "Header has no include guard")]


def check_cInHeadFile(model: SourceModel, cfg: RuleConfig = RuleConfig()) -> list[Diagnostic]:
    results = []
    for fn in model.definitions():
        if fn.is_static and fn.is_inline and cfg.allow_static_inline_in_headers:
            continue
        results.append(
            _diagnostic(model, fn.line, C_IN_HEAD_FILE, fn.name, f"Function '{fn.name}' is defined in a header")
        )
    for var in model.global_vars:
        if var.is_extern:
            continue
        results.append(
            _diagnostic(model, var.line, C_IN_HEAD_FILE, var.name, f"Variable '{var.name}' is defined in a header")
        )
    return results


# -----------------------------------------------------------------------
# Interrupt service routine rules


def check_slowIRS(model: SourceModel, isrs: set[str], cfg: RuleConfig = RuleConfig()) -> list[Diagnostic]:
    results = []
    for fn in model.definitions():
        if fn.name not in isrs:
            continue
        for call in fn.calls:
            if call.name in cfg.slow_call_names:
                results.append(
                    _diagnostic(
                        model, call.line, SLOW_ISR, call.name,
                        f"Slow call '{call.name}' inside interrupt service routine '{fn.name}'",
                    )
                )
        for loop in fn.loops:
            results.append(
                _diagnostic(
                    model, loop.line, SLOW_ISR, loop.kind,
                    f"'{loop.kind}' loop inside interrupt service routine '{fn.name}'",
                )
            )
    return results


def check_notVolatileVarIrs(model: SourceModel, isrs: set[str]) -> list[Diagnostic]:
    isr_bodies = [fn for fn in model.definitions() if fn.name in isrs]
    results = []
    for name, declarations in _file_scope_variables(model).items():
        if any(var.is_volatile for var in declarations):
            continue
        # read-only data cannot change under the ISR
        if all(var.is_const for var in declarations):
            continue
        if not any(fn.touches_global(name) for fn in isr_bodies):
            continue
        results.append(
            _diagnostic(
                model, declarations[0].line, NOT_VOLATILE_VAR_ISR, name,
                f"Global '{name}' is shared with an interrupt service routine but is not volatile",
            )
        )
    return results


# -----------------------------------------------------------------------
# Scope rules


def check_wrongUseOfVolatile(model: SourceModel) -> list[Diagnostic]:
    results = []
    for fn in model.definitions():
        for var in fn.params + fn.locals:
            if var.is_volatile:
                kind = "Parameter" if var.scope == "param" else "Local variable"
                results.append(
                    _diagnostic(
                        model, var.line, WRONG_USE_OF_VOLATILE, var.name,
                        f"{kind} '{var.name}' in '{fn.name}' is declared volatile",
                    )
                )
    return results


def check_wrongUseGlobalVar(model: SourceModel, isrs: set[str], cfg: RuleConfig = RuleConfig()) -> list[Diagnostic]:
    definitions = model.definitions()
    results = []
    for name, declarations in _file_scope_variables(model).items():
        if name in cfg.global_var_allowlist:
            continue
        owned = [var for var in declarations if not var.is_extern]
        if not owned or any(var.is_const for var in owned):
            continue
        users = [fn for fn in definitions if fn.touches_global(name)]
        if any(fn.name in isrs for fn in users) or len(users) > 1:
            continue
        where = f"function '{users[0].name}'" if users else "no function"
        results.append(
            _diagnostic(
                model, owned[0].line, WRONG_USE_GLOBAL_VAR, name,
                f"Global '{name}' is only used in {where}; its scope can be narrowed",
            )
        )
    return results


# -----------------------------------------------------------------------


def run_embedded_rules(
    model: SourceModel, cfg: RuleConfig = RuleConfig(), registered: Iterable[str] = ()
) -> list[Diagnostic]:
    """
    Runs every embedded check that applies to `model`.

    Args:
        model (SourceModel): Parsed file.
        cfg (RuleConfig): Rule settings.
        registered (Iterable[str]): Handler names registered as ISRs anywhere
            in the tree (see lexparse.registration_targets).

    Returns:
        list[Diagnostic]: Sorted by (path, line, rule_id); lexer and parser
        problems recorded on the model are included.
    """
    isrs = classify_isr(model, cfg.isr, registered)
    results = list(model.diagnostics)
    if model.is_header:
        results += check_noIncludeGuard(model, cfg)
        results += check_cInHeadFile(model, cfg)
    results += check_slowIRS(model, isrs, cfg)
    results += check_notVolatileVarIrs(model, isrs)
    results += check_wrongUseOfVolatile(model)
    results += check_wrongUseGlobalVar(model, isrs, cfg)

    logger.debug("%s: %d ISR(s), %d diagnostic(s)", model.path, len(isrs), len(results))
    return sorted(mark_critical(d, cfg.critical_rules) for d in results)


def mark_critical(diagnostic: Diagnostic, critical_rules: Iterable[str]) -> Diagnostic:
    critical = diagnostic.rule_id in set(critical_rules)
    if diagnostic.critical == critical:
        return diagnostic
    return dataclasses.replace(diagnostic, critical=critical)
