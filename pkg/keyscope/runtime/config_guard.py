"""Validation and normalisation of keyscope env files, reported by ``keyscope doctor``."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Tuple

from keyscope.config import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_LOG_LEVEL,
    DEFAULT_LR_PATIENCE,
    DEFAULT_MAX_EPOCHS,
    DEFAULT_PATIENCE,
    load_template,
    read_env,
    write_env,
)
from keyscope.runtime.errors import ConfigError

log = logging.getLogger(__name__)

CURRENT_CONFIG_SCHEMA_VERSION = "1"
VALID_LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}
_LEVEL_ALIASES = {"WARN": "WARNING", "FATAL": "CRITICAL"}
_POSITIVE_INT_DEFAULTS = {
    "KEYSCOPE_BATCH_SIZE": DEFAULT_BATCH_SIZE,
    "KEYSCOPE_MAX_EPOCHS": DEFAULT_MAX_EPOCHS,
    "KEYSCOPE_PATIENCE": DEFAULT_PATIENCE,
    "KEYSCOPE_LR_PATIENCE": DEFAULT_LR_PATIENCE,
}


@dataclass(frozen=True)
class ConfigIssue:
    key: str
    message: str


@dataclass
class ConfigGuardResult:
    config_path: Path
    changed: List[str] = field(default_factory=list)
    warnings: List[ConfigIssue] = field(default_factory=list)
    errors: List[ConfigIssue] = field(default_factory=list)
    values: Dict[str, str] = field(default_factory=dict)
    env_overrides: Dict[str, Tuple[str, str]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors


def _positive_int(raw: Optional[str]) -> Optional[int]:
    try:
        value = int((raw or "").strip())
    except ValueError:
        return None
    return value if value > 0 else None


def _finite_float(raw: Optional[str]) -> Optional[float]:
    try:
        value = float((raw or "").strip())
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _log_level(raw: Optional[str]) -> str:
    level = (raw or "").strip().upper()
    return _LEVEL_ALIASES.get(level, level)


# Each normaliser maps a stored value to its canonical form.
def _normalisers() -> Dict[str, Callable[[str], str]]:
    rules: Dict[str, Callable[[str], str]] = {
        "KEYSCOPE_CONFIG_SCHEMA_VERSION": lambda _: CURRENT_CONFIG_SCHEMA_VERSION,
        "KEYSCOPE_LOG_LEVEL": lambda raw: _log_level(raw) if _log_level(raw) in VALID_LOG_LEVELS else DEFAULT_LOG_LEVEL,
        "KEYSCOPE_WORKERS": lambda raw: raw.strip() if _positive_int(raw) else "",
    }
    for key, default in _POSITIVE_INT_DEFAULTS.items():
        rules[key] = lambda raw, default=default: str(_positive_int(raw) or default)
    return rules


def _normalise(values: Dict[str, str]) -> List[str]:
    changed = []
    for key, rule in _normalisers().items():
        before = values.get(key, "")
        after = rule(before)
        if after != before:
            values[key] = after
            changed.append(f"{key}: {before!r} -> {after!r}")
    return changed


def _check(values: Dict[str, str]) -> Tuple[List[ConfigIssue], List[ConfigIssue]]:
    errors = [
        ConfigIssue(key, "must be a positive integer")
        for key in _POSITIVE_INT_DEFAULTS
        if _positive_int(values.get(key)) is None
    ]
    workers = values.get("KEYSCOPE_WORKERS", "").strip()
    if workers and _positive_int(workers) is None:
        errors.append(ConfigIssue("KEYSCOPE_WORKERS", "must be empty or a positive integer"))
    rate = _finite_float(values.get("KEYSCOPE_LEARNING_RATE"))
    if rate is None or rate <= 0:
        errors.append(ConfigIssue("KEYSCOPE_LEARNING_RATE", "must be a positive number"))
    momentum = _finite_float(values.get("KEYSCOPE_MOMENTUM"))
    if momentum is None or not 0.0 <= momentum < 1.0:
        errors.append(ConfigIssue("KEYSCOPE_MOMENTUM", "must be in [0, 1)"))
    floor = _finite_float(values.get("KEYSCOPE_LR_FLOOR"))
    if floor is None or not 0.0 <= floor <= 1.0:
        errors.append(ConfigIssue("KEYSCOPE_LR_FLOOR", "must be in [0, 1]"))

    warnings = []
    level = _log_level(values.get("KEYSCOPE_LOG_LEVEL"))
    if level not in VALID_LOG_LEVELS:
        warnings.append(ConfigIssue("KEYSCOPE_LOG_LEVEL", f"unknown level {level!r}; INFO is used"))
    model_dir = values.get("KEYSCOPE_MODEL_DIR", "").strip()
    if model_dir and not Path(model_dir).expanduser().exists():
        warnings.append(ConfigIssue("KEYSCOPE_MODEL_DIR", "directory does not exist yet; it is created on save"))
    return warnings, errors


def _overlay_environment(keys: Iterable[str], stored: Dict[str, str]) -> Tuple[Dict[str, str], Dict[str, Tuple[str, str]]]:
    effective = dict(stored)
    overrides: Dict[str, Tuple[str, str]] = {}
    for key in keys:
        from_env = os.environ.get(key)
        if from_env is None:
            continue
        if from_env != stored.get(key, ""):
            overrides[key] = (stored.get(key, ""), from_env)
        effective[key] = from_env
    return effective, overrides


def guard_config(config_path: Path, apply_fixes: bool = True) -> ConfigGuardResult:
    """Fill template defaults, optionally normalise and rewrite, then validate with env overlays."""
    lines, fields = load_template()
    stored = read_env(config_path)
    missing = [entry for entry in fields if entry.key not in stored]
    for entry in missing:
        stored[entry.key] = entry.default

    changed = []
    if apply_fixes:
        changed = [f"{entry.key}: added default {entry.default!r}" for entry in missing] + _normalise(stored)
    if changed:
        write_env(config_path, lines, stored)
        log.info("[DOCTOR] rewrote %s (%d change(s))", config_path, len(changed))

    effective, overrides = _overlay_environment((entry.key for entry in fields), stored)
    warnings, errors = _check(effective)
    return ConfigGuardResult(config_path, changed, warnings, errors, effective, overrides)


def _print_section(title: str, entries: List[str]) -> None:
    print(f"[DOCTOR] {title}: {len(entries)}")
    for entry in entries:
        print(f"  - {entry}")


def print_report(report: ConfigGuardResult) -> None:
    print(f"[DOCTOR] config: {report.config_path}")
    print(f"[DOCTOR] schema: {report.values.get('KEYSCOPE_CONFIG_SCHEMA_VERSION', '<unset>')}")
    _print_section("changed", report.changed)
    _print_section(
        "env overrides",
        [f"{key}: file={pair[0]!r}, env={pair[1]!r}" for key, pair in sorted(report.env_overrides.items())],
    )
    _print_section("warnings", [f"[{issue.key}] {issue.message}" for issue in report.warnings])
    _print_section("errors", [f"[{issue.key}] {issue.message}" for issue in report.errors])


def ensure_runtime_config(config_path: Path) -> ConfigGuardResult:
    """Validate without rewriting the file; raise ConfigError on any error."""
    report = guard_config(config_path=config_path, apply_fixes=False)
    if not report.ok:
        details = "; ".join(f"{issue.key}: {issue.message}" for issue in report.errors)
        raise ConfigError("invalid_config", f"config preflight failed: {details}")
    return report
