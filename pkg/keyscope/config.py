"""Env-file configuration: path resolution, loading and the packaged template."""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, TypeVar

from dotenv import dotenv_values, load_dotenv

DEFAULT_BATCH_SIZE = 8
DEFAULT_MAX_EPOCHS = 500
DEFAULT_PATIENCE = 20
DEFAULT_LEARNING_RATE = 0.05
DEFAULT_MOMENTUM = 0.9
DEFAULT_LR_PATIENCE = 10
DEFAULT_LR_FLOOR = 0.1
DEFAULT_LOG_LEVEL = "INFO"

CONFIG_ENV_VAR = "KEYSCOPE_CONFIG"
TEMPLATE_NAME = "config_template.env"

_LOADED = False
_LOADED_PATH: Optional[Path] = None

N = TypeVar("N", int, float)


@dataclass(frozen=True)
class TemplateField:
    key: str
    default: str
    comment: str = ""


def template_path() -> Path:
    return Path(__file__).resolve().parent / TEMPLATE_NAME


def _assignment(line: str) -> Optional[Tuple[str, str]]:
    text = line.strip()
    if not text or text.startswith("#") or "=" not in text:
        return None
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def load_template() -> Tuple[List[str], List[TemplateField]]:
    """Template lines plus one field per ``KEY=default``, carrying the comment just above it."""
    lines = template_path().read_text(encoding="utf-8").splitlines()
    fields: List[TemplateField] = []
    comment = ""
    for line in lines:
        pair = _assignment(line)
        if pair is not None:
            fields.append(TemplateField(key=pair[0], default=pair[1], comment=comment))
        comment = line.strip().lstrip("#").strip() if line.strip().startswith("#") else ""
    return lines, fields


def _repo_env(start: Path) -> Optional[Path]:
    for directory in (start, *start.parents):
        candidate = directory / ".env"
        if candidate.is_file() and (directory / "keyscope").is_dir():
            return candidate
    return None


def _user_env() -> Path:
    if sys.platform == "darwin":
        return Path("~/Library/Application Support/keyscope/keyscope.env").expanduser()
    return Path(os.getenv("XDG_CONFIG_HOME") or "~/.config").expanduser() / "keyscope" / "keyscope.env"


def resolve_config_path(explicit: Optional[str] = None) -> Path:
    """``--config``, then $KEYSCOPE_CONFIG, then a repository .env, then the per-user file."""
    for candidate in (explicit, os.getenv(CONFIG_ENV_VAR)):
        if candidate:
            return Path(candidate).expanduser()
    return _repo_env(Path.cwd()) or _user_env()


def load_env(path: Optional[str] = None) -> Path:
    """Load the resolved env file once; a different path later overrides earlier values."""
    global _LOADED, _LOADED_PATH
    config_path = resolve_config_path(path)
    if _LOADED and _LOADED_PATH == config_path:
        return config_path

    switching = _LOADED_PATH is not None
    os.environ[CONFIG_ENV_VAR] = str(config_path)
    if config_path.exists():
        load_dotenv(config_path, override=switching)
    _LOADED, _LOADED_PATH = True, config_path
    return config_path


def read_env(path: Path) -> Dict[str, str]:
    if not path.exists():
        return {}
    return {key: value for key, value in dotenv_values(path).items() if value is not None}


def render_env(lines: List[str], values: Dict[str, str]) -> str:
    out = []
    for line in lines:
        pair = _assignment(line)
        out.append(line if pair is None else f"{pair[0]}={values.get(pair[0], '')}")
    return "\n".join(out) + "\n"


def write_env(path: Path, lines: List[str], values: Dict[str, str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_env(lines, values), encoding="utf-8")


def _env_number(key: str, default: N, cast: Callable[[str], N]) -> N:
    raw = (os.getenv(key) or "").strip()
    try:
        return cast(raw) if raw else default
    except ValueError:
        return default


def env_int(key: str, default: int) -> int:
    return _env_number(key, default, int)


def env_float(key: str, default: float) -> float:
    return _env_number(key, default, float)


def env_str(key: str, default: str) -> str:
    return (os.getenv(key) or "").strip() or default
