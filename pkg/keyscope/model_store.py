"""KNET checkpoint files: named float32 tensors plus a JSON metadata trailer."""

from __future__ import annotations

import json
import logging
import os
import struct
import sys
from pathlib import Path
from typing import Any, Optional

import numpy as np

from keyscope.models.builders import build_model
from keyscope.models.config import ArchitectureConfig
from keyscope.models.model import KeyModel
from keyscope.runtime.errors import CheckpointError, ConfigError

CHECKPOINT_MAGIC = b"KNET"
CHECKPOINT_VERSION = 1
CHECKPOINT_SUFFIX = ".knet"
DEFAULT_MODEL_DIR = "~/.cache/keyscope/models"

_U32 = struct.Struct("<I")

log = logging.getLogger(__name__)


def _emit_model_progress(message: str) -> None:
    try:
        sys.stderr.write(f"[MODEL] {message}\n")
        sys.stderr.flush()
    except Exception:
        pass


def _format_size(num_bytes: int) -> str:
    units = ["B", "KB", "MB", "GB"]
    size = float(max(num_bytes, 0))
    for unit in units:
        if size < 1024 or unit == units[-1]:
            return f"{int(size)}{unit}" if unit == "B" else f"{size:.1f}{unit}"
        size /= 1024
    return f"{num_bytes}B"


def resolve_default_model_dir() -> Path:
    return Path(os.getenv("KEYSCOPE_MODEL_DIR", DEFAULT_MODEL_DIR)).expanduser().resolve()


def resolve_checkpoint_path(value: str) -> Path:
    """Bare names resolve inside KEYSCOPE_MODEL_DIR; anything with a separator is a path."""
    candidate = Path(value).expanduser()
    if candidate.parent != Path(".") or candidate.exists():
        return candidate
    if candidate.suffix != CHECKPOINT_SUFFIX:
        candidate = candidate.with_suffix(CHECKPOINT_SUFFIX)
    return resolve_default_model_dir() / candidate.name


def encode_checkpoint(tensors: dict[str, np.ndarray], metadata: dict[str, Any]) -> bytes:
    parts = [CHECKPOINT_MAGIC, _U32.pack(CHECKPOINT_VERSION), _U32.pack(len(tensors))]
    for name, value in tensors.items():
        encoded = name.encode("utf-8")
        array = np.ascontiguousarray(value, dtype="<f4")
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_U32.pack(array.ndim))
        parts.extend(_U32.pack(dim) for dim in array.shape)
        parts.append(array.tobytes())
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    parts.append(_U32.pack(len(meta)))
    parts.append(meta)
    return b"".join(parts)


class _Reader:
    def __init__(self, raw: bytes, path: Path) -> None:
        self.raw = raw
        self.offset = 0
        self.path = path

    def take(self, count: int) -> bytes:
        end = self.offset + count
        if end > len(self.raw):
            raise CheckpointError("truncated", f"{self.path}: checkpoint truncated at byte {self.offset}")
        chunk = self.raw[self.offset : end]
        self.offset = end
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def decode_checkpoint(raw: bytes, path: Path | str = "<memory>") -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    reader = _Reader(raw, Path(path))
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError("bad_magic", f"{path}: not a KNET checkpoint")
    version = reader.u32()
    if version != CHECKPOINT_VERSION:
        raise CheckpointError("version_mismatch", f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(reader.u32()):
        try:
            name = reader.take(reader.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError("bad_name", f"{path}: tensor name is not UTF-8") from exc
        shape = tuple(reader.u32() for _ in range(reader.u32()))
        count = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(reader.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    try:
        metadata = json.loads(reader.take(reader.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError("bad_metadata", f"{path}: metadata block is not valid JSON") from exc
    if reader.offset != len(raw):
        raise CheckpointError("trailing_bytes", f"{path}: {len(raw) - reader.offset} unexpected trailing bytes")
    return tensors, metadata


def save_checkpoint(model: KeyModel, path: str | Path, extra: Optional[dict[str, Any]] = None) -> Path:
    target = Path(path).expanduser()
    target.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"architecture": model.config.to_dict()}
    if extra:
        metadata["extra"] = extra
    payload = encode_checkpoint(model.state_dict(), metadata)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_bytes(payload)
    tmp.replace(target)
    _emit_model_progress(f"saved {target} ({_format_size(len(payload))})")
    return target


def read_checkpoint_metadata(path: str | Path) -> dict[str, Any]:
    _, metadata = decode_checkpoint(_read_bytes(Path(path)), path)
    return metadata


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError("missing_checkpoint", f"checkpoint not found: {path}") from exc


def load_checkpoint(path: str | Path) -> KeyModel:
    source = Path(path).expanduser()
    tensors, metadata = decode_checkpoint(_read_bytes(source), source)
    if not isinstance(metadata, dict) or not isinstance(metadata.get("architecture"), dict):
        raise CheckpointError("bad_metadata", f"{source}: metadata has no architecture block")
    try:
        config = ArchitectureConfig.from_dict(metadata["architecture"])
        model = build_model(config)
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        raise CheckpointError("bad_metadata", f"{source}: unusable architecture block: {exc}") from exc
    model.load_state_dict(tensors)
    log.info("Loaded %s checkpoint N_f=%d from %s", config.kind, config.n_feature_maps, source)
    return model
