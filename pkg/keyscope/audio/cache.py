from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from keyscope.audio.spectrogram import FRAME_RATE, LogFreqSpectrogram
from keyscope.runtime.errors import DataError

CACHE_MAGIC = b"KSPC"
CACHE_VERSION = 1
CACHE_SUFFIX = ".kspc"
_META_MAGIC = b"META"
_HEADER = struct.Struct("<4sIII")
_U32 = struct.Struct("<I")


def cache_path_for(out_dir: str | Path, entry_id: str) -> Path:
    return Path(out_dir) / f"{entry_id}{CACHE_SUFFIX}"


def write_spectrogram(path: str | Path, spec: LogFreqSpectrogram, metadata: Optional[dict] = None) -> Path:
    """Write the KSPC cache; metadata goes into an optional trailing block."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = np.ascontiguousarray(spec.values, dtype="<f4").tobytes()
    chunks = [_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, spec.n_frames, spec.n_bins), payload]
    if metadata:
        meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
        chunks.extend([_META_MAGIC, _U32.pack(len(meta)), meta])

    tmp_path = path.with_name(path.name + ".tmp")
    tmp_path.write_bytes(b"".join(chunks))
    tmp_path.replace(path)
    return path


def _parse(raw: bytes, path: Path) -> Tuple[np.ndarray, dict]:
    if len(raw) < _HEADER.size:
        raise DataError("cache_corrupt", f"{path}: truncated spectrogram cache header")
    magic, version, n_frames, n_bins = _HEADER.unpack_from(raw, 0)
    if magic != CACHE_MAGIC:
        raise DataError("cache_corrupt", f"{path}: bad magic {magic!r}")
    if version != CACHE_VERSION:
        raise DataError("cache_version", f"{path}: unsupported cache version {version}")
    if n_frames < 1 or n_bins < 1:
        raise DataError("cache_corrupt", f"{path}: empty spectrogram ({n_frames}x{n_bins})")

    payload_end = _HEADER.size + 4 * n_frames * n_bins
    if len(raw) < payload_end:
        raise DataError("cache_corrupt", f"{path}: truncated payload")
    values = np.frombuffer(raw, dtype="<f4", count=n_frames * n_bins, offset=_HEADER.size)
    values = values.reshape(n_frames, n_bins).astype(np.float32)

    metadata: dict = {}
    trailer = raw[payload_end:]
    if trailer:
        if len(trailer) < 8 or trailer[:4] != _META_MAGIC:
            raise DataError("cache_corrupt", f"{path}: unexpected trailing bytes")
        (length,) = _U32.unpack_from(trailer, 4)
        body = trailer[8 : 8 + length]
        if len(body) != length:
            raise DataError("cache_corrupt", f"{path}: truncated metadata block")
        try:
            metadata = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError("cache_corrupt", f"{path}: bad metadata block: {exc}") from exc
    return values, metadata


def read_spectrogram(path: str | Path) -> LogFreqSpectrogram:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError as exc:
        raise DataError("missing_cache", f"Spectrogram cache not found: {path}") from exc
    values, _ = _parse(raw, path)
    return LogFreqSpectrogram(values=values, frame_rate=FRAME_RATE)


def read_cache_metadata(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        return {}
    try:
        _, metadata = _parse(path.read_bytes(), path)
    except DataError:
        return {}
    return metadata
