"""Dataset manifests: CSV parsing, deterministic splits and the classical truncation rule."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from keyscope.audio.cache import CACHE_SUFFIX, cache_path_for
from keyscope.evaluation.keys import KeyLabel, parse_key_label
from keyscope.runtime.errors import ConfigError, LabelError, ManifestError

log = logging.getLogger(__name__)

MANIFEST_COLUMNS = ("id", "path", "key", "dataset", "split", "offset_s", "duration_s")
SPLITS = ("train", "valid", "test")
UNASSIGNED = "unassigned"
VALID_SPLITS = set(SPLITS) | {UNASSIGNED}

CLASSICAL_DATASETS = {"classical"}
CLASSICAL_MAX_SECONDS = 30.0

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    key: str
    dataset: str = ""
    split: str = UNASSIGNED
    audio_path: Optional[Path] = None
    feature_path: Optional[Path] = None
    offset_s: float = 0.0
    duration_s: float = 0.0

    def __post_init__(self) -> None:
        if (self.audio_path is None) == (self.feature_path is None):
            raise ManifestError("bad_entry", f"entry {self.id!r} needs exactly one of audio_path/feature_path")

    @property
    def label(self) -> KeyLabel:
        return parse_key_label(self.key)

    @property
    def source_path(self) -> Path:
        return self.audio_path if self.audio_path is not None else self.feature_path

    @property
    def is_classical(self) -> bool:
        return self.dataset.strip().lower() in CLASSICAL_DATASETS

    def cache_path(self, features_dir: Optional[Path] = None) -> Path:
        """Where this entry's spectrogram lives: its own feature file or ``<features_dir>/<id>.kspc``."""
        if self.feature_path is not None:
            return self.feature_path
        if features_dir is None:
            return self.audio_path.with_suffix(CACHE_SUFFIX)
        return cache_path_for(features_dir, self.id)


def _parse_seconds(raw: str, column: str, line: int) -> float:
    text = (raw or "").strip()
    if not text:
        return 0.0
    try:
        value = float(text)
    except ValueError as exc:
        raise ManifestError("bad_number", f"{column}={text!r} is not a number", line=line) from exc
    if not math.isfinite(value) or value < 0:
        raise ManifestError("bad_number", f"{column} must be a non-negative number, got {text!r}", line=line)
    return value


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    manifest = Path(path)
    try:
        handle = manifest.open(newline="", encoding="utf-8")
    except FileNotFoundError as exc:
        raise ManifestError("missing_manifest", f"manifest not found: {manifest}") from exc

    entries: list[ManifestEntry] = []
    seen: dict[str, int] = {}
    with handle:
        reader = csv.DictReader(handle)
        header = [name.strip() for name in (reader.fieldnames or [])]
        missing = [column for column in MANIFEST_COLUMNS if column not in header]
        if missing:
            raise ManifestError("missing_column", f"manifest lacks column(s): {', '.join(missing)}", line=1)
        reader.fieldnames = header
        for row in reader:
            line = reader.line_num
            entry_id = (row.get("id") or "").strip()
            if not entry_id:
                raise ManifestError("missing_id", "empty id", line=line)
            if entry_id in seen:
                raise ManifestError(
                    "duplicate_id", f"duplicate id {entry_id!r} (first seen on line {seen[entry_id]})", line=line
                )
            seen[entry_id] = line

            key = (row.get("key") or "").strip()
            try:
                parse_key_label(key)
            except LabelError as exc:
                raise ManifestError(exc.code, str(exc), line=line) from exc

            raw_path = (row.get("path") or "").strip()
            if not raw_path:
                raise ManifestError("missing_path", f"entry {entry_id!r} has no path", line=line)
            file_path = Path(raw_path).expanduser()
            if not file_path.is_absolute():
                file_path = manifest.parent / file_path
            is_feature = file_path.suffix.lower() == CACHE_SUFFIX

            split = (row.get("split") or "").strip().lower() or UNASSIGNED
            if split not in VALID_SPLITS:
                raise ManifestError("bad_split", f"unknown split {split!r}", line=line)

            entries.append(
                ManifestEntry(
                    id=entry_id,
                    key=key,
                    dataset=(row.get("dataset") or "").strip(),
                    split=split,
                    audio_path=None if is_feature else file_path,
                    feature_path=file_path if is_feature else None,
                    offset_s=_parse_seconds(row.get("offset_s"), "offset_s", line),
                    duration_s=_parse_seconds(row.get("duration_s"), "duration_s", line),
                )
            )
    log.debug("Loaded %d manifest entries from %s", len(entries), manifest)
    return entries


def _format_seconds(value: float) -> str:
    return f"{value:g}"


def write_manifest(path: str | Path, entries: Iterable[ManifestEntry]) -> Path:
    """Write entries back as CSV, with paths relative to the manifest when possible."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    base = target.parent.resolve()
    with target.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for entry in entries:
            source = entry.source_path
            try:
                shown = source.resolve().relative_to(base).as_posix()
            except ValueError:
                shown = str(source)
            writer.writerow(
                [
                    entry.id,
                    shown,
                    entry.key,
                    entry.dataset,
                    entry.split,
                    _format_seconds(entry.offset_s),
                    _format_seconds(entry.duration_s),
                ]
            )
    return target


def fnv1a_64(data: bytes) -> int:
    value = _FNV_OFFSET
    for byte in data:
        value ^= byte
        value = (value * _FNV_PRIME) & _MASK64
    return value


def split_hash(seed: int, entry_id: str) -> int:
    return fnv1a_64(f"{seed}:".encode("utf-8") + entry_id.encode("utf-8"))


def _validate_ratios(ratios: Sequence[float]) -> tuple[float, float, float]:
    if len(ratios) != len(SPLITS):
        raise ConfigError("bad_ratios", f"need {len(SPLITS)} split ratios (train, valid, test), got {len(ratios)}")
    values = tuple(float(r) for r in ratios)
    if any(not math.isfinite(r) or r < 0 for r in values):
        raise ConfigError("bad_ratios", f"split ratios must be non-negative, got {values}")
    if abs(sum(values) - 1.0) > 1e-9:
        raise ConfigError("bad_ratios", f"split ratios must sum to 1, got {sum(values)}")
    return values  # type: ignore[return-value]


def assign_splits(entries: Sequence[ManifestEntry], ratios: Sequence[float], seed: int) -> list[ManifestEntry]:
    """Assign unassigned entries to train/valid/test.

    Entries are ranked by a seeded 64-bit FNV-1a hash of their id and cut at
    the rounded cumulative ratios, so counts are exact to one item and the
    result does not depend on manifest order.
    """
    values = _validate_ratios(ratios)
    pending = [entry for entry in entries if entry.split == UNASSIGNED]
    ranked = sorted(pending, key=lambda entry: (split_hash(seed, entry.id), entry.id))
    n = len(ranked)
    cuts = []
    cumulative = 0.0
    for ratio in values:
        cumulative += ratio
        cuts.append(min(n, int(math.floor(cumulative * n + 0.5))))
    assigned: dict[str, str] = {}
    start = 0
    for split, stop in zip(SPLITS, cuts):
        for entry in ranked[start:stop]:
            assigned[entry.id] = split
        start = max(start, stop)
    for entry in ranked[start:]:
        assigned[entry.id] = SPLITS[-1]
    return [replace(entry, split=assigned[entry.id]) if entry.id in assigned else entry for entry in entries]


def apply_classical_rule(entry: ManifestEntry) -> ManifestEntry:
    """Classical recordings use only their first 30 seconds."""
    if not entry.is_classical:
        return entry
    duration = entry.duration_s
    if duration <= 0 or duration > CLASSICAL_MAX_SECONDS:
        duration = CLASSICAL_MAX_SECONDS
    return replace(entry, offset_s=0.0, duration_s=duration)


def filter_entries_by_datasets(entries: Iterable[ManifestEntry], names: Iterable[str]) -> list[ManifestEntry]:
    wanted = {name.strip().lower() for name in names}
    return [entry for entry in entries if entry.dataset.strip().lower() in wanted]


def entries_for_split(entries: Iterable[ManifestEntry], split: str) -> list[ManifestEntry]:
    return [entry for entry in entries if entry.split == split]
