from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

from keyscope.evaluation.keys import KeyLabel, Mode, parse_key_label
from keyscope.runtime.errors import LabelError, ManifestError

log = logging.getLogger(__name__)

CHORD_COLUMNS = ("id", "onset_s", "root", "quality")
MODE_THRESHOLD = 0.8
DOMINANT_INTERVAL = 7


class ChordQuality(str, Enum):
    MAJOR = "major"
    MINOR = "minor"
    DOMINANT = "dominant"
    OTHER = "other"


_QUALITY_ALIASES = {
    "major": ChordQuality.MAJOR,
    "maj": ChordQuality.MAJOR,
    "": ChordQuality.MAJOR,
    "minor": ChordQuality.MINOR,
    "min": ChordQuality.MINOR,
    "m": ChordQuality.MINOR,
    "dominant": ChordQuality.DOMINANT,
    "dom": ChordQuality.DOMINANT,
    "7": ChordQuality.DOMINANT,
}


def normalize_quality(value: str | None) -> ChordQuality:
    return _QUALITY_ALIASES.get((value or "").strip().lower(), ChordQuality.OTHER)


@dataclass(frozen=True)
class ChordEvent:
    onset_s: float
    root: int
    quality: ChordQuality


@dataclass(frozen=True)
class TonicEvent:
    onset_s: float
    tonic: int


@dataclass(frozen=True)
class TonicSegment:
    start_s: float
    end_s: float
    tonic: int
    mode: Optional[Mode]

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    @property
    def label(self) -> Optional[KeyLabel]:
        return None if self.mode is None else KeyLabel(self.tonic, self.mode)


def _majority_mode(chords: Sequence[ChordEvent], root: int) -> tuple[bool, Optional[Mode]]:
    """(had candidates, decided mode) over major/minor chords on ``root``."""
    tally = Counter(
        chord.quality
        for chord in chords
        if chord.root == root and chord.quality in (ChordQuality.MAJOR, ChordQuality.MINOR)
    )
    total = sum(tally.values())
    if total == 0:
        return False, None
    for quality, mode in ((ChordQuality.MAJOR, Mode.MAJOR), (ChordQuality.MINOR, Mode.MINOR)):
        if tally[quality] / total > MODE_THRESHOLD:
            return True, mode
    return True, None


def derive_mode_from_chords(tonic: int, chords: Sequence[ChordEvent]) -> Optional[Mode]:
    """Major or minor when more than 80% of tonic chords agree; ``None`` is undetermined.

    Without any major/minor tonic chord the same test runs on chords rooted on
    the dominant.
    """
    found, mode = _majority_mode(chords, tonic % 12)
    if found:
        return mode
    _, mode = _majority_mode(chords, (tonic + DOMINANT_INTERVAL) % 12)
    return mode


def _parse_root(raw: str, line: int) -> int:
    text = (raw or "").strip()
    if text.isdigit():
        root = int(text)
        if 0 <= root <= 11:
            return root
        raise ManifestError("bad_root", f"chord root {root} outside 0..11", line=line)
    try:
        return parse_key_label(text).tonic
    except LabelError as exc:
        raise ManifestError("bad_root", f"unparseable chord root {text!r}", line=line) from exc


def load_chord_annotations(path: str | Path) -> dict[str, list[ChordEvent]]:
    source = Path(path)
    try:
        handle = source.open(newline="", encoding="utf-8")
    except FileNotFoundError as exc:
        raise ManifestError("missing_chords", f"chord annotations not found: {source}") from exc

    chords: dict[str, list[ChordEvent]] = {}
    with handle:
        reader = csv.DictReader(handle)
        header = [name.strip() for name in (reader.fieldnames or [])]
        missing = [column for column in CHORD_COLUMNS if column not in header]
        if missing:
            raise ManifestError("missing_column", f"chord file lacks column(s): {', '.join(missing)}", line=1)
        reader.fieldnames = header
        for row in reader:
            line = reader.line_num
            piece = (row.get("id") or "").strip()
            try:
                onset = float((row.get("onset_s") or "").strip())
            except ValueError as exc:
                raise ManifestError("bad_number", f"bad onset {row.get('onset_s')!r}", line=line) from exc
            events = chords.setdefault(piece, [])
            if events and onset < events[-1].onset_s:
                raise ManifestError(
                    "unordered_onsets", f"{piece}: onset {onset} precedes {events[-1].onset_s}", line=line
                )
            events.append(ChordEvent(onset, _parse_root(row.get("root"), line), normalize_quality(row.get("quality"))))
    return chords


def label_tonic_segments(
    tonic_events: Iterable[TonicEvent],
    chords: Sequence[ChordEvent],
    end_s: float,
) -> list[TonicSegment]:
    """Split a song at tonic changes and decide each segment's mode from its own chords."""
    ordered = sorted(tonic_events, key=lambda event: event.onset_s)
    segments: list[TonicSegment] = []
    for index, event in enumerate(ordered):
        stop = ordered[index + 1].onset_s if index + 1 < len(ordered) else end_s
        if stop <= event.onset_s:
            continue
        inside = [chord for chord in chords if event.onset_s <= chord.onset_s < stop]
        mode = derive_mode_from_chords(event.tonic, inside)
        if mode is None:
            log.debug("Undetermined mode for tonic %d in [%.2f, %.2f)", event.tonic, event.onset_s, stop)
        segments.append(TonicSegment(event.onset_s, stop, event.tonic, mode))
    return segments
