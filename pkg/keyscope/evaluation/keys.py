from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from keyscope.runtime.errors import LabelError

N_CLASSES = 24
TONIC_NAMES = ("C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B")
_NATURALS = {"c": 0, "d": 2, "e": 4, "f": 5, "g": 7, "a": 9, "b": 11}
_ACCIDENTALS = {"": 0, "#": 1, "♯": 1, "b": -1, "♭": -1}
_MINOR_WORDS = {"minor", "min", "m"}
# single-letter suffixes are case-sensitive: "Cm" is C minor, "CM" is C major
_SUFFIXES = {"m": "m", "M": ""}

_LABEL_PATTERN = re.compile(
    r"^\s*(?P<tonic>[A-Ga-g])(?P<accidental>[#b♯♭]?)\s*[:\s]?\s*(?P<mode>(?i:major|maj|minor|min)|m|M)?\s*$"
)


class Mode(str, Enum):
    MAJOR = "major"
    MINOR = "minor"

    @property
    def offset(self) -> int:
        return 0 if self is Mode.MAJOR else 12


@dataclass(frozen=True, order=True)
class KeyLabel:
    tonic: int
    mode: Mode

    def __post_init__(self) -> None:
        if not 0 <= self.tonic <= 11:
            raise LabelError(str(self.tonic), "tonic must be in 0..11")

    @property
    def index(self) -> int:
        """Class index: major keys 0..11, minor keys 12..23."""
        return self.mode.offset + self.tonic

    @classmethod
    def from_index(cls, index: int) -> "KeyLabel":
        if not 0 <= index < N_CLASSES:
            raise LabelError(str(index), f"class index must be in 0..{N_CLASSES - 1}")
        return cls(tonic=index % 12, mode=Mode.MAJOR if index < 12 else Mode.MINOR)

    def transpose(self, semitones: int) -> "KeyLabel":
        return KeyLabel(tonic=(self.tonic + semitones) % 12, mode=self.mode)

    def format(self) -> str:
        return f"{TONIC_NAMES[self.tonic]} {self.mode.value}"

    def __str__(self) -> str:
        return self.format()


def parse_key_label(text: str) -> KeyLabel:
    """Parse "C major", "F# minor", "Gb min", "Am", "Eb:maj" and similar spellings."""
    if text is None:
        raise LabelError("None")
    match = _LABEL_PATTERN.match(text)
    if not match:
        raise LabelError(text)
    tonic = _NATURALS[match.group("tonic").lower()] + _ACCIDENTALS[match.group("accidental")]
    raw_mode = match.group("mode") or ""
    mode_word = _SUFFIXES.get(raw_mode, raw_mode.lower())
    mode = Mode.MINOR if mode_word in _MINOR_WORDS else Mode.MAJOR
    return KeyLabel(tonic=tonic % 12, mode=mode)


def all_labels() -> list[KeyLabel]:
    return [KeyLabel.from_index(index) for index in range(N_CLASSES)]
