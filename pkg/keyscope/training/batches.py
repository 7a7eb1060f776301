from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from keyscope.audio.cache import read_spectrogram
from keyscope.audio.spectrogram import MAX_SHIFT, MIN_SHIFT, LogFreqSpectrogram, shift_pitch
from keyscope.data.manifest import ManifestEntry
from keyscope.evaluation.keys import KeyLabel
from keyscope.nn.rng import RngStream
from keyscope.runtime.errors import DataError
from keyscope.training.snippets import SnippetConfig, pad_frames, sample_snippet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainItem:
    id: str
    spec: LogFreqSpectrogram
    label: KeyLabel


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray
    targets: np.ndarray
    shifts: tuple[int, ...]

    def __len__(self) -> int:
        return int(self.targets.shape[0])


def load_items(entries: Iterable[ManifestEntry], features_dir: Optional[Path] = None) -> list[TrainItem]:
    items: list[TrainItem] = []
    for entry in entries:
        path = entry.cache_path(features_dir)
        try:
            spec = read_spectrogram(path)
        except DataError as exc:
            raise DataError(exc.code, f"entry {entry.id!r}: {exc}") from exc
        items.append(TrainItem(id=entry.id, spec=spec, label=entry.label))
    log.debug("loaded %d training items", len(items))
    return items


def augment(item: TrainItem, semitones: int) -> tuple[LogFreqSpectrogram, KeyLabel]:
    """Pitch-shift the spectrogram and transpose its label by the same amount."""
    return shift_pitch(item.spec, semitones), item.label.transpose(semitones)


def make_batch(
    items: Sequence[TrainItem],
    rngs: Sequence[RngStream],
    snippet_frames: Optional[int],
    *,
    min_frames: int = 1,
    shift_range: tuple[int, int] = (MIN_SHIFT, MAX_SHIFT),
) -> Batch:
    """Shift, relabel and crop every item, then stack into (N, 1, bins, frames).

    ``snippet_frames=None`` keeps whole pieces, right-padding each batch to its
    longest member.
    """
    if len(items) != len(rngs):
        raise DataError("batch_mismatch", f"{len(items)} items but {len(rngs)} rng streams")
    low, high = shift_range
    matrices: list[np.ndarray] = []
    targets: list[int] = []
    shifts: list[int] = []
    for item, rng in zip(items, rngs):
        shift = int(rng.integers(low, high))
        spec, label = augment(item, shift)
        if snippet_frames is not None:
            spec = sample_snippet(spec, SnippetConfig(rng=rng, snippet_frames=snippet_frames))
        matrices.append(spec.values)
        targets.append(label.index)
        shifts.append(shift)
    width = max(min_frames, max(matrix.shape[0] for matrix in matrices))
    stacked = np.stack([pad_frames(matrix, width).T for matrix in matrices])[:, None, :, :]
    return Batch(inputs=np.ascontiguousarray(stacked), targets=np.asarray(targets, dtype=np.int64), shifts=tuple(shifts))
