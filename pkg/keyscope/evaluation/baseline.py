from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from keyscope.audio.filterbank import DEFAULT_BINS_PER_OCTAVE, DEFAULT_F_MIN
from keyscope.audio.spectrogram import LogFreqSpectrogram
from keyscope.evaluation.keys import KeyLabel, Mode
from keyscope.runtime.errors import DataError


def chroma_profile(
    spec: LogFreqSpectrogram,
    f_min: float = DEFAULT_F_MIN,
    bins_per_octave: int = DEFAULT_BINS_PER_OCTAVE,
) -> np.ndarray:
    """Fold semitone-aligned bins onto 12 pitch classes (0 = C) and average over time."""
    if bins_per_octave % 12:
        raise DataError("bad_resolution", f"bins_per_octave={bins_per_octave} is not a multiple of 12")
    step = bins_per_octave // 12
    base_pc = int(round(12 * math.log2(f_min / 440.0) + 69)) % 12
    mean_bins = spec.values.astype(np.float64).mean(axis=0)
    profile = np.zeros(12, dtype=np.float64)
    for k in range(0, spec.n_bins, step):
        profile[(base_pc + k // step) % 12] += mean_bins[k]
    return profile


def _standardize(profile: np.ndarray) -> np.ndarray:
    centered = profile - profile.mean()
    norm = np.linalg.norm(centered)
    return centered / norm if norm > 0 else centered


class TemplateKeyClassifier:
    """One tonic-normalised chroma template per mode, matched under all 12 rotations."""

    def __init__(self) -> None:
        self.templates: dict[Mode, np.ndarray] = {}

    def fit(self, specs: Sequence[LogFreqSpectrogram], labels: Sequence[KeyLabel]) -> "TemplateKeyClassifier":
        sums = {mode: np.zeros(12) for mode in Mode}
        counts = {mode: 0 for mode in Mode}
        for spec, label in zip(specs, labels):
            sums[label.mode] += np.roll(_standardize(chroma_profile(spec)), -label.tonic)
            counts[label.mode] += 1
        missing = [mode.value for mode in Mode if counts[mode] == 0]
        if missing:
            raise DataError("missing_mode", f"No training pieces for mode(s): {', '.join(missing)}")
        self.templates = {mode: _standardize(sums[mode] / counts[mode]) for mode in Mode}
        return self

    def predict(self, spec: LogFreqSpectrogram) -> KeyLabel:
        if not self.templates:
            raise DataError("not_fitted", "Template classifier has not been fitted")
        profile = _standardize(chroma_profile(spec))
        best, best_score = KeyLabel(0, Mode.MAJOR), -np.inf
        for mode in Mode:
            for tonic in range(12):
                value = float(np.dot(np.roll(self.templates[mode], tonic), profile))
                if value > best_score:
                    best, best_score = KeyLabel(tonic, mode), value
        return best
