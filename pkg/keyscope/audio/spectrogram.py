from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from keyscope.audio.filterbank import FilterBank
from keyscope.audio.wav import AudioClip
from keyscope.runtime.errors import ConfigError, DataError, ShapeError

log = logging.getLogger(__name__)

FRAME_RATE = 5
MIN_SHIFT = -4
MAX_SHIFT = 7
BINS_PER_SEMITONE = 2
_CHUNK_FRAMES = 128


@dataclass(frozen=True, eq=False)
class LogFreqSpectrogram:
    """Frames x bins matrix of log(1 + magnitude) values."""

    values: np.ndarray
    frame_rate: float = FRAME_RATE

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ShapeError("bad_spectrogram", f"Spectrogram must be a non-empty 2-D matrix, got {self.values.shape}")

    @property
    def n_frames(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_bins(self) -> int:
        return int(self.values.shape[1])

    @property
    def duration_s(self) -> float:
        return self.n_frames / float(self.frame_rate)


def hop_size(sample_rate: int, frame_rate: int = FRAME_RATE) -> int:
    return sample_rate // frame_rate


def frame_count(n_samples: int, n_fft: int, hop: int) -> int:
    if n_samples < n_fft:
        return 0
    return (n_samples - n_fft) // hop + 1


def compute_spectrogram(clip: AudioClip, fb: FilterBank) -> LogFreqSpectrogram:
    if clip.sample_rate != fb.sample_rate:
        raise ConfigError(
            "sample_rate_mismatch",
            f"Clip sample rate {clip.sample_rate} differs from filterbank {fb.sample_rate}",
        )
    n_samples = clip.samples.size
    if n_samples < fb.n_fft:
        raise DataError(
            "too_short",
            f"Audio too short: {n_samples} samples, need at least {fb.n_fft} ({fb.n_fft / fb.sample_rate:.3f} s)",
        )

    hop = hop_size(fb.sample_rate)
    n_frames = frame_count(n_samples, fb.n_fft, hop)
    window = get_window("hann", fb.n_fft)
    frames = sliding_window_view(clip.samples, fb.n_fft)[::hop][:n_frames]

    out = np.empty((n_frames, fb.n_bins), dtype=np.float32)
    for start in range(0, n_frames, _CHUNK_FRAMES):
        chunk = frames[start : start + _CHUNK_FRAMES] * window
        magnitudes = np.abs(np.fft.rfft(chunk, axis=1))
        out[start : start + chunk.shape[0]] = np.log1p(fb.project(magnitudes))

    log.debug("Spectrogram: %d frames x %d bins", n_frames, fb.n_bins)
    return LogFreqSpectrogram(values=out, frame_rate=FRAME_RATE)


def shift_pitch(spec: LogFreqSpectrogram, semitones: int) -> LogFreqSpectrogram:
    """Translate the spectrogram along frequency by 2 bins per semitone, zero-filling."""
    if not MIN_SHIFT <= semitones <= MAX_SHIFT:
        raise ConfigError(
            "shift_out_of_range",
            f"Pitch shift {semitones} outside [{MIN_SHIFT}, {MAX_SHIFT}] semitones",
        )
    offset = BINS_PER_SEMITONE * semitones
    if abs(offset) >= spec.n_bins:
        raise ShapeError("shift_exceeds_bins", f"Shift of {offset} bins needs more than {spec.n_bins} bins")
    if offset == 0:
        return LogFreqSpectrogram(values=spec.values.copy(), frame_rate=spec.frame_rate)

    out = np.zeros_like(spec.values)
    if offset > 0:
        out[:, offset:] = spec.values[:, :-offset]
    else:
        out[:, :offset] = spec.values[:, -offset:]
    return LogFreqSpectrogram(values=out, frame_rate=spec.frame_rate)
