from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from keyscope.audio.spectrogram import FRAME_RATE, LogFreqSpectrogram
from keyscope.nn.rng import RngStream
from keyscope.runtime.errors import ConfigError

DEFAULT_SNIPPET_SECONDS = 20.0
DEFAULT_SNIPPET_FRAMES = int(DEFAULT_SNIPPET_SECONDS * FRAME_RATE)


@dataclass
class SnippetConfig:
    rng: RngStream
    snippet_frames: int = DEFAULT_SNIPPET_FRAMES

    def __post_init__(self) -> None:
        if self.snippet_frames < 1:
            raise ConfigError("invalid_snippet", f"snippet_frames must be >= 1, got {self.snippet_frames}")


def snippet_frames_for(seconds: float, frame_rate: float = FRAME_RATE) -> int:
    frames = int(round(seconds * frame_rate))
    if frames < 1:
        raise ConfigError("invalid_snippet", f"snippet of {seconds} s is shorter than one frame")
    return frames


def draw_snippet_start(n_frames: int, snippet_frames: int, rng: RngStream) -> int:
    """Uniform start on [0, n_frames - snippet_frames]; 0 when the piece is too short."""
    if n_frames <= snippet_frames:
        return 0
    return int(rng.integers(0, n_frames - snippet_frames))


def pad_frames(values: np.ndarray, n_frames: int) -> np.ndarray:
    """Right-pad a (frames, bins) matrix with zero frames up to ``n_frames``."""
    if values.shape[0] >= n_frames:
        return values
    out = np.zeros((n_frames, values.shape[1]), dtype=values.dtype)
    out[: values.shape[0]] = values
    return out


def sample_snippet(spec: LogFreqSpectrogram, cfg: SnippetConfig) -> LogFreqSpectrogram:
    length = cfg.snippet_frames
    start = draw_snippet_start(spec.n_frames, length, cfg.rng)
    window = spec.values[start : start + length]
    return LogFreqSpectrogram(values=pad_frames(window, length).copy(), frame_rate=spec.frame_rate)
