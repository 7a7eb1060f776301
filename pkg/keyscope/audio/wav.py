from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import soundfile as sf

from keyscope.runtime.errors import AudioFormatError

log = logging.getLogger(__name__)

SAMPLE_RATE = 44100
_SUPPORTED_SUBTYPES = {"PCM_16", "FLOAT"}


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self) -> None:
        if self.sample_rate != SAMPLE_RATE:
            raise AudioFormatError(
                "resample_unsupported",
                f"Sample rate {self.sample_rate} Hz is not {SAMPLE_RATE} Hz; resample unsupported",
            )
        if self.samples.ndim != 1:
            raise AudioFormatError("not_mono", f"Expected mono samples, got shape {self.samples.shape}")
        if self.samples.size == 0:
            raise AudioFormatError("empty_audio", "Audio clip has no samples")

    @property
    def duration_s(self) -> float:
        return self.samples.size / float(self.sample_rate)


def load_wav(path: str | Path, offset_s: float = 0.0, duration_s: float = 0.0) -> AudioClip:
    """Decode a 16-bit PCM or 32-bit float RIFF/WAVE file into a mono clip.

    ``duration_s == 0`` reads to the end of the file.
    """
    path = Path(path)
    try:
        info = sf.info(str(path))
    except RuntimeError as exc:
        raise AudioFormatError("parse_error", f"Cannot parse WAVE header of {path}: {exc}") from exc

    if info.format != "WAV":
        raise AudioFormatError("parse_error", f"{path} is not a RIFF/WAVE file (format={info.format})")
    if info.subtype not in _SUPPORTED_SUBTYPES:
        raise AudioFormatError(
            "unsupported_encoding",
            f"{path} uses {info.subtype}; only PCM_16 and FLOAT are supported",
        )
    if info.samplerate != SAMPLE_RATE:
        raise AudioFormatError(
            "resample_unsupported",
            f"{path} is sampled at {info.samplerate} Hz; resample unsupported (need {SAMPLE_RATE} Hz)",
        )
    if info.channels not in (1, 2):
        raise AudioFormatError("unsupported_channels", f"{path} has {info.channels} channels; expected 1 or 2")

    start = int(round(max(offset_s, 0.0) * SAMPLE_RATE))
    frames = int(round(duration_s * SAMPLE_RATE)) if duration_s > 0 else -1
    try:
        data, _ = sf.read(str(path), start=start, frames=frames, dtype="float64", always_2d=True)
    except RuntimeError as exc:
        raise AudioFormatError("parse_error", f"Cannot decode {path}: {exc}") from exc

    samples = data.mean(axis=1) if data.shape[1] > 1 else data[:, 0]
    log.debug("Loaded %s: %d samples, %d channel(s)", path, samples.size, info.channels)
    return AudioClip(samples=np.ascontiguousarray(samples), sample_rate=SAMPLE_RATE)


def write_wav(path: str | Path, clip: AudioClip, subtype: str = "PCM_16") -> Path:
    if subtype not in _SUPPORTED_SUBTYPES:
        raise AudioFormatError("unsupported_encoding", f"Cannot write subtype {subtype}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), np.clip(clip.samples, -1.0, 1.0), clip.sample_rate, format="WAV", subtype=subtype)
    return path
