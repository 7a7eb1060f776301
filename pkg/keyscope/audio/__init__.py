"""Audio decoding and the log-frequency spectrogram frontend."""

from keyscope.audio.cache import read_spectrogram, write_spectrogram
from keyscope.audio.filterbank import FilterBank, build_filterbank
from keyscope.audio.spectrogram import LogFreqSpectrogram, compute_spectrogram, shift_pitch
from keyscope.audio.wav import AudioClip, load_wav

__all__ = [
    "AudioClip",
    "FilterBank",
    "LogFreqSpectrogram",
    "build_filterbank",
    "compute_spectrogram",
    "load_wav",
    "read_spectrogram",
    "shift_pitch",
    "write_spectrogram",
]
