from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from keyscope.runtime.errors import ConfigError

DEFAULT_F_MIN = 65.0
DEFAULT_F_MAX = 2100.0
DEFAULT_BINS_PER_OCTAVE = 24
DEFAULT_N_FFT = 8192
DEFAULT_SAMPLE_RATE = 44100


@dataclass(frozen=True, eq=False)
class FilterBank:
    """Triangular log-frequency filters over real-FFT magnitude bins.

    ``weights`` has shape (n_bins, n_fft // 2 + 1).
    """

    n_fft: int
    sample_rate: int
    f_min: float
    f_max: float
    bins_per_octave: int
    centers: np.ndarray
    weights: sparse.csr_matrix

    @property
    def n_bins(self) -> int:
        return int(self.centers.size)

    def project(self, magnitudes: np.ndarray) -> np.ndarray:
        """Map (frames, n_fft // 2 + 1) magnitudes to (frames, n_bins)."""
        return np.asarray(self.weights.dot(magnitudes.T).T)

    def params(self) -> dict:
        return {
            "n_fft": self.n_fft,
            "sample_rate": self.sample_rate,
            "f_min": self.f_min,
            "f_max": self.f_max,
            "bins_per_octave": self.bins_per_octave,
            "n_bins": self.n_bins,
        }

    def params_hash(self) -> str:
        payload = json.dumps(self.params(), sort_keys=True).encode("utf-8")
        return hashlib.sha1(payload).hexdigest()[:16]


def bin_count(f_min: float, f_max: float, bins_per_octave: int) -> int:
    # the epsilon keeps exact octave multiples from flooring one bin short
    return int(math.floor(bins_per_octave * math.log2(f_max / f_min) + 1e-9)) + 1


def build_filterbank(
    f_min: float = DEFAULT_F_MIN,
    f_max: float = DEFAULT_F_MAX,
    bins_per_octave: int = DEFAULT_BINS_PER_OCTAVE,
    n_fft: int = DEFAULT_N_FFT,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> FilterBank:
    if not (0 < f_min < f_max < sample_rate / 2):
        raise ConfigError(
            "invalid_frequency_range",
            f"Need 0 < f_min < f_max < sample_rate/2, got f_min={f_min} f_max={f_max} sample_rate={sample_rate}",
        )
    if bins_per_octave < 1 or n_fft < 2:
        raise ConfigError("invalid_filterbank", f"bins_per_octave={bins_per_octave} n_fft={n_fft}")

    n_bins = bin_count(f_min, f_max, bins_per_octave)
    centers = f_min * 2.0 ** (np.arange(n_bins) / bins_per_octave)
    edges = f_min * 2.0 ** (np.arange(-1, n_bins + 1) / bins_per_octave)
    fft_freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)

    dense = np.zeros((n_bins, fft_freqs.size), dtype=np.float64)
    for k in range(n_bins):
        lower, center, upper = edges[k], edges[k + 1], edges[k + 2]
        rising = (fft_freqs > lower) & (fft_freqs <= center)
        falling = (fft_freqs > center) & (fft_freqs < upper)
        dense[k, rising] = (fft_freqs[rising] - lower) / (center - lower)
        dense[k, falling] = (upper - fft_freqs[falling]) / (upper - center)
        if not dense[k].any():
            # filter narrower than the FFT bin spacing: take the nearest bin whole
            dense[k, int(np.argmin(np.abs(fft_freqs - center)))] = 1.0

    return FilterBank(
        n_fft=n_fft,
        sample_rate=sample_rate,
        f_min=float(f_min),
        f_max=float(f_max),
        bins_per_octave=bins_per_octave,
        centers=centers,
        weights=sparse.csr_matrix(dense),
    )
