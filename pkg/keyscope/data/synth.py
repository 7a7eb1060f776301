"""Synthetic keyed audio: diatonic triad progressions rendered through the real frontend."""

from __future__ import annotations

import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from keyscope.audio.cache import cache_path_for, write_spectrogram
from keyscope.audio.filterbank import FilterBank, build_filterbank
from keyscope.audio.spectrogram import compute_spectrogram
from keyscope.audio.wav import SAMPLE_RATE, AudioClip, write_wav
from keyscope.data.manifest import ManifestEntry, assign_splits, write_manifest
from keyscope.evaluation.keys import N_CLASSES, KeyLabel, Mode
from keyscope.nn.rng import RngStream
from keyscope.runtime.errors import ConfigError, KeyscopeError
from keyscope.runtime.workers import run_parallel

log = logging.getLogger(__name__)

DEFAULT_DURATION_S = 24.0
DEFAULT_SPLIT_RATIOS = (0.75, 0.25, 0.0)
SYNTH_DATASET = "synthetic"
MANIFEST_NAME = "manifest.csv"

BASE_MIDI = 48
N_PARTIALS = 4
MAX_DETUNE_CENTS = 10.0
AMPLITUDE_JITTER = 0.2
NOISE_LEVEL = 0.01
FADE_S = 0.01
PEAK = 0.5

# (scale degree in semitones, triad intervals)
_MAJOR_PROGRESSION = ((0, (0, 4, 7)), (5, (0, 4, 7)), (7, (0, 4, 7)), (0, (0, 4, 7)))
_MINOR_PROGRESSION = ((0, (0, 3, 7)), (5, (0, 3, 7)), (7, (0, 3, 7)), (0, (0, 3, 7)))


@dataclass(frozen=True)
class SynthResult:
    manifest_path: Path
    entries: list[ManifestEntry]


def _emit_progress(message: str) -> None:
    try:
        sys.stderr.write(f"[SYNTH] {message}\n")
        sys.stderr.flush()
    except Exception:
        pass


def midi_to_hz(note: float) -> float:
    return 440.0 * 2.0 ** ((note - 69.0) / 12.0)


def progression_for(key: KeyLabel) -> tuple:
    return _MAJOR_PROGRESSION if key.mode is Mode.MAJOR else _MINOR_PROGRESSION


def render_piece(
    key: KeyLabel,
    rng: RngStream,
    duration_s: float = DEFAULT_DURATION_S,
    sample_rate: int = SAMPLE_RATE,
    f_max: float = 2100.0,
) -> AudioClip:
    """I-IV-V-I (or i-iv-v-i) as sums of detuned, jittered sinusoid partials."""
    if duration_s <= 0:
        raise ConfigError("invalid_duration", f"duration must be positive, got {duration_s}")
    progression = progression_for(key)
    chord_samples = int(round(duration_s * sample_rate / len(progression)))
    t = np.arange(chord_samples) / sample_rate
    fade = min(int(FADE_S * sample_rate), chord_samples // 2)
    envelope = np.ones(chord_samples)
    if fade:
        ramp = np.linspace(0.0, 1.0, fade)
        envelope[:fade] = ramp
        envelope[-fade:] = ramp[::-1]

    harmonics = np.arange(1, N_PARTIALS + 1, dtype=np.float64)
    pieces = []
    for degree, intervals in progression:
        chord = np.zeros(chord_samples)
        for interval in intervals:
            note = BASE_MIDI + key.tonic + degree + interval
            cents = rng.uniform(-MAX_DETUNE_CENTS, MAX_DETUNE_CENTS)
            f0 = midi_to_hz(note + cents / 100.0)
            amps = (1.0 / harmonics) * rng.uniform(1.0 - AMPLITUDE_JITTER, 1.0 + AMPLITUDE_JITTER, N_PARTIALS)
            audible = harmonics * f0 < f_max
            phases = 2.0 * np.pi * f0 * np.outer(t, harmonics[audible])
            chord += np.sin(phases) @ amps[audible]
        pieces.append(chord * envelope)

    samples = np.concatenate(pieces)
    samples += NOISE_LEVEL * rng.generator.standard_normal(samples.size)
    samples *= PEAK / max(np.max(np.abs(samples)), 1e-12)
    return AudioClip(samples=samples, sample_rate=sample_rate)


def synth_dataset(
    out_dir: str | Path,
    n_pieces: int,
    seed: int,
    duration_s: float = DEFAULT_DURATION_S,
    *,
    workers: int = 1,
    write_audio: bool = False,
    ratios=DEFAULT_SPLIT_RATIOS,
    fb: Optional[FilterBank] = None,
) -> SynthResult:
    """Render ``n_pieces`` balanced pieces (key i % 24), cache spectrograms, write a manifest."""
    if n_pieces < 1:
        raise ConfigError("invalid_piece_count", f"need at least one piece, got {n_pieces}")
    if n_pieces % N_CLASSES:
        log.warning("n_pieces=%d is not a multiple of %d; key classes will be unbalanced", n_pieces, N_CLASSES)
    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise KeyscopeError("unwritable_output", f"cannot create {root}: {exc}") from exc
    bank = fb or build_filterbank()
    frontend = bank.params_hash()
    base = RngStream(seed)

    def _render(index: int) -> ManifestEntry:
        key = KeyLabel.from_index(index % N_CLASSES)
        piece_id = f"synth-{index:04d}"
        clip = render_piece(key, base.derive(index), duration_s, bank.sample_rate, bank.f_max)
        spec = compute_spectrogram(clip, bank)
        cache = write_spectrogram(
            cache_path_for(root, piece_id),
            spec,
            metadata={"frontend": frontend, "source": "synth", "key": key.format()},
        )
        if write_audio:
            write_wav(root / f"{piece_id}.wav", clip)
        return ManifestEntry(id=piece_id, key=key.format(), dataset=SYNTH_DATASET, feature_path=cache)

    entries: list[ManifestEntry] = []
    for index, entry, error in run_parallel(_render, range(n_pieces), workers):
        if error is not None:
            if isinstance(error, KeyscopeError):
                raise error
            raise KeyscopeError("synth_failed", f"piece {index}: {error}") from error
        entries.append(entry)
        if (index + 1) % N_CLASSES == 0 or index + 1 == n_pieces:
            _emit_progress(f"rendered {index + 1}/{n_pieces}")

    entries = assign_splits(entries, ratios, seed)
    manifest_path = write_manifest(root / MANIFEST_NAME, entries)
    log.info("Synthesised %d pieces into %s", len(entries), root)
    return SynthResult(manifest_path=manifest_path, entries=entries)
