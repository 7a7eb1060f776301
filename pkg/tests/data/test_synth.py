from __future__ import annotations

import tempfile
import unittest
from collections import Counter
from pathlib import Path

import numpy as np

from keyscope.audio.cache import read_spectrogram
from keyscope.audio.spectrogram import compute_spectrogram
from keyscope.audio.filterbank import build_filterbank
from keyscope.audio.wav import load_wav
from keyscope.data.manifest import load_manifest
from keyscope.data.synth import render_piece, synth_dataset
from keyscope.evaluation.baseline import TemplateKeyClassifier, chroma_profile
from keyscope.evaluation.keys import parse_key_label
from keyscope.nn.rng import RngStream
from keyscope.runtime.errors import ConfigError, KeyscopeError

SHORT_PIECE_S = 4.0


class SynthDatasetTest(unittest.TestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.tmp = Path(self._tmp.name)

    def test_one_piece_per_key(self) -> None:
        result = synth_dataset(self.tmp / "set", 24, seed=4, duration_s=SHORT_PIECE_S)
        counts = Counter(entry.label.index for entry in result.entries)
        self.assertEqual(sorted(counts), list(range(24)))
        self.assertTrue(all(count == 1 for count in counts.values()))
        splits = Counter(entry.split for entry in result.entries)
        self.assertEqual(splits["train"], 18)
        self.assertEqual(splits["valid"], 6)

        reloaded = load_manifest(result.manifest_path)
        self.assertEqual([e.id for e in reloaded], [e.id for e in result.entries])
        spec = read_spectrogram(reloaded[0].feature_path)
        self.assertEqual(spec.n_frames, 20)
        self.assertEqual(spec.n_bins, 121)

    def test_same_seed_gives_identical_caches(self) -> None:
        first = synth_dataset(self.tmp / "a", 24, seed=9, duration_s=SHORT_PIECE_S, workers=3)
        second = synth_dataset(self.tmp / "b", 24, seed=9, duration_s=SHORT_PIECE_S, workers=1)
        for left, right in zip(first.entries, second.entries):
            self.assertEqual(left.feature_path.read_bytes(), right.feature_path.read_bytes())
        self.assertEqual(first.manifest_path.read_text(), second.manifest_path.read_text())

        third = synth_dataset(self.tmp / "c", 24, seed=10, duration_s=SHORT_PIECE_S)
        self.assertNotEqual(first.entries[0].feature_path.read_bytes(), third.entries[0].feature_path.read_bytes())

    def test_written_audio_matches_cache(self) -> None:
        result = synth_dataset(self.tmp / "wav", 1, seed=0, duration_s=SHORT_PIECE_S, write_audio=True)
        wav = self.tmp / "wav" / "synth-0000.wav"
        self.assertTrue(wav.exists())
        recomputed = compute_spectrogram(load_wav(wav), build_filterbank())
        cached = read_spectrogram(result.entries[0].feature_path)
        np.testing.assert_allclose(recomputed.values, cached.values, atol=1e-2)

    def test_invalid_arguments(self) -> None:
        with self.assertRaises(ConfigError):
            synth_dataset(self.tmp / "none", 0, seed=0)
        with self.assertRaises(ConfigError):
            synth_dataset(self.tmp / "neg", 24, seed=0, duration_s=-1.0)
        blocker = self.tmp / "blocker"
        blocker.write_text("")
        with self.assertRaises(KeyscopeError) as ctx:
            synth_dataset(blocker / "inside", 24, seed=0)
        self.assertEqual(ctx.exception.code, "unwritable_output")
        self.assertEqual(ctx.exception.exit_status, 1)


class RenderPieceTest(unittest.TestCase):
    def test_chroma_peaks_on_tonic_triad(self) -> None:
        fb = build_filterbank()
        clip = render_piece(parse_key_label("D major"), RngStream(1), duration_s=SHORT_PIECE_S)
        self.assertLessEqual(float(np.max(np.abs(clip.samples))), 0.5 + 1e-9)
        profile = chroma_profile(compute_spectrogram(clip, fb))
        top_three = set(np.argsort(profile)[-3:].tolist())
        self.assertIn(2, top_three)
        self.assertTrue(top_three <= {2, 4, 6, 7, 9, 11, 1})

    def test_transposition_moves_spectrum_two_bins_per_semitone(self) -> None:
        fb = build_filterbank()

        def profile(name: str) -> np.ndarray:
            clip = render_piece(parse_key_label(name), RngStream(3), duration_s=SHORT_PIECE_S)
            values = compute_spectrogram(clip, fb).values.mean(axis=0)
            return values - values.mean()

        base = profile("C major")
        for semitones, name in ((1, "C# major"), (2, "D major"), (4, "E major"), (5, "F major")):
            moved = profile(name)
            lags = list(range(-4, 2 * semitones + 5))
            scores = []
            for lag in lags:
                a, b = (base[: base.size - lag], moved[lag:]) if lag >= 0 else (base[-lag:], moved[: moved.size + lag])
                scores.append(float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b))))
            with self.subTest(semitones=semitones):
                self.assertLessEqual(abs(lags[int(np.argmax(scores))] - 2 * semitones), 1)


class TemplateBaselineTest(unittest.TestCase):
    def test_labels_are_learnable(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            train = synth_dataset(Path(tmp) / "train", 48, seed=1, duration_s=SHORT_PIECE_S)
            held_out = synth_dataset(Path(tmp) / "test", 24, seed=2, duration_s=SHORT_PIECE_S)
            classifier = TemplateKeyClassifier().fit(
                [read_spectrogram(e.feature_path) for e in train.entries], [e.label for e in train.entries]
            )
            hits = sum(
                classifier.predict(read_spectrogram(e.feature_path)) == e.label for e in held_out.entries
            )
        self.assertGreater(hits / len(held_out.entries), 0.8)


if __name__ == "__main__":
    unittest.main()
