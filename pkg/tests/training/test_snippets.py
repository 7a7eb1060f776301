from __future__ import annotations

import unittest

import numpy as np
from scipy.stats import chisquare

from keyscope.audio.spectrogram import LogFreqSpectrogram
from keyscope.evaluation.keys import parse_key_label
from keyscope.nn.rng import RngStream
from keyscope.runtime.errors import ConfigError, DataError
from keyscope.training.batches import TrainItem, augment, make_batch
from keyscope.training.snippets import (
    DEFAULT_SNIPPET_FRAMES,
    SnippetConfig,
    draw_snippet_start,
    pad_frames,
    sample_snippet,
    snippet_frames_for,
)


def _spec(frames: int, bins: int = 32, seed: int = 0) -> LogFreqSpectrogram:
    values = np.random.default_rng(seed).random((frames, bins)).astype(np.float32)
    return LogFreqSpectrogram(values=values)


class SnippetTest(unittest.TestCase):
    def test_default_snippet_is_twenty_seconds(self) -> None:
        self.assertEqual(DEFAULT_SNIPPET_FRAMES, 100)
        self.assertEqual(snippet_frames_for(20.0), 100)
        self.assertEqual(snippet_frames_for(2.0), 10)
        with self.assertRaises(ConfigError):
            snippet_frames_for(0.1)

    def test_start_stays_inside_piece(self) -> None:
        rng = RngStream(3)
        starts = [draw_snippet_start(600, 100, rng) for _ in range(2000)]
        self.assertGreaterEqual(min(starts), 0)
        self.assertLessEqual(max(starts), 500)

    def test_short_piece_starts_at_zero(self) -> None:
        rng = RngStream(3)
        self.assertEqual(draw_snippet_start(100, 100, rng), 0)
        self.assertEqual(draw_snippet_start(40, 100, rng), 0)

    def test_starts_are_uniform(self) -> None:
        rng = RngStream(11)
        starts = np.array([draw_snippet_start(110, 100, rng) for _ in range(11_000)])
        observed = np.bincount(starts, minlength=11)
        self.assertEqual(observed.size, 11)
        _, p_value = chisquare(observed)
        self.assertGreater(p_value, 0.001)

    def test_sample_snippet_length_and_content(self) -> None:
        spec = _spec(600)
        snippet = sample_snippet(spec, SnippetConfig(rng=RngStream(5), snippet_frames=100))
        self.assertEqual(snippet.values.shape, (100, 32))
        start = draw_snippet_start(600, 100, RngStream(5))
        np.testing.assert_array_equal(snippet.values, spec.values[start : start + 100])

    def test_short_piece_is_zero_padded(self) -> None:
        spec = _spec(30)
        snippet = sample_snippet(spec, SnippetConfig(rng=RngStream(0), snippet_frames=50))
        self.assertEqual(snippet.n_frames, 50)
        np.testing.assert_array_equal(snippet.values[:30], spec.values)
        self.assertFalse(snippet.values[30:].any())

    def test_pad_frames_leaves_long_inputs(self) -> None:
        values = np.ones((8, 4))
        self.assertIs(pad_frames(values, 5), values)
        self.assertEqual(pad_frames(values, 12).shape, (12, 4))

    def test_invalid_snippet_length(self) -> None:
        with self.assertRaises(ConfigError) as ctx:
            SnippetConfig(rng=RngStream(0), snippet_frames=0)
        self.assertEqual(ctx.exception.code, "invalid_snippet")


class MakeBatchTest(unittest.TestCase):
    def test_unshifted_full_piece_matches_cache(self) -> None:
        spec = _spec(100)
        item = TrainItem(id="a", spec=spec, label=parse_key_label("C major"))
        batch = make_batch([item], [RngStream(0)], 100, shift_range=(0, 0))
        self.assertEqual(batch.inputs.shape, (1, 1, 32, 100))
        np.testing.assert_array_equal(batch.inputs[0, 0], spec.values.T)
        self.assertEqual(batch.targets.tolist(), [0])
        self.assertEqual(batch.shifts, (0,))

    def test_labels_follow_shift(self) -> None:
        items = [
            TrainItem(id=str(i), spec=_spec(120, seed=i), label=parse_key_label(name))
            for i, name in enumerate(["C major", "A minor", "B major", "F# minor"])
        ]
        rngs = [RngStream(40 + i) for i in range(len(items))]
        batch = make_batch(items, rngs, 50)
        self.assertEqual(len(batch), 4)
        self.assertEqual(batch.inputs.shape, (4, 1, 32, 50))
        for item, shift, target in zip(items, batch.shifts, batch.targets):
            self.assertTrue(-4 <= shift <= 7)
            self.assertEqual(int(target), item.label.transpose(shift).index)

    def test_augment_moves_energy_up(self) -> None:
        values = np.zeros((4, 32), dtype=np.float32)
        values[:, 10] = 1.0
        item = TrainItem(id="x", spec=LogFreqSpectrogram(values=values), label=parse_key_label("Eb minor"))
        shifted, label = augment(item, 2)
        self.assertTrue(np.all(shifted.values[:, 14] == 1.0))
        self.assertEqual(label, parse_key_label("F minor"))

    def test_full_pieces_pad_to_longest(self) -> None:
        items = [
            TrainItem(id="long", spec=_spec(30), label=parse_key_label("G major")),
            TrainItem(id="short", spec=_spec(12, seed=1), label=parse_key_label("G major")),
        ]
        batch = make_batch(items, [RngStream(1), RngStream(2)], None, min_frames=8, shift_range=(0, 0))
        self.assertEqual(batch.inputs.shape, (2, 1, 32, 30))
        self.assertFalse(batch.inputs[1, 0, :, 12:].any())

    def test_min_frames_widens_batch(self) -> None:
        item = TrainItem(id="tiny", spec=_spec(3), label=parse_key_label("D major"))
        batch = make_batch([item], [RngStream(0)], None, min_frames=8, shift_range=(0, 0))
        self.assertEqual(batch.inputs.shape[-1], 8)

    def test_same_streams_give_identical_batch_bytes(self) -> None:
        items = [
            TrainItem(id=str(i), spec=_spec(90 + 7 * i, seed=i), label=parse_key_label(name))
            for i, name in enumerate(["E major", "C# minor", "Bb major"])
        ]
        first = make_batch(items, [RngStream(70 + i) for i in range(3)], 40)
        second = make_batch(items, [RngStream(70 + i) for i in range(3)], 40)
        self.assertEqual(first.inputs.tobytes(), second.inputs.tobytes())
        self.assertEqual(first.targets.tolist(), second.targets.tolist())
        self.assertEqual(first.shifts, second.shifts)

    def test_rng_count_must_match(self) -> None:
        item = TrainItem(id="a", spec=_spec(10), label=parse_key_label("C major"))
        with self.assertRaises(DataError) as ctx:
            make_batch([item, item], [RngStream(0)], 5)
        self.assertEqual(ctx.exception.code, "batch_mismatch")


if __name__ == "__main__":
    unittest.main()
