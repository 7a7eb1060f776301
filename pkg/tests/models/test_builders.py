from __future__ import annotations

import unittest

import numpy as np

from keyscope.models.builders import build_allconv, build_keynet, build_model
from keyscope.models.config import ArchitectureConfig
from keyscope.models.counting import count_params
from keyscope.models.model import KeyModel
from keyscope.models.predict import predict, predict_batch, spectrogram_batch
from keyscope.audio.spectrogram import LogFreqSpectrogram
from keyscope.runtime.errors import ConfigError, ShapeError

KEYNET_GOLDEN = "|".join(
    ["conv5x5:8|bn|elu|dropout"] * 5 + ["framedense:16", "elu", "timeavg", "dense:24", "softmax"]
)
ALLCONV_GOLDEN = "|".join(
    [
        "conv5x5:2|bn|elu",
        "conv3x3:2|bn|elu",
        "maxpool2x2|dropout",
        "conv3x3:4|bn|elu",
        "conv3x3:4|bn|elu",
        "maxpool2x2|dropout",
        "conv3x3:8|bn|elu",
        "conv3x3:8|bn|elu",
        "maxpool2x2|dropout",
        "conv3x3:16|bn|elu|dropout",
        "conv3x3:16|bn|elu|dropout",
        "conv1x1:24|bn",
        "globalavg",
        "softmax",
    ]
)


def _layer_count_oracle(kind: str, n_f: int, n_bins: int = 121, embedding: int | None = None) -> int:
    """Independent parameter arithmetic: conv k*k*in*out + out, batch norm 2*out."""

    def conv(k: int, c_in: int, c_out: int) -> int:
        return k * k * c_in * c_out + c_out + 2 * c_out

    if kind == "keynet":
        emb = embedding if embedding is not None else 2 * n_f
        total = conv(5, 1, n_f) + 4 * conv(5, n_f, n_f)
        return total + (n_bins * n_f * emb + emb) + (emb * 24 + 24)
    plan = [(5, 1, n_f), (3, n_f, n_f), (3, n_f, 2 * n_f), (3, 2 * n_f, 2 * n_f)]
    plan += [(3, 2 * n_f, 4 * n_f), (3, 4 * n_f, 4 * n_f), (3, 4 * n_f, 8 * n_f), (3, 8 * n_f, 8 * n_f)]
    plan.append((1, 8 * n_f, 24))
    return sum(conv(*step) for step in plan)


class SignatureTest(unittest.TestCase):
    def test_keynet_golden_signature(self) -> None:
        model = build_keynet(ArchitectureConfig(kind="keynet", n_feature_maps=8))
        self.assertEqual(model.signature(), KEYNET_GOLDEN)

    def test_allconv_golden_signature(self) -> None:
        model = build_allconv(ArchitectureConfig(kind="allconv", n_feature_maps=2))
        self.assertEqual(model.signature(), ALLCONV_GOLDEN)

    def test_every_conv_is_followed_by_batch_norm(self) -> None:
        for kind in ("keynet", "allconv"):
            parts = build_model(ArchitectureConfig(kind=kind, n_feature_maps=4)).signature().split("|")
            for index, part in enumerate(parts):
                if part.startswith("conv"):
                    self.assertEqual(parts[index + 1], "bn")

    def test_builders_reject_wrong_kind(self) -> None:
        with self.assertRaises(ConfigError):
            build_keynet(ArchitectureConfig(kind="allconv", n_feature_maps=2))
        with self.assertRaises(ConfigError):
            ArchitectureConfig(kind="resnet", n_feature_maps=2)
        with self.assertRaises(ConfigError):
            ArchitectureConfig(kind="keynet", n_feature_maps=0)


class CountingTest(unittest.TestCase):
    def test_keynet_embedding_count(self) -> None:
        counts = count_params(build_keynet(ArchitectureConfig(kind="keynet", n_feature_maps=8)))
        self.assertEqual(counts.per_layer["embed"], 121 * 8 * 16 + 16)
        self.assertEqual(counts.per_layer["embed"], 15_504)
        self.assertEqual(counts.total, 22_632)
        self.assertEqual(counts.total, _layer_count_oracle("keynet", 8))

    def test_keynet_counts_match_oracle(self) -> None:
        for n_f in (2, 8, 20):
            with self.subTest(n_f=n_f):
                model = build_keynet(ArchitectureConfig(kind="keynet", n_feature_maps=n_f))
                self.assertEqual(count_params(model).total, _layer_count_oracle("keynet", n_f))
        self.assertEqual(_layer_count_oracle("keynet", 2), 1_572)

    def test_keynet_dense_share_with_wide_embedding(self) -> None:
        counts = count_params(build_keynet(ArchitectureConfig(kind="keynet", n_feature_maps=8, embedding_dim=48)))
        self.assertEqual(counts.total, 54_408)
        self.assertEqual(counts.dense_params, 46_512)
        self.assertGreater(counts.dense_share, 0.5)
        self.assertAlmostEqual(counts.dense_share, 46_512 / 54_408)

    def test_allconv_counts(self) -> None:
        counts = count_params(build_allconv(ArchitectureConfig(kind="allconv", n_feature_maps=2)))
        self.assertEqual(counts.total, 5_258)
        self.assertEqual(counts.total, _layer_count_oracle("allconv", 2))
        self.assertEqual(counts.per_layer["conv9"], 8 * 2 * 24 + 24)
        for n_f in (4, 8, 20, 24):
            with self.subTest(n_f=n_f):
                model = build_allconv(ArchitectureConfig(kind="allconv", n_feature_maps=n_f))
                self.assertEqual(count_params(model).total, _layer_count_oracle("allconv", n_f))

    def test_doubling_feature_maps_quadruples_interior_convs(self) -> None:
        small = count_params(build_allconv(ArchitectureConfig(kind="allconv", n_feature_maps=8))).per_layer
        large = count_params(build_allconv(ArchitectureConfig(kind="allconv", n_feature_maps=16))).per_layer
        self.assertAlmostEqual(large["conv4"] / small["conv4"], 4.0, delta=0.05)

    def test_empty_model(self) -> None:
        model = KeyModel(ArchitectureConfig(kind="allconv", n_feature_maps=1), [])
        self.assertEqual(count_params(model).total, 0)


class PredictTest(unittest.TestCase):
    def _spec(self, frames: int, bins: int = 121, seed: int = 0) -> LogFreqSpectrogram:
        values = np.random.default_rng(seed).random((frames, bins)).astype(np.float32)
        return LogFreqSpectrogram(values=values)

    def test_zeroed_classifier_gives_uniform_distribution(self) -> None:
        model = build_keynet(ArchitectureConfig(kind="keynet", n_feature_maps=2))
        classifier = next(layer for layer in model.layers if layer.name == "classifier")
        classifier.weight.value[...] = 0.0
        classifier.bias.value[...] = 0.0
        prediction = predict(model, self._spec(20))
        np.testing.assert_allclose(prediction.distribution, np.full(24, 1 / 24), atol=1e-7)

    def test_variable_lengths_give_a_simplex(self) -> None:
        for kind in ("keynet", "allconv"):
            model = build_model(ArchitectureConfig(kind=kind, n_feature_maps=2), seed=1)
            for frames in (model.config.min_frames, 37, 100, 150, 600):
                with self.subTest(kind=kind, frames=frames):
                    prediction = predict(model, self._spec(frames))
                    self.assertEqual(prediction.distribution.shape, (24,))
                    self.assertAlmostEqual(float(prediction.distribution.sum()), 1.0, delta=1e-5)
                    self.assertEqual(prediction.label.index, int(np.argmax(prediction.distribution)))

    def test_prediction_is_independent_of_batch_composition(self) -> None:
        model = build_allconv(ArchitectureConfig(kind="allconv", n_feature_maps=2), seed=2)
        specs = [self._spec(32, seed=seed) for seed in range(3)]
        batched = predict_batch(model, spectrogram_batch(specs))
        for spec, together in zip(specs, batched):
            alone = predict(model, spec)
            np.testing.assert_allclose(alone.distribution, together.distribution, rtol=1e-6, atol=1e-9)
        np.testing.assert_array_equal(predict(model, specs[0]).distribution, batched[0].distribution)

    def test_too_short_input_names_minimum(self) -> None:
        model = build_allconv(ArchitectureConfig(kind="allconv", n_feature_maps=2))
        with self.assertRaises(ShapeError) as ctx:
            predict(model, self._spec(7))
        self.assertEqual(ctx.exception.code, "input_too_short")
        self.assertIn("8", str(ctx.exception))

    def test_keynet_requires_exact_bins(self) -> None:
        model = build_keynet(ArchitectureConfig(kind="keynet", n_feature_maps=2))
        with self.assertRaises(ShapeError) as ctx:
            predict(model, self._spec(10, bins=100))
        self.assertEqual(ctx.exception.code, "bin_mismatch")


if __name__ == "__main__":
    unittest.main()
