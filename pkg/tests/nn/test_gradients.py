from __future__ import annotations

import unittest

import numpy as np

from keyscope.models.builders import build_model
from keyscope.models.config import ArchitectureConfig
from keyscope.nn.gradcheck import numerical_gradient, relative_error
from keyscope.nn.layers import (
    BatchNorm2D,
    Conv2D,
    Dense,
    Elu,
    FrameDense,
    GlobalAvgPool,
    MaxPool2x2,
    TimeAvgPool,
)
from keyscope.nn.losses import softmax_xent
from keyscope.nn.rng import RngStream

TOLERANCE = 1e-4
# gradients that vanish analytically (conv bias under batch norm) leave only rounding noise
VANISHING = 1e-7
SEEDS = (0, 1, 2, 3, 4)
SHAPES = ((2, 3, 5, 4), (1, 2, 6, 6), (3, 1, 4, 7))


def _assert_gradient(test: unittest.TestCase, analytic: np.ndarray, numeric: np.ndarray, label: str) -> None:
    if np.linalg.norm(analytic) < VANISHING and np.linalg.norm(numeric) < VANISHING:
        return
    test.assertLess(relative_error(analytic, numeric), TOLERANCE, label)


def _check_layer(test: unittest.TestCase, layer, x: np.ndarray, seed: int) -> None:
    upstream = np.random.default_rng(seed + 1000).standard_normal(layer.forward(x, training=True).shape)

    def loss() -> float:
        return float(np.sum(layer.forward(x, training=True) * upstream))

    for param in layer.parameters():
        param.zero_grad()
    layer.forward(x, training=True)
    dx = layer.backward(upstream)

    _assert_gradient(test, dx, numerical_gradient(loss, x), f"{layer.name} input")
    for param in layer.parameters():
        _assert_gradient(test, param.grad, numerical_gradient(loss, param.value), param.name)


class LayerGradientTest(unittest.TestCase):
    def _inputs(self):
        for seed in SEEDS:
            for shape in SHAPES:
                yield seed, shape, np.random.default_rng(seed).standard_normal(shape)

    def test_conv_3x3(self) -> None:
        for seed, shape, x in self._inputs():
            with self.subTest(seed=seed, shape=shape):
                layer = Conv2D(shape[1], 3, 3, name="conv", rng=RngStream(seed), dtype=np.float64)
                _check_layer(self, layer, x, seed)

    def test_conv_5x5_and_1x1(self) -> None:
        for kernel in (1, 5):
            for seed, shape, x in self._inputs():
                with self.subTest(kernel=kernel, seed=seed, shape=shape):
                    layer = Conv2D(shape[1], 2, kernel, name=f"conv{kernel}", rng=RngStream(seed + kernel), dtype=np.float64)
                    _check_layer(self, layer, x, seed)

    def test_batchnorm(self) -> None:
        for seed, shape, x in self._inputs():
            with self.subTest(seed=seed, shape=shape):
                layer = BatchNorm2D(shape[1], name="bn", dtype=np.float64)
                layer.state.gamma.value[...] = np.random.default_rng(seed).uniform(0.5, 1.5, shape[1])
                _check_layer(self, layer, x, seed)

    def test_elu(self) -> None:
        for seed, shape, x in self._inputs():
            with self.subTest(seed=seed, shape=shape):
                _check_layer(self, Elu(), x, seed)

    def test_maxpool(self) -> None:
        for seed, shape, x in self._inputs():
            with self.subTest(seed=seed, shape=shape):
                _check_layer(self, MaxPool2x2(), x, seed)

    def test_pooling_means(self) -> None:
        for seed, shape, x in self._inputs():
            with self.subTest(seed=seed, shape=shape):
                _check_layer(self, GlobalAvgPool(), x, seed)
                _check_layer(self, TimeAvgPool(), x, seed)

    def test_dense(self) -> None:
        for seed, shape, x in self._inputs():
            with self.subTest(seed=seed, shape=shape):
                features = shape[1] * shape[2] * shape[3]
                layer = Dense(features, 5, name="dense", rng=RngStream(seed), dtype=np.float64)
                _check_layer(self, layer, x, seed)

    def test_frame_dense(self) -> None:
        for seed, shape, x in self._inputs():
            with self.subTest(seed=seed, shape=shape):
                layer = FrameDense(shape[1] * shape[2], 4, name="embed", rng=RngStream(seed), dtype=np.float64)
                _check_layer(self, layer, x, seed)


class LossGradientTest(unittest.TestCase):
    def test_softmax_xent_matches_finite_differences(self) -> None:
        for seed in SEEDS:
            for batch in (1, 3, 8):
                with self.subTest(seed=seed, batch=batch):
                    gen = np.random.default_rng(seed)
                    logits = 3.0 * gen.standard_normal((batch, 24))
                    targets = gen.integers(0, 24, size=batch)
                    _, grad = softmax_xent(logits, targets)
                    numeric = numerical_gradient(lambda: softmax_xent(logits, targets)[0], logits)
                    self.assertEqual(grad.dtype, np.float64)
                    _assert_gradient(self, grad, numeric, "logits")
                    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-12)


class ModelGradientTest(unittest.TestCase):
    def _check_model(self, cfg: ArchitectureConfig, x: np.ndarray, targets: np.ndarray) -> None:
        model = build_model(cfg, seed=7, dtype=np.float64)

        def loss() -> float:
            value, _ = softmax_xent(model.forward(x, training=True), targets)
            return value

        model.zero_grad()
        _, grad = softmax_xent(model.forward(x, training=True), targets)
        model.backward(grad)
        for param in model.parameters():
            with self.subTest(param=param.name):
                _assert_gradient(self, param.grad, numerical_gradient(loss, param.value), param.name)

    def test_keynet_end_to_end(self) -> None:
        cfg = ArchitectureConfig(kind="keynet", n_feature_maps=2, n_bins=6, embedding_dim=3)
        x = np.random.default_rng(21).standard_normal((3, 1, 6, 5))
        self._check_model(cfg, x, np.array([0, 13, 7]))

    def test_allconv_end_to_end(self) -> None:
        cfg = ArchitectureConfig(kind="allconv", n_feature_maps=1, n_bins=16)
        x = np.random.default_rng(22).standard_normal((2, 1, 16, 24))
        self._check_model(cfg, x, np.array([4, 20]))


if __name__ == "__main__":
    unittest.main()
