from __future__ import annotations

from typing import Iterable

import numpy as np

from keyscope.models.config import ArchitectureConfig
from keyscope.nn.layers import Layer, SpatialDropout
from keyscope.nn.rng import RngStream
from keyscope.nn.tensor import Parameter
from keyscope.runtime.errors import CheckpointError, ShapeError


class KeyModel:
    """Ordered layer stack producing 24 key logits per input item."""

    def __init__(self, config: ArchitectureConfig, layers: Iterable[Layer], dtype=np.float32) -> None:
        self.config = config
        self.layers: list[Layer] = list(layers)
        self.dtype = np.dtype(dtype)

    def __len__(self) -> int:
        return len(self.layers)

    def set_rng(self, rng: RngStream) -> None:
        for layer in self.layers:
            if isinstance(layer, SpatialDropout):
                layer.rng = rng

    def check_input(self, x: np.ndarray) -> None:
        if x.ndim != 4:
            raise ShapeError("bad_rank", f"model input must be (batch, 1, bins, frames), got {x.shape}")
        _, channels, bins, frames = x.shape
        cfg = self.config
        if channels != 1:
            raise ShapeError("channel_mismatch", f"model input must have one channel, got {channels}")
        if cfg.kind == "keynet" and bins != cfg.n_bins:
            raise ShapeError("bin_mismatch", f"keynet expects exactly {cfg.n_bins} bins, got {bins}")
        if frames < cfg.min_frames or bins < cfg.min_bins:
            raise ShapeError(
                "input_too_short",
                f"{cfg.kind} needs at least {cfg.min_frames} frames x {cfg.min_bins} bins, got {frames} x {bins}",
            )

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self.check_input(x)
        out = np.asarray(x, dtype=self.dtype)
        for layer in self.layers:
            out = layer.forward(out, training=training)
        return out.reshape(out.shape[0], -1)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self) -> list[Parameter]:
        return [param for layer in self.layers for param in layer.parameters()]

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def clear_caches(self) -> None:
        for layer in self.layers:
            layer.clear_cache()

    def activation_nbytes(self) -> int:
        """Bytes currently held by layer caches for the backward pass."""
        return sum(layer.cache_nbytes() for layer in self.layers)

    def state_dict(self) -> dict[str, np.ndarray]:
        tensors: dict[str, np.ndarray] = {}
        for layer in self.layers:
            for param in layer.parameters():
                tensors[param.name] = param.value
            tensors.update(layer.buffers())
        return tensors

    def load_state_dict(self, tensors: dict[str, np.ndarray]) -> None:
        own = self.state_dict()
        missing = sorted(set(own) - set(tensors))
        unexpected = sorted(set(tensors) - set(own))
        if missing or unexpected:
            raise CheckpointError(
                "name_mismatch",
                f"checkpoint tensors do not match the model (missing={missing}, unexpected={unexpected})",
            )
        for name, target in own.items():
            source = np.asarray(tensors[name])
            if source.shape != target.shape:
                raise CheckpointError(
                    "shape_mismatch", f"{name}: checkpoint shape {source.shape} != model shape {target.shape}"
                )
            target[...] = source

    def copy_state(self) -> dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.state_dict().items()}

    def signature(self) -> str:
        """Layer sequence, e.g. ``conv5x5:8|bn|elu|dropout|...|softmax``."""
        return "|".join([layer.signature() for layer in self.layers] + ["softmax"])
