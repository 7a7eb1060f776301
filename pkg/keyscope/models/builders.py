from __future__ import annotations

import logging

import numpy as np

from keyscope.models.config import ArchitectureConfig
from keyscope.models.model import KeyModel
from keyscope.nn.layers import (
    BatchNorm2D,
    Conv2D,
    Dense,
    Elu,
    FrameDense,
    GlobalAvgPool,
    Layer,
    MaxPool2x2,
    SpatialDropout,
    TimeAvgPool,
)
from keyscope.nn.rng import RngStream
from keyscope.runtime.errors import ConfigError

log = logging.getLogger(__name__)

KEYNET_CONV_LAYERS = 5
KEYNET_KERNEL = 5

# (out-channel multiple of N_f, kernel) per conv; "pool" closes a block.
_ALLCONV_PLAN: tuple = (
    (1, 5),
    (1, 3),
    "pool",
    (2, 3),
    (2, 3),
    "pool",
    (4, 3),
    (4, 3),
    "pool",
    (8, 3),
    "drop",
    (8, 3),
    "drop",
)


class _Assembler:
    def __init__(self, cfg: ArchitectureConfig, rng: RngStream, dtype) -> None:
        self.cfg = cfg
        self.rng = rng
        self.dtype = dtype
        self.layers: list[Layer] = []
        self.convs = 0
        self.pools = 0
        self.drops = 0

    def conv(self, in_channels: int, out_channels: int, kernel: int, *, activation: bool = True) -> None:
        self.convs += 1
        idx = self.convs
        self.layers.append(
            Conv2D(
                in_channels,
                out_channels,
                kernel,
                name=f"conv{idx}",
                rng=self.rng.derive(idx),
                dtype=self.dtype,
            )
        )
        self.layers.append(BatchNorm2D(out_channels, name=f"bn{idx}", dtype=self.dtype))
        if activation:
            self.layers.append(Elu(name=f"elu{idx}"))

    def dropout(self) -> None:
        self.drops += 1
        self.layers.append(SpatialDropout(self.cfg.dropout_p, name=f"drop{self.drops}"))

    def pool(self) -> None:
        self.pools += 1
        self.layers.append(MaxPool2x2(name=f"pool{self.pools}"))


def build_keynet(cfg: ArchitectureConfig, seed: int = 0, dtype=np.float32) -> KeyModel:
    """Five 5x5 conv blocks, frame-wise dense embedding, time average, 24-way dense."""
    if cfg.kind != "keynet":
        raise ConfigError("wrong_architecture", f"build_keynet needs kind=keynet, got {cfg.kind}")
    rng = RngStream(seed)
    asm = _Assembler(cfg, rng, dtype)
    n_f = cfg.n_feature_maps
    channels = 1
    for _ in range(KEYNET_CONV_LAYERS):
        asm.conv(channels, n_f, KEYNET_KERNEL)
        asm.dropout()
        channels = n_f
    embed = cfg.embedding_size
    asm.layers.extend(
        [
            FrameDense(cfg.n_bins * n_f, embed, name="embed", rng=rng.derive(100), dtype=dtype),
            Elu(name="embed_elu"),
            TimeAvgPool(name="timeavg"),
            Dense(embed, cfg.n_classes, name="classifier", rng=rng.derive(101), dtype=dtype),
        ]
    )
    log.debug("Built keynet N_f=%d embedding=%d bins=%d", n_f, embed, cfg.n_bins)
    return KeyModel(cfg, asm.layers, dtype=dtype)


def build_allconv(cfg: ArchitectureConfig, seed: int = 0, dtype=np.float32) -> KeyModel:
    """Conv/pool blocks ending in a 1x1 classifier conv and global average pooling."""
    if cfg.kind != "allconv":
        raise ConfigError("wrong_architecture", f"build_allconv needs kind=allconv, got {cfg.kind}")
    asm = _Assembler(cfg, RngStream(seed), dtype)
    n_f = cfg.n_feature_maps
    channels = 1
    for step in _ALLCONV_PLAN:
        if step == "pool":
            asm.pool()
            asm.dropout()
        elif step == "drop":
            asm.dropout()
        else:
            multiple, kernel = step
            asm.conv(channels, multiple * n_f, kernel)
            channels = multiple * n_f
    asm.conv(channels, cfg.n_classes, 1, activation=False)
    asm.layers.append(GlobalAvgPool(name="gap"))
    log.debug("Built allconv N_f=%d", n_f)
    return KeyModel(cfg, asm.layers, dtype=dtype)


def build_model(cfg: ArchitectureConfig, seed: int = 0, dtype=np.float32) -> KeyModel:
    if cfg.kind == "keynet":
        return build_keynet(cfg, seed=seed, dtype=dtype)
    return build_allconv(cfg, seed=seed, dtype=dtype)
