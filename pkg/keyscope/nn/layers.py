"""Layer set for KeyNet and AllConv.

Tensors follow the (batch, channels, frequency, time) convention. Every layer
caches what its backward pass needs during ``forward`` and accumulates
parameter gradients into ``Parameter.grad`` during ``backward``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from keyscope.nn.rng import RngStream
from keyscope.nn.tensor import DEFAULT_DTYPE, Parameter, fan_in_uniform
from keyscope.runtime.errors import ConfigError, ShapeError


BN_MOMENTUM = 0.1
BN_EPS = 1e-5


class Layer:
    name: str = ""

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def parameters(self) -> list[Parameter]:
        return []

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def signature(self) -> str:
        raise NotImplementedError

    def cache_nbytes(self) -> int:
        return sum(int(value.nbytes) for value in self._cached_arrays())

    def clear_cache(self) -> None:
        for attr in list(vars(self)):
            if attr.startswith("_cache"):
                setattr(self, attr, None)

    def _cached_arrays(self) -> Iterator[np.ndarray]:
        for attr, value in vars(self).items():
            if attr.startswith("_cache") and isinstance(value, np.ndarray):
                yield value


def _require_rank(x: np.ndarray, rank: int, layer: str) -> None:
    if x.ndim != rank:
        raise ShapeError("bad_rank", f"{layer} expects a rank-{rank} tensor, got shape {x.shape}")


class Conv2D(Layer):
    """Stride-1 convolution with "same" zero padding, computed via im2col."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        *,
        name: str = "conv",
        rng: RngStream | None = None,
        dtype=DEFAULT_DTYPE,
    ) -> None:
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise ConfigError("invalid_kernel", f"kernel size must be odd and positive, got {kernel_size}")
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        fan_in = in_channels * kernel_size * kernel_size
        generator = (rng or RngStream(0)).generator
        self.kernel = Parameter(
            f"{name}.kernel",
            fan_in_uniform((out_channels, in_channels, kernel_size, kernel_size), fan_in, generator, dtype),
        )
        self.bias = Parameter(f"{name}.bias", np.zeros(out_channels, dtype=dtype))
        self._cache_padded: np.ndarray | None = None

    def parameters(self) -> list[Parameter]:
        return [self.kernel, self.bias]

    def signature(self) -> str:
        return f"conv{self.kernel_size}x{self.kernel_size}:{self.out_channels}"

    def _im2col(self, padded: np.ndarray, h: int, w: int) -> np.ndarray:
        k = self.kernel_size
        n, c = padded.shape[:2]
        windows = sliding_window_view(padded, (k, k), axis=(2, 3))
        return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * k * k)

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        _require_rank(x, 4, self.name)
        n, c, h, w = x.shape
        if c != self.in_channels:
            raise ShapeError(
                "channel_mismatch",
                f"{self.name} expects {self.in_channels} input channels, got {c}",
            )
        k = self.kernel_size
        pad = k // 2
        padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        cols = self._im2col(padded, h, w)
        weights = self.kernel.value.reshape(self.out_channels, -1)
        out = cols @ weights.T + self.bias.value
        if training:
            self._cache_padded = padded
        return np.ascontiguousarray(out.reshape(n, h, w, self.out_channels).transpose(0, 3, 1, 2))

    def backward(self, grad: np.ndarray) -> np.ndarray:
        if self._cache_padded is None:
            raise RuntimeError(f"{self.name}: backward called before a train-mode forward")
        k = self.kernel_size
        pad = k // 2
        n, c = self._cache_padded.shape[:2]
        h, w = grad.shape[2:]
        flat = grad.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        self.kernel.accumulate((flat.T @ self._im2col(self._cache_padded, h, w)).reshape(self.kernel.shape))
        self.bias.accumulate(flat.sum(axis=0))
        weights = self.kernel.value.reshape(self.out_channels, -1)
        dcols = (flat @ weights).reshape(n, h, w, c, k, k)
        dpadded = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                dpadded[:, :, i : i + h, j : j + w] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dpadded[:, :, pad : pad + h, pad : pad + w]


@dataclass(eq=False)
class BatchNormState:
    gamma: Parameter
    beta: Parameter
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS

    @classmethod
    def fresh(cls, name: str, channels: int, dtype=DEFAULT_DTYPE) -> "BatchNormState":
        return cls(
            gamma=Parameter(f"{name}.gamma", np.ones(channels, dtype=dtype)),
            beta=Parameter(f"{name}.beta", np.zeros(channels, dtype=dtype)),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
        )

    @property
    def channels(self) -> int:
        return int(self.gamma.value.shape[0])


def _per_channel(values: np.ndarray) -> np.ndarray:
    return values[None, :, None, None]


class BatchNorm2D(Layer):
    def __init__(self, channels: int, *, name: str = "bn", dtype=DEFAULT_DTYPE) -> None:
        self.name = name
        self.state = BatchNormState.fresh(name, channels, dtype)
        self._cache_xhat: np.ndarray | None = None
        self._cache_inv_std: np.ndarray | None = None

    def parameters(self) -> list[Parameter]:
        return [self.state.gamma, self.state.beta]

    def buffers(self) -> dict[str, np.ndarray]:
        return {
            f"{self.name}.running_mean": self.state.running_mean,
            f"{self.name}.running_var": self.state.running_var,
        }

    def signature(self) -> str:
        return "bn"

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        _require_rank(x, 4, self.name)
        st = self.state
        if x.shape[1] != st.channels:
            raise ShapeError("channel_mismatch", f"{self.name} expects {st.channels} channels, got {x.shape[1]}")
        gamma = _per_channel(st.gamma.value)
        beta = _per_channel(st.beta.value)
        if not training:
            inv_std = (1.0 / np.sqrt(st.running_var.astype(np.float64) + st.eps)).astype(x.dtype)
            return gamma * (x - _per_channel(st.running_mean)) * _per_channel(inv_std) + beta

        mean = x.mean(axis=(0, 2, 3), dtype=np.float64)
        var = x.var(axis=(0, 2, 3), dtype=np.float64)
        inv_std = 1.0 / np.sqrt(var + st.eps)
        xhat = ((x - _per_channel(mean)) * _per_channel(inv_std)).astype(x.dtype)
        m = st.momentum
        st.running_mean[...] = (1.0 - m) * st.running_mean + m * mean
        st.running_var[...] = (1.0 - m) * st.running_var + m * var
        self._cache_xhat = xhat
        self._cache_inv_std = inv_std.astype(x.dtype)
        return gamma * xhat + beta

    def backward(self, grad: np.ndarray) -> np.ndarray:
        st = self.state
        gamma = _per_channel(st.gamma.value)
        inv_std = self._cache_inv_std
        if inv_std is None:
            raise RuntimeError(f"{self.name}: backward called before a train-mode forward")
        xhat = self._cache_xhat
        st.gamma.accumulate((grad * xhat).sum(axis=(0, 2, 3), dtype=np.float64))
        st.beta.accumulate(grad.sum(axis=(0, 2, 3), dtype=np.float64))
        count = grad.shape[0] * grad.shape[2] * grad.shape[3]
        dxhat = grad * gamma
        sum_dxhat = _per_channel(dxhat.sum(axis=(0, 2, 3), dtype=np.float64))
        sum_dxhat_xhat = _per_channel((dxhat * xhat).sum(axis=(0, 2, 3), dtype=np.float64))
        dx = _per_channel(inv_std) / count * (count * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
        return dx.astype(grad.dtype)


class Elu(Layer):
    def __init__(self, *, name: str = "elu") -> None:
        self.name = name
        self._cache_input: np.ndarray | None = None

    def signature(self) -> str:
        return "elu"

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if training:
            self._cache_input = x
        return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x = self._cache_input
        return grad * np.where(x > 0, 1.0, np.exp(np.minimum(x, 0))).astype(grad.dtype)


class SpatialDropout(Layer):
    """Inverted dropout over whole feature maps."""

    def __init__(self, p: float, *, name: str = "dropout", rng: RngStream | None = None) -> None:
        if not 0.0 <= p < 1.0:
            raise ConfigError("invalid_dropout", f"dropout probability must be in [0, 1), got {p}")
        self.name = name
        self.p = float(p)
        self.rng = rng
        self._cache_mask: np.ndarray | None = None

    def signature(self) -> str:
        return "dropout"

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if not training or self.p == 0.0:
            if training:
                self._cache_mask = None
            return x
        if self.rng is None:
            raise ConfigError("missing_rng", f"{self.name} needs an rng stream in train mode")
        keep = self.rng.random((x.shape[0], x.shape[1])) >= self.p
        mask = (keep / (1.0 - self.p)).astype(x.dtype)
        mask = mask.reshape(x.shape[:2] + (1,) * (x.ndim - 2))
        self._cache_mask = mask
        return x * mask

    def backward(self, grad: np.ndarray) -> np.ndarray:
        if self._cache_mask is None:
            return grad
        return grad * self._cache_mask


class MaxPool2x2(Layer):
    def __init__(self, *, name: str = "pool") -> None:
        self.name = name
        self._cache_argmax: np.ndarray | None = None
        self._cache_shape: tuple[int, ...] | None = None

    def signature(self) -> str:
        return "maxpool2x2"

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        _require_rank(x, 4, self.name)
        n, c, h, w = x.shape
        if h < 2 or w < 2:
            raise ShapeError("too_small_for_pool", f"{self.name} needs spatial extents >= 2, got {h}x{w}")
        ho, wo = h // 2, w // 2
        blocks = (
            x[:, :, : 2 * ho, : 2 * wo]
            .reshape(n, c, ho, 2, wo, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, ho, wo, 4)
        )
        argmax = blocks.argmax(axis=-1)
        if training:
            self._cache_argmax = argmax
            self._cache_shape = x.shape
        return np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        n, c, h, w = self._cache_shape
        ho, wo = h // 2, w // 2
        routed = np.zeros((n, c, ho, wo, 4), dtype=grad.dtype)
        np.put_along_axis(routed, self._cache_argmax[..., None], grad[..., None], axis=-1)
        dx = np.zeros((n, c, h, w), dtype=grad.dtype)
        dx[:, :, : 2 * ho, : 2 * wo] = (
            routed.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
        )
        return dx


class GlobalAvgPool(Layer):
    """(N, C, H, W) -> (N, C)."""

    def __init__(self, *, name: str = "gap") -> None:
        self.name = name
        self._cache_shape: tuple[int, ...] | None = None

    def signature(self) -> str:
        return "globalavg"

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        _require_rank(x, 4, self.name)
        if training:
            self._cache_shape = x.shape
        return x.mean(axis=(2, 3), dtype=np.float64).astype(x.dtype)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        n, c, h, w = self._cache_shape
        return np.broadcast_to(grad[:, :, None, None] / (h * w), (n, c, h, w)).astype(grad.dtype)


class TimeAvgPool(Layer):
    """Mean over the time axis, keeping it as a unit dimension."""

    def __init__(self, *, name: str = "timeavg") -> None:
        self.name = name
        self._cache_shape: tuple[int, ...] | None = None

    def signature(self) -> str:
        return "timeavg"

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        _require_rank(x, 4, self.name)
        if training:
            self._cache_shape = x.shape
        return x.mean(axis=3, keepdims=True, dtype=np.float64).astype(x.dtype)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        width = self._cache_shape[3]
        return np.broadcast_to(grad / width, self._cache_shape).astype(grad.dtype)


class Dense(Layer):
    """Affine map over the flattened non-batch axes."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        *,
        name: str = "dense",
        rng: RngStream | None = None,
        dtype=DEFAULT_DTYPE,
    ) -> None:
        self.name = name
        self.in_features = in_features
        self.out_features = out_features
        generator = (rng or RngStream(0)).generator
        self.weight = Parameter(
            f"{name}.weight", fan_in_uniform((in_features, out_features), in_features, generator, dtype)
        )
        self.bias = Parameter(f"{name}.bias", np.zeros(out_features, dtype=dtype))
        self._cache_input: np.ndarray | None = None
        self._cache_shape: tuple[int, ...] | None = None

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]

    def signature(self) -> str:
        return f"dense:{self.out_features}"

    def _check(self, features: int) -> None:
        if features != self.in_features:
            raise ShapeError(
                "feature_mismatch",
                f"{self.name} expects {self.in_features} input features, got {features}",
            )

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        flat = x.reshape(x.shape[0], -1)
        self._check(flat.shape[1])
        if training:
            self._cache_input = flat
            self._cache_shape = x.shape
        return flat @ self.weight.value + self.bias.value

    def backward(self, grad: np.ndarray) -> np.ndarray:
        self.weight.accumulate(self._cache_input.T @ grad)
        self.bias.accumulate(grad.sum(axis=0))
        return (grad @ self.weight.value.T).reshape(self._cache_shape)


class FrameDense(Dense):
    """Dense applied independently to each time frame.

    Input (N, C, H, T) is flattened per frame to C*H features; output is
    (N, out_features, 1, T) so time pooling can follow.
    """

    def signature(self) -> str:
        return f"framedense:{self.out_features}"

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        _require_rank(x, 4, self.name)
        n, c, h, t = x.shape
        self._check(c * h)
        frames = np.ascontiguousarray(x.transpose(0, 3, 1, 2)).reshape(n * t, c * h)
        if training:
            self._cache_input = frames
            self._cache_shape = x.shape
        out = frames @ self.weight.value + self.bias.value
        return np.ascontiguousarray(out.reshape(n, t, self.out_features).transpose(0, 2, 1))[:, :, None, :]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        n, c, h, t = self._cache_shape
        flat = grad[:, :, 0, :].transpose(0, 2, 1).reshape(n * t, self.out_features)
        self.weight.accumulate(self._cache_input.T @ flat)
        self.bias.accumulate(flat.sum(axis=0))
        dframes = (flat @ self.weight.value.T).reshape(n, t, c, h)
        return np.ascontiguousarray(dframes.transpose(0, 2, 3, 1))
