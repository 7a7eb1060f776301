from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_DTYPE = np.float32


@dataclass(eq=False)
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.value.shape)

    @property
    def size(self) -> int:
        return int(self.value.size)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def accumulate(self, grad: np.ndarray) -> None:
        if grad.shape != self.value.shape:
            raise ValueError(f"{self.name}: grad shape {grad.shape} != value shape {self.value.shape}")
        self.grad += grad.astype(self.value.dtype, copy=False)


def fan_in_uniform(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator, dtype=DEFAULT_DTYPE) -> np.ndarray:
    bound = np.sqrt(6.0 / max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)
