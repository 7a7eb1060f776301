from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from keyscope.nn.tensor import Parameter
from keyscope.runtime.errors import ConfigError

DEFAULT_LEARNING_RATE = 0.05
DEFAULT_MOMENTUM = 0.9


@dataclass
class SgdState:
    learning_rate: float = DEFAULT_LEARNING_RATE
    momentum_coeff: float = DEFAULT_MOMENTUM
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("invalid_learning_rate", f"learning rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum_coeff < 1.0:
            raise ConfigError("invalid_momentum", f"momentum must be in [0, 1), got {self.momentum_coeff}")

    @classmethod
    def for_parameters(
        cls,
        params: Iterable[Parameter],
        learning_rate: float = DEFAULT_LEARNING_RATE,
        momentum_coeff: float = DEFAULT_MOMENTUM,
    ) -> "SgdState":
        velocity = {p.name: np.zeros_like(p.value) for p in params}
        return cls(learning_rate=learning_rate, momentum_coeff=momentum_coeff, velocity=velocity)


def sgd_step(params: Iterable[Parameter], state: SgdState) -> None:
    """v <- momentum * v - lr * g; w <- w + v, in place."""
    for param in params:
        velocity = state.velocity.get(param.name)
        if velocity is None or velocity.shape != param.value.shape:
            velocity = np.zeros_like(param.value)
        velocity = state.momentum_coeff * velocity - state.learning_rate * param.grad
        state.velocity[param.name] = velocity.astype(param.value.dtype, copy=False)
        param.value += state.velocity[param.name]
