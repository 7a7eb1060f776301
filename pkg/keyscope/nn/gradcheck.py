"""Central finite differences for checking backward passes in float64."""

from __future__ import annotations

from typing import Callable

import numpy as np

DEFAULT_STEP = 1e-6


def numerical_gradient(loss: Callable[[], float], array: np.ndarray, step: float = DEFAULT_STEP) -> np.ndarray:
    """Perturb ``array`` in place element by element and difference ``loss()``."""
    grad = np.zeros_like(array, dtype=np.float64)
    for idx in np.ndindex(array.shape):
        original = array[idx]
        array[idx] = original + step
        upper = loss()
        array[idx] = original - step
        lower = loss()
        array[idx] = original
        grad[idx] = (upper - lower) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.linalg.norm(np.ravel(analytic) - np.ravel(numeric))
    scale = np.linalg.norm(np.ravel(analytic)) + np.linalg.norm(np.ravel(numeric))
    return float(diff / max(scale, 1e-12))
