from __future__ import annotations

import numpy as np

from keyscope.runtime.errors import DataError, ShapeError


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, targets) -> tuple[float, np.ndarray]:
    """Mean categorical cross-entropy over the batch and its gradient w.r.t. ``logits``.

    ``logits`` is (N, C); ``targets`` holds N class indices. For a single item
    the gradient is ``softmax(logits) - onehot(target)``; batch gradients are
    divided by N to match the averaged loss.
    """
    logits = np.atleast_2d(logits)
    if logits.ndim != 2:
        raise ShapeError("bad_rank", f"logits must be (batch, classes), got {logits.shape}")
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    n, classes = logits.shape
    if targets.shape != (n,):
        raise ShapeError("target_count", f"expected {n} targets, got {targets.shape[0]}")
    if np.any(targets < 0) or np.any(targets >= classes):
        raise DataError("target_out_of_range", f"targets must lie in 0..{classes - 1}, got {targets.tolist()}")
    shifted = logits.astype(np.float64) - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - shifted[rows, targets]))
    grad = np.exp(shifted - log_norm[:, None])
    grad[rows, targets] -= 1.0
    return loss, (grad / n).astype(logits.dtype)
