from __future__ import annotations

import logging
import time
from dataclasses import dataclass

from keyscope.models.builders import build_model
from keyscope.models.config import ArchitectureConfig
from keyscope.models.model import KeyModel
from keyscope.nn.losses import softmax_xent
from keyscope.nn.optim import SgdState, sgd_step
from keyscope.nn.rng import RngStream
from keyscope.runtime.errors import ConfigError
from keyscope.training.snippets import DEFAULT_SNIPPET_FRAMES

log = logging.getLogger(__name__)

DEFAULT_PIECE_FRAMES = 600
DEFAULT_TIMING_BATCH = 4
DEFAULT_UPDATES = 50


@dataclass(frozen=True)
class UpdateTiming:
    frames: int
    mean_seconds: float
    activation_bytes: int


@dataclass(frozen=True)
class TimingReport:
    full: UpdateTiming
    snippet: UpdateTiming
    batch_size: int
    updates: int

    @property
    def ratio(self) -> float:
        """Snippet update time over full-piece update time."""
        return self.snippet.mean_seconds / self.full.mean_seconds if self.full.mean_seconds > 0 else 0.0

    def rows(self) -> list[dict[str, str]]:
        return [
            {
                "setup": name,
                "frames": str(timing.frames),
                "mean_update_s": f"{timing.mean_seconds:.6f}",
                "activation_bytes": str(timing.activation_bytes),
            }
            for name, timing in (("full", self.full), ("snippet", self.snippet))
        ]


def _time_updates(model: KeyModel, frames: int, batch_size: int, updates: int, rng: RngStream) -> UpdateTiming:
    bins = model.config.n_bins
    sgd = SgdState.for_parameters(model.parameters())
    params = model.parameters()
    model.set_rng(rng.derive(1))
    peak = 0
    elapsed = 0.0
    # one untimed warm-up update
    for step in range(updates + 1):
        inputs = rng.random((batch_size, 1, bins, frames)).astype(model.dtype)
        targets = rng.integers(0, model.config.n_classes - 1, size=batch_size)
        start = time.perf_counter()
        model.zero_grad()
        logits = model.forward(inputs, training=True)
        peak = max(peak, model.activation_nbytes())
        _, grad = softmax_xent(logits, targets)
        model.backward(grad)
        sgd_step(params, sgd)
        model.clear_caches()
        if step:
            elapsed += time.perf_counter() - start
    return UpdateTiming(frames=frames, mean_seconds=elapsed / updates, activation_bytes=peak)


def full_vs_snippet_timing(
    model_cfg: ArchitectureConfig,
    piece_frames: int = DEFAULT_PIECE_FRAMES,
    snippet_frames: int = DEFAULT_SNIPPET_FRAMES,
    *,
    batch_size: int = DEFAULT_TIMING_BATCH,
    updates: int = DEFAULT_UPDATES,
    seed: int = 0,
) -> TimingReport:
    """Mean wall time and cached activation bytes per gradient update, full pieces vs snippets."""
    if updates < 1 or batch_size < 1:
        raise ConfigError("invalid_timing", "updates and batch_size must be >= 1")
    for frames in (piece_frames, snippet_frames):
        if frames < model_cfg.min_frames:
            raise ConfigError("invalid_timing", f"{frames} frames is below the model minimum {model_cfg.min_frames}")
    rng = RngStream(seed)
    full = _time_updates(build_model(model_cfg, seed=seed), piece_frames, batch_size, updates, rng.derive(0))
    snippet = _time_updates(build_model(model_cfg, seed=seed), snippet_frames, batch_size, updates, rng.derive(1))
    report = TimingReport(full=full, snippet=snippet, batch_size=batch_size, updates=updates)
    log.info(
        "[TIMING] full=%.4fs snippet=%.4fs ratio=%.3f full_bytes=%d snippet_bytes=%d",
        full.mean_seconds,
        snippet.mean_seconds,
        report.ratio,
        full.activation_bytes,
        snippet.activation_bytes,
    )
    return report
