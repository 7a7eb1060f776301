"""Snippet training loop with validation-based model selection and early stopping."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from keyscope import config as keyscope_config
from keyscope.audio.spectrogram import MAX_SHIFT, MIN_SHIFT
from keyscope.evaluation.mirex import ScoreBreakdown, score
from keyscope.models.model import KeyModel
from keyscope.models.predict import predict
from keyscope.nn.losses import softmax_xent
from keyscope.nn.optim import SgdState, sgd_step
from keyscope.nn.rng import RngStream
from keyscope.runtime.errors import ConfigError, DataError, TrainingDivergedError
from keyscope.training.batches import TrainItem, make_batch
from keyscope.training.snippets import DEFAULT_SNIPPET_FRAMES

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("epoch", "train_loss", "train_acc", "val_weighted")
LR_DECAY = 0.5

# leading derivation keys; every per-epoch stream carries one so no two coincide
_SHUFFLE_STREAM = 1
_ITEM_STREAM = 2
_DROPOUT_STREAM = 3


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = keyscope_config.DEFAULT_BATCH_SIZE
    max_epochs: int = keyscope_config.DEFAULT_MAX_EPOCHS
    patience: int = keyscope_config.DEFAULT_PATIENCE
    learning_rate: float = keyscope_config.DEFAULT_LEARNING_RATE
    momentum: float = keyscope_config.DEFAULT_MOMENTUM
    lr_patience: int = keyscope_config.DEFAULT_LR_PATIENCE
    lr_decay: float = LR_DECAY
    lr_floor: float = keyscope_config.DEFAULT_LR_FLOOR
    min_shift: int = MIN_SHIFT
    max_shift: int = MAX_SHIFT
    snippet_frames: Optional[int] = DEFAULT_SNIPPET_FRAMES
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("invalid_batch_size", f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError("invalid_max_epochs", f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1 or self.lr_patience < 1:
            raise ConfigError("invalid_patience", "patience and lr_patience must be >= 1")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError("invalid_lr_decay", f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if not 0.0 <= self.lr_floor <= 1.0:
            raise ConfigError("invalid_lr_floor", f"lr_floor must be in [0, 1], got {self.lr_floor}")
        if not MIN_SHIFT <= self.min_shift <= self.max_shift <= MAX_SHIFT:
            raise ConfigError(
                "invalid_shift_range",
                f"shift range must lie within [{MIN_SHIFT}, {MAX_SHIFT}], got [{self.min_shift}, {self.max_shift}]",
            )
        if self.snippet_frames is not None and self.snippet_frames < 1:
            raise ConfigError("invalid_snippet", f"snippet_frames must be >= 1, got {self.snippet_frames}")
        # learning rate and momentum ranges are enforced by SgdState
        SgdState(learning_rate=self.learning_rate, momentum_coeff=self.momentum)

    @property
    def min_learning_rate(self) -> float:
        return self.learning_rate * self.lr_floor

    @classmethod
    def from_env(cls, **overrides) -> "TrainConfig":
        """Defaults from KEYSCOPE_* variables; explicit non-None overrides win."""
        values = {
            "batch_size": keyscope_config.env_int("KEYSCOPE_BATCH_SIZE", keyscope_config.DEFAULT_BATCH_SIZE),
            "max_epochs": keyscope_config.env_int("KEYSCOPE_MAX_EPOCHS", keyscope_config.DEFAULT_MAX_EPOCHS),
            "patience": keyscope_config.env_int("KEYSCOPE_PATIENCE", keyscope_config.DEFAULT_PATIENCE),
            "learning_rate": keyscope_config.env_float("KEYSCOPE_LEARNING_RATE", keyscope_config.DEFAULT_LEARNING_RATE),
            "momentum": keyscope_config.env_float("KEYSCOPE_MOMENTUM", keyscope_config.DEFAULT_MOMENTUM),
            "lr_patience": keyscope_config.env_int("KEYSCOPE_LR_PATIENCE", keyscope_config.DEFAULT_LR_PATIENCE),
            "lr_floor": keyscope_config.env_float("KEYSCOPE_LR_FLOOR", keyscope_config.DEFAULT_LR_FLOOR),
        }
        for key, value in overrides.items():
            if value is not None or key == "snippet_frames":
                values[key] = value
        return cls(**values)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_weighted: float
    val_acc: float
    learning_rate: float


@dataclass
class FitReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_weighted: float = 0.0
    best_val_accuracy: float = 0.0
    best_train_accuracy: float = 0.0
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.epochs)

    @property
    def overfit_ratio(self) -> float:
        """Validation accuracy over training accuracy at the best epoch."""
        if self.best_train_accuracy <= 0:
            return 0.0
        return self.best_val_accuracy / self.best_train_accuracy

    def csv_rows(self) -> list[dict[str, str]]:
        return [
            {
                "epoch": str(record.epoch),
                "train_loss": f"{record.train_loss:.6f}",
                "train_acc": f"{record.train_acc:.6f}",
                "val_weighted": f"{record.val_weighted:.6f}",
            }
            for record in self.epochs
        ]

    def summary(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "best_val_weighted": self.best_val_weighted,
            "best_val_accuracy": self.best_val_accuracy,
            "best_train_accuracy": self.best_train_accuracy,
            "overfit_ratio": self.overfit_ratio,
            "epochs_run": self.epochs_run,
            "stopped_early": self.stopped_early,
            "epochs": [asdict(record) for record in self.epochs],
        }

    def write(self, csv_path: str | Path, json_path: Optional[str | Path] = None) -> tuple[Path, Path]:
        csv_target = Path(csv_path)
        json_target = Path(json_path) if json_path else csv_target.with_suffix(".json")
        csv_target.parent.mkdir(parents=True, exist_ok=True)
        with csv_target.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=REPORT_COLUMNS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(self.csv_rows())
        json_target.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return csv_target, json_target


@dataclass
class FitResult:
    report: FitReport
    best_state: dict[str, np.ndarray]
    config: TrainConfig


def evaluate_items(model: KeyModel, items: Sequence[TrainItem]) -> ScoreBreakdown:
    """Full-piece inference in infer mode, scored against each item's label."""
    return score((predict(model, item.spec).label, item.label) for item in items)


def _check_inputs(model: KeyModel, train: Sequence[TrainItem], valid: Sequence[TrainItem], cfg: TrainConfig) -> None:
    if not train:
        raise DataError("empty_training_set", "no training items")
    if not valid:
        raise DataError("empty_validation_set", "no validation items")
    overlap = {item.id for item in train} & {item.id for item in valid}
    if overlap:
        raise DataError("overlapping_splits", f"train and validation share ids: {sorted(overlap)[:5]}")
    if cfg.snippet_frames is not None and cfg.snippet_frames < model.config.min_frames:
        raise ConfigError(
            "invalid_snippet",
            f"snippet of {cfg.snippet_frames} frames is below the {model.config.kind} minimum of {model.config.min_frames}",
        )


def shuffle_stream(rng: RngStream, epoch: int) -> RngStream:
    return rng.derive(_SHUFFLE_STREAM, epoch)


def item_stream(rng: RngStream, epoch: int, index: int) -> RngStream:
    """Shift and snippet draws for training item ``index`` in ``epoch``."""
    return rng.derive(_ITEM_STREAM, epoch, index)


def dropout_stream(rng: RngStream, epoch: int) -> RngStream:
    return rng.derive(_DROPOUT_STREAM, epoch)


def decayed_learning_rate(current: float, cfg: TrainConfig) -> float:
    """One decay step, never below ``cfg.min_learning_rate``."""
    return max(current * cfg.lr_decay, cfg.min_learning_rate)


def train_epoch(
    model: KeyModel,
    train: Sequence[TrainItem],
    cfg: TrainConfig,
    sgd: SgdState,
    rng: RngStream,
    epoch: int,
) -> tuple[float, float]:
    """One pass over a seeded shuffle of ``train``; returns (mean loss, snippet accuracy)."""
    model.set_rng(dropout_stream(rng, epoch))
    order = shuffle_stream(rng, epoch).permutation(len(train))
    params = model.parameters()
    total_loss = 0.0
    correct = 0
    for batch_index, start in enumerate(range(0, len(order), cfg.batch_size)):
        indices = [int(i) for i in order[start : start + cfg.batch_size]]
        batch = make_batch(
            [train[i] for i in indices],
            [item_stream(rng, epoch, i) for i in indices],
            cfg.snippet_frames,
            min_frames=model.config.min_frames,
            shift_range=(cfg.min_shift, cfg.max_shift),
        )
        model.zero_grad()
        logits = model.forward(batch.inputs, training=True)
        loss, grad = softmax_xent(logits, batch.targets)
        if not math.isfinite(loss):
            model.clear_caches()
            raise TrainingDivergedError(epoch, batch_index, sgd.learning_rate, loss)
        model.backward(grad)
        sgd_step(params, sgd)
        model.clear_caches()
        total_loss += loss * len(batch)
        correct += int(np.sum(np.argmax(logits, axis=1) == batch.targets))
    return total_loss / len(train), correct / len(train)


def fit(
    model: KeyModel,
    train: Sequence[TrainItem],
    valid: Sequence[TrainItem],
    cfg: TrainConfig,
) -> FitResult:
    """Train until ``patience`` epochs pass without a better validation weighted score.

    The model is left holding the best epoch's weights, which are also
    returned as ``best_state``.
    """
    _check_inputs(model, train, valid, cfg)
    rng = RngStream(cfg.seed)
    sgd = SgdState.for_parameters(model.parameters(), cfg.learning_rate, cfg.momentum)
    report = FitReport()
    best_state = model.copy_state()
    best_score = -math.inf
    stalled = 0

    for epoch in range(1, cfg.max_epochs + 1):
        train_loss, train_acc = train_epoch(model, train, cfg, sgd, rng, epoch)
        breakdown = evaluate_items(model, valid)
        record = EpochRecord(epoch, train_loss, train_acc, breakdown.w, breakdown.r_c, sgd.learning_rate)
        report.epochs.append(record)
        log.info(
            "[TRAIN] epoch=%d loss=%.4f train_acc=%.3f val_weighted=%.4f lr=%g",
            epoch,
            train_loss,
            train_acc,
            breakdown.w,
            sgd.learning_rate,
        )

        if breakdown.w > best_score:
            best_score = breakdown.w
            best_state = model.copy_state()
            report.best_epoch = epoch
            report.best_val_weighted = breakdown.w
            report.best_val_accuracy = breakdown.r_c
            report.best_train_accuracy = evaluate_items(model, train).r_c
            stalled = 0
        else:
            stalled += 1
            if stalled >= cfg.lr_patience:
                stalled = 0
                lowered = decayed_learning_rate(sgd.learning_rate, cfg)
                if lowered < sgd.learning_rate:
                    sgd.learning_rate = lowered
                    log.info("[TRAIN] epoch=%d lowering lr to %g", epoch, sgd.learning_rate)

        if epoch - report.best_epoch >= cfg.patience:
            report.stopped_early = epoch < cfg.max_epochs
            log.info("[TRAIN] early stop at epoch=%d best_epoch=%d", epoch, report.best_epoch)
            break

    model.load_state_dict(best_state)
    return FitResult(report=report, best_state=best_state, config=cfg)
