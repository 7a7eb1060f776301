"""Hyperparameter grid over (N_f, dropout) with bootstrap confidence intervals."""

from __future__ import annotations

import csv
import itertools
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from keyscope.models.builders import build_model
from keyscope.models.config import (
    ALLCONV_GRID_NF,
    DEFAULT_N_BINS,
    GRID_DROPOUT,
    KEYNET_GRID_NF,
    ArchitectureConfig,
)
from keyscope.nn.rng import RngStream
from keyscope.runtime.errors import ConfigError
from keyscope.training.batches import TrainItem
from keyscope.training.fit import FitReport, TrainConfig, fit

log = logging.getLogger(__name__)

BOOTSTRAP_RESAMPLES = 10_000
CONFIDENCE = 0.95
GRID_COLUMNS = ("n_f", "dropout", "mean_val_weighted", "ci_low", "ci_high", "runs")
MAX_COMBINATION_SIZE = 3


@dataclass(frozen=True)
class GridRun:
    n_f: int
    dropout: float
    seed: int
    val_weighted: float
    report: FitReport


@dataclass(frozen=True)
class GridRow:
    n_f: int
    dropout: float
    mean: float
    ci_low: float
    ci_high: float
    runs: tuple[GridRun, ...]

    def csv_row(self) -> dict[str, str]:
        return {
            "n_f": str(self.n_f),
            "dropout": f"{self.dropout:g}",
            "mean_val_weighted": f"{self.mean:.6f}",
            "ci_low": f"{self.ci_low:.6f}",
            "ci_high": f"{self.ci_high:.6f}",
            "runs": str(len(self.runs)),
        }


@dataclass(frozen=True)
class FitSummary:
    runs: int
    mean_val_weighted: float
    mean_train_accuracy: float
    mean_overfit_ratio: float


def _emit_progress(message: str) -> None:
    try:
        sys.stderr.write(f"[GRID] {message}\n")
        sys.stderr.flush()
    except Exception:
        pass


def default_grid(kind: str) -> list[tuple[int, float]]:
    nf_values = KEYNET_GRID_NF if kind == "keynet" else ALLCONV_GRID_NF
    return [(n_f, p) for n_f in nf_values for p in GRID_DROPOUT]


def bootstrap_ci(
    values: Sequence[float],
    resamples: int = BOOTSTRAP_RESAMPLES,
    confidence: float = CONFIDENCE,
    rng: Optional[RngStream] = None,
) -> tuple[float, float]:
    """Percentile bootstrap interval of the mean."""
    sample = np.asarray(values, dtype=np.float64)
    if sample.size == 0:
        raise ConfigError("empty_sample", "cannot bootstrap an empty sample")
    if sample.size == 1 or np.all(sample == sample[0]):
        return float(sample[0]), float(sample[0])
    stream = rng or RngStream(0)
    picks = stream.generator.integers(0, sample.size, size=(resamples, sample.size))
    means = sample[picks].mean(axis=1)
    tail = (1.0 - confidence) / 2.0 * 100.0
    low, high = np.percentile(means, [tail, 100.0 - tail])
    return float(low), float(high)


def grid_search(
    kind: str,
    train: Sequence[TrainItem],
    valid: Sequence[TrainItem],
    seeds: Sequence[int],
    *,
    configs: Optional[Iterable[tuple[int, float]]] = None,
    train_cfg: Optional[TrainConfig] = None,
    full: bool = False,
    n_bins: int = DEFAULT_N_BINS,
    embedding_dim: Optional[int] = None,
) -> list[GridRow]:
    """Train one model per (N_f, dropout, seed) and aggregate validation weighted scores."""
    if not seeds:
        raise ConfigError("no_seeds", "grid search needs at least one seed")
    grid = list(configs) if configs is not None else default_grid(kind)
    base_cfg = train_cfg or TrainConfig()
    if full:
        base_cfg = replace(base_cfg, snippet_frames=None)
    rows: list[GridRow] = []
    for position, (n_f, dropout) in enumerate(grid, start=1):
        arch = ArchitectureConfig(
            kind=kind,
            n_feature_maps=n_f,
            dropout_p=dropout,
            n_bins=n_bins,
            embedding_dim=embedding_dim if kind == "keynet" else None,
        )
        runs = []
        for seed in seeds:
            model = build_model(arch, seed=seed)
            result = fit(model, train, valid, replace(base_cfg, seed=seed))
            runs.append(GridRun(n_f, dropout, seed, result.report.best_val_weighted, result.report))
        scores = [run.val_weighted for run in runs]
        low, high = bootstrap_ci(scores, rng=RngStream(position))
        rows.append(GridRow(n_f, dropout, float(np.mean(scores)), low, high, tuple(runs)))
        log.info("[GRID] n_f=%d dropout=%g mean=%.4f ci=[%.4f, %.4f]", n_f, dropout, rows[-1].mean, low, high)
        _emit_progress(f"{position}/{len(grid)} n_f={n_f} p={dropout:g} mean={rows[-1].mean:.4f}")
    return rows


def write_grid_csv(path: str | Path, rows: Iterable[GridRow]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=GRID_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row.csv_row())
    return target


def best_dropout_per_nf(rows: Iterable[GridRow]) -> dict[int, GridRow]:
    best: dict[int, GridRow] = {}
    for row in rows:
        current = best.get(row.n_f)
        if current is None or row.mean > current.mean:
            best[row.n_f] = row
    return dict(sorted(best.items()))


def best_single_run(rows: Iterable[GridRow]) -> GridRun:
    runs = [run for row in rows for run in row.runs]
    if not runs:
        raise ConfigError("empty_grid", "no runs to choose from")
    return max(runs, key=lambda run: run.val_weighted)


def summarize_fits(reports: Sequence[FitReport]) -> FitSummary:
    """Average selection score, expressiveness (train accuracy) and generalisation (overfit ratio)."""
    if not reports:
        raise ConfigError("empty_reports", "no fit reports to summarise")
    return FitSummary(
        runs=len(reports),
        mean_val_weighted=float(np.mean([report.best_val_weighted for report in reports])),
        mean_train_accuracy=float(np.mean([report.best_train_accuracy for report in reports])),
        mean_overfit_ratio=float(np.mean([report.overfit_ratio for report in reports])),
    )


def dataset_combinations(names: Sequence[str]) -> list[tuple[str, ...]]:
    """All 1-, 2- and 3-element combinations of dataset names."""
    unique = list(dict.fromkeys(names))
    return [
        combo
        for size in range(1, min(MAX_COMBINATION_SIZE, len(unique)) + 1)
        for combo in itertools.combinations(unique, size)
    ]
