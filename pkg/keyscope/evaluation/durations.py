from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import gaussian_kde

from keyscope.runtime.errors import DataError

log = logging.getLogger(__name__)

GRID_POINTS = 256
GRID_HEADROOM = 1.1


@dataclass(frozen=True)
class GroupStats:
    count: int
    median: float
    lower_quartile: float
    upper_quartile: float
    density: Optional[np.ndarray] = None


@dataclass(frozen=True)
class DurationStats:
    grid: np.ndarray
    correct: Optional[GroupStats]
    incorrect: Optional[GroupStats]


def _group_stats(durations: np.ndarray, grid: np.ndarray) -> Optional[GroupStats]:
    if durations.size == 0:
        return None
    lower, median, upper = np.percentile(durations, [25.0, 50.0, 75.0])
    density = None
    if durations.size >= 2 and np.ptp(durations) > 0:
        kde = gaussian_kde(durations, bw_method="silverman")
        raw = np.clip(kde(grid), 0.0, None)
        area = trapezoid(raw, grid)
        if area > 0:
            density = raw / area
    elif durations.size >= 2:
        log.warning("Skipping KDE for a group of %d identical durations", durations.size)
    return GroupStats(
        count=int(durations.size),
        median=float(median),
        lower_quartile=float(lower),
        upper_quartile=float(upper),
        density=density,
    )


def duration_report(items: Iterable[Tuple[float, bool]]) -> DurationStats:
    """Median, quartiles and normalised KDE of excerpt durations, split by correctness."""
    pairs = list(items)
    if not pairs:
        raise DataError("empty_durations", "No durations to analyse")
    durations = np.asarray([float(duration) for duration, _ in pairs], dtype=np.float64)
    if np.any(durations <= 0) or not np.all(np.isfinite(durations)):
        raise DataError("bad_duration", "Durations must be positive and finite")
    correct_mask = np.asarray([bool(flag) for _, flag in pairs])

    grid = np.linspace(0.0, float(durations.max()) * GRID_HEADROOM, GRID_POINTS)
    return DurationStats(
        grid=grid,
        correct=_group_stats(durations[correct_mask], grid),
        incorrect=_group_stats(durations[~correct_mask], grid),
    )


def density_rows(stats: DurationStats) -> list[dict[str, str]]:
    rows = []
    for index, x in enumerate(stats.grid):
        row = {"grid": f"{x:.6f}"}
        for name, group in (("density_correct", stats.correct), ("density_incorrect", stats.incorrect)):
            if group is None or group.density is None:
                row[name] = ""
            else:
                row[name] = f"{group.density[index]:.8g}"
        rows.append(row)
    return rows
