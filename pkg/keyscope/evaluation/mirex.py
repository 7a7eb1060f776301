from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from typing import Iterable, Sequence, Tuple

from keyscope.evaluation.keys import KeyLabel, Mode
from keyscope.runtime.errors import DataError

CATEGORY_WEIGHTS = {
    "correct": 1.0,
    "fifth": 0.5,
    "relative": 0.3,
    "parallel": 0.2,
    "other": 0.0,
}


class RelationCategory(str, Enum):
    CORRECT = "correct"
    FIFTH = "fifth"
    RELATIVE = "relative"
    PARALLEL = "parallel"
    OTHER = "other"

    @property
    def weight(self) -> float:
        return CATEGORY_WEIGHTS[self.value]


def classify_relation(pred: KeyLabel, target: KeyLabel) -> RelationCategory:
    if pred == target:
        return RelationCategory.CORRECT
    if pred.mode == target.mode:
        if pred.tonic == (target.tonic + 7) % 12 or target.tonic == (pred.tonic + 7) % 12:
            return RelationCategory.FIFTH
        return RelationCategory.OTHER
    if pred.mode is Mode.MINOR and pred.tonic == (target.tonic - 3) % 12:
        return RelationCategory.RELATIVE
    if pred.mode is Mode.MAJOR and pred.tonic == (target.tonic + 3) % 12:
        return RelationCategory.RELATIVE
    if pred.tonic == target.tonic:
        return RelationCategory.PARALLEL
    return RelationCategory.OTHER


def weighted_score(r_c: float, r_f: float, r_r: float, r_p: float) -> float:
    return r_c + 0.5 * r_f + 0.3 * r_r + 0.2 * r_p


def display_percent(ratio: float) -> str:
    """Percentage with one decimal, rounded half-up."""
    value = Decimal(repr(ratio * 100.0)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    return f"{value:.1f}"


@dataclass(frozen=True)
class ScoreBreakdown:
    r_c: float
    r_f: float
    r_r: float
    r_p: float
    r_o: float
    n: int

    @property
    def w(self) -> float:
        return weighted_score(self.r_c, self.r_f, self.r_r, self.r_p)

    @classmethod
    def from_counts(cls, counts: dict[RelationCategory, int]) -> "ScoreBreakdown":
        n = sum(counts.values())
        if n < 1:
            raise DataError("empty_evaluation", "Cannot score an empty list of predictions")
        return cls(
            r_c=counts.get(RelationCategory.CORRECT, 0) / n,
            r_f=counts.get(RelationCategory.FIFTH, 0) / n,
            r_r=counts.get(RelationCategory.RELATIVE, 0) / n,
            r_p=counts.get(RelationCategory.PARALLEL, 0) / n,
            r_o=counts.get(RelationCategory.OTHER, 0) / n,
            n=n,
        )

    def percentages(self) -> dict[str, str]:
        return {
            "Weighted": display_percent(self.w),
            "Correct": display_percent(self.r_c),
            "Fifth": display_percent(self.r_f),
            "Relative": display_percent(self.r_r),
            "Parallel": display_percent(self.r_p),
            "Other": display_percent(self.r_o),
        }


REPORT_COLUMNS = ("Weighted", "Correct", "Fifth", "Relative", "Parallel", "Other")


def score(pairs: Iterable[Tuple[KeyLabel, KeyLabel]]) -> ScoreBreakdown:
    counts = {category: 0 for category in RelationCategory}
    for pred, target in pairs:
        counts[classify_relation(pred, target)] += 1
    return ScoreBreakdown.from_counts(counts)


def accuracy(pairs: Sequence[Tuple[KeyLabel, KeyLabel]]) -> float:
    if not pairs:
        return 0.0
    return sum(1 for pred, target in pairs if pred == target) / len(pairs)
