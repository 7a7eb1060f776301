"""Key-label algebra, MIREX relation scoring and duration analysis."""

from keyscope.evaluation.durations import DurationStats, duration_report
from keyscope.evaluation.keys import KeyLabel, Mode, parse_key_label
from keyscope.evaluation.mirex import RelationCategory, ScoreBreakdown, classify_relation, score

__all__ = [
    "DurationStats",
    "KeyLabel",
    "Mode",
    "RelationCategory",
    "ScoreBreakdown",
    "classify_relation",
    "duration_report",
    "parse_key_label",
    "score",
]
