from keyscope.training.batches import Batch, TrainItem, load_items, make_batch
from keyscope.training.fit import FitReport, FitResult, TrainConfig, evaluate_items, fit
from keyscope.training.grid import bootstrap_ci, grid_search
from keyscope.training.snippets import SnippetConfig, sample_snippet
from keyscope.training.timing import TimingReport, full_vs_snippet_timing

__all__ = [
    "Batch",
    "FitReport",
    "FitResult",
    "SnippetConfig",
    "TimingReport",
    "TrainConfig",
    "TrainItem",
    "bootstrap_ci",
    "evaluate_items",
    "fit",
    "full_vs_snippet_timing",
    "grid_search",
    "load_items",
    "make_batch",
    "sample_snippet",
]
