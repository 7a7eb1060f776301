from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, Iterable, List, Optional, Tuple, TypeVar

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

VALID_ARCHS = {"keynet", "allconv"}


def normalize_arch(value: str | None, default: str = "allconv") -> str:
    candidate = (value or default or "allconv").strip().lower()
    if candidate not in VALID_ARCHS:
        return default
    return candidate


def resolve_workers(explicit: Optional[int] = None) -> int:
    """Worker count: explicit flag, then KEYSCOPE_WORKERS, then CPU count."""
    if explicit is not None and explicit > 0:
        return explicit
    raw = (os.getenv("KEYSCOPE_WORKERS") or "").strip()
    if raw:
        try:
            parsed = int(raw)
        except ValueError:
            log.warning("Ignoring non-integer KEYSCOPE_WORKERS=%r", raw)
        else:
            if parsed > 0:
                return parsed
    return max(1, os.cpu_count() or 1)


def run_parallel(
    fn: Callable[[T], R],
    items: Iterable[T],
    workers: int,
) -> List[Tuple[T, Optional[R], Optional[BaseException]]]:
    """Apply fn to every item, collecting (item, result, error) in input order."""
    items = list(items)
    results: List[Tuple[T, Optional[R], Optional[BaseException]]] = [(item, None, None) for item in items]
    if workers <= 1 or len(items) <= 1:
        for index, item in enumerate(items):
            try:
                results[index] = (item, fn(item), None)
            except Exception as exc:
                results[index] = (item, None, exc)
        return results

    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(fn, item): index for index, item in enumerate(items)}
        for future in as_completed(futures):
            index = futures[future]
            item = items[index]
            try:
                results[index] = (item, future.result(), None)
            except Exception as exc:
                results[index] = (item, None, exc)
    return results
