"""Worker-count policy shared by the parallel loops."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

from .errors import ConfigError

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    """CPU count, capped by the ``BDD_THREADS`` environment variable."""
    n = os.cpu_count() or 1
    raw = os.environ.get("BDD_THREADS")
    if raw is None or raw.strip() == "":
        return n
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"BDD_THREADS must be a positive integer, got {raw!r}") from None
    if cap < 1:
        raise ConfigError(f"BDD_THREADS must be a positive integer, got {raw!r}")
    return min(n, cap)


def ordered_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """``[fn(i) for i in items]``, threaded when more than one worker is allowed."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(workers) as ex:
        return list(ex.map(fn, items))
