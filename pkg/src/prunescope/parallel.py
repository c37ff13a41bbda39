"""Index-keyed parallel mapping with a thread cap from PRUNESCOPE_THREADS.

Per-direction radius searches, per-cell grid losses, and per-probe samples
are pure and independent, so results are assembled in index order and do not
depend on scheduling. Set PRUNESCOPE_THREADS=1 to force sequential execution
(default: machine cores).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "PRUNESCOPE_THREADS"


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    return max(1, n)


def parallel_map(fn, items):
    """Map a pure function over items, preserving input order in the result."""
    items = list(items)
    workers = min(thread_count(), len(items)) if items else 1
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
