"""Order-preserving parallel map.

The compiled integrators release the GIL, so a thread pool is enough; the
output order always follows the input order so reductions are
reproducible.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def resolve_threads(threads: int | None) -> int:
    if threads is None or threads <= 0:
        return os.cpu_count() or 1
    return threads


def ordered_map(fn, items, threads: int | None = 1) -> list:
    items = list(items)
    n = min(resolve_threads(threads), len(items)) if items else 1
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
