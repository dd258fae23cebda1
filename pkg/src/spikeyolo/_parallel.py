"""Row-block thread fan-out for the compiled kernels.

Kernels write disjoint output slices and release the GIL, so the block
partition affects speed only — results are identical for any thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

ENV_THREADS = "SPIKE_YOLO_THREADS"


def default_threads() -> int:
    """Thread count from the SPIKE_YOLO_THREADS env var, else 1."""
    raw = os.environ.get(ENV_THREADS)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return 1


def run_blocks(worker: Callable[[int, int], None], n: int, threads: int | None = None) -> None:
    """Invoke ``worker(start, stop)`` over a partition of ``range(n)``."""
    threads = default_threads() if threads is None else max(1, int(threads))
    if n <= 0:
        return
    if threads == 1:
        worker(0, n)
        return
    nblocks = min(n, threads * 4)
    edges = [round(n * b / nblocks) for b in range(nblocks + 1)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(worker, a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a
        ]
        for fut in futures:
            fut.result()
