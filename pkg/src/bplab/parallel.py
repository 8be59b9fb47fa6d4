"""Block-parallel map with an order-preserving, scheduling-independent merge."""
from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence


def map_blocks(fn: Callable, tasks: Sequence, workers: int = 1) -> list:
    """Apply ``fn`` to every task and return results in task order.

    Each task must be self-contained (its own RNG block), so the output is
    the same for any ``workers``.
    """
    workers = max(1, int(workers))
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, -(-len(tasks) // workers))
    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))
