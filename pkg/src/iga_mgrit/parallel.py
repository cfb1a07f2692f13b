"""Fixed-size thread pool running contiguous chunks of independent work items."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def split_range(n_items: int, n_chunks: int) -> list[range]:
    """Contiguous, near-equal partition of ``range(n_items)``."""
    n_chunks = max(1, min(n_chunks, n_items))
    base, extra = divmod(n_items, n_chunks)
    out, start = [], 0
    for c in range(n_chunks):
        stop = start + base + (1 if c < extra else 0)
        out.append(range(start, stop))
        start = stop
    return out


class WorkerPool:
    """Run ``fn(chunk)`` over a partition of the items; results come back in order.

    Work functions must write disjoint data. With one worker everything runs
    inline on the calling thread.
    """

    def __init__(self, workers: int = 1):
        if workers < 1:
            raise ValueError("need at least one worker")
        self.workers = workers
        self._pool = ThreadPoolExecutor(workers) if workers > 1 else None

    def map_chunks(self, fn, items) -> list:
        items = list(items)
        if not items:
            return []
        if self._pool is None:
            return [fn(items)]
        chunks = [[items[i] for i in r] for r in split_range(len(items), self.workers)]
        return list(self._pool.map(fn, chunks))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
