import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "LDP_RATE_THREADS"


def worker_count(workers=None) -> int:
    """Resolve a worker count; ``None`` reads LDP_RATE_THREADS (0 = all cores)."""
    if workers is None:
        raw = os.environ.get(THREADS_ENV, "1").strip() or "1"
        workers = int(raw)
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def ordered_map(fn, items, workers=None):
    """``list(map(fn, items))`` on a thread pool; result order follows ``items``."""
    items = list(items)
    n = worker_count(workers)
    if n == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))
