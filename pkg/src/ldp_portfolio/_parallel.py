import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "LDP_PORTFOLIO_THREADS"


def worker_count(requested: int | None = None) -> int:
    """Number of worker threads; ``LDP_PORTFOLIO_THREADS`` caps it."""
    n = requested if requested is not None else min(8, os.cpu_count() or 1)
    cap = os.environ.get(ENV_THREADS)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            pass
    return max(1, int(n))


def ordered_map(fn, items, workers: int | None = None) -> list:
    items = list(items)
    w = worker_count(workers)
    if w == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=w) as ex:
        return list(ex.map(fn, items))
