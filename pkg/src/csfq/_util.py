"""Small shared helpers."""

import os
from concurrent.futures import ThreadPoolExecutor


def default_threads():
    return os.cpu_count() or 1


def pmap(fn, items, threads=None):
    """Order-preserving map; runs in a thread pool when ``threads > 1``.

    The heavy kernels (LAPACK, numpy) release the GIL, so threads give real
    speedup for flux sweeps and restarts. Results never depend on ``threads``.
    """
    items = list(items)
    if threads is None:
        threads = 1
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
