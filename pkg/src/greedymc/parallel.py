"""Process-pool map with in-order results."""

import os
from concurrent.futures import ProcessPoolExecutor


def resolve_workers(workers=None):
    """``workers`` if given, else ``$GMC_THREADS``, else the CPU count."""
    if workers is None:
        env = os.environ.get("GMC_THREADS")
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def pmap(fn, items, workers=1):
    """``[fn(x) for x in items]``, fanned out over processes when workers > 1.

    Results come back in input order, so aggregation never depends on which
    worker finished first.
    """
    items = list(items)
    workers = resolve_workers(workers)
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    workers = min(workers, len(items))
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=chunk))
