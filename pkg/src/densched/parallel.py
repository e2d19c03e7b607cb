from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def map_ordered(fn, items: list, jobs: int = 1) -> list:
    """``list(map(fn, items))``, fanned out over ``jobs`` processes.

    Results come back in input order, so output never depends on ``jobs``.
    """
    if jobs is None or jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunksize = max(1, len(items) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
