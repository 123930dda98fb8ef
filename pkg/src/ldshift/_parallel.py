"""Order-preserving thread map shared by the sweep drivers."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def pmap(fn, items, threads: int | None = 1) -> list:
    """``list(map(fn, items))``, on a thread pool when ``threads`` is not 1.

    Results keep input order, so thread count never changes the output.
    """
    if threads is not None and threads <= 1:
        return list(map(fn, items))
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))
