"""Per-replicate random streams and an order-preserving worker map."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

# smallest uniform handed to an inverse CDF, keeps ndtri finite
U_FLOOR = 2.0 ** -60


def replicate_rng(seed, *index):
    """Counter-based generator for replicate ``index`` of a run seeded ``seed``.

    The stream depends only on ``(seed, *index)``, so results do not change
    with the number of workers or the order in which chunks finish.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(i) for i in index])
    return np.random.Generator(np.random.Philox(ss))


def replicate_uniforms(seed, index, n):
    u = replicate_rng(seed, index).random(n)
    return np.maximum(u, U_FLOOR)


def n_workers():
    """Worker count from ``CONETEST_THREADS`` (default 1)."""
    raw = os.environ.get("CONETEST_THREADS", "1")
    try:
        k = int(raw)
    except ValueError:
        raise ValueError(f"CONETEST_THREADS must be an integer, got {raw!r}") from None
    return max(1, k)


def chunked_map(fn, total, args=(), chunk=None):
    """Evaluate ``fn(*args, start, stop)`` over ``[0, total)`` and concatenate.

    ``fn`` must return a sequence of per-index results for its range.  Chunks
    are reassembled in index order.
    """
    workers = n_workers()
    if total <= 0:
        return []
    if workers == 1 or total < 2 * workers:
        return list(fn(*args, 0, total))
    if chunk is None:
        chunk = max(1, -(-total // (4 * workers)))
    bounds = [(s, min(total, s + chunk)) for s in range(0, total, chunk)]
    out = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *args, s, e) for s, e in bounds]
        for f in futures:
            out.extend(f.result())
    return out
