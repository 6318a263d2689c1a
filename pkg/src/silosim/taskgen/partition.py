from __future__ import annotations

from typing import Any, Sequence

import numpy as np


def shard_bounds(total: int, n: int) -> list[tuple[int, int]]:
    """Contiguous [start, stop) ranges; the first ``total % n`` shards get one extra element."""
    if n < 1:
        raise ValueError("number of shards must be >= 1")
    if total < n:
        raise ValueError(f"cannot split {total} elements across {n} agents")
    base, extra = divmod(total, n)
    bounds, start = [], 0
    for i in range(n):
        stop = start + base + (1 if i < extra else 0)
        bounds.append((start, stop))
        start = stop
    return bounds


def partition(
    global_input: Sequence[Any],
    n: int,
    *,
    rule: str = "concat",
    rng: np.random.Generator | None = None,
) -> list:
    """Split ``global_input`` into ``n`` shards.

    ``concat`` keeps index order (strings stay strings); ``multiset`` deals a
    seeded shuffle round-robin, so shard sizes still differ by at most one.
    """
    if len(global_input) == 0:
        raise ValueError("cannot partition an empty input")
    if rule == "concat":
        return [global_input[a:b] for a, b in shard_bounds(len(global_input), n)]
    if rule == "multiset":
        if len(global_input) < n:
            raise ValueError(f"cannot split {len(global_input)} elements across {n} agents")
        if rng is None:
            raise ValueError("multiset partition needs a seeded rng")
        order = rng.permutation(len(global_input)).tolist()
        items = list(global_input)
        return [[items[j] for j in order[i::n]] for i in range(n)]
    raise ValueError(f"unknown composition rule {rule!r}")
