"""Keyed counter-based random streams.

Each (seed, task, field) triple maps to its own Philox key, so adding a new
field or task never shifts the numbers drawn for an existing one.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(seed: int, task: str, field: str) -> int:
    digest = hashlib.blake2b(f"{seed}|{task}|{field}".encode(), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, task: str, field: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(seed, task, field)))


class Streams:
    """Factory of named streams for one generator call."""

    def __init__(self, seed: int, task: str):
        self.seed = seed
        self.task = task

    def __call__(self, field: str) -> np.random.Generator:
        return stream(self.seed, self.task, field)


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary printable parts."""
    text = "|".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") & ((1 << 63) - 1)
