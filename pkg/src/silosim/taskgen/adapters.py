"""Distributed decompositions of the task oracles.

Level I tasks decompose into one or more aggregation phases, Level II tasks
into a forward (and possibly backward) scan over shards in index order, and
Level III tasks expose only the global solver. Every partial and carry is
JSON-native so it can travel inside a message unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Any, Callable, Sequence

from ..core import Level, TaskId


def _pass_through(combined: Any, previous: Any) -> Any:
    return combined


@dataclass(frozen=True)
class AggPhase:
    local: Callable[[Sequence, Any], Any]
    combine: Callable[[Any, Any], Any]
    finish: Callable[[Any, Any], Any] = _pass_through


@dataclass(frozen=True)
class ScanSpec:
    """Chain decomposition of a Level II task.

    mode ``single``: each shard's outputs follow from the forward carry alone.
    mode ``double``: an independent backward carry is needed too; ``merge``
    turns (shard, forward outputs, backward outputs) into the segment.
    mode ``scalar``: the final forward carry determines one global answer.
    """

    mode: str
    init: Any
    step: Callable[[Any, Sequence], tuple[Any, Any]]
    reverse_init: Any = None
    reverse_step: Callable[[Any, Sequence], tuple[Any, Any]] | None = None
    merge: Callable[[Sequence, Any, Any], list] | None = None
    finish: Callable[[Any], Any] | None = None

    @property
    def passes(self) -> int:
        return 1 if self.mode == "single" else 2


@dataclass(frozen=True)
class TaskAdapter:
    task_id: TaskId
    global_solve: Callable[[Any], Any]
    phases: tuple[AggPhase, ...] = ()
    scan: ScanSpec | None = None

    @property
    def level(self) -> Level:
        return self.task_id.level

    @property
    def local_reduce(self) -> Callable[[Sequence], Any]:
        if not self.phases:
            raise AttributeError(f"{self.task_id} has no aggregation phases")
        first = self.phases[0]
        return lambda shard: first.local(shard, None)

    @property
    def combine(self) -> Callable[[Any, Any], Any]:
        if not self.phases:
            raise AttributeError(f"{self.task_id} has no aggregation phases")
        return self.phases[0].combine

    @property
    def scan_step(self) -> Callable[[Any, Sequence], tuple[Any, Any]]:
        if self.scan is None:
            raise AttributeError(f"{self.task_id} has no scan decomposition")
        return self.scan.step


def aggregate(adapter: TaskAdapter, shards: Sequence[Sequence], combine_order: Callable | None = None) -> Any:
    """Run every aggregation phase over ``shards``.

    ``combine_order`` maps a list of partials to a single partial; by default a
    left fold. Tests pass other bracketings to check associativity.
    """
    previous = None
    for phase in adapter.phases:
        partials = [phase.local(s, previous) for s in shards]
        if combine_order is None:
            combined = reduce(phase.combine, partials)
        else:
            combined = combine_order(phase.combine, partials)
        previous = phase.finish(combined, previous)
    return previous


def scan_fold(adapter: TaskAdapter, shards: Sequence[Sequence]) -> Any:
    """Sequential scan across shards in index order.

    Returns the per-shard output segments for segment modes, or the single
    global answer for ``scalar`` mode.
    """
    spec = adapter.scan
    if spec is None:
        raise ValueError(f"{adapter.task_id} has no scan decomposition")
    carry = spec.init
    forward = []
    for shard in shards:
        out, carry = spec.step(carry, shard)
        forward.append(out)
    if spec.mode == "scalar":
        return spec.finish(carry)
    if spec.mode == "single":
        return forward
    carry = spec.reverse_init
    backward: list = [None] * len(shards)
    for i in range(len(shards) - 1, -1, -1):
        backward[i], carry = spec.reverse_step(carry, shards[i])
    return [spec.merge(s, f, b) for s, f, b in zip(shards, forward, backward)]
