"""Task generators, exact oracles and the equipartitioner for all 30 tasks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from ..core import TaskId, TaskInstance, as_task_id
from .adapters import AggPhase, ScanSpec, TaskAdapter, aggregate, scan_fold
from .partition import partition, shard_bounds
from .registry import InfeasibleParameters, TaskDef, all_task_ids, all_tasks, get
from .rng import Streams, derive_seed, stream

__all__ = [
    "AggPhase",
    "GenSpec",
    "InfeasibleParameters",
    "ScanSpec",
    "TaskAdapter",
    "TaskDef",
    "adapter_for",
    "aggregate",
    "all_task_ids",
    "all_tasks",
    "derive_seed",
    "generate",
    "get",
    "oracle",
    "partition",
    "scan_fold",
    "shard_bounds",
]


@dataclass(frozen=True)
class GenSpec:
    task_id: TaskId | str
    n_agents: int
    seed: int = 0
    shard_size: int | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "task_id", as_task_id(self.task_id))
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        if self.shard_size is not None and self.shard_size < 1:
            raise ValueError("shard_size must be >= 1")


def generate(spec: GenSpec) -> TaskInstance:
    task = get(spec.task_id)
    k = spec.shard_size or task.default_shard_size
    params = task.resolve_params(spec.params)
    tid = str(task.task_id)
    data, params = task.make(Streams(spec.seed, tid), spec.n_agents, k, params)
    rng = stream(spec.seed, tid, "partition") if task.composition == "multiset" else None
    shards = partition(data, spec.n_agents, rule=task.composition, rng=rng)
    return TaskInstance(
        task_id=task.task_id,
        global_input=data,
        shards=tuple(shards),
        ground_truth=task.solve(data, params),
        seed=spec.seed,
        n_agents=spec.n_agents,
        shard_size=k,
        params=params,
    )


def oracle(task_id: TaskId | str, global_input: Any, params: dict | None = None) -> Any:
    return get(task_id).oracle(global_input, params)


def adapter_for(task_id: TaskId | str, params: dict | None = None) -> TaskAdapter:
    task = get(task_id)
    return task.adapter(task.resolve_params(params))
