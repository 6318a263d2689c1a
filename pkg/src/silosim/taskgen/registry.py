from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from ..core import Level, TaskId, as_task_id
from .adapters import TaskAdapter
from .rng import Streams


class InfeasibleParameters(ValueError):
    """Raised when a generator cannot honour the requested parameters."""


@dataclass(frozen=True)
class TaskDef:
    task_id: TaskId
    name: str
    answer_shape: str
    composition: str  # "concat" or "multiset"
    make: Callable[[Streams, int, int, dict], tuple[Any, dict]]
    solve: Callable[[Any, dict], Any]
    adapter: Callable[[dict], TaskAdapter]
    describe: Callable[[dict], str]
    default_params: dict = field(default_factory=dict)
    default_shard_size: int = 6
    segmented: bool = False  # each agent answers for its own index range only
    input_kind: str = "list"  # "list" of elements, or "text" for string tasks

    @property
    def level(self) -> Level:
        return self.task_id.level

    def resolve_params(self, params: dict | None) -> dict:
        return {**self.default_params, **(params or {})}

    def oracle(self, global_input: Any, params: dict | None = None) -> Any:
        expected = str if self.input_kind == "text" else (list, tuple)
        if not isinstance(global_input, expected) or len(global_input) == 0:
            raise ValueError(f"{self.task_id} expects a non-empty {self.input_kind} input")
        try:
            return self.solve(global_input, self.resolve_params(params))
        except (TypeError, KeyError, IndexError) as exc:
            raise ValueError(f"malformed input for {self.task_id}: {exc}") from exc


_TASKS: dict[TaskId, TaskDef] = {}


def register(task: TaskDef) -> TaskDef:
    if task.task_id in _TASKS:
        raise ValueError(f"duplicate task {task.task_id}")
    _TASKS[task.task_id] = task
    return task


def _ensure_loaded() -> None:
    if len(_TASKS) < 30:
        from . import level1, level2, level3  # noqa: F401


def get(task_id: TaskId | str | int) -> TaskDef:
    _ensure_loaded()
    tid = as_task_id(task_id)
    try:
        return _TASKS[tid]
    except KeyError:
        raise KeyError(f"unsupported task {tid}") from None


def all_tasks() -> list[TaskDef]:
    _ensure_loaded()
    return [_TASKS[k] for k in sorted(_TASKS)]


def all_task_ids() -> list[TaskId]:
    return [t.task_id for t in all_tasks()]
