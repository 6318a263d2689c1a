"""Shared vocabulary types: task ids, instances, run configuration, answers and run logs.

Everything here is plain data with validation. Serialization helpers produce
JSON-native dicts so that logs are byte-stable across runs.
"""

from __future__ import annotations

import ast
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Iterator

# --------------------------------------------------------------------------- #
# Identifiers
# --------------------------------------------------------------------------- #


class Level(str, Enum):
    I = "I"
    II = "II"
    III = "III"

    @classmethod
    def for_index(cls, index: int) -> "Level":
        if 1 <= index <= 10:
            return cls.I
        if 11 <= index <= 20:
            return cls.II
        if 21 <= index <= 30:
            return cls.III
        raise ValueError(f"task index {index} outside 1..30")


class Protocol(str, Enum):
    P2P = "P2P"
    BP = "BP"
    SFS = "SFS"


_TASK_ID_RE = re.compile(r"^(I{1,3})-(\d{2})$")


@dataclass(frozen=True, order=True)
class TaskId:
    level: Level
    index: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "level", Level(self.level))
        if Level.for_index(self.index) is not self.level:
            raise ValueError(f"index {self.index} does not belong to level {self.level.value}")

    @classmethod
    def parse(cls, text: str) -> "TaskId":
        m = _TASK_ID_RE.match(text.strip())
        if not m:
            raise ValueError(f"malformed task id {text!r}")
        return cls(Level(m.group(1)), int(m.group(2)))

    @classmethod
    def from_index(cls, index: int) -> "TaskId":
        return cls(Level.for_index(index), index)

    def __str__(self) -> str:
        return f"{self.level.value}-{self.index:02d}"


def as_task_id(value: "TaskId | str | int") -> TaskId:
    if isinstance(value, TaskId):
        return value
    if isinstance(value, int):
        return TaskId.from_index(value)
    return TaskId.parse(value)


# --------------------------------------------------------------------------- #
# Task instances
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class TaskInstance:
    """One concrete task: partitioned input, public parameters and ground truth.

    ``params`` holds the public, non-partitioned task parameters (target word,
    range bounds, node count, initial centroids, ...) that every agent is told.
    """

    task_id: TaskId
    global_input: Any
    shards: tuple
    ground_truth: Any
    seed: int
    n_agents: int
    shard_size: int
    params: dict = field(default_factory=dict)

    @property
    def level(self) -> Level:
        return self.task_id.level

    def to_dict(self, *, include_truth: bool = True) -> dict:
        out = {
            "task_id": str(self.task_id),
            "seed": self.seed,
            "n_agents": self.n_agents,
            "shard_size": self.shard_size,
            "params": self.params,
            "global_input": self.global_input,
            "shards": list(self.shards),
        }
        if include_truth:
            out["ground_truth"] = self.ground_truth
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TaskInstance":
        return cls(
            task_id=TaskId.parse(data["task_id"]),
            global_input=data["global_input"],
            shards=tuple(data["shards"]),
            ground_truth=data.get("ground_truth"),
            seed=int(data["seed"]),
            n_agents=int(data["n_agents"]),
            shard_size=int(data["shard_size"]),
            params=dict(data.get("params", {})),
        )


def _freeze(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, dict):
        return tuple(sorted((k, _freeze(v)) for k, v in value.items()))
    return value


def validate_instance(instance: TaskInstance) -> list[str]:
    """Return every violated instance invariant; an empty list means ok."""
    from .taskgen import registry

    violations: list[str] = []
    n = instance.n_agents
    shards = list(instance.shards)
    if n < 1:
        violations.append("n_agents must be positive")
    if instance.shard_size < 1:
        violations.append("shard_size must be positive")
    if len(shards) != n:
        violations.append(f"shard count {len(shards)} != n_agents {n}")
    try:
        task = registry.get(instance.task_id)
    except KeyError:
        return violations + [f"unsupported task {instance.task_id}"]

    total = len(instance.global_input)
    if shards and n >= 1:
        lo, hi = total // n, -(-total // n)
        sizes = [len(s) for s in shards]
        if any(size not in (lo, hi) for size in sizes):
            violations.append(f"equipartition: shard sizes {sizes} not within {{{lo},{hi}}}")

    if task.composition == "concat":
        joined = "".join(shards) if isinstance(instance.global_input, str) else [x for s in shards for x in s]
        if _freeze(joined) != _freeze(instance.global_input):
            violations.append("composition rule: shards do not concatenate to the global input")
    else:
        pooled = Counter(_freeze(x) for s in shards for x in s)
        if pooled != Counter(_freeze(x) for x in instance.global_input):
            violations.append("composition rule: shard union differs from the global input")

    try:
        expected = task.oracle(instance.global_input, instance.params)
    except Exception as exc:  # malformed input is itself a violation
        violations.append(f"ground truth mismatch: oracle failed ({exc})")
    else:
        if not answers_equal(expected, instance.ground_truth):
            violations.append("ground truth mismatch")
    return violations


# --------------------------------------------------------------------------- #
# Run configuration
# --------------------------------------------------------------------------- #

SCAFFOLDS = frozenset({"planning_round", "protocol_reminder", "scratchpad_hint"})


@dataclass(frozen=True)
class RunConfig:
    n_agents: int
    protocol: Protocol
    model: str = "scripted:optimal"
    r_max: int = 100
    action_budget: int = 8
    master_seed: int = 0
    scaffold: frozenset = frozenset()
    pcs_tolerance: float = 0.01
    max_message_chars: int = 8192

    def __post_init__(self) -> None:
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        object.__setattr__(self, "scaffold", frozenset(self.scaffold))
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        if self.r_max < 1:
            raise ValueError("r_max must be >= 1")
        if self.action_budget < 1:
            raise ValueError("action_budget must be >= 1")
        if self.pcs_tolerance < 0:
            raise ValueError("pcs_tolerance must be nonnegative")
        unknown = self.scaffold - SCAFFOLDS
        if unknown:
            raise ValueError(f"unknown scaffold flags: {sorted(unknown)}")

    def to_dict(self) -> dict:
        return {
            "n_agents": self.n_agents,
            "protocol": self.protocol.value,
            "model": self.model,
            "r_max": self.r_max,
            "action_budget": self.action_budget,
            "master_seed": self.master_seed,
            "scaffold": sorted(self.scaffold),
            "pcs_tolerance": self.pcs_tolerance,
            "max_message_chars": self.max_message_chars,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        data["scaffold"] = frozenset(data.get("scaffold", ()))
        return cls(**data)


# --------------------------------------------------------------------------- #
# Answers
# --------------------------------------------------------------------------- #

# Answer shapes are tagged: "int", "real", "bool", "seq[<shape>]".
SR_REL_TOL = 1e-9
SR_ABS_TOL = 1e-12


@dataclass(frozen=True)
class Answer:
    value: Any = None
    submitted_round: int | None = None
    parse_error: bool = False

    @property
    def is_null(self) -> bool:
        return self.value is None

    def to_dict(self) -> dict:
        return {"value": self.value, "submitted_round": self.submitted_round, "parse_error": self.parse_error}

    @classmethod
    def from_dict(cls, data: dict) -> "Answer":
        return cls(data.get("value"), data.get("submitted_round"), bool(data.get("parse_error", False)))


class AnswerParseError(ValueError):
    pass


def _coerce(value: Any, shape: str) -> Any:
    if shape.startswith("seq[") and shape.endswith("]"):
        inner = shape[4:-1]
        if isinstance(value, str):
            value = _decode_text(value)
        if not isinstance(value, (list, tuple)):
            raise AnswerParseError(f"expected a sequence, got {type(value).__name__}")
        return [_coerce(v, inner) for v in value]
    if shape == "bool":
        if isinstance(value, bool):
            return value
        if isinstance(value, int) and value in (0, 1):
            return bool(value)
        if isinstance(value, str) and value.strip().lower() in ("true", "yes", "false", "no"):
            return value.strip().lower() in ("true", "yes")
        raise AnswerParseError(f"expected a boolean, got {value!r}")
    if shape == "int":
        if isinstance(value, bool):
            raise AnswerParseError("boolean is not an integer answer")
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise AnswerParseError(f"expected an integer, got {value!r}")
    if shape == "real":
        if isinstance(value, bool):
            raise AnswerParseError("boolean is not a real answer")
        if isinstance(value, (int, float)) and math.isfinite(value):
            return float(value)
        raise AnswerParseError(f"expected a real number, got {value!r}")
    raise ValueError(f"unknown answer shape {shape!r}")


def _decode_text(text: str) -> Any:
    text = text.strip()
    if text.startswith("```"):
        text = "\n".join(line for line in text.splitlines() if not line.strip().startswith("```")).strip()
    try:
        return json.loads(text)
    except (json.JSONDecodeError, ValueError):
        pass
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError, MemoryError, RecursionError):
        pass
    lowered = text.lower()
    if lowered in ("true", "false", "yes", "no"):
        return lowered
    raise AnswerParseError(f"cannot parse answer text {text[:60]!r}")


def parse_answer(raw: Any, shape: str) -> Any:
    """Coerce a raw submission (text or value) to ``shape``; raises AnswerParseError."""
    if raw is None:
        raise AnswerParseError("empty answer")
    if isinstance(raw, str):
        if shape == "bool" and raw.strip().lower() in ("true", "yes", "false", "no"):
            return raw.strip().lower() in ("true", "yes")
        raw = _decode_text(raw)
        if isinstance(raw, str) and shape != "bool":
            raise AnswerParseError(f"cannot parse answer text {raw[:60]!r}")
    return _coerce(raw, shape)


def _real_close(a: float, b: float, rel_tol: float, abs_tol: float) -> bool:
    return abs(a - b) <= rel_tol * abs(b) + abs_tol


def answers_equal(candidate: Any, truth: Any, *, rel_tol: float = SR_REL_TOL, abs_tol: float = SR_ABS_TOL) -> bool:
    """Structural equality: exact for integers/bools/strings, toleranced for reals."""
    if candidate is None or truth is None:
        return candidate is None and truth is None
    if isinstance(truth, bool) or isinstance(candidate, bool):
        return isinstance(truth, bool) and isinstance(candidate, bool) and candidate == truth
    if isinstance(truth, (list, tuple)):
        if not isinstance(candidate, (list, tuple)) or len(candidate) != len(truth):
            return False
        return all(answers_equal(c, t, rel_tol=rel_tol, abs_tol=abs_tol) for c, t in zip(candidate, truth))
    if isinstance(truth, dict):
        if not isinstance(candidate, dict) or candidate.keys() != truth.keys():
            return False
        return all(answers_equal(candidate[k], truth[k], rel_tol=rel_tol, abs_tol=abs_tol) for k in truth)
    if isinstance(truth, float) or isinstance(candidate, float):
        if not isinstance(candidate, (int, float)) or not isinstance(truth, (int, float)):
            return False
        return _real_close(float(candidate), float(truth), rel_tol, abs_tol)
    return candidate == truth


def within_tolerance(candidate: Any, truth: Any, tolerance: float) -> bool:
    """PCS acceptance: SR-equal, or every real within ``tolerance`` relative error."""
    if answers_equal(candidate, truth):
        return True
    if candidate is None or truth is None:
        return False
    if isinstance(truth, bool) or isinstance(candidate, bool):
        return False
    if isinstance(truth, (list, tuple)):
        if not isinstance(candidate, (list, tuple)) or len(candidate) != len(truth):
            return False
        return all(within_tolerance(c, t, tolerance) for c, t in zip(candidate, truth))
    if isinstance(truth, (int, float)) and isinstance(candidate, (int, float)):
        return abs(candidate - truth) <= tolerance * abs(truth)
    return False


# --------------------------------------------------------------------------- #
# Action records and run logs
# --------------------------------------------------------------------------- #

ACTION_KINDS = frozenset(
    {
        "send",
        "broadcast",
        "receive",
        "list_agents",
        "fs_list",
        "fs_read",
        "fs_write",
        "fs_delete",
        "wait",
        "submit",
        "invalid",
    }
)


@dataclass(frozen=True)
class ActionRecord:
    round: int
    agent_id: int
    action_index: int
    kind: str
    payload: dict = field(default_factory=dict)
    cost_units: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.round < 1 or self.agent_id < 0 or self.action_index < 0 or self.cost_units < 0:
            raise ValueError("action record fields out of range")

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.round, self.agent_id, self.action_index)

    def to_dict(self) -> dict:
        return {
            "type": "action",
            "round": self.round,
            "agent": self.agent_id,
            "index": self.action_index,
            "kind": self.kind,
            "payload": self.payload,
            "cost": self.cost_units,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ActionRecord":
        return cls(data["round"], data["agent"], data["index"], data["kind"], data.get("payload", {}), data.get("cost", 0))


@dataclass(frozen=True)
class RunLog:
    config: RunConfig
    task_id: TaskId
    seed: int
    actions: tuple[ActionRecord, ...]
    submissions: tuple[Answer, ...]
    rounds_executed: int
    terminated_by: str = "all_submitted"
    faults: tuple = ()

    def __post_init__(self) -> None:
        keys = [a.key for a in self.actions]
        if any(k1 >= k2 for k1, k2 in zip(keys, keys[1:])):
            raise ValueError("action keys must be strictly increasing")
        if len(self.submissions) != self.config.n_agents:
            raise ValueError("one submission entry per agent required")
        if not 0 <= self.rounds_executed <= self.config.r_max:
            raise ValueError("rounds_executed outside [0, r_max]")

    @property
    def n_agents(self) -> int:
        return self.config.n_agents

    @property
    def per_round_out_tokens(self) -> list[list[int]]:
        """N x rounds_executed matrix of output cost units."""
        table = [[0] * self.rounds_executed for _ in range(self.n_agents)]
        for a in self.actions:
            table[a.agent_id][a.round - 1] += a.cost_units
        return table

    def by_kind(self, *kinds: str) -> Iterator[ActionRecord]:
        return (a for a in self.actions if a.kind in kinds)

    # JSON-lines: header, one line per action, footer.
    def iter_lines(self) -> Iterable[str]:
        header = {
            "type": "header",
            "config": self.config.to_dict(),
            "instance": {"task_id": str(self.task_id), "seed": self.seed},
        }
        yield _dumps(header)
        for a in self.actions:
            yield _dumps(a.to_dict())
        footer = {
            "type": "footer",
            "submissions": [s.to_dict() for s in self.submissions],
            "rounds_executed": self.rounds_executed,
            "terminated_by": self.terminated_by,
            "faults": list(self.faults),
        }
        yield _dumps(footer)

    def to_jsonl(self) -> str:
        return "".join(line + "\n" for line in self.iter_lines())

    @classmethod
    def from_jsonl(cls, text: str) -> "RunLog":
        lines = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not lines or lines[0].get("type") != "header" or lines[-1].get("type") != "footer":
            raise ValueError("run log must start with a header and end with a footer")
        header, footer = lines[0], lines[-1]
        return cls(
            config=RunConfig.from_dict(header["config"]),
            task_id=TaskId.parse(header["instance"]["task_id"]),
            seed=int(header["instance"]["seed"]),
            actions=tuple(ActionRecord.from_dict(d) for d in lines[1:-1]),
            submissions=tuple(Answer.from_dict(d) for d in footer["submissions"]),
            rounds_executed=int(footer["rounds_executed"]),
            terminated_by=footer.get("terminated_by", "all_submitted"),
            faults=tuple(footer.get("faults", [])),
        )

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def read(cls, path) -> "RunLog":
        with open(path, encoding="utf-8") as fh:
            return cls.from_jsonl(fh.read())


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_json(obj: Any) -> str:
    return _dumps(obj)
