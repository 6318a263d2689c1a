"""Run metrics: success rate S, partial correctness P, token cost C, density D, and RCC."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Sequence

from .core import Answer, Level, Protocol, RunLog, TaskInstance, answers_equal, within_tolerance
from .taskgen import get as get_task
from .taskgen import shard_bounds


@dataclass(frozen=True)
class MetricsReport:
    S: float
    P: float
    C: float
    D: float | None
    q: tuple[float, ...]
    m: tuple[int, ...]
    correct: tuple[bool, ...]
    success: bool
    total_cost: int
    rounds_executed: int
    r_max: int
    C_over_r_max: float

    def to_dict(self) -> dict:
        out = asdict(self)
        out["q"], out["m"], out["correct"] = list(self.q), list(self.m), list(self.correct)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        data = dict(data)
        for key in ("q", "m", "correct"):
            data[key] = tuple(data[key])
        return cls(**data)


# --------------------------------------------------------------------------- #
# Per-agent expected answers
# --------------------------------------------------------------------------- #


def segment_bounds(instance: TaskInstance) -> list[tuple[int, int]]:
    return shard_bounds(len(instance.global_input), instance.n_agents)


def agent_truth(instance: TaskInstance, agent: int) -> Any:
    """The answer agent ``agent`` is responsible for (its segment for segmented tasks)."""
    task = get_task(instance.task_id)
    if not task.segmented:
        return instance.ground_truth
    lo, hi = segment_bounds(instance)[agent]
    return instance.ground_truth[lo:hi]


def normalize_submission(value: Any, instance: TaskInstance, agent: int) -> Any:
    """Slice full-length submissions of segmented tasks down to the agent's segment."""
    task = get_task(instance.task_id)
    if task.segmented and isinstance(value, list) and len(value) == len(instance.ground_truth):
        lo, hi = segment_bounds(instance)[agent]
        return value[lo:hi]
    return value


def _values(submissions: Sequence[Answer | Any]) -> list[Any]:
    return [s.value if isinstance(s, Answer) else s for s in submissions]


# --------------------------------------------------------------------------- #
# S and P
# --------------------------------------------------------------------------- #


def success_rate(submissions: Sequence[Answer | Any], ground_truth: Any) -> float:
    """Fraction of agents whose answer equals ``ground_truth`` (nulls count as wrong)."""
    values = _values(submissions)
    if not values:
        raise ValueError("need at least one agent")
    return sum(1 for v in values if v is not None and answers_equal(v, ground_truth)) / len(values)


def correct_flags(submissions: Sequence[Answer | Any], instance: TaskInstance) -> list[bool]:
    out = []
    for i, v in enumerate(_values(submissions)):
        v = normalize_submission(v, instance, i)
        out.append(v is not None and answers_equal(v, agent_truth(instance, i)))
    return out


def lcs_length(a: Sequence, b: Sequence, same=answers_equal) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if same(x, y) else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def quality(value: Any, truth: Any, level: Level, tolerance: float, segmented: bool) -> float:
    """Per-agent partial correctness q_i in [0, 1]."""
    if value is None:
        return 0.0
    if within_tolerance(value, truth, tolerance):
        return 1.0
    if not isinstance(truth, (list, tuple)) or not isinstance(value, (list, tuple)):
        return 0.0
    if level is Level.II and segmented:
        if not truth:
            return 0.0
        hits = sum(1 for v, t in zip(value, truth) if within_tolerance(v, t, tolerance))
        return hits / len(truth)
    if level is Level.III:
        if not truth:
            return 0.0
        return lcs_length(value, truth, lambda x, y: within_tolerance(x, y, tolerance)) / len(truth)
    return 0.0


def pcs(submissions: Sequence[Answer | Any], instance: TaskInstance, tolerance: float = 0.01) -> tuple[float, list[float]]:
    task = get_task(instance.task_id)
    q = []
    for i, v in enumerate(_values(submissions)):
        v = normalize_submission(v, instance, i)
        q.append(quality(v, agent_truth(instance, i), task.level, tolerance, task.segmented))
    return sum(q) / len(q), q


# --------------------------------------------------------------------------- #
# C and D
# --------------------------------------------------------------------------- #


def token_consumption(runlog: RunLog) -> float:
    total = sum(a.cost_units for a in runlog.actions)
    return total / runlog.rounds_executed if runlog.rounds_executed else 0.0


def outward_messages(runlog: RunLog) -> list[int]:
    """m_i: sends (P2P), broadcasts counted once (BP), or cross-agent reads of i's files (SFS)."""
    m = [0] * runlog.n_agents
    protocol = runlog.config.protocol
    for a in runlog.actions:
        if protocol is Protocol.P2P and a.kind == "send":
            m[a.agent_id] += 1
        elif protocol is Protocol.BP and a.kind == "broadcast":
            m[a.agent_id] += 1
        elif protocol is Protocol.SFS and a.kind == "fs_read" and a.payload["writer"] != a.agent_id:
            m[a.payload["writer"]] += 1
    return m


def density(runlog: RunLog) -> tuple[float | None, list[int]]:
    m = outward_messages(runlog)
    n = runlog.n_agents
    if n < 2:
        return None, m
    return sum(m) / (n * (n - 1)), m


def rcc(sr_multi: float, sr_single: float) -> float | None:
    """Relative coordination cost 1 - SR(N=k)/SR(N=1); None when the baseline is zero."""
    if sr_single == 0:
        return None
    return 1 - sr_multi / sr_single


# --------------------------------------------------------------------------- #


def compute_metrics(runlog: RunLog, instance: TaskInstance) -> MetricsReport:
    if runlog.n_agents != instance.n_agents:
        raise ValueError("run log and instance disagree on n_agents")
    flags = correct_flags(runlog.submissions, instance)
    p, q = pcs(runlog.submissions, instance, runlog.config.pcs_tolerance)
    d, m = density(runlog)
    total = sum(a.cost_units for a in runlog.actions)
    s = sum(flags) / len(flags)
    return MetricsReport(
        S=s,
        P=p,
        C=token_consumption(runlog),
        D=d,
        q=tuple(q),
        m=tuple(m),
        correct=tuple(flags),
        success=s == 1.0,
        total_cost=total,
        rounds_executed=runlog.rounds_executed,
        r_max=runlog.config.r_max,
        C_over_r_max=total / runlog.config.r_max,
    )
