"""Failure classification, information coverage, leader detection and communication matrices."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from .core import RunLog, TaskInstance, canonical_json
from .metrics import MetricsReport, compute_metrics, correct_flags, outward_messages
from .taskgen import get as get_task

PREMATURE = "PrematureSubmission"
CONSENSUS = "ConsensusFailure"
COMPUTATION = "ComputationError"
LEADER_FACTOR = 1.5


# --------------------------------------------------------------------------- #
# Coverage
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Coverage:
    sets: tuple[frozenset, ...]  # per agent, at its submission (or at the end of the run)
    mode: str  # "provenance" or "sender-closure"

    def size(self, agent: int) -> int:
        return len(self.sets[agent])


_OUTBOUND = ("send", "broadcast", "fs_write")


def coverage(runlog: RunLog) -> Coverage:
    """Which agents' raw data could have influenced each agent by the time it submitted.

    When every outbound record carries provenance metadata, a message contributes
    exactly its declared provenance. Otherwise a message carries the sender's whole
    coverage at send time, and coverage is the closure along paths whose logical
    times strictly increase.
    """
    outbound = [a for a in runlog.actions if a.kind in _OUTBOUND]
    use_provenance = bool(outbound) and all("provenance" in a.payload.get("meta", {}) for a in outbound)
    n = runlog.n_agents
    current = [{i} for i in range(n)]
    carried: dict[tuple, frozenset] = {}
    at_submit: list[frozenset | None] = [None] * n
    for a in runlog.actions:
        i = a.agent_id
        if a.kind in _OUTBOUND:
            if use_provenance:
                carried[a.key] = frozenset(a.payload["meta"]["provenance"]) | {i}
            else:
                carried[a.key] = frozenset(current[i])
        elif a.kind == "receive":
            for msg in a.payload["messages"]:
                current[i] |= carried.get(tuple(msg["sent"]), {msg["from"]})
        elif a.kind == "fs_read" and a.payload["writer"] != i:
            current[i] |= carried.get(tuple(a.payload["version"]), {a.payload["writer"]})
        elif a.kind == "submit" and at_submit[i] is None:
            at_submit[i] = frozenset(current[i])
    sets = tuple(s if s is not None else frozenset(current[i]) for i, s in enumerate(at_submit))
    return Coverage(sets, "provenance" if use_provenance else "sender-closure")


def match_holders(instance: TaskInstance) -> set[int]:
    """Agents whose shard alone certifies a positive any-match instance."""
    pattern = instance.params.get("pattern")
    return {i for i, shard in enumerate(instance.shards) if any(pattern in s for s in shard)}


def coverage_sufficient(instance: TaskInstance, covered: frozenset) -> bool:
    if str(instance.task_id) == "I-04" and instance.ground_truth is True:
        return bool(covered & match_holders(instance))
    return len(covered) >= instance.n_agents


# --------------------------------------------------------------------------- #
# Communication matrix and leaders
# --------------------------------------------------------------------------- #


def comm_matrix(runlog: RunLog, rounds: Iterable[int] | None = None) -> list[list[int]]:
    """N x N counts of information flow i -> j.

    Broadcasts expand to every other agent; under SFS a cross-agent read of a
    file counts as writer -> reader.
    """
    n = runlog.n_agents
    keep = None if rounds is None else set(rounds)
    mat = [[0] * n for _ in range(n)]
    for a in runlog.actions:
        if keep is not None and a.round not in keep:
            continue
        if a.kind == "send":
            mat[a.agent_id][a.payload["to"]] += 1
        elif a.kind == "broadcast":
            for j in range(n):
                if j != a.agent_id:
                    mat[a.agent_id][j] += 1
        elif a.kind == "fs_read" and a.payload["writer"] != a.agent_id:
            mat[a.payload["writer"]][a.agent_id] += 1
    return mat


def matrix_csv(matrix: Sequence[Sequence[int]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(matrix)
    return buf.getvalue()


def received_counts(runlog: RunLog) -> list[int]:
    mat = comm_matrix(runlog)
    return [sum(row[j] for row in mat) for j in range(runlog.n_agents)]


def detect_leaders(runlog: RunLog) -> set[int]:
    received = received_counts(runlog)
    total = sum(received)
    if total == 0:
        return set()
    mean = total / len(received)
    return {j for j, r in enumerate(received) if r > LEADER_FACTOR * mean}


# --------------------------------------------------------------------------- #
# Failure classification
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class FailureReport:
    labels: tuple[str, ...]
    premature_agents: tuple[int, ...]
    wrong_with_full_coverage: tuple[int, ...]
    distinct_answers: int
    coverage_sizes: tuple[int, ...]
    coverage_mode: str
    leaders: tuple[int, ...]
    messages_per_agent: float
    rounds_to_completion: int
    success: bool

    def has(self, label: str) -> bool:
        return label in self.labels

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: dict) -> "FailureReport":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})


def _distinct_answers(runlog: RunLog, instance: TaskInstance) -> int:
    task = get_task(instance.task_id)
    seen = set()
    for sub in runlog.submissions:
        v = sub.value
        if v is None:
            continue
        if task.segmented and not (isinstance(v, list) and len(v) == len(instance.ground_truth)):
            continue  # segment-only answers are not comparable across agents
        seen.add(canonical_json(v))
    return len(seen)


def classify(runlog: RunLog, instance: TaskInstance, metrics: MetricsReport | None = None) -> FailureReport:
    metrics = metrics or compute_metrics(runlog, instance)
    cov = coverage(runlog)
    submitters = sorted({a.agent_id for a in runlog.actions if a.kind == "submit"})
    flags = correct_flags(runlog.submissions, instance)
    premature = tuple(i for i in submitters if not coverage_sufficient(instance, cov.sets[i]))
    full = tuple(i for i in submitters if len(cov.sets[i]) == instance.n_agents and not flags[i])
    distinct = _distinct_answers(runlog, instance)
    labels = []
    if not metrics.success:
        if premature:
            labels.append(PREMATURE)
        if distinct > 1:
            labels.append(CONSENSUS)
        if full:
            labels.append(COMPUTATION)
    m = outward_messages(runlog)
    return FailureReport(
        labels=tuple(labels),
        premature_agents=premature,
        wrong_with_full_coverage=full,
        distinct_answers=distinct,
        coverage_sizes=tuple(len(s) for s in cov.sets),
        coverage_mode=cov.mode,
        leaders=tuple(sorted(detect_leaders(runlog))) if runlog.n_agents > 1 else (),
        messages_per_agent=sum(m) / runlog.n_agents,
        rounds_to_completion=runlog.rounds_executed,
        success=metrics.success,
    )


# --------------------------------------------------------------------------- #
# Behavioural statistics
# --------------------------------------------------------------------------- #


@dataclass
class _Acc:
    runs: int = 0
    messages: float = 0.0
    rounds: float = 0.0
    leaders: int = 0


def behavioral_stats(reports: Iterable[FailureReport]) -> dict[str, dict]:
    """Per-outcome means of messages per agent and rounds to completion."""
    acc = {"success": _Acc(), "failed": _Acc()}
    for rep in reports:
        bucket = acc["success" if rep.success else "failed"]
        bucket.runs += 1
        bucket.messages += rep.messages_per_agent
        bucket.rounds += rep.rounds_to_completion
        bucket.leaders += bool(rep.leaders)
    if not any(b.runs for b in acc.values()):
        raise ValueError("need at least one run")
    out = {}
    for name, b in acc.items():
        if b.runs:
            out[name] = {
                "runs": b.runs,
                "messages_per_agent": b.messages / b.runs,
                "rounds_to_completion": b.rounds / b.runs,
                "leader_emergence_rate": b.leaders / b.runs,
            }
    return out
