"""Synchronous round scheduler.

Each round every non-submitted agent is activated once. A policy acts only
through its :class:`Controller`; actions are recorded with the key
``(round, agent_id, action_index)`` and their substrate effects are committed
in key order after all activations of the round return.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol as TypingProtocol

from .core import ActionRecord, Answer, AnswerParseError, Protocol, RunConfig, RunLog, TaskInstance, parse_answer
from .protocols import Message, ProtocolError, SharedFileStore, make_substrate
from .taskgen import get as get_task
from .taskgen import shard_bounds

P2P_ACTIONS = frozenset({"send", "receive", "wait", "submit"})
BP_ACTIONS = frozenset({"receive", "broadcast", "list_agents", "wait", "submit"})
SFS_ACTIONS = frozenset({"fs_list", "fs_read", "fs_write", "fs_delete", "wait", "submit"})
ALLOWED = {Protocol.P2P: P2P_ACTIONS, Protocol.BP: BP_ACTIONS, Protocol.SFS: SFS_ACTIONS}


class ActivationEnded(Exception):
    """Raised inside a policy once its activation is over (wait, submit or budget)."""


class BudgetExhausted(ActivationEnded):
    pass


class InvalidAction(ProtocolError):
    pass


class FatalPolicyError(RuntimeError):
    """A fault that must abort the whole episode (for example rejected credentials)."""


@dataclass(frozen=True)
class Observation:
    agent_id: int
    n_agents: int
    round: int
    protocol: Protocol
    task_id: str
    task_name: str
    task_description: str
    answer_shape: str
    shard: Any
    params: dict
    segment: tuple[int, int]  # global index range of this agent's shard
    pending_messages: int
    action_budget: int
    max_message_chars: int
    scaffold: frozenset = frozenset()


class Policy(TypingProtocol):
    def act(self, obs: Observation, ctl: "Controller") -> None: ...


PolicyFactory = Callable[[int], Policy]


def content_cost(content: Any) -> int:
    text = content if isinstance(content, str) else json.dumps(content, sort_keys=True, separators=(",", ":"))
    return math.ceil(len(text) / 4)


@dataclass
class _Activation:
    records: list[ActionRecord] = field(default_factory=list)
    messages: list[Message] = field(default_factory=list)
    answer: Answer | None = None
    fault: dict | None = None
    notes: list[dict] = field(default_factory=list)


class Controller:
    """The only handle a policy has on the world during one activation."""

    def __init__(self, episode: "Episode", agent: int, round_: int, reports_tokens: bool):
        self._ep = episode
        self.agent_id = agent
        self.round = round_
        self._reports_tokens = reports_tokens
        self._budget = episode.config.action_budget
        self._next_index = 0
        self._ended = False
        self._charge = 0
        self.result = _Activation()

    # --- bookkeeping ------------------------------------------------------- #

    @property
    def remaining(self) -> int:
        return 0 if self._ended else self._budget - self._next_index

    @property
    def ended(self) -> bool:
        return self._ended

    def charge(self, tokens: int) -> None:
        """Attach provider-reported output tokens to the next recorded action."""
        if tokens < 0:
            raise ValueError("token count must be nonnegative")
        self._charge += int(tokens)

    def note_fault(self, info: dict) -> None:
        """Log a recoverable incident (the agent stays in the episode)."""
        self.result.notes.append({"round": self.round, "agent": self.agent_id, **info})

    def _begin(self) -> tuple[int, int, int]:
        if self._ended:
            raise ActivationEnded("activation already ended")
        if self._next_index >= self._budget:
            self._ended = True
            raise BudgetExhausted("action budget exhausted")
        return (self.round, self.agent_id, self._next_index)

    def _record(self, kind: str, payload: dict, content: Any = None) -> ActionRecord:
        cost = self._charge if self._reports_tokens else (content_cost(content) if content is not None else 0)
        self._charge = 0
        rec = ActionRecord(self.round, self.agent_id, self._next_index, kind, payload, cost)
        self.result.records.append(rec)
        self._next_index += 1
        return rec

    def _invalid(self, kind: str, error: Exception) -> InvalidAction:
        self._record("invalid", {"attempted": kind, "error": str(error)})
        return InvalidAction(str(error))

    def _check_allowed(self, kind: str) -> None:
        if kind not in ALLOWED[self._ep.config.protocol]:
            raise self._invalid(kind, ProtocolError(f"{kind} is not available under {self._ep.config.protocol.value}"))

    # --- actions ----------------------------------------------------------- #

    def send(self, to: int, content: str, meta: dict | None = None) -> None:
        at = self._begin()
        self._check_allowed("send")
        try:
            msg = self._ep.substrate.stage_send(self.agent_id, to, content, at, meta)
        except ProtocolError as exc:
            raise self._invalid("send", exc) from None
        self.result.messages.append(msg)
        payload = {"to": to, "content": content}
        if meta is not None:
            payload["meta"] = meta
        self._record("send", payload, content)

    def broadcast(self, content: str, meta: dict | None = None) -> None:
        at = self._begin()
        self._check_allowed("broadcast")
        try:
            msg = self._ep.substrate.stage_broadcast(self.agent_id, content, at, meta)
        except ProtocolError as exc:
            raise self._invalid("broadcast", exc) from None
        self.result.messages.append(msg)
        payload = {"content": content}
        if meta is not None:
            payload["meta"] = meta
        self._record("broadcast", payload, content)

    def receive(self) -> list[Message]:
        self._begin()
        self._check_allowed("receive")
        msgs = self._ep.substrate.receive(self.agent_id)
        self._record("receive", {"messages": [{"from": m.sender, "sent": list(m.sent_at)} for m in msgs]})
        return msgs

    def list_agents(self) -> list[int]:
        self._begin()
        self._check_allowed("list_agents")
        agents = [a for a in range(self._ep.config.n_agents) if a != self.agent_id]
        self._record("list_agents", {"agents": agents})
        return agents

    def list_files(self, prefix: str = "/") -> list[str]:
        self._begin()
        self._check_allowed("fs_list")
        paths = self._ep.substrate.list(self.agent_id, prefix)
        self._record("fs_list", {"prefix": prefix, "paths": paths})
        return paths

    def read_file(self, path: str) -> str:
        self._begin()
        self._check_allowed("fs_read")
        try:
            got = self._ep.substrate.read(self.agent_id, path)
        except ProtocolError as exc:
            raise self._invalid("fs_read", exc) from None
        self._record("fs_read", {"path": path, "writer": got.writer, "version": list(got.version)})
        return got.content

    def write_file(self, path: str, content: str, meta: dict | None = None) -> None:
        at = self._begin()
        self._check_allowed("fs_write")
        try:
            self._ep.substrate.stage_write(self.agent_id, path, content, at, meta)
        except ProtocolError as exc:
            raise self._invalid("fs_write", exc) from None
        payload = {"path": path, "content": content}
        if meta is not None:
            payload["meta"] = meta
        self._record("fs_write", payload, content)

    def delete_file(self, path: str) -> None:
        at = self._begin()
        self._check_allowed("fs_delete")
        try:
            self._ep.substrate.stage_delete(self.agent_id, path, at)
        except ProtocolError as exc:
            raise self._invalid("fs_delete", exc) from None
        self._record("fs_delete", {"path": path})

    def wait(self) -> None:
        self._begin()
        self._record("wait", {})
        self._ended = True
        raise ActivationEnded("wait")

    def submit(self, raw: Any) -> Answer:
        self._begin()
        shape = self._ep.task.answer_shape
        try:
            value = parse_answer(raw, shape)
            answer = Answer(value, self.round, parse_error=False)
        except (AnswerParseError, ValueError, TypeError):
            answer = Answer(None, self.round, parse_error=True)
        raw_json = raw if isinstance(raw, (str, int, float, bool, list, dict)) or raw is None else repr(raw)
        self._record("submit", {"raw": raw_json, "value": answer.value, "parse_error": answer.parse_error}, raw_json)
        self.result.answer = answer
        self._ended = True
        raise ActivationEnded("submit")

    def finish(self) -> None:
        """Close the activation; unabsorbed token charges go on an implicit wait."""
        if self._charge and not self._ended and self._next_index < self._budget:
            self._record("wait", {"implicit": True})
        self._ended = True


class Episode:
    def __init__(self, instance: TaskInstance, config: RunConfig, policy_factory: PolicyFactory, *, max_workers: int = 1):
        if instance.n_agents != config.n_agents:
            raise ValueError("instance and config disagree on n_agents")
        self.instance = instance
        self.config = config
        self.task = get_task(instance.task_id)
        self.substrate = make_substrate(config.protocol, config.n_agents, config.max_message_chars)
        self.policies = [policy_factory(i) for i in range(config.n_agents)]
        self.max_workers = max_workers
        self.description = self.task.describe(instance.params)
        self.bounds = shard_bounds(len(instance.global_input), config.n_agents) if self.task.composition == "concat" else None

    def _segment(self, agent: int) -> tuple[int, int]:
        if self.bounds is not None:
            return self.bounds[agent]
        start = sum(len(s) for s in self.instance.shards[:agent])
        return (start, start + len(self.instance.shards[agent]))

    def _observe(self, agent: int, round_: int) -> Observation:
        return Observation(
            agent_id=agent,
            n_agents=self.config.n_agents,
            round=round_,
            protocol=self.config.protocol,
            task_id=str(self.instance.task_id),
            task_name=self.task.name,
            task_description=self.description,
            answer_shape=self.task.answer_shape,
            shard=self.instance.shards[agent],
            params=self.instance.params,
            segment=self._segment(agent),
            pending_messages=self.substrate.pending(agent) if hasattr(self.substrate, "pending") else 0,
            action_budget=self.config.action_budget,
            max_message_chars=self.config.max_message_chars,
            scaffold=self.config.scaffold,
        )

    def _activate(self, agent: int, round_: int) -> _Activation:
        policy = self.policies[agent]
        ctl = Controller(self, agent, round_, getattr(policy, "reports_tokens", False))
        try:
            policy.act(self._observe(agent, round_), ctl)
            ctl.finish()
        except ActivationEnded:
            pass
        except FatalPolicyError:
            raise
        except Exception as exc:  # fault isolation: this agent is out, the episode goes on
            ctl.result.fault = {"round": round_, "agent": agent, "kind": "policy_error", "error": f"{type(exc).__name__}: {exc}"}
        return ctl.result

    def run(self) -> RunLog:
        n = self.config.n_agents
        answers: list[Answer | None] = [None] * n
        records: list[ActionRecord] = []
        faults: list[dict] = []
        rounds_executed = self.config.r_max
        terminated_by = "round_limit"
        pool = ThreadPoolExecutor(self.max_workers) if self.max_workers > 1 else None
        try:
            for r in range(1, self.config.r_max + 1):
                active = [a for a in range(n) if answers[a] is None]
                if pool is None:
                    results = [self._activate(a, r) for a in active]
                else:
                    results = list(pool.map(lambda a: self._activate(a, r), active))
                for agent, res in zip(active, results):
                    records.extend(res.records)
                    faults.extend(res.notes)
                    # effects issued before a fault still stand
                    for msg in res.messages:
                        self.substrate.commit(msg)
                    if res.fault is not None:
                        faults.append(res.fault)
                        answers[agent] = Answer(None, None)
                    elif res.answer is not None:
                        answers[agent] = res.answer
                for agent, res in zip(active, results):
                    if answers[agent] is not None:
                        self.substrate.mark_submitted(agent)
                if isinstance(self.substrate, SharedFileStore):
                    self.substrate.commit_round()
                if all(a is not None for a in answers):
                    rounds_executed, terminated_by = r, "all_submitted"
                    break
        finally:
            if pool is not None:
                pool.shutdown()
        submissions = tuple(a if a is not None else Answer(None, None) for a in answers)
        return RunLog(
            config=self.config,
            task_id=self.instance.task_id,
            seed=self.instance.seed,
            actions=tuple(records),
            submissions=submissions,
            rounds_executed=rounds_executed,
            terminated_by=terminated_by,
            faults=tuple(faults),
        )


def run_episode(instance: TaskInstance, config: RunConfig, policy_factory: PolicyFactory, *, max_workers: int = 1) -> RunLog:
    return Episode(instance, config, policy_factory, max_workers=max_workers).run()
