"""Scripted agent policies.

The optimal-topology policies (star, chain, all-gather) are generic over a
task's :class:`TaskAdapter`, so one implementation covers every task of a
level. They talk through a :class:`Channel`, which maps addressed JSON
envelopes onto whichever substrate the run uses:

* P2P: one ``send`` per recipient;
* BP: one ``broadcast``, readers drop envelopes addressed to someone else;
* SFS: one file per envelope under ``/to/<agent>/`` or ``/pub/``.

Every envelope carries the set of agents whose raw data it depends on as
``provenance`` metadata; the analysis module uses it for coverage.
"""

from __future__ import annotations

import json
from collections import deque
from functools import reduce
from typing import Any, Callable

from .core import Protocol, TaskInstance
from .runtime import Controller, Observation, PolicyFactory
from .taskgen import TaskAdapter, adapter_for
from .taskgen import get as get_task

ENVELOPE_OVERHEAD = 256


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def assemble(pieces: list, like: Any) -> Any:
    """Concatenate shards in agent order, preserving strings."""
    if isinstance(like, str):
        return "".join(pieces)
    return [x for piece in pieces for x in piece]


class Channel:
    def __init__(self, obs: Observation):
        self.me = obs.agent_id
        self.n = obs.n_agents
        self.protocol = obs.protocol
        self.chunk = max(16, obs.max_message_chars - ENVELOPE_OVERHEAD)
        self.outbox: deque = deque()
        self._parts: dict[tuple[int, int], dict[int, str]] = {}
        self._unread_paths: deque = deque()
        self._seen_paths: set[str] = set()
        self._seq = 0
        self.known: set[int] = {self.me}

    # --- sending ----------------------------------------------------------- #

    def post(self, to: int | None, tag: str, payload: Any) -> None:
        """Queue ``payload`` for ``to`` (or everyone when None)."""
        if self.n == 1:
            return
        text = _dumps(payload)
        pieces = [text[i : i + self.chunk] for i in range(0, len(text), self.chunk)] or [""]
        meta = {"provenance": sorted(self.known)}
        msg_id = self._seq
        self._seq += 1
        for part, piece in enumerate(pieces):
            env = _dumps({"from": self.me, "to": to, "tag": tag, "id": msg_id, "part": part, "parts": len(pieces), "data": piece,
                          "prov": meta["provenance"]})
            if self.protocol is Protocol.P2P:
                targets = [to] if to is not None else [j for j in range(self.n) if j != self.me]
                self.outbox.extend(("send", j, env, meta) for j in targets)
            elif self.protocol is Protocol.BP:
                self.outbox.append(("broadcast", env, meta))
            else:
                where = f"/to/{to}" if to is not None else "/pub"
                self.outbox.append(("write", f"{where}/{tag}/{self.me}/{msg_id}.{part}", env, meta))

    def flush(self, ctl: Controller) -> bool:
        """Issue queued effects while budget lasts; True once the outbox is empty."""
        while self.outbox and ctl.remaining > 0:
            item = self.outbox[0]
            if item[0] == "send":
                ctl.send(item[1], item[2], meta=item[3])
            elif item[0] == "broadcast":
                ctl.broadcast(item[1], meta=item[2])
            else:
                ctl.write_file(item[1], item[2], meta=item[3])
            self.outbox.popleft()
        return not self.outbox

    # --- receiving --------------------------------------------------------- #

    def _accept(self, content: str) -> tuple | None:
        env = json.loads(content)
        if env["from"] == self.me or env["to"] not in (None, self.me):
            return None
        key = (env["from"], env["id"])
        parts = self._parts.setdefault(key, {})
        parts[env["part"]] = env["data"]
        if len(parts) < env["parts"]:
            return None
        del self._parts[key]
        self.known.update(env.get("prov", [env["from"]]))
        return env["from"], env["tag"], json.loads("".join(parts[i] for i in range(env["parts"])))

    def collect(self, obs: Observation, ctl: Controller) -> list[tuple[int, str, Any]]:
        """Fetch whatever is newly visible; returns complete (sender, tag, payload) triples."""
        out = []
        if self.protocol is Protocol.SFS:
            if not self._unread_paths and ctl.remaining > 0:
                mine = f"/to/{self.me}/"
                for path in ctl.list_files("/"):
                    if path in self._seen_paths or not (path.startswith(mine) or path.startswith("/pub/")):
                        continue
                    if path.split("/")[-2] == str(self.me):
                        continue
                    self._seen_paths.add(path)
                    self._unread_paths.append(path)
            while self._unread_paths and ctl.remaining > 0:
                content = ctl.read_file(self._unread_paths[0])
                self._unread_paths.popleft()
                got = self._accept(content)
                if got is not None:
                    out.append(got)
        elif obs.pending_messages and ctl.remaining > 0:
            for msg in ctl.receive():
                got = self._accept(msg.content)
                if got is not None:
                    out.append(got)
        return out


class ScriptedPolicy:
    """Base: flush, collect if waiting, react, flush, submit when ready, wait."""

    kind = "scripted"

    def __init__(self) -> None:
        self.channel: Channel | None = None
        self.answer: Any = None
        self.has_answer = False

    def needs_input(self) -> bool:
        return not self.has_answer

    def on_message(self, sender: int, tag: str, payload: Any) -> None:
        pass

    def progress(self, obs: Observation) -> None:
        """Advance local computation; may post messages or set the answer."""

    def set_answer(self, value: Any) -> None:
        self.answer = value
        self.has_answer = True

    def act(self, obs: Observation, ctl: Controller) -> None:
        if self.channel is None:
            self.channel = Channel(obs)
        ch = self.channel
        ch.flush(ctl)
        self.progress(obs)
        if self.needs_input():
            for sender, tag, payload in ch.collect(obs, ctl):
                self.on_message(sender, tag, payload)
            self.progress(obs)
        if ch.flush(ctl) and self.has_answer and ctl.remaining > 0:
            ctl.submit(self.answer)
        if ctl.remaining > 0:
            ctl.wait()


class StarPolicy(ScriptedPolicy):
    """Level I: peers send partials to the hub, which combines and disseminates."""

    def __init__(self, adapter: TaskAdapter, hub: int = 0, transform: Callable[[Any], Any] | None = None,
                 hub_submits: Any = None):
        super().__init__()
        if not adapter.phases:
            raise ValueError(f"{adapter.task_id} has no aggregation phases")
        self.adapter = adapter
        self.hub = hub
        self.transform = transform
        self.hub_submits = hub_submits
        self.phase = 0
        self.prev: Any = None
        self.posted = -1
        self.partials: dict[int, dict[int, Any]] = {}

    def on_message(self, sender, tag, payload):
        kind, _, index = tag.partition(":")
        if kind == "partial":
            self.partials.setdefault(int(index), {})[sender] = payload
        elif kind == "global" and int(index) == self.phase:
            self.prev = payload
            self.phase += 1
        elif kind == "answer":
            self.set_answer(payload)

    def progress(self, obs):
        phases = self.adapter.phases
        me = obs.agent_id
        if self.has_answer:
            return
        if me != self.hub:
            if self.posted < self.phase < len(phases):
                self.channel.post(self.hub, f"partial:{self.phase}", phases[self.phase].local(obs.shard, self.prev))
                self.posted = self.phase
            return
        while not self.has_answer:
            got = self.partials.get(self.phase, {})
            if len(got) < obs.n_agents - 1:
                return
            phase = phases[self.phase]
            ordered = [phase.local(obs.shard, self.prev) if a == me else got[a] for a in range(obs.n_agents)]
            self.prev = phase.finish(reduce(phase.combine, ordered), self.prev)
            self.phase += 1
            if self.phase < len(phases):
                self.channel.post(None, f"global:{self.phase - 1}", self.prev)
                continue
            result = self.transform(self.prev) if self.transform else self.prev
            self.channel.post(None, "answer", result)
            self.set_answer(result if self.hub_submits is None else self.hub_submits)


class ChainPolicy(ScriptedPolicy):
    """Level II: forward (and backward) carries along the agent chain."""

    def __init__(self, adapter: TaskAdapter):
        super().__init__()
        if adapter.scan is None:
            raise ValueError(f"{adapter.task_id} has no scan decomposition")
        self.spec = adapter.scan
        self.fwd_in: Any = None
        self.bwd_in: Any = None
        self.have_fwd = self.have_bwd = False
        self.fwd_out: Any = None
        self.bwd_out: Any = None
        self.fwd_done = self.bwd_done = False

    def on_message(self, sender, tag, payload):
        if tag == "fwd":
            self.fwd_in, self.have_fwd = payload, True
        elif tag == "bwd":
            self.bwd_in, self.have_bwd = payload, True
        elif tag == "answer":
            self.set_answer(payload)

    def progress(self, obs):
        spec, me, n = self.spec, obs.agent_id, obs.n_agents
        if me == 0 and not self.have_fwd:
            self.fwd_in, self.have_fwd = spec.init, True
        if spec.mode == "double" and me == n - 1 and not self.have_bwd:
            self.bwd_in, self.have_bwd = spec.reverse_init, True
        if self.have_fwd and not self.fwd_done:
            self.fwd_out, carry = spec.step(self.fwd_in, obs.shard)
            self.fwd_done = True
            if me < n - 1:
                self.channel.post(me + 1, "fwd", carry)
            elif spec.mode == "scalar":
                result = spec.finish(carry)
                self.channel.post(None, "answer", result)
                self.set_answer(result)
        if spec.mode == "double" and self.have_bwd and not self.bwd_done:
            self.bwd_out, carry = spec.reverse_step(self.bwd_in, obs.shard)
            self.bwd_done = True
            if me > 0:
                self.channel.post(me - 1, "bwd", carry)
        if self.has_answer:
            return
        if spec.mode == "single" and self.fwd_done:
            self.set_answer(self.fwd_out)
        elif spec.mode == "double" and self.fwd_done and self.bwd_done:
            self.set_answer(spec.merge(obs.shard, self.fwd_out, self.bwd_out))


class AllGatherPolicy(ScriptedPolicy):
    """Level III: everyone sends its shard to everyone and solves locally."""

    def __init__(self, adapter: TaskAdapter):
        super().__init__()
        self.adapter = adapter
        self.shards: dict[int, Any] = {}
        self.posted = False

    def on_message(self, sender, tag, payload):
        if tag == "shard":
            self.shards[sender] = payload

    def progress(self, obs):
        if not self.posted:
            self.shards[obs.agent_id] = obs.shard
            if obs.n_agents > 1:
                self.channel.post(None, "shard", obs.shard)
            self.posted = True
        if not self.has_answer and len(self.shards) == obs.n_agents:
            pieces = [self.shards[a] for a in range(obs.n_agents)]
            self.set_answer(self.adapter.global_solve(assemble(pieces, obs.shard)))


class OraclePolicy(ScriptedPolicy):
    """Solves whatever it holds directly; correct exactly when N = 1."""

    def __init__(self, adapter: TaskAdapter):
        super().__init__()
        self.adapter = adapter

    def progress(self, obs):
        if not self.has_answer:
            try:
                self.set_answer(self.adapter.global_solve(obs.shard))
            except Exception:
                self.set_answer(None)


class PrematurePolicy(OraclePolicy):
    """Submits the oracle of its local shard in round 1 without communicating."""


class NullPolicy:
    kind = "null"

    def act(self, obs: Observation, ctl: Controller) -> None:
        ctl.wait()


def optimal_for(adapter: TaskAdapter) -> Callable[[], ScriptedPolicy]:
    level = adapter.level.value
    if level == "I":
        return lambda: StarPolicy(adapter)
    if level == "II":
        return lambda: ChainPolicy(adapter)
    return lambda: AllGatherPolicy(adapter)


def scripted_factory(name: str, instance: TaskInstance, **options: Any) -> PolicyFactory:
    """Policy factory for ``scripted:<name>`` models.

    Names: optimal, star, chain, allgather, oracle, premature, null,
    split (option ``wrong_value``) and miscompute (option ``delta``).
    """
    adapter = adapter_for(instance.task_id, instance.params)
    if name == "optimal":
        make = optimal_for(adapter)
        return lambda agent: make()
    if name == "star":
        return lambda agent: StarPolicy(adapter)
    if name == "chain":
        return lambda agent: ChainPolicy(adapter)
    if name == "allgather":
        return lambda agent: AllGatherPolicy(adapter)
    if name == "oracle":
        return lambda agent: OraclePolicy(adapter)
    if name == "premature":
        return lambda agent: PrematurePolicy(adapter)
    if name == "null":
        return lambda agent: NullPolicy()
    if name == "split":
        if "wrong_value" not in options:
            raise ValueError("split policy needs wrong_value")
        wrong = options["wrong_value"]
        return lambda agent: StarPolicy(adapter, hub_submits=wrong)
    if name == "miscompute":
        delta = options.get("delta", 1)
        shape = get_task(instance.task_id).answer_shape
        if shape not in ("int", "real"):
            raise ValueError("miscompute policy needs a numeric answer")
        return lambda agent: StarPolicy(adapter, transform=lambda v: v + delta)
    raise ValueError(f"unknown scripted policy {name!r}")
