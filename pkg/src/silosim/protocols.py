"""Communication substrates: point-to-point mailboxes, a broadcast log and a shared file store.

All three follow the same discipline. Effects issued during round r are
staged and only committed once the round's activations are over, so other
agents observe them from round r+1. Logical time is the action key
``(round, agent_id, action_index)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

Key = tuple[int, int, int]
DEFAULT_MAX_CHARS = 8192


class ProtocolError(ValueError):
    """An action the substrate refuses; the runtime logs it as ``invalid``."""


@dataclass(frozen=True)
class Message:
    sender: int
    recipient: int | None  # None for broadcasts
    content: str
    sent_at: Key
    meta: dict | None = None


@dataclass(frozen=True)
class FileEntry:
    content: str
    creator: int
    created_at: Key
    last_writer: int
    modified_at: Key
    meta: dict | None = None


@dataclass(frozen=True)
class FileRead:
    path: str
    content: str
    writer: int
    version: Key
    meta: dict | None = None


_DELETED = object()


def _check_content(content: Any, limit: int) -> str:
    if not isinstance(content, str):
        raise ProtocolError("content must be a string")
    if len(content) > limit:
        raise ProtocolError(f"content too long ({len(content)} > {limit} chars)")
    return content


class _Substrate:
    def __init__(self, n_agents: int, max_chars: int = DEFAULT_MAX_CHARS):
        if n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        self.n_agents = n_agents
        self.max_chars = max_chars
        self.submitted: set[int] = set()

    def _check_active(self, agent: int) -> None:
        if agent in self.submitted:
            raise ProtocolError(f"agent {agent} already submitted")

    def mark_submitted(self, agent: int) -> None:
        self.submitted.add(agent)


class P2PNetwork(_Substrate):
    """Directed mailboxes with per-(sender, recipient) FIFO delivery."""

    def __init__(self, n_agents: int, max_chars: int = DEFAULT_MAX_CHARS):
        super().__init__(n_agents, max_chars)
        self._inbox: list[list[Message]] = [[] for _ in range(n_agents)]
        self._cursor = [0] * n_agents

    def stage_send(self, sender: int, recipient: Any, content: Any, at: Key, meta: dict | None = None) -> Message:
        self._check_active(sender)
        if isinstance(recipient, bool) or not isinstance(recipient, int) or not 0 <= recipient < self.n_agents:
            raise ProtocolError(f"invalid recipient {recipient!r}")
        if recipient == sender:
            raise ProtocolError("self-send is not allowed")
        return Message(sender, recipient, _check_content(content, self.max_chars), at, meta)

    def commit(self, message: Message) -> None:
        self._inbox[message.recipient].append(message)

    def pending(self, agent: int) -> int:
        return len(self._inbox[agent]) - self._cursor[agent]

    def receive(self, agent: int) -> list[Message]:
        """Every committed, unread message for ``agent``; marks them read."""
        box = self._inbox[agent]
        new = box[self._cursor[agent]:]
        self._cursor[agent] = len(box)
        return new


class BroadcastLog(_Substrate):
    """One shared chronologically ordered log; each entry reaches every other agent."""

    def __init__(self, n_agents: int, max_chars: int = DEFAULT_MAX_CHARS):
        super().__init__(n_agents, max_chars)
        self._entries: list[Message] = []
        self._cursor = [0] * n_agents

    def stage_broadcast(self, sender: int, content: Any, at: Key, meta: dict | None = None) -> Message:
        self._check_active(sender)
        return Message(sender, None, _check_content(content, self.max_chars), at, meta)

    def commit(self, message: Message) -> None:
        if self._entries and self._entries[-1].sent_at >= message.sent_at:
            raise ValueError("broadcasts must be committed in logical-time order")
        self._entries.append(message)

    def compiled_view(self) -> list[Message]:
        return list(self._entries)

    def pending(self, agent: int) -> int:
        return sum(1 for m in self._entries[self._cursor[agent]:] if m.sender != agent)

    def receive(self, agent: int) -> list[Message]:
        new = [m for m in self._entries[self._cursor[agent]:] if m.sender != agent]
        self._cursor[agent] = len(self._entries)
        return new


@dataclass
class _StagedOp:
    path: str
    content: Any  # str, or _DELETED
    at: Key
    meta: dict | None = None


@dataclass
class _Overlay:
    ops: list[_StagedOp] = field(default_factory=list)
    view: dict[str, Any] = field(default_factory=dict)  # path -> _StagedOp


class SharedFileStore(_Substrate):
    """Path-keyed store with last-writer-wins commits.

    A writer sees its own staged writes at once; everybody else sees the
    committed state as of the end of the previous round.
    """

    def __init__(self, n_agents: int, max_chars: int = DEFAULT_MAX_CHARS):
        super().__init__(n_agents, max_chars)
        self.files: dict[str, FileEntry] = {}
        self._overlay = [_Overlay() for _ in range(n_agents)]

    @staticmethod
    def _check_path(path: Any) -> str:
        if not isinstance(path, str) or not path.startswith("/") or path.endswith("/") or "//" in path:
            raise ProtocolError(f"invalid path {path!r}")
        return path

    def _visible(self, agent: int) -> dict[str, Any]:
        view: dict[str, Any] = dict(self.files)
        for path, op in self._overlay[agent].view.items():
            if op.content is _DELETED:
                view.pop(path, None)
            else:
                view[path] = op
        return view

    def list(self, agent: int, prefix: str = "/") -> list[str]:
        return sorted(p for p in self._visible(agent) if p.startswith(prefix))

    def read(self, agent: int, path: Any) -> FileRead:
        path = self._check_path(path)
        entry = self._visible(agent).get(path)
        if entry is None:
            raise ProtocolError(f"no such file {path}")
        if isinstance(entry, _StagedOp):
            return FileRead(path, entry.content, agent, entry.at, entry.meta)
        return FileRead(path, entry.content, entry.last_writer, entry.modified_at, entry.meta)

    def stage_write(self, agent: int, path: Any, content: Any, at: Key, meta: dict | None = None) -> None:
        self._check_active(agent)
        path = self._check_path(path)
        op = _StagedOp(path, _check_content(content, self.max_chars), at, meta)
        self._overlay[agent].ops.append(op)
        self._overlay[agent].view[path] = op

    def stage_delete(self, agent: int, path: Any, at: Key) -> None:
        self._check_active(agent)
        path = self._check_path(path)
        if path not in self._visible(agent):
            raise ProtocolError(f"no such file {path}")
        op = _StagedOp(path, _DELETED, at)
        self._overlay[agent].ops.append(op)
        self._overlay[agent].view[path] = op

    def commit_round(self) -> None:
        """Apply every staged op in ascending (agent_id, action_index) order."""
        ops = sorted((op.at, agent, op) for agent, ov in enumerate(self._overlay) for op in ov.ops)
        for at, agent, op in ops:
            if op.content is _DELETED:
                self.files.pop(op.path, None)
                continue
            old = self.files.get(op.path)
            self.files[op.path] = FileEntry(
                content=op.content,
                creator=old.creator if old else agent,
                created_at=old.created_at if old else at,
                last_writer=agent,
                modified_at=at,
                meta=op.meta,
            )
        self._overlay = [_Overlay() for _ in range(self.n_agents)]


def make_substrate(protocol: str, n_agents: int, max_chars: int = DEFAULT_MAX_CHARS) -> _Substrate:
    kinds = {"P2P": P2PNetwork, "BP": BroadcastLog, "SFS": SharedFileStore}
    try:
        return kinds[getattr(protocol, "value", protocol)](n_agents, max_chars)
    except KeyError:
        raise ValueError(f"unknown protocol {protocol!r}") from None
