"""Chat-model agents behind the scripted-policy interface."""

from __future__ import annotations

from ..core import RunConfig, TaskInstance
from ..runtime import BudgetExhausted, Controller, FatalPolicyError, InvalidAction, Observation, PolicyFactory
from .client import AuthError, ChatClient, ChatError
from .parsing import ParsedAction, parse_actions
from .prompts import AgentPrompt, action_names, build_prompt

CONTEXT_CAP = 32768
TRUNCATION_NOTE = "[earlier rounds omitted]"


class RollingContext:
    """Per-agent history of (model reply, feedback) turns, capped in characters.

    The oldest turns are dropped first once the total exceeds ``cap``.
    """

    def __init__(self, cap: int = CONTEXT_CAP):
        self.cap = cap
        self.turns: list[tuple[str, str]] = []
        self.dropped = 0

    def add(self, user: str, assistant: str) -> None:
        self.turns.append((user, assistant))
        while len(self.turns) > 1 and self.size() > self.cap:
            self.turns.pop(0)
            self.dropped += 1
        if self.size() > self.cap:
            user, assistant = self.turns[0]
            self.turns[0] = (user[-(self.cap // 2):], assistant[-(self.cap // 2):])

    def size(self) -> int:
        return sum(len(u) + len(a) for u, a in self.turns)

    def messages(self) -> list[dict]:
        out = []
        if self.dropped:
            out.append({"role": "user", "content": TRUNCATION_NOTE})
        for user, assistant in self.turns:
            out.append({"role": "user", "content": user})
            out.append({"role": "assistant", "content": assistant})
        return out


class ChatPolicy:
    """One model call per activation; the reply's actions are executed in order."""

    kind = "llm"
    reports_tokens = True

    def __init__(self, client: ChatClient, prompt: AgentPrompt, context_cap: int = CONTEXT_CAP):
        self.client = client
        self.prompt = prompt
        self.context = RollingContext(context_cap)
        self.feedback: list[str] = []

    def _round_text(self, obs: Observation) -> str:
        lines = [f"Round {obs.round}."]
        if self.feedback:
            lines.append("Results of your previous actions:")
            lines.extend(f"- {f}" for f in self.feedback)
        if obs.pending_messages:
            lines.append(f"You have {obs.pending_messages} unread message(s).")
        if "protocol_reminder" in obs.scaffold:
            lines.append(self.prompt.round_reminder())
        lines.append("What are your actions for this round?")
        return "\n".join(lines)

    def act(self, obs: Observation, ctl: Controller) -> None:
        user = self._round_text(obs)
        self.feedback = []
        messages = [{"role": "system", "content": self.prompt.system}, *self.context.messages(), {"role": "user", "content": user}]
        try:
            text, tokens = self.client.invoke(messages)
        except AuthError as exc:
            raise FatalPolicyError(str(exc)) from exc
        except ChatError as exc:
            ctl.note_fault({"kind": "endpoint", "error": str(exc)})
            self.context.add(user, "")
            self.feedback.append(f"your model call failed this round ({exc}); no actions were taken")
            ctl.wait()
            return
        ctl.charge(tokens)
        self.context.add(user, text)
        actions = parse_actions(text)
        if not actions:
            ctl.wait()
            return
        allowed = set(action_names(obs.protocol))
        for act in actions:
            if act.error is not None:
                self.feedback.append(f"{act.name}: {act.error}")
                continue
            if act.name not in allowed:
                self.feedback.append(f"{act.name} is not available in this protocol")
                continue
            try:
                self._execute(act, ctl)
            except InvalidAction as exc:
                self.feedback.append(f"{act.name} failed: {exc}")
            except BudgetExhausted:
                self.feedback.append("action budget exhausted; remaining actions were dropped")
                raise
        ctl.finish()

    def _execute(self, act: ParsedAction, ctl: Controller) -> None:
        a = act.args
        if act.name == "send_message":
            ctl.send(a["target_id"], a["content"])
            self.feedback.append(f"sent message to agent {a['target_id']}")
        elif act.name == "broadcast_message":
            ctl.broadcast(a["content"])
            self.feedback.append("broadcast sent")
        elif act.name == "receive_messages":
            msgs = ctl.receive()
            if not msgs:
                self.feedback.append("receive_messages: no new messages")
            for m in msgs:
                self.feedback.append(f"message from agent {m.sender}: {m.content}")
        elif act.name == "list_agents":
            self.feedback.append(f"other agents: {ctl.list_agents()}")
        elif act.name == "list_files":
            self.feedback.append(f"files: {ctl.list_files(a.get('prefix') or '/')}")
        elif act.name == "read_file":
            self.feedback.append(f"{a['path']}: {ctl.read_file(a['path'])}")
        elif act.name == "write_file":
            ctl.write_file(a["path"], a["content"])
            self.feedback.append(f"wrote {a['path']}")
        elif act.name == "delete_file":
            ctl.delete_file(a["path"])
            self.feedback.append(f"deleted {a['path']}")
        elif act.name == "wait":
            ctl.wait()
        elif act.name == "submit_result":
            ctl.submit(a["answer"])


def chat_factory(client: ChatClient, instance: TaskInstance, config: RunConfig, context_cap: int = CONTEXT_CAP) -> PolicyFactory:
    return lambda agent: ChatPolicy(client, build_prompt(instance, config, agent), context_cap)
