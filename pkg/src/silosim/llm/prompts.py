"""Agent prompt construction."""

from __future__ import annotations

import json
from dataclasses import dataclass

from ..core import Protocol, RunConfig, TaskInstance
from ..taskgen import get as get_task

ACTIONS = {
    Protocol.P2P: (
        "send_message(target_id, content): deliver a text message to one agent",
        "receive_messages(): fetch every message delivered to you so far and not yet read",
        "wait(): end your turn for this round",
    ),
    Protocol.BP: (
        "broadcast_message(content): send a text message to every other agent",
        "receive_messages(): fetch all broadcasts from other agents you have not read yet",
        "list_agents(): get the ids of the other agents",
        "wait(): end your turn for this round",
    ),
    Protocol.SFS: (
        "list_files(prefix): list the paths in the shared store that start with prefix",
        "read_file(path): read one file from the shared store",
        "write_file(path, content): create or overwrite a file in the shared store",
        "delete_file(path): remove a file from the shared store",
        "wait(): end your turn for this round",
    ),
}
SUBMIT_ACTION = "submit_result(answer): submit your final answer when confident"

PROTOCOLS = {
    Protocol.P2P: (
        "Point-to-point messaging. Every agent has a private inbox. Messages you send this "
        "round arrive in the recipient's inbox at the start of the next round; messages from "
        "one sender to one recipient keep their order."
    ),
    Protocol.BP: (
        "Broadcast messaging. Every message you broadcast reaches all other agents at the "
        "start of the next round, and you see the others' broadcasts in time order."
    ),
    Protocol.SFS: (
        "Shared file store. All agents read and write one common set of paths. You see your "
        "own writes immediately; other agents see them from the next round on. When several "
        "agents write the same path in one round, the last committed write wins."
    ),
}

SCAFFOLD_TEXT = {
    "planning_round": (
        "Before exchanging any data, spend the first round agreeing with the other agents on "
        "a strategy: who sends what to whom, and how you will confirm the final answer."
    ),
    "protocol_reminder": "Reminder of the actions you can take this round: {actions}.",
    "scratchpad_hint": (
        "It may help to keep intermediate results in one place that every agent can consult."
    ),
}

ACTION_FORMAT = (
    "Reply with one JSON object per action, for example "
    '{"action": "wait"} or {"action": "submit_result", "answer": 42}. '
    "Arguments use the parameter names listed above. You may take up to {budget} actions "
    "per round; they run in order, and wait or submit_result ends your turn."
)

OPENING = "You are Agent {agent_id} in a multi-agent system consisting of {n} agents (IDs range from 0 to {last})."
GOAL = (
    "Work with the other agents to obtain the globally correct answer. "
    "No single agent has sufficient information to solve this task independently. "
    "Once you know the answer, submit it with submit_result()."
)


@dataclass(frozen=True)
class AgentPrompt:
    agent_id: int
    system: str
    actions: tuple[str, ...]

    def round_reminder(self) -> str:
        return SCAFFOLD_TEXT["protocol_reminder"].format(actions="; ".join(self.actions))


def action_names(protocol: Protocol) -> list[str]:
    return [line.split("(")[0] for line in ACTIONS[protocol]] + ["submit_result"]


def build_prompt(instance: TaskInstance, config: RunConfig, agent_id: int) -> AgentPrompt:
    if not 0 <= agent_id < config.n_agents:
        raise ValueError(f"agent_id {agent_id} outside 0..{config.n_agents - 1}")
    task = get_task(instance.task_id)
    actions = ACTIONS[config.protocol] + (SUBMIT_ACTION,)
    sections = [
        OPENING.format(agent_id=agent_id, n=config.n_agents, last=config.n_agents - 1),
        "Task Description:\n" + task.describe(instance.params),
        "Your Local Data:\n" + json.dumps(instance.shards[agent_id]),
        "Communication Protocol:\n" + PROTOCOLS[config.protocol],
        "Available Actions:\n" + "\n".join(f"- {a}" for a in actions),
        ACTION_FORMAT.replace("{budget}", str(config.action_budget)),
        GOAL,
    ]
    if "planning_round" in config.scaffold:
        sections.append(SCAFFOLD_TEXT["planning_round"])
    if "scratchpad_hint" in config.scaffold:
        sections.append(SCAFFOLD_TEXT["scratchpad_hint"])
    return AgentPrompt(agent_id, "\n\n".join(sections), actions)
