"""Turn model output text into protocol actions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

# action name -> {argument: required?}
SIGNATURES: dict[str, dict[str, bool]] = {
    "send_message": {"target_id": True, "content": True},
    "receive_messages": {},
    "broadcast_message": {"content": True},
    "list_agents": {},
    "list_files": {"prefix": False},
    "read_file": {"path": True},
    "write_file": {"path": True, "content": True},
    "delete_file": {"path": True},
    "wait": {},
    "submit_result": {"answer": True},
}


@dataclass(frozen=True)
class ParsedAction:
    name: str
    args: dict = field(default_factory=dict)
    error: str | None = None  # set when the object was recognised but its arguments are unusable


def _objects(text: str) -> list[Any]:
    decoder = json.JSONDecoder()
    found, i = [], 0
    while True:
        start = min((p for p in (text.find("{", i), text.find("[", i)) if p >= 0), default=-1)
        if start < 0:
            return found
        try:
            obj, end = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            i = start + 1
            continue
        found.append(obj)
        i = end


def _flatten(obj: Any) -> list[dict]:
    if isinstance(obj, dict):
        return [obj] if "action" in obj else []
    if isinstance(obj, list):
        return [x for item in obj for x in _flatten(item)]
    return []


def _check(obj: dict) -> ParsedAction | None:
    name = obj.get("action")
    if not isinstance(name, str):
        return None
    name = name.strip().removesuffix("()")
    if name not in SIGNATURES:
        return ParsedAction(name, {}, f"unknown action {name!r}")
    sig = SIGNATURES[name]
    args = obj.get("args") if isinstance(obj.get("args"), dict) else {k: v for k, v in obj.items() if k != "action"}
    missing = [a for a, required in sig.items() if required and a not in args]
    if missing:
        return ParsedAction(name, args, f"{name} is missing {', '.join(missing)}")
    args = {k: v for k, v in args.items() if k in sig}
    if name == "send_message":
        target = args["target_id"]
        if isinstance(target, str) and target.strip().lstrip("-").isdigit():
            args["target_id"] = int(target)
        elif isinstance(target, bool) or not isinstance(target, int):
            return ParsedAction(name, args, f"target_id must be an integer, got {target!r}")
    for text_arg in ("content", "path", "prefix"):
        if text_arg in args and not isinstance(args[text_arg], str):
            if text_arg == "content":
                args[text_arg] = json.dumps(args[text_arg])
            else:
                return ParsedAction(name, args, f"{text_arg} must be a string")
    return ParsedAction(name, args)


def parse_actions(output: str) -> list[ParsedAction]:
    """Every action object in ``output``, in order; an empty list means "wait"."""
    actions = []
    for obj in _objects(output or ""):
        for item in _flatten(obj):
            parsed = _check(item)
            if parsed is not None:
                actions.append(parsed)
    return actions
