"""Chat-completion agents: prompts, action parsing, HTTP client and policy adapter."""

from .client import AuthError, ChatClient, ChatEndpointConfig, ChatError, RetriesExhausted
from .parsing import ParsedAction, parse_actions
from .policy import ChatPolicy, RollingContext, chat_factory
from .prompts import AgentPrompt, build_prompt

__all__ = [
    "AgentPrompt",
    "AuthError",
    "ChatClient",
    "ChatEndpointConfig",
    "ChatError",
    "ChatPolicy",
    "ParsedAction",
    "RetriesExhausted",
    "RollingContext",
    "build_prompt",
    "chat_factory",
    "parse_actions",
]
