"""Structured-output parsing shared by all agents.

Every agent reply must carry exactly one machine-readable JSON payload,
either as a fenced code block or as a bare JSON object; prose around the
block is ignored. Parsing failures trigger a bounded repair conversation:
one re-prompt quoting the error, then one "emit only the block" retry.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Callable

from ..gateway import ChatMessage, ChatRequest, Gateway, GenerationParams

AGENT_NAMES = ("detector", "extractor", "judge", "translator", "consis")

MAX_REPAIR_ATTEMPTS = 2

_FENCE_RE = re.compile(r"```[A-Za-z0-9_-]*[ \t]*\n(.*?)\n?```", re.DOTALL)

_REPAIR_PROMPT = (
    "The previous reply could not be used: {error}. Reply again with exactly "
    "one fenced ```json code block matching the required shape."
)
_STRICT_REPAIR_PROMPT = (
    "Emit only the fenced ```json code block with the required fields. "
    "No prose, no additional blocks."
)


class AgentError(Exception):
    """Base class for agent failures."""


class AgentParseError(AgentError):
    """No usable payload after the repair budget was spent."""

    def __init__(self, agent: str, attempts: int, last_error: str, raw_text: str):
        super().__init__(
            f"{agent} reply unparsable after {attempts} repair attempt(s): {last_error}")
        self.agent = agent
        self.attempts = attempts
        self.last_error = last_error
        self.raw_text = raw_text


@dataclass
class AgentOutputEnvelope:
    agent: str
    raw_text: str
    parsed: Any
    repair_attempts: int


def extract_payload(text: str) -> dict:
    """The single JSON object payload of a reply.

    Raises ``ValueError`` when the reply carries zero or more than one
    well-formed payload block.
    """
    candidates = []
    for block in _FENCE_RE.findall(text):
        try:
            parsed = json.loads(block)
        except json.JSONDecodeError:
            continue
        if isinstance(parsed, dict):
            candidates.append(parsed)
    if len(candidates) > 1:
        raise ValueError(f"reply contains {len(candidates)} payload blocks, expected one")
    if candidates:
        return candidates[0]
    # No usable fenced block: accept a reply that is itself the JSON object.
    try:
        parsed = json.loads(text.strip())
    except json.JSONDecodeError:
        raise ValueError("reply contains no well-formed JSON payload block") from None
    if not isinstance(parsed, dict):
        raise ValueError("payload must be a JSON object")
    return parsed


def chat_structured(gateway: Gateway, backend_id: str, prompt: str, agent: str,
                    validate: Callable[[dict], Any], transcript=None,
                    params: GenerationParams | None = None) -> AgentOutputEnvelope:
    """Run one agent call with bounded repair.

    ``validate`` turns the raw payload dict into the agent-specific value and
    raises ``ValueError`` on schema violations; a violation counts as a parse
    failure and consumes a repair attempt.
    """
    messages = [ChatMessage("user", prompt)]
    raw_text = ""
    last_error = "no attempt made"
    for attempt in range(MAX_REPAIR_ATTEMPTS + 1):
        request = ChatRequest(backend_id, tuple(messages), params or GenerationParams())
        exchange = gateway.complete(request)
        if transcript is not None:
            transcript.add_exchange(exchange)
        raw_text = exchange.response_text
        try:
            payload = extract_payload(raw_text)
            parsed = validate(payload)
        except ValueError as err:
            last_error = str(err)
            if attempt < MAX_REPAIR_ATTEMPTS:
                messages.append(ChatMessage("assistant", raw_text))
                repair = (_REPAIR_PROMPT.format(error=last_error)
                          if attempt == 0 else _STRICT_REPAIR_PROMPT)
                messages.append(ChatMessage("user", repair))
            continue
        return AgentOutputEnvelope(agent, raw_text, parsed, attempt)
    raise AgentParseError(agent, MAX_REPAIR_ATTEMPTS, last_error, raw_text)


def require_str(payload: dict, key: str, allow_empty: bool = False) -> str:
    value = payload.get(key)
    if not isinstance(value, str):
        raise ValueError(f"field {key!r} must be a string")
    if not allow_empty and not value.strip():
        raise ValueError(f"field {key!r} must be non-empty")
    return value


def require_list(payload: dict, key: str) -> list:
    value = payload.get(key)
    if not isinstance(value, list):
        raise ValueError(f"field {key!r} must be an array")
    return value
