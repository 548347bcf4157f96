"""LLM-judged translation quality score (CONSIS): holistic 0-100 grading
with emphasis on how accurately and consistently the flagged terms are
rendered."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from ..gateway import Gateway
from . import prompts
from .schema import chat_structured, require_str

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConsisFinding:
    surface: str
    judged_consistent: bool
    note: str = ""


@dataclass(frozen=True)
class ConsisResult:
    score: float
    term_findings: tuple[ConsisFinding, ...] = ()


def _validate(payload: dict) -> tuple[float, tuple[ConsisFinding, ...]]:
    score = payload.get("score")
    if isinstance(score, bool) or not isinstance(score, (int, float)):
        raise ValueError("field 'score' must be a number")
    findings = []
    for item in payload.get("term_findings", []):
        if not isinstance(item, dict):
            raise ValueError("each term_findings entry must be an object")
        surface = require_str(item, "surface")
        consistent = item.get("consistent")
        if not isinstance(consistent, bool):
            raise ValueError("field 'consistent' must be a boolean")
        note = item.get("note", "")
        if not isinstance(note, str):
            raise ValueError("field 'note' must be a string")
        findings.append(ConsisFinding(surface, consistent, note))
    return float(score), tuple(findings)


def _surface(term) -> str:
    return term if isinstance(term, str) else term.surface


def consis_evaluate(source_text: str, candidate_translation: str, terms: Sequence,
                    lang_pair: tuple[str, str], backend_id: str, gateway: Gateway,
                    transcript=None) -> ConsisResult:
    """Grade a translation; the score is clamped to [0, 100].

    ``terms`` may hold term candidates, graph nodes, or plain surface
    strings. Unusable replies raise ``AgentParseError`` -- there is no
    silent default score.
    """
    surfaces = [_surface(t) for t in terms]
    source_lang, target_lang = lang_pair
    prompt = prompts.render(
        "consis",
        source_lang=prompts.lang_name(source_lang),
        target_lang=prompts.lang_name(target_lang),
        term_list=", ".join(surfaces) if surfaces else "(none)",
        source_text=source_text,
        candidate_translation=candidate_translation,
    )
    envelope = chat_structured(gateway, backend_id, prompt, "consis",
                               _validate, transcript)
    score, findings = envelope.parsed
    if not 0.0 <= score <= 100.0:
        clamped = min(100.0, max(0.0, score))
        message = f"consis: score {score} outside [0, 100], clamped to {clamped}"
        if transcript is not None:
            transcript.warn(message)
        log.warning("%s", message)
        score = clamped
    return ConsisResult(score, findings)
