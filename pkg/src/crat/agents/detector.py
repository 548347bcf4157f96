"""Unknown-term detection: prompt the model for risky terms, then anchor
every reported surface in the source text."""

from __future__ import annotations

import logging

from ..gateway import Gateway
from ..transkg import TERM_CATEGORIES, TermCandidate
from . import prompts
from .schema import chat_structured, require_list, require_str

log = logging.getLogger(__name__)


def _normalize_category(raw: str) -> str:
    category = raw.strip().lower().replace(" ", "_").replace("-", "_")
    if category not in TERM_CATEGORIES:
        raise ValueError(f"unknown term category: {raw!r}")
    return category


def _validate(payload: dict) -> list[tuple[str, str, str]]:
    terms = []
    for item in require_list(payload, "terms"):
        if not isinstance(item, dict):
            raise ValueError("each terms entry must be an object")
        surface = require_str(item, "surface")
        category = _normalize_category(require_str(item, "category"))
        rationale = item.get("rationale", "")
        if not isinstance(rationale, str):
            raise ValueError("field 'rationale' must be a string")
        terms.append((surface, category, rationale))
    return terms


def detect_unknown_terms(source_text: str, lang_pair: tuple[str, str], backend_id: str,
                         gateway: Gateway, transcript=None) -> list[TermCandidate]:
    """Detect translation-risky terms in ``source_text``.

    Reported surfaces are anchored at their first occurrence in the text;
    surfaces that cannot be located are dropped with a transcript warning.
    Overlapping spans are merged keeping the longer span, and the result is
    sorted by span start.
    """
    if not source_text:
        raise ValueError("source text must be non-empty")
    source_lang, target_lang = lang_pair
    prompt = prompts.render(
        "detector",
        source_lang=prompts.lang_name(source_lang),
        target_lang=prompts.lang_name(target_lang),
        source_text=source_text,
    )
    envelope = chat_structured(gateway, backend_id, prompt, "detector",
                               _validate, transcript)

    candidates = []
    seen_surfaces = set()
    for surface, category, rationale in envelope.parsed:
        if surface in seen_surfaces:
            continue
        seen_surfaces.add(surface)
        start = source_text.find(surface)
        if start < 0:
            _warn(transcript, f"detector: surface not found in source text, dropped: {surface!r}")
            continue
        candidates.append(TermCandidate(surface, start, start + len(surface),
                                        category, rationale))

    # Merge overlaps keeping the longer span; equal lengths keep the earlier.
    kept: list[TermCandidate] = []
    for candidate in sorted(candidates, key=lambda c: (c.start - c.end, c.start, c.surface)):
        if any(c.start < candidate.end and candidate.start < c.end for c in kept):
            continue
        kept.append(candidate)
    return sorted(kept, key=lambda c: c.start)


def _warn(transcript, message: str) -> None:
    if transcript is not None:
        transcript.warn(message)
    log.warning("%s", message)
