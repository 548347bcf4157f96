"""Tokenizers shared by the retrieval index and the BLEU metric.

Two modes only, both dependency-free and deterministic:

* ``simple`` -- lowercase, split on anything that is not a word character.
  Suitable for space-delimited languages.
* ``char`` -- one token per non-whitespace character. Used for Chinese,
  where whitespace carries no segmentation information.
"""

from __future__ import annotations

import re

SIMPLE = "simple"
CHAR = "char"
TOKENIZER_IDS = (SIMPLE, CHAR)

# Languages tokenized per character; everything else in the registry is
# treated as space-delimited.
CHAR_LANGS = frozenset({"zh"})

LANG_REGISTRY = frozenset({
    "ar", "de", "en", "es", "fr", "hi", "it", "ja", "ko", "nl",
    "pl", "pt", "ru", "sv", "th", "tr", "vi", "zh",
})

_WORD_RE = re.compile(r"\w+", re.UNICODE)


def tokenize(text: str, tokenizer_id: str = SIMPLE) -> list[str]:
    """Split ``text`` into tokens according to ``tokenizer_id``."""
    if tokenizer_id == SIMPLE:
        return [m.group(0).lower() for m in _WORD_RE.finditer(text)]
    if tokenizer_id == CHAR:
        return [ch for ch in text if not ch.isspace()]
    raise ValueError(f"unknown tokenizer: {tokenizer_id!r}")


def word_spans(text: str) -> list[tuple[int, int]]:
    """Character offsets of the ``simple`` tokens, in order."""
    return [(m.start(), m.end()) for m in _WORD_RE.finditer(text)]


def tokenizer_for_lang(lang: str) -> str:
    """Pick the tokenizer for a target language code."""
    return CHAR if lang in CHAR_LANGS else SIMPLE
