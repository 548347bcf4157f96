"""Prompt template loading and rendering.

Templates are versioned text assets shipped with the package; rendering is a
pure function of the placeholder values, so identical inputs always produce
byte-identical prompts (pinned by golden-file tests).
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from string import Template

TEMPLATE_NAMES = ("detector", "extractor", "judge", "translator", "consis")

# Display names used inside prompts; unknown codes fall back to the code.
LANG_NAMES = {
    "ar": "Arabic", "de": "German", "en": "English", "es": "Spanish",
    "fr": "French", "hi": "Hindi", "it": "Italian", "ja": "Japanese",
    "ko": "Korean", "nl": "Dutch", "pl": "Polish", "pt": "Portuguese",
    "ru": "Russian", "sv": "Swedish", "th": "Thai", "tr": "Turkish",
    "vi": "Vietnamese", "zh": "Chinese",
}


def lang_name(code: str) -> str:
    return LANG_NAMES.get(code, code)


@lru_cache(maxsize=None)
def _template(name: str) -> Template:
    if name not in TEMPLATE_NAMES:
        raise ValueError(f"unknown prompt template: {name!r}")
    text = resources.files("crat.agents").joinpath("templates", f"{name}.txt").read_text("utf-8")
    return Template(text)


def render(name: str, **values: str) -> str:
    try:
        return _template(name).substitute(values)
    except KeyError as err:
        raise ValueError(f"template {name!r} is missing placeholder value {err}") from err
