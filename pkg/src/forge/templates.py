"""Prompt template loading and slot rendering.

Templates live as plain text files under ``forge/prompts``. Slots are
``{name}`` markers replaced in a single pass, so body text containing braces
(LaTeX, code) can never be re-interpreted as a slot.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def load_prompt(name: str) -> str:
    """Read a prompt template by stem name, without the trailing newline."""
    text = resources.files("forge").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


def render(template: str, **slots: str) -> str:
    """Fill ``{slot}`` markers in one pass; unknown markers are left intact."""
    if not slots:
        return template
    pattern = re.compile(r"\{(" + "|".join(re.escape(k) for k in slots) + r")\}")
    return pattern.sub(lambda m: slots[m.group(1)], template)
