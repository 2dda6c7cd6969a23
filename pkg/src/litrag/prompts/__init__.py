"""Versioned prompt templates shipped as package data.

Templates are plain text with ``str.format`` placeholders. Loading goes
through :func:`load_prompt` so the texts stay editable without touching
any pipeline code, and tests can render the exact strings sent to a
model.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

PROMPT_NAMES = (
    "extraction",
    "synonyms",
    "vector_answer",
    "graph_answer",
    "hybrid_answer",
    "statements",
    "judge",
    "testset_qa",
)


@lru_cache(maxsize=None)
def load_prompt(name: str) -> str:
    """Return the template text for one of PROMPT_NAMES."""
    if name not in PROMPT_NAMES:
        raise KeyError(f"unknown prompt {name!r}")
    return (
        resources.files(__package__).joinpath(f"{name}.txt").read_text(encoding="utf-8")
    )
