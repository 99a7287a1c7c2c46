"""Language-aware text helpers: sentence splitting and word tokenizing.

The default splitter handles the four terminators used across the supported
languages (Bengali danda plus ? ! .). Deployments can register a custom
splitter per language pair.
"""

from __future__ import annotations

import re
import unicodedata
from typing import Callable

TERMINATORS = "।?!."

# Split after a terminator that is followed by whitespace; end-of-string
# needs no split point.
_BOUNDARY_RE = re.compile(r"(?<=[।?!.])\s+")

_PUNCT_STRIP = "।?!.,;:"

_splitters: dict[str, Callable[[str], list[str]]] = {}


def register_sentence_splitter(
    language_code: str, splitter: Callable[[str], list[str]] | None
) -> None:
    """Install a custom sentence splitter for one language pair code.

    Passing None restores the default rule.
    """
    if splitter is None:
        _splitters.pop(language_code, None)
    else:
        _splitters[language_code] = splitter


def _default_split(text: str) -> list[str]:
    parts = _BOUNDARY_RE.split(text)
    return [p.strip() for p in parts if p.strip()]


def split_sentences(text: str, language: str | None = None) -> list[str]:
    """Split text into sentences, keeping each terminator on its sentence.

    Text without any terminator comes back as a single sentence; empty
    sentences are never produced.
    """
    splitter = _splitters.get(language) if language else None
    if splitter is not None:
        return splitter(text)
    return _default_split(text)


def tokenize_words(text: str) -> list[str]:
    """Split on unicode whitespace, trimming edge punctuation off each token."""
    tokens = []
    for raw in text.split():
        tok = raw.strip(_PUNCT_STRIP)
        if tok:
            tokens.append(tok)
    return tokens


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def normalize_sentence(text: str) -> str:
    """NFC-normalize and collapse internal whitespace to single spaces."""
    return nfc(" ".join(text.split()))
