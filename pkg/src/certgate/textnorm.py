"""Shared answer/query text normalization.

The same normalizer backs correctness judging, token overlap, and corpus
tokenization so that every module agrees on what counts as a match:
lowercase, strip punctuation, drop English articles, collapse whitespace.
"""

from __future__ import annotations

import re
import string
from functools import lru_cache
from importlib import resources
from pathlib import Path

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")


def normalize(text: str) -> str:
    """Normalize free text for containment and overlap comparisons."""
    text = text.lower()
    text = text.translate(_PUNCT_TABLE)
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def tokenize(text: str) -> list[str]:
    """Normalized tokens of ``text`` (may contain duplicates)."""
    return normalize(text).split()


def _read_word_list(raw: str) -> frozenset[str]:
    words = []
    for line in raw.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.append(line.lower())
    return frozenset(words)


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    raw = resources.files("certgate.data").joinpath("stopwords.txt").read_text("utf-8")
    return _read_word_list(raw)


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Load a custom stopword file (one token per line, '#' comments)."""
    return _read_word_list(Path(path).read_text("utf-8"))
