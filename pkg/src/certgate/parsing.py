"""Completion parsing: certainty flags, answer extraction, correctness.

Certainty detection is driven by an :class:`OutputContract`: each prompt
strategy declares the marker lines it instructs the model to emit and the
section labels that are scaffolding rather than answer text. Matching is
word-boundary aware, so the marker word "certain" never fires inside
"uncertain". When no marker is present the parser falls back to a
configurable hedge-phrase scan before giving up.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .core import CERTAIN, UNCERTAIN, CertgateError
from .textnorm import normalize

log = logging.getLogger(__name__)


class Unparseable(CertgateError):
    """No certainty marker and no hedge phrase found in a completion."""


@dataclass(frozen=True)
class OutputContract:
    """What a strategy's completions look like to the parser.

    ``certain_marker`` and ``uncertain_marker`` are literal phrases
    (matched case-insensitively with flexible internal whitespace);
    ``strip_labels`` name the "Label:" sections that are scaffolding and
    get removed when extracting the answer text.
    """

    certain_marker: str = "Certainty: certain"
    uncertain_marker: str = "Certainty: uncertain"
    strip_labels: tuple[str, ...] = ("Certainty",)
    description: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "strip_labels", tuple(self.strip_labels))
        if not self.certain_marker or not self.uncertain_marker:
            raise ValueError("contract markers must be non-empty")


@lru_cache(maxsize=128)
def _marker_re(marker: str) -> re.Pattern[str]:
    # Literal phrase with flexible whitespace; word boundaries on word-char
    # edges so e.g. "certain" cannot match inside "uncertain".
    parts = [re.escape(p) for p in marker.split()]
    body = r"\s*".join(parts)
    if marker[0].isalnum() or marker[0] == "_":
        body = r"(?<!\w)" + body
    if marker[-1].isalnum() or marker[-1] == "_":
        body = body + r"(?!\w)"
    return re.compile(body, re.IGNORECASE)


def _last_match_pos(pattern: re.Pattern[str], text: str) -> int | None:
    pos = None
    for m in pattern.finditer(text):
        pos = m.start()
    return pos


def _canonical_apostrophes(text: str) -> str:
    return text.replace("’", "'").replace("‘", "'")


@lru_cache(maxsize=1)
def default_hedge_phrases() -> tuple[str, ...]:
    raw = resources.files("certgate.data").joinpath("hedges.txt").read_text("utf-8")
    return tuple(
        line.strip().lower()
        for line in raw.splitlines()
        if line.strip() and not line.startswith("#")
    )


def load_hedge_phrases(path: str | Path) -> tuple[str, ...]:
    """Load hedge phrases from a plain-text file, one per line."""
    phrases = []
    for line in Path(path).read_text("utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            phrases.append(line.lower())
    return tuple(phrases)


def parse_certainty(
    raw: str,
    contract: OutputContract,
    hedge_phrases: Sequence[str] | None = None,
) -> int:
    """Extract the binary certainty flag from a raw completion.

    Returns 1 when the contract's certain marker matches, 0 for the
    uncertain marker; when both appear the later occurrence wins. With no
    marker at all, a hedge phrase anywhere in the text yields 0.

    Raises:
        Unparseable: neither marker nor any hedge phrase was found.
    """
    if not raw:
        raise ValueError("raw completion must be non-empty")
    certain_at = _last_match_pos(_marker_re(contract.certain_marker), raw)
    uncertain_at = _last_match_pos(_marker_re(contract.uncertain_marker), raw)
    if certain_at is not None and uncertain_at is not None:
        return CERTAIN if certain_at > uncertain_at else UNCERTAIN
    if certain_at is not None:
        return CERTAIN
    if uncertain_at is not None:
        return UNCERTAIN

    if hedge_phrases is None:
        hedge_phrases = default_hedge_phrases()
    haystack = _canonical_apostrophes(raw.lower())
    for phrase in hedge_phrases:
        if _canonical_apostrophes(phrase) in haystack:
            return UNCERTAIN
    raise Unparseable(f"no certainty marker or hedge phrase in completion: {raw[:80]!r}")


_LABEL_RE = re.compile(r"^\s*([A-Za-z][A-Za-z0-9 ._+-]{0,40}?)\s*:")


def parse_answer(raw: str, contract: OutputContract) -> str:
    """Strip the certainty line and contract scaffolding from a completion.

    Sections opened by a stripped label run until the next labelled line.
    Never returns an empty string: if stripping removes everything, the
    raw completion is returned unchanged.
    """
    if not raw:
        raise ValueError("raw completion must be non-empty")
    stripped = {label.lower() for label in contract.strip_labels}
    kept: list[str] = []
    skipping = False
    for line in raw.splitlines():
        m = _LABEL_RE.match(line)
        if m:
            skipping = m.group(1).strip().lower() in stripped
            if skipping:
                continue
            kept.append(line)
        elif not skipping:
            kept.append(line)
    text = "\n".join(kept)
    # Markers that ride along inside a kept line are scaffolding too.
    for marker in (contract.certain_marker, contract.uncertain_marker):
        text = _marker_re(marker).sub("", text)
    text = text.strip()
    return text if text else raw


def answer_is_correct(answer: str, gold_answers: Iterable[str]) -> bool:
    """Containment judgement: does the answer contain any gold answer?

    Both sides pass through the shared normalizer (lowercase, punctuation
    stripped, articles dropped, whitespace collapsed) before the substring
    test.
    """
    golds = list(gold_answers)
    if not golds:
        raise ValueError("gold_answers must be non-empty")
    norm_answer = normalize(answer)
    return any(normalize(g) in norm_answer for g in golds)
