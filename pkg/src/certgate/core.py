"""Domain types shared across the toolkit.

All records here are immutable values; concurrent workers exchange them
freely and combine tallies by component-wise merge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

CERTAIN = 1
UNCERTAIN = 0

HIT_SOURCES = ("sparse", "dense", "gold", "corrupt")


class CertgateError(Exception):
    """Base class for errors raised by this package."""


def _check_flag(value: int, name: str = "certainty") -> None:
    if value not in (0, 1):
        raise ValueError(f"{name} flag must be 0 or 1, got {value!r}")


@dataclass(frozen=True)
class QAItem:
    """A question, its gold short answers, and an optional gold document."""

    id: str
    question: str
    gold_answers: tuple[str, ...]
    gold_document: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "gold_answers", tuple(self.gold_answers))
        if not self.id:
            raise ValueError("item id must be non-empty")
        if not self.gold_answers:
            raise ValueError(f"item {self.id!r}: gold_answers must be non-empty")
        if any(not a for a in self.gold_answers):
            raise ValueError(f"item {self.id!r}: gold_answers must not contain empty strings")


@dataclass(frozen=True)
class DecodeParams:
    """Decoding settings passed through to model backends."""

    max_output_tokens: int = 256
    temperature: float = 0.0
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class ModelTurn:
    """One model exchange: rendered prompt in, parsed answer and flag out."""

    strategy: str
    rendered_prompt: str
    raw_completion: str
    answer: str
    certainty: int | None
    decode_params: DecodeParams = field(default_factory=DecodeParams)

    def __post_init__(self) -> None:
        if self.certainty is not None:
            _check_flag(self.certainty)


@dataclass(frozen=True)
class OutcomeTally:
    """Counts of (correct?, certain?) outcomes over a set of answered items."""

    n_cc: int = 0
    n_cu: int = 0
    n_ic: int = 0
    n_iu: int = 0

    def __post_init__(self) -> None:
        for name in ("n_cc", "n_cu", "n_ic", "n_iu"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def total(self) -> int:
        return self.n_cc + self.n_cu + self.n_ic + self.n_iu

    def add(self, correct: bool, certain: bool) -> "OutcomeTally":
        """Return a new tally with the matching cell incremented by one."""
        if correct and certain:
            return OutcomeTally(self.n_cc + 1, self.n_cu, self.n_ic, self.n_iu)
        if correct:
            return OutcomeTally(self.n_cc, self.n_cu + 1, self.n_ic, self.n_iu)
        if certain:
            return OutcomeTally(self.n_cc, self.n_cu, self.n_ic + 1, self.n_iu)
        return OutcomeTally(self.n_cc, self.n_cu, self.n_ic, self.n_iu + 1)

    def merge(self, other: "OutcomeTally") -> "OutcomeTally":
        """Component-wise sum, used to combine per-worker tallies."""
        return OutcomeTally(
            self.n_cc + other.n_cc,
            self.n_cu + other.n_cu,
            self.n_ic + other.n_ic,
            self.n_iu + other.n_iu,
        )


def tally_add(tally: OutcomeTally, correct: bool, certain: bool) -> OutcomeTally:
    """Functional alias for :meth:`OutcomeTally.add`."""
    return tally.add(correct, certain)


@dataclass(frozen=True)
class BoundaryMetrics:
    """The five knowledge-boundary scores over ``n`` answered items.

    accuracy          fraction answered correctly
    unc_rate          fraction flagged uncertain
    overconfidence    incorrect yet flagged certain
    conservativeness  correct yet flagged uncertain
    alignment         flag agrees with correctness
    """

    accuracy: float
    unc_rate: float
    overconfidence: float
    conservativeness: float
    alignment: float
    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be positive")
        for name in ("accuracy", "unc_rate", "overconfidence", "conservativeness", "alignment"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0, 1]")
        if abs(self.alignment + self.overconfidence + self.conservativeness - 1.0) > 1e-6:
            raise ValueError("alignment + overconfidence + conservativeness must equal 1")
        if abs(self.alignment - (self.accuracy + self.unc_rate - 2 * self.conservativeness)) > 1e-6:
            raise ValueError("alignment must equal accuracy + unc_rate - 2*conservativeness")


@dataclass(frozen=True)
class RetrievalHit:
    """A scored supporting document from one of the four sources."""

    doc_id: str
    text: str
    score: float
    source: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("hit text must be non-empty")
        if math.isnan(self.score):
            raise ValueError("hit score must not be NaN")
        if self.source not in HIT_SOURCES:
            raise ValueError(f"unknown hit source {self.source!r}")
