"""Knowledge-boundary metrics, confidence levels, and document reliance.

Boundary scores partition answered items by (correct?, certain?):

    accuracy         = (n_cc + n_cu) / N
    unc_rate         = (n_cu + n_iu) / N
    overconfidence   = n_ic / N
    conservativeness = n_cu / N
    alignment        = (n_cc + n_iu) / N

Two identities follow for every tally and are enforced by the test suite:
alignment + overconfidence + conservativeness = 1, and
alignment = accuracy + unc_rate - 2 * conservativeness.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Collection, Iterable, Mapping, Sequence

from .core import BoundaryMetrics, CertgateError, OutcomeTally
from .textnorm import default_stopwords, tokenize


class EmptyTally(CertgateError):
    """Metrics requested over a tally with zero items."""


class EmptyInput(CertgateError):
    """Aggregate requested over an empty record sequence."""


def boundary_metrics(tally: OutcomeTally) -> BoundaryMetrics:
    """Compute the five boundary scores from an outcome tally."""
    n = tally.total
    if n == 0:
        raise EmptyTally("cannot compute metrics over an empty tally")
    return BoundaryMetrics(
        accuracy=(tally.n_cc + tally.n_cu) / n,
        unc_rate=(tally.n_cu + tally.n_iu) / n,
        overconfidence=tally.n_ic / n,
        conservativeness=tally.n_cu / n,
        alignment=(tally.n_cc + tally.n_iu) / n,
        n=n,
    )


def confidence_level(certainty: int, certainty_second: int) -> int:
    """Map a (first-pass, second-pass) certainty pair to a level in 0..3.

    Level 0 is uncertain under both strategies, level 3 certain under
    both; the mixed pairs take the middle levels, ordered by the first
    flag. The mapping is a bijection between {0,1}^2 and {0,1,2,3}.
    """
    if certainty not in (0, 1) or certainty_second not in (0, 1):
        raise ValueError("certainty flags must be 0 or 1")
    return 2 * certainty + certainty_second


@dataclass(frozen=True)
class RelianceRecord:
    """One item's plain and document-augmented answers, for reliance stats."""

    item_id: str
    level: int
    plain_answer: str
    augmented_answer: str
    document: str
    plain_correct: bool
    augmented_correct: bool

    def __post_init__(self) -> None:
        if self.level not in (0, 1, 2, 3):
            raise ValueError(f"level must be in 0..3, got {self.level}")


def overlap(
    answer: str,
    document: str,
    stopwords: Collection[str] | None = None,
) -> int:
    """Count distinct content tokens of ``answer`` present in ``document``.

    Both sides are normalized by the shared normalizer; stopwords are
    excluded from the answer side only.
    """
    if stopwords is None:
        stopwords = default_stopwords()
    answer_tokens = {t for t in tokenize(answer) if t not in stopwords}
    if not answer_tokens:
        return 0
    doc_tokens = set(tokenize(document))
    return len(answer_tokens & doc_tokens)


def relies_on_document(
    plain_answer: str,
    augmented_answer: str,
    document: str,
    gamma: float = 0.0,
    stopwords: Collection[str] | None = None,
) -> bool:
    """True when augmentation strictly increased answer/document overlap.

    The test is overlap(augmented, doc) - overlap(plain, doc) > gamma,
    with a strict inequality, so identical answers never count as
    reliance at gamma = 0.
    """
    gain = overlap(augmented_answer, document, stopwords) - overlap(
        plain_answer, document, stopwords
    )
    return gain > gamma


def utilization_ratio(
    records: Sequence[RelianceRecord],
    gamma: float = 0.0,
    stopwords: Collection[str] | None = None,
) -> float:
    """Fraction of records whose augmented answer leans on the document."""
    if not records:
        raise EmptyInput("utilization_ratio over no records")
    relying = sum(
        relies_on_document(r.plain_answer, r.augmented_answer, r.document, gamma, stopwords)
        for r in records
    )
    return relying / len(records)


def corruption_rate(
    records: Sequence[RelianceRecord],
    *,
    denominator: str = "all",
) -> float:
    """Fraction of records answered right plainly but wrong when augmented.

    ``denominator`` is "all" (every record in the bucket, the default) or
    "plain_correct" (only records whose plain answer was right).
    """
    if not records:
        raise EmptyInput("corruption_rate over no records")
    flipped = sum(r.plain_correct and not r.augmented_correct for r in records)
    if denominator == "all":
        return flipped / len(records)
    if denominator == "plain_correct":
        base = sum(r.plain_correct for r in records)
        return flipped / base if base else 0.0
    raise ValueError(f"unknown denominator mode {denominator!r}")


def bucket_by_level(
    records: Iterable[RelianceRecord],
    metric: Callable[[Sequence[RelianceRecord]], float],
) -> dict[int, float]:
    """Group records by confidence level and apply ``metric`` per group.

    Levels with no records are absent from the result rather than
    reported as zero.
    """
    groups: Mapping[int, list[RelianceRecord]] = defaultdict(list)
    for record in records:
        groups[record.level].append(record)
    return {level: metric(group) for level, group in sorted(groups.items())}


def bucket_sizes(records: Iterable[RelianceRecord]) -> dict[int, int]:
    """Number of records per confidence level (absent levels omitted)."""
    sizes: dict[int, int] = defaultdict(int)
    for record in records:
        sizes[record.level] += 1
    return dict(sorted(sizes.items()))
