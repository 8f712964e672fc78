"""Top-1 supporting documents from four sources.

Native Okapi BM25 over a local corpus, a remote dense retriever spoken to
over HTTP, gold documents attached to items, and corrupted gold documents
with every gold answer replaced by a decoy token. The corpus lives in an
in-memory inverted index built from line-delimited (id, text) records and
can be persisted to a versioned index file.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

import requests

from .core import CertgateError, QAItem, RetrievalHit
from .parsing import answer_is_correct
from .textnorm import tokenize

INDEX_FORMAT = "certgate-bm25-index"
INDEX_VERSION = 1

CORRUPTION_TOKEN = "Tom"


class RetrievalError(CertgateError):
    pass


class DuplicateId(RetrievalError):
    pass


class MalformedRecord(RetrievalError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class IndexVersionMismatch(RetrievalError):
    pass


class RetrieverUnavailable(RetrievalError):
    pass


class MalformedResponse(RetrievalError):
    pass


@dataclass(frozen=True)
class Bm25Params:
    """Okapi BM25 parameters (toolkit-style defaults, configurable)."""

    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self) -> None:
        if self.k1 <= 0:
            raise ValueError("k1 must be positive")
        if not (0.0 <= self.b <= 1.0):
            raise ValueError("b must be in [0, 1]")


class CorpusStore:
    """Immutable document collection with term statistics.

    Statistics (per-term document frequencies, per-document lengths,
    average length) are derived from the documents with the shared
    normalizer, so rebuilding from the same documents is bit-identical.
    """

    def __init__(self, documents: Mapping[str, str]):
        self.documents: dict[str, str] = dict(documents)
        self._postings: dict[str, dict[str, int]] = {}
        self._doc_len: dict[str, int] = {}
        for doc_id, text in self.documents.items():
            counts = Counter(tokenize(text))
            self._doc_len[doc_id] = sum(counts.values())
            for term, tf in counts.items():
                self._postings.setdefault(term, {})[doc_id] = tf
        n = len(self.documents)
        self.avg_doc_len: float = (sum(self._doc_len.values()) / n) if n else 0.0

    def __len__(self) -> int:
        return len(self.documents)

    def doc_length(self, doc_id: str) -> int:
        return self._doc_len[doc_id]

    def document_frequency(self, term: str) -> int:
        return len(self._postings.get(term, ()))


def ingest(path: str | Path) -> CorpusStore:
    """Build a store from a UTF-8 JSONL corpus of {"id", "text"} records."""
    documents: dict[str, str] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"invalid JSON ({exc.msg})", lineno) from exc
            if not isinstance(record, dict) or "id" not in record or "text" not in record:
                raise MalformedRecord("record must carry 'id' and 'text'", lineno)
            doc_id, text = record["id"], record["text"]
            if not isinstance(doc_id, str) or not doc_id:
                raise MalformedRecord("'id' must be a non-empty string", lineno)
            if not isinstance(text, str) or not text:
                raise MalformedRecord("'text' must be a non-empty string", lineno)
            if doc_id in documents:
                raise DuplicateId(f"duplicate doc id {doc_id!r} at line {lineno}")
            documents[doc_id] = text
    return CorpusStore(documents)


def save_index(store: CorpusStore, path: str | Path) -> None:
    """Persist the store to a single versioned JSON file."""
    payload = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "documents": store.documents,
    }
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, ensure_ascii=False), encoding="utf-8"
    )


def load_index(path: str | Path) -> CorpusStore:
    """Load a persisted index, failing fast on a format/version mismatch."""
    payload = json.loads(Path(path).read_text("utf-8"))
    if payload.get("format") != INDEX_FORMAT or payload.get("version") != INDEX_VERSION:
        raise IndexVersionMismatch(
            f"expected {INDEX_FORMAT} v{INDEX_VERSION}, "
            f"found {payload.get('format')!r} v{payload.get('version')!r}"
        )
    return CorpusStore(payload["documents"])


def bm25_scores(store: CorpusStore, params: Bm25Params, query: str) -> dict[str, float]:
    """Okapi BM25 score of every document matching at least one query term.

    idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)), and each matching term
    contributes idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl)),
    weighted by the term's count in the query.
    """
    n_docs = len(store)
    scores: dict[str, float] = {}
    if n_docs == 0:
        return scores
    query_counts = Counter(tokenize(query))
    for term, qtf in query_counts.items():
        postings = store._postings.get(term)
        if not postings:
            continue
        df = len(postings)
        idf = math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))
        for doc_id, tf in postings.items():
            dl = store._doc_len[doc_id]
            denom = tf + params.k1 * (1.0 - params.b + params.b * dl / store.avg_doc_len)
            scores[doc_id] = scores.get(doc_id, 0.0) + qtf * idf * tf * (params.k1 + 1.0) / denom
    return scores


def bm25_top1(store: CorpusStore, params: Bm25Params, query: str) -> RetrievalHit | None:
    """Highest-scoring document, ties broken by smallest doc id.

    Returns None when the corpus is empty or no document scores above
    zero.
    """
    scores = bm25_scores(store, params, query)
    positive = {doc_id: s for doc_id, s in scores.items() if s > 0.0}
    if not positive:
        return None
    best = max(positive.values())
    doc_id = min(d for d, s in positive.items() if s == best)
    return RetrievalHit(doc_id=doc_id, text=store.documents[doc_id], score=best, source="sparse")


def gold_document(item: QAItem) -> RetrievalHit | None:
    """The item's ground-truth document, when it has one."""
    if not item.gold_document:
        return None
    return RetrievalHit(
        doc_id=f"gold:{item.id}", text=item.gold_document, score=math.inf, source="gold"
    )


def _phrase_pattern(phrase: str) -> re.Pattern[str] | None:
    parts = phrase.split()
    if not parts:
        return None
    body = r"\s+".join(re.escape(p) for p in parts)
    # Lookarounds instead of \b so phrases with punctuation edges anchor too.
    return re.compile(rf"(?<!\w){body}(?!\w)", re.IGNORECASE)


def corrupt_document(
    doc: str, gold_answers: Iterable[str], replacement: str = CORRUPTION_TOKEN
) -> str:
    """Replace every whole-phrase occurrence of each gold answer.

    Case-insensitive, whitespace-flexible matching; answers are applied
    longest first so nested answers leave no fragments. Words that merely
    contain an answer as a substring are left alone. Idempotent once no
    answers remain.
    """
    answers = sorted(set(gold_answers), key=lambda a: (-len(a), a))
    if not answers:
        raise ValueError("gold_answers must be non-empty")
    for answer in answers:
        pattern = _phrase_pattern(answer)
        if pattern is not None:
            doc = pattern.sub(replacement, doc)
    return doc


def dense_top1(
    endpoint: str,
    query: str,
    *,
    timeout: float = 10.0,
    session: Any = None,
) -> RetrievalHit | None:
    """Ask a remote dense retriever for its best document.

    POSTs {"query", "k": 1} to ``endpoint``/retrieve and expects
    {"hits": [{"id", "score", "text"}, ...]} with scores descending.

    Raises:
        RetrieverUnavailable: connection failure or non-200 status.
        MalformedResponse: response body off contract.
    """
    if session is None:
        session = requests
    url = endpoint.rstrip("/") + "/retrieve"
    try:
        resp = session.post(url, json={"query": query, "k": 1}, timeout=timeout)
    except requests.RequestException as exc:
        raise RetrieverUnavailable(f"dense retriever unreachable: {exc}") from exc
    if resp.status_code != 200:
        raise RetrieverUnavailable(f"dense retriever returned HTTP {resp.status_code}")
    try:
        hits = resp.json()["hits"]
    except (ValueError, KeyError) as exc:
        raise MalformedResponse(f"response missing 'hits': {exc}") from exc
    if not isinstance(hits, list):
        raise MalformedResponse("'hits' must be a list")
    if not hits:
        return None
    top = hits[0]
    try:
        return RetrievalHit(
            doc_id=str(top["id"]), text=str(top["text"]), score=float(top["score"]),
            source="dense",
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"malformed hit record: {exc}") from exc


class Retriever:
    """Base top-1 retriever with a call counter (used by gating checks)."""

    source = "?"

    def __init__(self) -> None:
        self.calls = 0

    def top1(self, item: QAItem) -> RetrievalHit | None:
        self.calls += 1
        return self._top1(item)

    def _top1(self, item: QAItem) -> RetrievalHit | None:
        raise NotImplementedError


class SparseRetriever(Retriever):
    source = "sparse"

    def __init__(self, store: CorpusStore, params: Bm25Params | None = None):
        super().__init__()
        self.store = store
        self.params = params or Bm25Params()

    def _top1(self, item: QAItem) -> RetrievalHit | None:
        return bm25_top1(self.store, self.params, item.question)


class GoldRetriever(Retriever):
    source = "gold"

    def _top1(self, item: QAItem) -> RetrievalHit | None:
        return gold_document(item)


class CorruptRetriever(Retriever):
    """Gold document with every gold answer replaced by the decoy token."""

    source = "corrupt"

    def _top1(self, item: QAItem) -> RetrievalHit | None:
        hit = gold_document(item)
        if hit is None:
            return None
        corrupted = corrupt_document(hit.text, item.gold_answers)
        return RetrievalHit(doc_id=f"corrupt:{item.id}", text=corrupted,
                            score=math.inf, source="corrupt")


class DenseRetriever(Retriever):
    source = "dense"

    def __init__(self, endpoint: str, *, timeout: float = 10.0, session: Any = None):
        super().__init__()
        self.endpoint = endpoint
        self.timeout = timeout
        self.session = session

    def _top1(self, item: QAItem) -> RetrievalHit | None:
        return dense_top1(self.endpoint, item.question,
                          timeout=self.timeout, session=self.session)


@dataclass(frozen=True)
class PrecisionReport:
    """Top-1 precision of a retriever over a dataset."""

    n: int
    with_hit: int
    hit_contains_answer: int

    @property
    def p_at_1(self) -> float:
        return self.hit_contains_answer / self.n if self.n else 0.0

    @property
    def coverage(self) -> float:
        return self.with_hit / self.n if self.n else 0.0


def precision_at_1(retriever: Retriever, items: Iterable[QAItem]) -> PrecisionReport:
    """Fraction of questions whose top-1 document contains a gold answer.

    Uses the same containment judge as answer correctness; questions with
    no hit count against precision.
    """
    n = with_hit = contains = 0
    for item in items:
        n += 1
        hit = retriever.top1(item)
        if hit is None:
            continue
        with_hit += 1
        if answer_is_correct(hit.text, item.gold_answers):
            contains += 1
    return PrecisionReport(n=n, with_hit=with_hit, hit_contains_answer=contains)
