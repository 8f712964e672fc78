"""Embedded corpus: build, persist, load, and score.

The corpus file is the shared line-delimited format: one JSON object per
line with "id" and "text". Vectors are unit-normalized, so inner product
equals cosine similarity; scoring is exact (no ANN structures) and ties
break on the smaller doc id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedder import Embedder, build_embedder

INDEX_FORMAT = "embedsvc-index"
INDEX_VERSION = 1

NORM_TOLERANCE = 1e-6


class CorpusIndexError(Exception):
    pass


class MalformedRecord(CorpusIndexError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateId(CorpusIndexError):
    pass


class IndexVersionMismatch(CorpusIndexError):
    pass


@dataclass
class EmbeddedCorpus:
    doc_ids: list[str]
    texts: list[str]
    vectors: np.ndarray  # (n, dim), rows unit-normalized
    model_name: str

    def __post_init__(self) -> None:
        if len(self.doc_ids) != len(self.texts) or len(self.doc_ids) != len(self.vectors):
            raise CorpusIndexError("ids, texts, and vectors must align")
        if len(self.vectors):
            norms = np.linalg.norm(self.vectors, axis=1)
            if not np.all(np.abs(norms - 1.0) <= NORM_TOLERANCE):
                raise CorpusIndexError("corpus vectors must be unit-normalized")

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1]) if self.vectors.ndim == 2 else 0

    def __len__(self) -> int:
        return len(self.doc_ids)


def read_corpus(path: str | Path) -> list[tuple[str, str]]:
    records: list[tuple[str, str]] = []
    seen: set[str] = set()
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"invalid JSON ({exc.msg})", lineno) from exc
            doc_id, text = record.get("id"), record.get("text")
            if not isinstance(doc_id, str) or not doc_id:
                raise MalformedRecord("'id' must be a non-empty string", lineno)
            if not isinstance(text, str) or not text:
                raise MalformedRecord("'text' must be a non-empty string", lineno)
            if doc_id in seen:
                raise DuplicateId(f"duplicate doc id {doc_id!r} at line {lineno}")
            seen.add(doc_id)
            records.append((doc_id, text))
    return records


def build_index(corpus_path: str | Path, model_name: str) -> EmbeddedCorpus:
    """Embed every document of the corpus file with the named model."""
    records = read_corpus(corpus_path)
    embedder = build_embedder(model_name)
    if records:
        vectors = embedder.embed([text for _, text in records])
    else:
        vectors = np.zeros((0, embedder.dim), dtype=np.float64)
    return EmbeddedCorpus(
        doc_ids=[doc_id for doc_id, _ in records],
        texts=[text for _, text in records],
        vectors=vectors,
        model_name=embedder.name,
    )


def save_index(corpus: EmbeddedCorpus, path: str | Path) -> Path:
    path = Path(path)
    if path.suffix != ".npz":  # numpy appends it; keep the name predictable
        path = path.with_name(path.name + ".npz")
    meta = json.dumps(
        {"format": INDEX_FORMAT, "version": INDEX_VERSION, "model": corpus.model_name}
    )
    np.savez(
        path,
        meta=np.array(meta),
        doc_ids=np.array(corpus.doc_ids, dtype=object),
        texts=np.array(corpus.texts, dtype=object),
        vectors=corpus.vectors,
    )
    return path


def load_index(path: str | Path) -> EmbeddedCorpus:
    with np.load(path, allow_pickle=True) as payload:
        meta = json.loads(str(payload["meta"]))
        if meta.get("format") != INDEX_FORMAT or meta.get("version") != INDEX_VERSION:
            raise IndexVersionMismatch(
                f"expected {INDEX_FORMAT} v{INDEX_VERSION}, found "
                f"{meta.get('format')!r} v{meta.get('version')!r}"
            )
        return EmbeddedCorpus(
            doc_ids=[str(x) for x in payload["doc_ids"]],
            texts=[str(x) for x in payload["texts"]],
            vectors=np.asarray(payload["vectors"], dtype=np.float64),
            model_name=str(meta.get("model", "")),
        )


def retrieve(corpus: EmbeddedCorpus, embedder: Embedder, query: str, k: int) -> list[dict]:
    """Exact cosine top-k as wire-format hit dicts, scores descending."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(corpus) == 0:
        return []
    query_vec = embedder.embed([query])[0]
    scores = corpus.vectors @ query_vec
    order = sorted(range(len(corpus)), key=lambda i: (-scores[i], corpus.doc_ids[i]))
    return [
        {"id": corpus.doc_ids[i], "score": float(scores[i]), "text": corpus.texts[i]}
        for i in order[:k]
    ]
