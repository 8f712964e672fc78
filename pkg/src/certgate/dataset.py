"""Dataset loading, conversion from public QA distributions, and sampling.

The internal format is UTF-8 JSONL, one record per line:

    {"id": "...", "question": "...", "answers": ["...", ...],
     "gold_document": "..."}          # gold_document optional

Converters map three common public shapes into it, keeping only questions
with short answers and using those short answers as labels.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .core import CertgateError, QAItem


class DatasetError(CertgateError):
    pass


class EmptyDataset(DatasetError):
    pass


class MalformedDatasetRecord(DatasetError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def load_dataset(path: str | Path) -> list[QAItem]:
    """Read the internal JSONL format, rejecting duplicate ids."""
    items: list[QAItem] = []
    seen: set[str] = set()
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedDatasetRecord(f"invalid JSON ({exc.msg})", lineno) from exc
            try:
                item = QAItem(
                    id=str(record["id"]),
                    question=str(record["question"]),
                    gold_answers=tuple(str(a) for a in record["answers"]),
                    gold_document=record.get("gold_document"),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedDatasetRecord(str(exc), lineno) from exc
            if item.id in seen:
                raise MalformedDatasetRecord(f"duplicate item id {item.id!r}", lineno)
            seen.add(item.id)
            items.append(item)
    return items


def save_dataset(items: Iterable[QAItem], path: str | Path) -> int:
    """Write items in the internal JSONL format; returns the count."""
    count = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for item in items:
            record: dict = {
                "id": item.id,
                "question": item.question,
                "answers": list(item.gold_answers),
            }
            if item.gold_document is not None:
                record["gold_document"] = item.gold_document
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
            count += 1
    return count


def sample_dataset(
    items: list[QAItem], n: int, seed: int, require_gold: bool = False
) -> list[QAItem]:
    """Seeded random subset, optionally restricted to gold-document items."""
    pool = [i for i in items if i.gold_document] if require_gold else list(items)
    if n > len(pool):
        raise DatasetError(f"cannot sample {n} items from a pool of {len(pool)}")
    return random.Random(seed).sample(pool, n)


@dataclass(frozen=True)
class ConversionStats:
    read: int
    kept: int
    dropped_no_short_answer: int


def _short_answers(answers: Iterable[str], max_words: int) -> tuple[str, ...]:
    return tuple(a for a in answers if a.strip() and len(a.split()) <= max_words)


def convert_dataset(
    path: str | Path, fmt: str, max_answer_words: int = 6
) -> tuple[list[QAItem], ConversionStats]:
    """Convert a public distribution into the internal format.

    Supported formats:
      nq-open    JSONL with {"question", "answer": [...]} records
      hotpotqa   dev-set JSON array; the supporting-fact paragraphs are
                 concatenated into the gold document
      dpr        JSON array with {"question", "answers", "positive_ctxs"};
                 the first positive context becomes the gold document

    Items whose answers are all longer than ``max_answer_words`` are
    dropped; surviving short answers become the labels.
    """
    converters = {
        "nq-open": _convert_nq_open,
        "hotpotqa": _convert_hotpotqa,
        "dpr": _convert_dpr,
    }
    if fmt not in converters:
        raise DatasetError(f"unknown source format {fmt!r} (expected one of {sorted(converters)})")
    raw_items = converters[fmt](Path(path))

    kept: list[QAItem] = []
    read = dropped = 0
    for item_id, question, answers, gold_doc in raw_items:
        read += 1
        shorts = _short_answers(answers, max_answer_words)
        if not shorts:
            dropped += 1
            continue
        kept.append(QAItem(id=item_id, question=question, gold_answers=shorts,
                           gold_document=gold_doc))
    return kept, ConversionStats(read=read, kept=len(kept), dropped_no_short_answer=dropped)


RawItem = tuple[str, str, tuple[str, ...], "str | None"]


def _convert_nq_open(path: Path) -> list[RawItem]:
    out: list[RawItem] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                question = str(record["question"])
                answers = record.get("answer", record.get("answers"))
                answers = tuple(str(a) for a in answers)
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MalformedDatasetRecord(str(exc), lineno) from exc
            out.append((f"nq-{len(out):06d}", question, answers, None))
    return out


def _convert_hotpotqa(path: Path) -> list[RawItem]:
    data = json.loads(path.read_text("utf-8"))
    if not isinstance(data, list):
        raise DatasetError("hotpotqa source must be a JSON array")
    out: list[RawItem] = []
    for record in data:
        item_id = str(record.get("_id") or f"hotpot-{len(out):06d}")
        question = str(record["question"])
        answers = (str(record["answer"]),)
        gold_doc = _hotpot_gold_document(record)
        out.append((item_id, question, answers, gold_doc))
    return out


def _hotpot_gold_document(record: dict) -> str | None:
    context = {title: sents for title, sents in record.get("context", [])}
    supporting_titles: list[str] = []
    for title, _idx in record.get("supporting_facts", []):
        if title not in supporting_titles:
            supporting_titles.append(title)
    paragraphs = ["".join(context[t]) for t in supporting_titles if t in context]
    return " ".join(paragraphs) if paragraphs else None


def _convert_dpr(path: Path) -> list[RawItem]:
    data = json.loads(path.read_text("utf-8"))
    if not isinstance(data, list):
        raise DatasetError("dpr source must be a JSON array")
    out: list[RawItem] = []
    for record in data:
        question = str(record["question"])
        answers = tuple(str(a) for a in record["answers"])
        positives = record.get("positive_ctxs") or []
        gold_doc = str(positives[0]["text"]) if positives else None
        out.append((f"dpr-{len(out):06d}", question, answers, gold_doc))
    return out
