"""Run ledger reading and writing.

A ledger is a UTF-8 JSONL file: a header line with the config snapshot,
one line per dataset item (completed or skipped, never dropped), and a
footer line with the aggregates. Lines are serialized canonically
(sorted keys, compact separators), so identical runs produce
byte-identical ledgers.

Wall-clock timing is deliberately kept out of the ledger (it goes to a
side file) so that deterministic backends yield reproducible bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

from .core import CertgateError, ModelTurn, RetrievalHit

LEDGER_FORMAT = "certgate-ledger"
LEDGER_VERSION = 1


class LedgerError(CertgateError):
    pass


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"), allow_nan=False)


def turn_to_dict(turn: ModelTurn) -> dict[str, Any]:
    return {
        "strategy": str(turn.strategy),
        "prompt": turn.rendered_prompt,
        "completion": turn.raw_completion,
        "answer": turn.answer,
        "certainty": turn.certainty,
    }


def hit_to_dict(hit: RetrievalHit) -> dict[str, Any]:
    score: Any = "inf" if math.isinf(hit.score) else hit.score
    return {"doc_id": hit.doc_id, "source": hit.source, "score": score, "text": hit.text}


def write_ledger(
    path: str | Path,
    config: dict[str, Any],
    item_rows: Iterable[dict[str, Any]],
    aggregates: dict[str, Any],
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        header = {"kind": "header", "format": LEDGER_FORMAT,
                  "version": LEDGER_VERSION, "config": config}
        fh.write(canonical_json(header) + "\n")
        for row in item_rows:
            fh.write(canonical_json({"kind": "item", **row}) + "\n")
        fh.write(canonical_json({"kind": "footer", "aggregates": aggregates}) + "\n")
    return path


@dataclass(frozen=True)
class Ledger:
    """Parsed view of a ledger file."""

    path: Path
    config: dict[str, Any]
    items: tuple[dict[str, Any], ...]
    aggregates: dict[str, Any]


def read_ledger(path: str | Path) -> Ledger:
    path = Path(path)
    config: dict[str, Any] | None = None
    aggregates: dict[str, Any] | None = None
    items: list[dict[str, Any]] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LedgerError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            kind = row.get("kind")
            if kind == "header":
                if row.get("format") != LEDGER_FORMAT or row.get("version") != LEDGER_VERSION:
                    raise LedgerError(
                        f"{path}: expected {LEDGER_FORMAT} v{LEDGER_VERSION}, found "
                        f"{row.get('format')!r} v{row.get('version')!r}"
                    )
                config = row["config"]
            elif kind == "item":
                items.append(row)
            elif kind == "footer":
                aggregates = row["aggregates"]
            else:
                raise LedgerError(f"{path}:{lineno}: unknown row kind {kind!r}")
    if config is None or aggregates is None:
        raise LedgerError(f"{path}: missing header or footer")
    return Ledger(path=path, config=config, items=tuple(items), aggregates=aggregates)
