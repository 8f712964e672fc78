"""Experiment orchestration.

Wires prompts, the model gateway, parsing, retrieval, and metrics into
four run modes: plain certainty elicitation, static retrieval
augmentation, certainty-gated adaptive augmentation, and the
document-reliance study. Every mode writes a run ledger with one row per
dataset item and an aggregate footer.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Callable, Sequence

from .core import UNCERTAIN, ModelTurn, OutcomeTally, QAItem, RetrievalHit
from .dataset import EmptyDataset, load_dataset
from .gateway import GatewayError, LLMGateway, ModelSpec, ResponseCache
from .ledger import canonical_json, hit_to_dict, turn_to_dict, write_ledger
from .metrics import (
    RelianceRecord,
    boundary_metrics,
    bucket_by_level,
    bucket_sizes,
    confidence_level,
    corruption_rate,
    utilization_ratio,
)
from .parsing import Unparseable, answer_is_correct, parse_answer, parse_certainty
from .prompts import PromptTemplate, StrategyId, challenge_followup, load_templates, render
from .retrieval import (
    Bm25Params,
    CorruptRetriever,
    DenseRetriever,
    GoldRetriever,
    Retriever,
    RetrieverUnavailable,
    SparseRetriever,
    corrupt_document,
    load_index,
)

log = logging.getLogger(__name__)

RA_MODES = ("none", "static", "adaptive")
RETRIEVER_KINDS = ("sparse", "dense", "gold", "corrupt")


@dataclass
class RunConfig:
    """Everything that identifies one experiment run.

    Output and cache locations are run plumbing, not experiment identity,
    and are excluded from the ledger's config snapshot.
    """

    dataset: str
    model: ModelSpec
    strategy: StrategyId = StrategyId.VANILLA
    ra_mode: str = "none"
    retriever: str | None = None
    gamma: float = 0.0
    seed: int = 0
    workers: int = 4
    out_dir: str | Path = "run-out"
    cache_dir: str | Path | None = None
    templates_path: str | None = None
    hedge_phrases: tuple[str, ...] | None = None
    stopwords: frozenset[str] | None = None
    unparseable_certainty: int | None = 1
    index_path: str | None = None
    dense_endpoint: str | None = None
    bm25: Bm25Params = field(default_factory=Bm25Params)
    retriever_fault_policy: str = "fallback"  # or "skip"

    def __post_init__(self) -> None:
        self.strategy = StrategyId(self.strategy)
        if self.ra_mode not in RA_MODES:
            raise ValueError(f"ra_mode must be one of {RA_MODES}")
        if self.ra_mode != "none":
            if self.retriever not in RETRIEVER_KINDS:
                raise ValueError(f"retriever must be one of {RETRIEVER_KINDS} for ra runs")
        if self.ra_mode == "adaptive" and self.strategy is StrategyId.RA_ANSWER:
            raise ValueError("adaptive gating needs a certainty-eliciting strategy")
        if self.retriever_fault_policy not in ("fallback", "skip"):
            raise ValueError("retriever_fault_policy must be 'fallback' or 'skip'")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def snapshot(self) -> dict[str, Any]:
        return {
            "dataset": str(self.dataset),
            "model": self.model.snapshot(),
            "strategy": self.strategy.value,
            "ra_mode": self.ra_mode,
            "retriever": self.retriever,
            "gamma": self.gamma,
            "seed": self.seed,
            "workers": self.workers,
            "templates": self.templates_path or "default",
            "hedge_phrases": list(self.hedge_phrases) if self.hedge_phrases else "default",
            "unparseable_certainty": self.unparseable_certainty,
            "retriever_fault_policy": self.retriever_fault_policy,
        }


@dataclass
class ItemRecord:
    """Ledger row for one dataset item."""

    item_id: str
    turns: list[ModelTurn] = field(default_factory=list)
    answer: str = ""
    certainty: int | None = None
    correct: bool | None = None
    gate_answer: str | None = None
    gate_correct: bool | None = None
    triggered: bool = False
    fallback: bool = False
    retrieval: RetrievalHit | None = None
    skipped: bool = False
    error: str | None = None
    warnings: tuple[str, ...] = ()

    def to_row(self) -> dict[str, Any]:
        return {
            "id": self.item_id,
            "turns": [turn_to_dict(t) for t in self.turns],
            "answer": self.answer,
            "certainty": self.certainty,
            "correct": self.correct,
            "gate_answer": self.gate_answer,
            "gate_correct": self.gate_correct,
            "triggered": self.triggered,
            "fallback": self.fallback,
            "retrieval": hit_to_dict(self.retrieval) if self.retrieval else None,
            "skipped": self.skipped,
            "error": self.error,
            "warnings": list(self.warnings),
        }


@dataclass
class StrategyOutcome:
    turns: list[ModelTurn]
    answer: str
    certainty: int
    warnings: tuple[str, ...]


def _parse_flag(
    raw: str,
    template: PromptTemplate,
    hedges: tuple[str, ...] | None,
    default: int | None,
    warnings: list[str],
    item_id: str,
) -> int:
    try:
        return parse_certainty(raw, template.output_contract, hedges)
    except Unparseable:
        if default is None:
            raise
        warnings.append(f"unparseable certainty, defaulted to {default}")
        log.warning("item %s: unparseable certainty, defaulting to %d", item_id, default)
        return default


def run_certainty_strategy(
    gateway: LLMGateway,
    templates: dict[StrategyId, PromptTemplate],
    strategy: StrategyId,
    item: QAItem,
    *,
    hedges: tuple[str, ...] | None = None,
    unparseable_certainty: int | None = 1,
) -> StrategyOutcome:
    """Run one certainty-eliciting strategy for one item.

    Challenge is a two-turn protocol: the answer comes from the first
    turn, the final certainty from the follow-up.
    """
    if strategy is StrategyId.RA_ANSWER:
        raise ValueError("ra_answer is not a certainty-eliciting strategy")
    template = templates[strategy]
    warnings: list[str] = []
    prompt = render(template, item.question)
    raw = gateway.complete(prompt, turn_index=0)
    answer = parse_answer(raw, template.output_contract)
    flag = _parse_flag(raw, template, hedges, unparseable_certainty, warnings, item.id)
    turns = [
        ModelTurn(
            strategy=strategy.value,
            rendered_prompt=prompt,
            raw_completion=raw,
            answer=answer,
            certainty=flag,
            decode_params=gateway.spec.decode,
        )
    ]
    if strategy is StrategyId.CHALLENGE:
        followup = challenge_followup(turns[0])
        raw2 = gateway.complete(followup, turn_index=1)
        flag = _parse_flag(raw2, template, hedges, unparseable_certainty, warnings, item.id)
        turns.append(
            ModelTurn(
                strategy=strategy.value,
                rendered_prompt=followup,
                raw_completion=raw2,
                answer=parse_answer(raw2, template.output_contract),
                certainty=flag,
                decode_params=gateway.spec.decode,
            )
        )
    return StrategyOutcome(turns=turns, answer=answer, certainty=flag,
                           warnings=tuple(warnings))


def _ra_turn(
    gateway: LLMGateway,
    templates: dict[StrategyId, PromptTemplate],
    item: QAItem,
    document: str,
) -> tuple[ModelTurn, str]:
    template = templates[StrategyId.RA_ANSWER]
    prompt = render(template, item.question, document)
    raw = gateway.complete(prompt, turn_index=0)
    answer = parse_answer(raw, template.output_contract)
    turn = ModelTurn(
        strategy=StrategyId.RA_ANSWER.value,
        rendered_prompt=prompt,
        raw_completion=raw,
        answer=answer,
        certainty=None,
        decode_params=gateway.spec.decode,
    )
    return turn, answer


def _pool_map(fn: Callable[[QAItem], Any], items: Sequence[QAItem], workers: int) -> list[Any]:
    # Results are collected in dataset order regardless of scheduling.
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _skipped(item: QAItem, exc: Exception) -> ItemRecord:
    return ItemRecord(item_id=item.id, skipped=True, error=f"{type(exc).__name__}: {exc}")


@dataclass
class ElicitResult:
    records: list[ItemRecord]
    tally: OutcomeTally

    @property
    def skipped(self) -> int:
        return sum(r.skipped for r in self.records)


def elicit(
    items: Sequence[QAItem],
    gateway: LLMGateway,
    templates: dict[StrategyId, PromptTemplate],
    strategy: StrategyId,
    *,
    workers: int = 1,
    hedges: tuple[str, ...] | None = None,
    unparseable_certainty: int | None = 1,
) -> ElicitResult:
    """Elicit answer and certainty for every item; tally the outcomes.

    Items whose backend call fails are recorded as skipped, never
    dropped; the tally covers completed items only.
    """
    if not items:
        raise EmptyDataset("no items to elicit")

    def one(item: QAItem) -> ItemRecord:
        try:
            outcome = run_certainty_strategy(
                gateway, templates, strategy, item,
                hedges=hedges, unparseable_certainty=unparseable_certainty,
            )
        except (GatewayError, Unparseable) as exc:
            return _skipped(item, exc)
        correct = answer_is_correct(outcome.answer, item.gold_answers)
        return ItemRecord(
            item_id=item.id,
            turns=outcome.turns,
            answer=outcome.answer,
            certainty=outcome.certainty,
            correct=correct,
            warnings=outcome.warnings,
        )

    records = _pool_map(one, items, workers)
    tally = OutcomeTally()
    for record in records:
        if not record.skipped:
            tally = tally.add(bool(record.correct), record.certainty == 1)
    return ElicitResult(records=records, tally=tally)


def _retrieve(
    retriever: Retriever, item: QAItem, policy: str, warnings: list[str]
) -> tuple[RetrievalHit | None, bool]:
    """Call the retriever; apply the configured fault policy."""
    try:
        return retriever.top1(item), False
    except RetrieverUnavailable as exc:
        if policy == "skip":
            raise
        warnings.append(f"retriever unavailable, answered without augmentation: {exc}")
        log.warning("item %s: %s", item.id, exc)
        return None, True


def answer_adaptive(
    item: QAItem,
    gateway: LLMGateway,
    templates: dict[StrategyId, PromptTemplate],
    gate_strategy: StrategyId,
    retriever: Retriever,
    *,
    hedges: tuple[str, ...] | None = None,
    unparseable_certainty: int | None = 1,
    fault_policy: str = "fallback",
) -> ItemRecord:
    """Certainty-gated answering for one item.

    A certain first pass is final and makes no retrieval call; an
    uncertain one triggers top-1 retrieval and a document-augmented
    answer. A retriever that yields nothing falls back to the plain
    answer, with the fallback recorded.
    """
    outcome = run_certainty_strategy(
        gateway, templates, gate_strategy, item,
        hedges=hedges, unparseable_certainty=unparseable_certainty,
    )
    warnings = list(outcome.warnings)
    gate_correct = answer_is_correct(outcome.answer, item.gold_answers)
    turns = list(outcome.turns)
    final = outcome.answer
    triggered = fallback = False
    hit: RetrievalHit | None = None
    if outcome.certainty == UNCERTAIN:
        triggered = True
        hit, _fault = _retrieve(retriever, item, fault_policy, warnings)
        if hit is None:
            fallback = True
        else:
            turn, final = _ra_turn(gateway, templates, item, hit.text)
            turns.append(turn)
    return ItemRecord(
        item_id=item.id,
        turns=turns,
        answer=final,
        certainty=outcome.certainty,
        correct=answer_is_correct(final, item.gold_answers),
        gate_answer=outcome.answer,
        gate_correct=gate_correct,
        triggered=triggered,
        fallback=fallback,
        retrieval=hit,
        warnings=tuple(warnings),
    )


def answer_static(
    item: QAItem,
    gateway: LLMGateway,
    templates: dict[StrategyId, PromptTemplate],
    retriever: Retriever,
    *,
    fallback_strategy: StrategyId = StrategyId.VANILLA,
    hedges: tuple[str, ...] | None = None,
    unparseable_certainty: int | None = 1,
    fault_policy: str = "fallback",
) -> ItemRecord:
    """Always-retrieve answering for one item."""
    warnings: list[str] = []
    hit, _fault = _retrieve(retriever, item, fault_policy, warnings)
    turns: list[ModelTurn] = []
    fallback = hit is None
    if hit is None:
        outcome = run_certainty_strategy(
            gateway, templates, fallback_strategy, item,
            hedges=hedges, unparseable_certainty=unparseable_certainty,
        )
        warnings.extend(outcome.warnings)
        turns.extend(outcome.turns)
        final = outcome.answer
    else:
        turn, final = _ra_turn(gateway, templates, item, hit.text)
        turns.append(turn)
    return ItemRecord(
        item_id=item.id,
        turns=turns,
        answer=final,
        certainty=None,
        correct=answer_is_correct(final, item.gold_answers),
        triggered=True,
        fallback=fallback,
        retrieval=hit,
        warnings=tuple(warnings),
    )


@dataclass
class RelianceItemRecord:
    """Ledger row for one item of the reliance study."""

    item_id: str
    level: int | None = None
    certainty_first: int | None = None
    certainty_second: int | None = None
    plain_answer: str = ""
    plain_correct: bool | None = None
    gold_answer: str = ""
    gold_correct: bool | None = None
    corrupt_answer: str = ""
    corrupt_correct: bool | None = None
    gold_document: str = ""
    corrupt_document: str = ""
    turns: list[ModelTurn] = field(default_factory=list)
    skipped: bool = False
    error: str | None = None
    warnings: tuple[str, ...] = ()

    def to_row(self) -> dict[str, Any]:
        return {
            "id": self.item_id,
            "level": self.level,
            "certainty_first": self.certainty_first,
            "certainty_second": self.certainty_second,
            "plain_answer": self.plain_answer,
            "plain_correct": self.plain_correct,
            "gold_answer": self.gold_answer,
            "gold_correct": self.gold_correct,
            "corrupt_answer": self.corrupt_answer,
            "corrupt_correct": self.corrupt_correct,
            "gold_document": self.gold_document,
            "corrupt_document": self.corrupt_document,
            "turns": [turn_to_dict(t) for t in self.turns],
            "skipped": self.skipped,
            "error": self.error,
            "warnings": list(self.warnings),
        }


@dataclass
class RelianceResult:
    records: list[RelianceItemRecord]
    utilization_by_level: dict[int, float]
    corruption_by_level: dict[int, float]
    sizes_by_level: dict[int, int]

    @property
    def skipped(self) -> int:
        return sum(r.skipped for r in self.records)


def reliance_study(
    items: Sequence[QAItem],
    gateway: LLMGateway,
    templates: dict[StrategyId, PromptTemplate],
    *,
    gamma: float = 0.0,
    workers: int = 1,
    hedges: tuple[str, ...] | None = None,
    unparseable_certainty: int | None = 1,
    stopwords: frozenset[str] | None = None,
) -> RelianceResult:
    """Four-level reliance study over gold-document items.

    Per item: certainty under the vanilla and punish_explain strategies
    fixes the confidence level; the item is then answered once with its
    gold document and once with the corrupted document. Utilization is
    bucketed over the gold pass, corruption rate over the corrupt pass.
    Items without a gold document are recorded as skipped.
    """
    if not items:
        raise EmptyDataset("no items for the reliance study")

    def one(item: QAItem) -> RelianceItemRecord:
        if not item.gold_document:
            return RelianceItemRecord(item_id=item.id, skipped=True,
                                      error="no gold document")
        try:
            first = run_certainty_strategy(
                gateway, templates, StrategyId.VANILLA, item,
                hedges=hedges, unparseable_certainty=unparseable_certainty,
            )
            second = run_certainty_strategy(
                gateway, templates, StrategyId.PUNISH_EXPLAIN, item,
                hedges=hedges, unparseable_certainty=unparseable_certainty,
            )
            gold_doc = item.gold_document
            corrupt_doc = corrupt_document(gold_doc, item.gold_answers)
            gold_turn, gold_answer = _ra_turn(gateway, templates, item, gold_doc)
            corrupt_turn, corrupt_answer = _ra_turn(gateway, templates, item, corrupt_doc)
        except (GatewayError, Unparseable) as exc:
            return RelianceItemRecord(item_id=item.id, skipped=True,
                                      error=f"{type(exc).__name__}: {exc}")
        return RelianceItemRecord(
            item_id=item.id,
            level=confidence_level(first.certainty, second.certainty),
            certainty_first=first.certainty,
            certainty_second=second.certainty,
            plain_answer=first.answer,
            plain_correct=answer_is_correct(first.answer, item.gold_answers),
            gold_answer=gold_answer,
            gold_correct=answer_is_correct(gold_answer, item.gold_answers),
            corrupt_answer=corrupt_answer,
            corrupt_correct=answer_is_correct(corrupt_answer, item.gold_answers),
            gold_document=gold_doc,
            corrupt_document=corrupt_doc,
            turns=first.turns + second.turns + [gold_turn, corrupt_turn],
            warnings=first.warnings + second.warnings,
        )

    records = _pool_map(one, items, workers)
    gold_records = [
        RelianceRecord(r.item_id, r.level, r.plain_answer, r.gold_answer,
                       r.gold_document, bool(r.plain_correct), bool(r.gold_correct))
        for r in records if not r.skipped
    ]
    corrupt_records = [
        RelianceRecord(r.item_id, r.level, r.plain_answer, r.corrupt_answer,
                       r.corrupt_document, bool(r.plain_correct), bool(r.corrupt_correct))
        for r in records if not r.skipped
    ]
    utilization = bucket_by_level(
        gold_records, partial(utilization_ratio, gamma=gamma, stopwords=stopwords)
    )
    corruption = bucket_by_level(corrupt_records, corruption_rate)
    return RelianceResult(
        records=records,
        utilization_by_level=utilization,
        corruption_by_level=corruption,
        sizes_by_level=bucket_sizes(gold_records),
    )


def build_retriever(config: RunConfig) -> Retriever:
    kind = config.retriever
    if kind == "sparse":
        if not config.index_path:
            raise ValueError("sparse retriever needs index_path")
        return SparseRetriever(load_index(config.index_path), config.bm25)
    if kind == "dense":
        if not config.dense_endpoint:
            raise ValueError("dense retriever needs dense_endpoint")
        return DenseRetriever(config.dense_endpoint)
    if kind == "gold":
        return GoldRetriever()
    if kind == "corrupt":
        return CorruptRetriever()
    raise ValueError(f"unknown retriever kind {kind!r}")


def build_gateway(config: RunConfig) -> LLMGateway:
    cache = None
    if config.cache_dir is not None:
        cache = ResponseCache(Path(config.cache_dir) / "cache.jsonl")
    return LLMGateway(config.model, cache)


@dataclass
class RunResult:
    ledger_path: Path
    aggregates: dict[str, Any]
    records: list[Any]


def _char_totals(records: Sequence[Any]) -> tuple[int, int]:
    prompt_chars = completion_chars = 0
    for record in records:
        for turn in record.turns:
            prompt_chars += len(turn.rendered_prompt)
            completion_chars += len(turn.raw_completion)
    return prompt_chars, completion_chars


def _base_aggregates(
    records: Sequence[Any], gateway: LLMGateway, retriever: Retriever | None
) -> dict[str, Any]:
    prompt_chars, completion_chars = _char_totals(records)
    return {
        "items": len(records),
        "completed": sum(not r.skipped for r in records),
        "skipped": sum(r.skipped for r in records),
        "retriever_calls": retriever.calls if retriever else 0,
        "cache_hits": gateway.cache_hits,
        "network_requests": gateway.network_requests,
        "prompt_chars": prompt_chars,
        "completion_chars": completion_chars,
    }


def _metrics_dict(tally: OutcomeTally) -> dict[str, Any] | None:
    if tally.total == 0:
        return None
    m = boundary_metrics(tally)
    return {
        "unc_rate": m.unc_rate,
        "accuracy": m.accuracy,
        "conservativeness": m.conservativeness,
        "overconfidence": m.overconfidence,
        "alignment": m.alignment,
        "n": m.n,
    }


def run_experiment(config: RunConfig) -> RunResult:
    """Execute one elicit / static-RA / adaptive-RA run and write its ledger."""
    started = time.time()
    items = load_dataset(config.dataset)
    if not items:
        raise EmptyDataset(f"dataset {config.dataset} is empty")
    if config.retriever == "corrupt" and not any(i.gold_document for i in items):
        raise ValueError("corrupt retriever requires gold documents in the dataset")
    templates = load_templates(config.templates_path)
    gateway = build_gateway(config)
    retriever = build_retriever(config) if config.ra_mode != "none" else None

    if config.ra_mode == "none":
        result = elicit(
            items, gateway, templates, config.strategy,
            workers=config.workers, hedges=config.hedge_phrases,
            unparseable_certainty=config.unparseable_certainty,
        )
        records: list[ItemRecord] = result.records
        tally = result.tally
    else:
        if config.ra_mode == "adaptive":
            one = lambda item: answer_adaptive(  # noqa: E731
                item, gateway, templates, config.strategy, retriever,
                hedges=config.hedge_phrases,
                unparseable_certainty=config.unparseable_certainty,
                fault_policy=config.retriever_fault_policy,
            )
        else:
            one = lambda item: answer_static(  # noqa: E731
                item, gateway, templates, retriever,
                fallback_strategy=config.strategy, hedges=config.hedge_phrases,
                unparseable_certainty=config.unparseable_certainty,
                fault_policy=config.retriever_fault_policy,
            )

        def guarded(item: QAItem) -> ItemRecord:
            try:
                return one(item)
            except (GatewayError, Unparseable, RetrieverUnavailable) as exc:
                return _skipped(item, exc)

        records = _pool_map(guarded, items, config.workers)
        tally = OutcomeTally()
        for record in records:
            if not record.skipped and record.certainty is not None:
                tally = tally.add(bool(record.gate_correct), record.certainty == 1)

    completed = [r for r in records if not r.skipped]
    aggregates = _base_aggregates(records, gateway, retriever)
    n = len(completed)
    triggered = sum(r.triggered for r in completed)
    final_correct = sum(bool(r.correct) for r in completed)
    aggregates.update(
        {
            "ra_mode": config.ra_mode,
            "tally": {"n_cc": tally.n_cc, "n_cu": tally.n_cu,
                      "n_ic": tally.n_ic, "n_iu": tally.n_iu},
            "metrics": _metrics_dict(tally),
            "accuracy": (final_correct / n) if n else None,
            "ra_rate": (triggered / n) if n else None,
            "triggered": triggered,
            "fallbacks": sum(r.fallback for r in completed),
        }
    )
    out_dir = Path(config.out_dir)
    ledger_path = write_ledger(
        out_dir / "ledger.jsonl", config.snapshot(),
        (r.to_row() for r in records), aggregates,
    )
    _write_run_meta(out_dir, started)
    return RunResult(ledger_path=ledger_path, aggregates=aggregates, records=records)


def run_reliance(config: RunConfig) -> RunResult:
    """Execute the reliance study and write its ledger."""
    started = time.time()
    items = load_dataset(config.dataset)
    if not items:
        raise EmptyDataset(f"dataset {config.dataset} is empty")
    templates = load_templates(config.templates_path)
    gateway = build_gateway(config)
    result = reliance_study(
        items, gateway, templates,
        gamma=config.gamma, workers=config.workers, hedges=config.hedge_phrases,
        unparseable_certainty=config.unparseable_certainty, stopwords=config.stopwords,
    )
    aggregates = _base_aggregates(result.records, gateway, None)
    aggregates.update(
        {
            "ra_mode": "reliance",
            "gamma": config.gamma,
            "utilization_by_level": {str(k): v for k, v in result.utilization_by_level.items()},
            "corruption_by_level": {str(k): v for k, v in result.corruption_by_level.items()},
            "sizes_by_level": {str(k): v for k, v in result.sizes_by_level.items()},
        }
    )
    out_dir = Path(config.out_dir)
    ledger_path = write_ledger(
        out_dir / "ledger.jsonl", config.snapshot(),
        (r.to_row() for r in result.records), aggregates,
    )
    _write_run_meta(out_dir, started)
    return RunResult(ledger_path=ledger_path, aggregates=aggregates, records=result.records)


def _write_run_meta(out_dir: Path, started: float) -> None:
    # Kept out of the ledger so deterministic backends reproduce bytes.
    meta = {"wall_seconds": time.time() - started}
    (out_dir / "run_meta.json").write_text(canonical_json(meta) + "\n", encoding="utf-8")
