"""Command-line interface.

Subcommands cover the full workflow: corpus ingestion, dataset conversion
and sampling, certainty elicitation, static/adaptive retrieval runs, the
reliance study, report generation, and retriever precision checks.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import CertgateError, DecodeParams
from .dataset import convert_dataset, load_dataset, sample_dataset, save_dataset
from .gateway import ModelSpec
from .ledger import canonical_json
from .parsing import load_hedge_phrases
from .pipeline import RunConfig, run_experiment, run_reliance
from .prompts import StrategyId
from .report import write_reports
from .retrieval import (
    Bm25Params,
    DenseRetriever,
    GoldRetriever,
    SparseRetriever,
    ingest,
    load_index,
    precision_at_1,
    save_index,
)

_BACKENDS = {"remote": "remote_chat", "mock": "scripted_mock", "replay": "replay_cache_only"}


def _add_model_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("model")
    group.add_argument("--model", default="mock", help="model name (cache key component)")
    group.add_argument("--backend", choices=sorted(_BACKENDS), default="mock")
    group.add_argument("--endpoint", help="chat-completion endpoint URL (remote backend)")
    group.add_argument("--script", help="JSON file of prompt-pattern to completion rules (mock)")
    group.add_argument("--credentials-env", help="env var holding the bearer token")
    group.add_argument("--max-output-tokens", type=int, default=256)
    group.add_argument("--temperature", type=float, default=0.0)
    group.add_argument("--request-timeout", type=float, default=30.0)


def _add_run_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", required=True)
    parser.add_argument("--out", required=True, help="output directory for the ledger")
    parser.add_argument("--workers", type=int, default=4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--cache-dir", help="response cache directory")
    parser.add_argument("--templates", help="YAML template file (defaults are bundled)")
    parser.add_argument("--hedges", help="hedge-phrase file, one phrase per line")
    parser.add_argument(
        "--unparseable",
        choices=["certain", "uncertain", "skip"],
        default="certain",
        help="certainty to assume when no marker or hedge is found",
    )


def _model_spec(args: argparse.Namespace) -> ModelSpec:
    script = None
    if args.script:
        script = json.loads(Path(args.script).read_text("utf-8"))
    return ModelSpec(
        backend=_BACKENDS[args.backend],
        model_name=args.model,
        endpoint=args.endpoint,
        credentials_ref=args.credentials_env,
        decode=DecodeParams(
            max_output_tokens=args.max_output_tokens, temperature=args.temperature
        ),
        script=script,
        timeout=args.request_timeout,
    )


def _run_config(args: argparse.Namespace, **overrides) -> RunConfig:
    unparseable = {"certain": 1, "uncertain": 0, "skip": None}[args.unparseable]
    hedges = load_hedge_phrases(args.hedges) if args.hedges else None
    return RunConfig(
        dataset=args.dataset,
        model=_model_spec(args),
        workers=args.workers,
        seed=args.seed,
        out_dir=args.out,
        cache_dir=args.cache_dir,
        templates_path=args.templates,
        hedge_phrases=hedges,
        unparseable_certainty=unparseable,
        **overrides,
    )


def _cmd_ingest(args: argparse.Namespace) -> int:
    store = ingest(args.corpus)
    save_index(store, args.out)
    print(f"ingested {len(store)} documents -> {args.out}")
    return 0


def _cmd_convert(args: argparse.Namespace) -> int:
    items, stats = convert_dataset(args.src, args.format, args.max_answer_words)
    save_dataset(items, args.out)
    print(
        f"read {stats.read}, kept {stats.kept} "
        f"(dropped {stats.dropped_no_short_answer} without short answers) -> {args.out}"
    )
    return 0


def _cmd_sample(args: argparse.Namespace) -> int:
    items = load_dataset(args.dataset)
    subset = sample_dataset(items, args.n, args.seed, require_gold=args.require_gold)
    save_dataset(subset, args.out)
    print(f"sampled {len(subset)}/{len(items)} items (seed {args.seed}) -> {args.out}")
    return 0


def _print_aggregates(aggregates: dict) -> None:
    print(canonical_json(aggregates))


def _cmd_elicit(args: argparse.Namespace) -> int:
    config = _run_config(args, strategy=StrategyId(args.strategy), ra_mode="none")
    result = run_experiment(config)
    _print_aggregates(result.aggregates)
    print(f"ledger -> {result.ledger_path}")
    return 0


def _cmd_ra(args: argparse.Namespace) -> int:
    config = _run_config(
        args,
        strategy=StrategyId(args.strategy),
        ra_mode=args.ra_mode,
        retriever=args.retriever,
        gamma=args.gamma,
        index_path=args.index,
        dense_endpoint=args.dense_endpoint,
        bm25=Bm25Params(k1=args.k1, b=args.b),
        retriever_fault_policy=args.retriever_fault,
    )
    result = run_experiment(config)
    _print_aggregates(result.aggregates)
    print(f"ledger -> {result.ledger_path}")
    return 0


def _cmd_reliance(args: argparse.Namespace) -> int:
    config = _run_config(args, gamma=args.gamma)
    result = run_reliance(config)
    _print_aggregates(result.aggregates)
    print(f"ledger -> {result.ledger_path}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    written = write_reports(args.ledgers, args.out, render_figures=not args.no_figures)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_p_at_1(args: argparse.Namespace) -> int:
    items = load_dataset(args.dataset)
    if args.retriever == "sparse":
        retriever = SparseRetriever(load_index(args.index), Bm25Params(k1=args.k1, b=args.b))
    elif args.retriever == "dense":
        retriever = DenseRetriever(args.dense_endpoint)
    else:
        retriever = GoldRetriever()
    report = precision_at_1(retriever, items)
    print(
        f"P@1 {report.p_at_1:.4f} over {report.n} questions "
        f"(coverage {report.coverage:.4f}, {report.hit_contains_answer} hits contain an answer)"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="certgate",
        description="Certainty-gated retrieval augmentation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a BM25 index from a JSONL corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_ingest)

    p = sub.add_parser("convert", help="convert a public QA distribution")
    p.add_argument("--format", required=True, choices=["nq-open", "hotpotqa", "dpr"])
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-answer-words", type=int, default=6)
    p.set_defaults(fn=_cmd_convert)

    p = sub.add_parser("sample", help="seeded random subset of a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--require-gold", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_sample)

    p = sub.add_parser("elicit", help="run a certainty-eliciting strategy")
    _add_run_args(p)
    _add_model_args(p)
    p.add_argument("--strategy", default="vanilla",
                   choices=[s.value for s in StrategyId if s is not StrategyId.RA_ANSWER])
    p.set_defaults(fn=_cmd_elicit)

    p = sub.add_parser("ra", help="static or adaptive retrieval augmentation run")
    _add_run_args(p)
    _add_model_args(p)
    p.add_argument("--ra-mode", required=True, choices=["static", "adaptive"])
    p.add_argument("--retriever", required=True,
                   choices=["sparse", "dense", "gold", "corrupt"])
    p.add_argument("--strategy", default="vanilla",
                   choices=[s.value for s in StrategyId if s is not StrategyId.RA_ANSWER])
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--index", help="BM25 index file (sparse retriever)")
    p.add_argument("--dense-endpoint", help="dense retriever base URL")
    p.add_argument("--k1", type=float, default=0.9)
    p.add_argument("--b", type=float, default=0.4)
    p.add_argument("--retriever-fault", choices=["fallback", "skip"], default="fallback",
                   help="on retriever failure: answer unaugmented, or skip the item")
    p.set_defaults(fn=_cmd_ra)

    p = sub.add_parser("reliance", help="gold/corrupt document reliance study")
    _add_run_args(p)
    _add_model_args(p)
    p.add_argument("--gamma", type=float, default=0.0)
    p.set_defaults(fn=_cmd_reliance)

    p = sub.add_parser("report", help="render reports from run ledgers")
    p.add_argument("ledgers", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=_cmd_report)

    p = sub.add_parser("p-at-1", help="top-1 retriever precision over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--retriever", required=True, choices=["sparse", "dense", "gold"])
    p.add_argument("--index")
    p.add_argument("--dense-endpoint")
    p.add_argument("--k1", type=float, default=0.9)
    p.add_argument("--b", type=float, default=0.4)
    p.set_defaults(fn=_cmd_p_at_1)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CertgateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
