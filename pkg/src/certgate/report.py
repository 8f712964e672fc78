"""Report generation from run ledgers.

Emits a machine-readable JSON report, a delimited CSV of all metric
columns, a human-readable Markdown report whose tables keep the column
order Unc-rate, Acc, Conserv., Overconf., Alignment, and (optionally)
rendered figures. Re-running on the same ledgers reproduces the text
outputs byte for byte.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Any, Sequence

from . import figures
from .ledger import Ledger, canonical_json, read_ledger

REPORT_FORMAT = "certgate-report"
REPORT_VERSION = 1

_STRATEGY_COLUMNS = ("vanilla", "punish", "challenge", "step_by_step",
                     "generate", "explain", "punish_explain")
_RETRIEVER_ROWS = ("sparse", "dense", "gold", "corrupt")


def _label(ledger: Ledger) -> str:
    cfg = ledger.config
    parts = [Path(cfg.get("dataset", "?")).stem, cfg.get("model", {}).get("model_name", "?")]
    mode = ledger.aggregates.get("ra_mode", "none")
    if mode == "reliance":
        parts.append("reliance")
    elif mode == "none":
        parts.append(cfg.get("strategy", "?"))
    else:
        parts.append(f"{mode}-{cfg.get('retriever')}")
        if mode == "adaptive":
            parts.append(cfg.get("strategy", "?"))
    return "/".join(str(p) for p in parts)


def _fmt(value: Any, places: int = 4) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.{places}f}"
    return str(value)


def _boundary_section(ledgers: Sequence[Ledger]) -> tuple[str, list[tuple[str, dict]]]:
    rows = []
    for ledger in ledgers:
        metrics = ledger.aggregates.get("metrics")
        if metrics:
            rows.append((_label(ledger), metrics))
    if not rows:
        return "", []
    lines = [
        "## Knowledge-boundary metrics",
        "",
        "| Run | Unc-rate | Acc | Conserv. | Overconf. | Alignment | N |",
        "|---|---|---|---|---|---|---|",
    ]
    for name, m in rows:
        lines.append(
            f"| {name} | {_fmt(m['unc_rate'])} | {_fmt(m['accuracy'])} "
            f"| {_fmt(m['conservativeness'])} | {_fmt(m['overconfidence'])} "
            f"| {_fmt(m['alignment'])} | {m['n']} |"
        )
    return "\n".join(lines) + "\n", rows


def _ra_table(ledgers: Sequence[Ledger]) -> tuple[str, tuple, list] | None:
    """Pivot RA ledgers into the RA Rate / None / retriever-rows layout."""
    ra = [l for l in ledgers if l.aggregates.get("ra_mode") in ("static", "adaptive")]
    if not ra:
        return None
    adaptive_strategies = []
    for ledger in ra:
        if ledger.aggregates["ra_mode"] == "adaptive":
            s = ledger.config.get("strategy")
            if s not in adaptive_strategies:
                adaptive_strategies.append(s)
    adaptive_strategies.sort(
        key=lambda s: _STRATEGY_COLUMNS.index(s) if s in _STRATEGY_COLUMNS else 99
    )
    columns = ["Static"] + adaptive_strategies

    def cell(mode: str, strategy: str | None, retriever: str) -> float | None:
        for ledger in ra:
            if ledger.aggregates["ra_mode"] != mode:
                continue
            if mode == "adaptive" and ledger.config.get("strategy") != strategy:
                continue
            if ledger.config.get("retriever") != retriever:
                continue
            return ledger.aggregates.get("accuracy")
        return None

    def column_cells(fn) -> list:
        out = [fn("static", None)]
        out.extend(fn("adaptive", s) for s in adaptive_strategies)
        return out

    ra_rate_row = column_cells(
        lambda mode, strategy: next(
            (
                l.aggregates.get("ra_rate")
                for l in ra
                if l.aggregates["ra_mode"] == mode
                and (mode == "static" or l.config.get("strategy") == strategy)
            ),
            None,
        )
    )
    none_row = column_cells(
        lambda mode, strategy: next(
            (
                (l.aggregates.get("metrics") or {}).get("accuracy")
                for l in ra
                if l.aggregates["ra_mode"] == mode
                and mode == "adaptive"
                and l.config.get("strategy") == strategy
            ),
            None,
        )
    )
    retriever_rows = []
    for retriever in _RETRIEVER_ROWS:
        values = column_cells(lambda mode, strategy, r=retriever: cell(mode, strategy, r))
        if any(v is not None for v in values):
            retriever_rows.append((retriever.capitalize(), values))

    lines = ["## Retrieval augmentation", "", "| Retrieval | " + " | ".join(columns) + " |",
             "|---" * (len(columns) + 1) + "|"]
    rate_cells = [("-" if v is None else f"{100 * v:.1f}%") for v in ra_rate_row]
    lines.append("| RA Rate | " + " | ".join(rate_cells) + " |")
    lines.append("| None | " + " | ".join(_fmt(v, 3) for v in none_row) + " |")
    for name, values in retriever_rows:
        lines.append(f"| {name} | " + " | ".join(_fmt(v, 3) for v in values) + " |")
    return "\n".join(lines) + "\n", tuple(columns), [("None", none_row)] + retriever_rows


def _reliance_section(ledgers: Sequence[Ledger]) -> tuple[str, list[Ledger]]:
    rel = [l for l in ledgers if l.aggregates.get("ra_mode") == "reliance"]
    if not rel:
        return "", []
    blocks = []
    for ledger in rel:
        agg = ledger.aggregates
        lines = [
            f"## Document reliance by confidence level ({_label(ledger)})",
            "",
            "| Level | Items | Utilization ratio | Corruption rate |",
            "|---|---|---|---|",
        ]
        sizes = agg.get("sizes_by_level", {})
        util = agg.get("utilization_by_level", {})
        corr = agg.get("corruption_by_level", {})
        for level in sorted(sizes, key=int):
            lines.append(
                f"| {level} | {sizes[level]} | {_fmt(util.get(level))} "
                f"| {_fmt(corr.get(level))} |"
            )
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks), rel


def _csv_text(ledgers: Sequence[Ledger]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["label", "dataset", "model", "strategy", "ra_mode", "retriever", "n",
         "skipped", "unc_rate", "accuracy", "conservativeness", "overconfidence",
         "alignment", "final_accuracy", "ra_rate"]
    )
    for ledger in ledgers:
        cfg, agg = ledger.config, ledger.aggregates
        metrics = agg.get("metrics") or {}
        writer.writerow(
            [
                _label(ledger),
                cfg.get("dataset"),
                cfg.get("model", {}).get("model_name"),
                cfg.get("strategy"),
                agg.get("ra_mode"),
                cfg.get("retriever"),
                agg.get("completed"),
                agg.get("skipped"),
                metrics.get("unc_rate", ""),
                metrics.get("accuracy", ""),
                metrics.get("conservativeness", ""),
                metrics.get("overconfidence", ""),
                metrics.get("alignment", ""),
                agg.get("accuracy", ""),
                agg.get("ra_rate", ""),
            ]
        )
    return buf.getvalue()


def write_reports(
    ledger_paths: Sequence[str | Path],
    out_dir: str | Path,
    *,
    render_figures: bool = True,
) -> list[Path]:
    """Generate report files from one or more ledgers; returns written paths."""
    if not ledger_paths:
        raise ValueError("at least one ledger is required")
    ledgers = [read_ledger(p) for p in ledger_paths]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    payload = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "runs": [
            {"label": _label(l), "config": l.config, "aggregates": l.aggregates}
            for l in ledgers
        ],
    }
    json_path = out / "report.json"
    json_path.write_text(canonical_json(payload) + "\n", encoding="utf-8")
    written.append(json_path)

    csv_path = out / "report.csv"
    csv_path.write_text(_csv_text(ledgers), encoding="utf-8")
    written.append(csv_path)

    sections = ["# Run report\n"]
    boundary_md, boundary_rows = _boundary_section(ledgers)
    if boundary_md:
        sections.append(boundary_md)
    ra = _ra_table(ledgers)
    if ra:
        sections.append(ra[0])
    reliance_md, reliance_ledgers = _reliance_section(ledgers)
    if reliance_md:
        sections.append(reliance_md)
    md_path = out / "report.md"
    md_path.write_text("\n".join(sections), encoding="utf-8")
    written.append(md_path)

    if render_figures:
        fig_dir = out / "figures"
        fig_dir.mkdir(exist_ok=True)
        if boundary_rows:
            written.append(
                figures.boundary_metrics_figure(boundary_rows, fig_dir / "boundary_metrics.png")
            )
        if ra:
            _, columns, rows = ra
            numeric_rows = [(n, v) for n, v in rows if any(x is not None for x in v)]
            if numeric_rows:
                written.append(
                    figures.ra_accuracy_figure(columns, numeric_rows, fig_dir / "ra_accuracy.png")
                )
        for i, ledger in enumerate(reliance_ledgers):
            agg = ledger.aggregates
            written.append(
                figures.reliance_figure(
                    {int(k): v for k, v in agg.get("utilization_by_level", {}).items()},
                    {int(k): v for k, v in agg.get("corruption_by_level", {}).items()},
                    fig_dir / f"reliance_levels_{i}.png",
                )
            )
    return written
