import csv
import json

import pytest

from certgate.core import QAItem
from certgate.dataset import save_dataset
from certgate.gateway import ModelSpec
from certgate.pipeline import RunConfig, run_experiment, run_reliance
from certgate.prompts import StrategyId
from certgate.report import write_reports
from helpers import scripted_model


@pytest.fixture
def run_ledgers(tmp_path):
    """One elicit, one static, one adaptive, one reliance ledger."""
    items = [
        QAItem(id=f"q{i}", question=f"question {i}", gold_answers=(f"answer{i}",),
               gold_document=f"answer{i} background text.")
        for i in range(4)
    ]
    dataset = tmp_path / "data.jsonl"
    save_dataset(items, dataset)
    table = {
        f"question {i}": {
            "vanilla": f"answer{i}\nCertainty: {'certain' if i % 2 else 'uncertain'}",
            "punish_explain": f"answer{i}\nCertainty: certain",
        }
        for i in range(4)
    }

    def model():
        return ModelSpec(backend="scripted_mock", model_name="mock",
                         script=scripted_model(table, ra=lambda q, d: d.split()[0]))

    ledgers = []
    for name, kwargs in [
        ("elicit", {"ra_mode": "none"}),
        ("static", {"ra_mode": "static", "retriever": "gold"}),
        ("adaptive", {"ra_mode": "adaptive", "retriever": "gold"}),
    ]:
        config = RunConfig(dataset=str(dataset), model=model(),
                           strategy=StrategyId.VANILLA,
                           out_dir=tmp_path / name, **kwargs)
        ledgers.append(run_experiment(config).ledger_path)
    reliance = RunConfig(dataset=str(dataset), model=model(), out_dir=tmp_path / "reliance")
    ledgers.append(run_reliance(reliance).ledger_path)
    return ledgers


class TestWriteReports:
    def test_emits_all_outputs(self, run_ledgers, tmp_path):
        out = tmp_path / "report"
        written = write_reports(run_ledgers, out)
        names = {p.name for p in written}
        assert {"report.json", "report.csv", "report.md"}  <= names
        assert any(p.suffix == ".png" for p in written)

    def test_json_is_standard_and_complete(self, run_ledgers, tmp_path):
        write_reports(run_ledgers, tmp_path / "report", render_figures=False)
        payload = json.loads((tmp_path / "report" / "report.json").read_text("utf-8"))
        assert len(payload["runs"]) == 4
        adaptive = [r for r in payload["runs"] if r["aggregates"]["ra_mode"] == "adaptive"][0]
        assert adaptive["aggregates"]["ra_rate"] == adaptive["aggregates"]["metrics"]["unc_rate"]

    def test_markdown_column_order(self, run_ledgers, tmp_path):
        write_reports(run_ledgers, tmp_path / "report", render_figures=False)
        md = (tmp_path / "report" / "report.md").read_text("utf-8")
        assert "| Run | Unc-rate | Acc | Conserv. | Overconf. | Alignment |" in md
        assert "| RA Rate |" in md
        assert "| None |" in md
        assert "| Gold |" in md
        assert "Document reliance by confidence level" in md

    def test_csv_parses(self, run_ledgers, tmp_path):
        write_reports(run_ledgers, tmp_path / "report", render_figures=False)
        with (tmp_path / "report" / "report.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert rows[0]["unc_rate"] != ""

    def test_rerun_is_byte_identical(self, run_ledgers, tmp_path):
        first = tmp_path / "report-a"
        second = tmp_path / "report-b"
        write_reports(run_ledgers, first, render_figures=False)
        write_reports(run_ledgers, second, render_figures=False)
        for name in ("report.json", "report.csv", "report.md"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_requires_ledgers(self, tmp_path):
        with pytest.raises(ValueError):
            write_reports([], tmp_path / "report")
