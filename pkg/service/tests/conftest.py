import json

import pytest

from toydata import TOY_DOCS


@pytest.fixture
def toy_corpus_file(tmp_path):
    path = tmp_path / "corpus.jsonl"
    with path.open("w", encoding="utf-8") as fh:
        for doc_id, text in TOY_DOCS:
            fh.write(json.dumps({"id": doc_id, "text": text}) + "\n")
    return path


@pytest.fixture
def empty_corpus_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    return path
