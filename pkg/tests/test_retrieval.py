import json
import math
import random
from collections import Counter

import pytest

from certgate.core import QAItem
from certgate.parsing import answer_is_correct
from certgate.retrieval import (
    Bm25Params,
    CorpusStore,
    CorruptRetriever,
    DenseRetriever,
    DuplicateId,
    GoldRetriever,
    IndexVersionMismatch,
    MalformedRecord,
    MalformedResponse,
    RetrieverUnavailable,
    SparseRetriever,
    bm25_top1,
    corrupt_document,
    dense_top1,
    gold_document,
    ingest,
    load_index,
    precision_at_1,
    save_index,
)
from certgate.textnorm import tokenize


def brute_force_top1(documents, params, query):
    """Independent BM25 oracle: direct per-document formula evaluation."""
    n = len(documents)
    if n == 0:
        return None
    doc_tokens = {d: tokenize(t) for d, t in documents.items()}
    avgdl = sum(len(t) for t in doc_tokens.values()) / n
    best = None
    for doc_id in sorted(documents):
        tokens = doc_tokens[doc_id]
        counts = Counter(tokens)
        score = 0.0
        for term, qtf in Counter(tokenize(query)).items():
            tf = counts.get(term, 0)
            if tf == 0:
                continue
            df = sum(1 for other in doc_tokens.values() if term in other)
            idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
            norm = tf + params.k1 * (1.0 - params.b + params.b * len(tokens) / avgdl)
            score += qtf * idf * tf * (params.k1 + 1.0) / norm
        if score > 0.0 and (best is None or score > best[1]):
            best = (doc_id, score)
    return best


def write_corpus(path, docs):
    with path.open("w", encoding="utf-8") as fh:
        for doc_id, text in docs:
            fh.write(json.dumps({"id": doc_id, "text": text}) + "\n")


class TestIngest:
    def test_three_doc_store(self, tmp_path):
        f = tmp_path / "corpus.jsonl"
        write_corpus(f, [("d1", "apple pie"), ("d2", "banana bread loaf"), ("d3", "cherry")])
        store = ingest(f)
        assert len(store) == 3
        assert store.avg_doc_len == pytest.approx((2 + 3 + 1) / 3)

    def test_duplicate_id(self, tmp_path):
        f = tmp_path / "corpus.jsonl"
        write_corpus(f, [("d1", "a"), ("d1", "b")])
        with pytest.raises(DuplicateId):
            ingest(f)

    def test_malformed_record_reports_line(self, tmp_path):
        f = tmp_path / "corpus.jsonl"
        f.write_text('{"id": "d1", "text": "ok"}\nnot json\n', encoding="utf-8")
        with pytest.raises(MalformedRecord) as err:
            ingest(f)
        assert err.value.line == 2

    def test_missing_field_reports_line(self, tmp_path):
        f = tmp_path / "corpus.jsonl"
        f.write_text('{"id": "d1"}\n', encoding="utf-8")
        with pytest.raises(MalformedRecord):
            ingest(f)

    def test_empty_corpus_searchable(self, tmp_path):
        f = tmp_path / "corpus.jsonl"
        f.write_text("", encoding="utf-8")
        store = ingest(f)
        assert len(store) == 0
        assert bm25_top1(store, Bm25Params(), "anything") is None

    def test_ingest_deterministic(self, tmp_path):
        f = tmp_path / "corpus.jsonl"
        write_corpus(f, [("d1", "apple pie"), ("d2", "banana bread")])
        a, b = ingest(f), ingest(f)
        assert a.documents == b.documents
        assert a.avg_doc_len == b.avg_doc_len
        assert a._postings == b._postings


class TestBm25:
    def test_empty_query(self):
        store = CorpusStore({"d1": "apple pie"})
        assert bm25_top1(store, Bm25Params(), "") is None

    def test_only_matching_doc_wins(self):
        store = CorpusStore({"d1": "apple pie", "d2": "banana bread"})
        hit = bm25_top1(store, Bm25Params(), "banana")
        assert hit is not None and hit.doc_id == "d2"
        assert hit.source == "sparse"

    def test_no_term_overlap_returns_none(self):
        store = CorpusStore({"d1": "apple pie", "d2": "banana bread"})
        assert bm25_top1(store, Bm25Params(), "quantum physics") is None

    def test_tie_break_smallest_id(self):
        store = CorpusStore({"dz": "apple pie", "da": "apple pie"})
        hit = bm25_top1(store, Bm25Params(), "apple")
        assert hit.doc_id == "da"

    def test_matches_brute_force_on_random_corpus(self):
        rng = random.Random(7)
        vocab = ["apple", "banana", "cherry", "date", "elder", "fig", "grape",
                 "melon", "nut", "olive", "pear", "quince"]
        documents = {
            f"d{i:02d}": " ".join(rng.choices(vocab, k=rng.randint(3, 12)))
            for i in range(10)
        }
        store = CorpusStore(documents)
        params = Bm25Params()
        for _ in range(5):
            query = " ".join(rng.choices(vocab, k=rng.randint(1, 3)))
            expected = brute_force_top1(documents, params, query)
            hit = bm25_top1(store, params, query)
            if expected is None:
                assert hit is None
            else:
                assert hit.doc_id == expected[0]
                assert hit.score == pytest.approx(expected[1], abs=1e-9)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            Bm25Params(k1=0)
        with pytest.raises(ValueError):
            Bm25Params(b=1.5)


class TestIndexPersistence:
    def test_roundtrip(self, tmp_path):
        store = CorpusStore({"d1": "apple pie", "d2": "banana bread"})
        path = tmp_path / "index.json"
        save_index(store, path)
        loaded = load_index(path)
        assert loaded.documents == store.documents
        assert loaded._postings == store._postings
        assert loaded.avg_doc_len == store.avg_doc_len

    def test_version_mismatch_fails_fast(self, tmp_path):
        path = tmp_path / "index.json"
        path.write_text(json.dumps({"format": "other", "version": 9, "documents": {}}),
                        encoding="utf-8")
        with pytest.raises(IndexVersionMismatch):
            load_index(path)


class TestGoldDocument:
    def test_present(self):
        item = QAItem(id="x", question="q", gold_answers=("a",), gold_document="the doc")
        hit = gold_document(item)
        assert hit.text == "the doc"
        assert hit.source == "gold"
        assert math.isinf(hit.score)

    def test_absent(self):
        item = QAItem(id="x", question="q", gold_answers=("a",))
        assert gold_document(item) is None


class TestCorruptDocument:
    def test_simple_replacement(self):
        out = corrupt_document("Obama was born in Hawaii.", ["Hawaii"])
        assert out == "Obama was born in Tom."

    def test_case_insensitive(self):
        assert corrupt_document("hawaii, HAWAII", ["Hawaii"]) == "Tom, Tom"

    def test_longest_first_no_fragments(self):
        doc = "He moved to New York City from New York state."
        out = corrupt_document(doc, ["New York City", "New York"])
        assert out == "He moved to Tom from Tom state."
        assert not answer_is_correct(out, ["New York City", "New York"])

    def test_substring_words_untouched(self):
        out = corrupt_document("A Hawaiian shirt from Hawaii.", ["Hawaii"])
        assert out == "A Hawaiian shirt from Tom."

    def test_idempotent(self):
        doc = "Paris, PARIS, and paris."
        once = corrupt_document(doc, ["Paris"])
        assert corrupt_document(once, ["Paris"]) == once

    def test_whitespace_flexible_phrases(self):
        out = corrupt_document("the Eiffel  Tower stands", ["Eiffel Tower"])
        assert out == "the Tom stands"

    def test_text_outside_spans_unchanged(self):
        prefix, suffix = "Lead-in text. ", " Trailing, unrelated text!"
        doc = f"{prefix}Barack Obama{suffix}"
        assert corrupt_document(doc, ["Barack Obama"]) == f"{prefix}Tom{suffix}"


class TestDenseTop1:
    def test_passthrough(self, stub_retriever):
        stub_retriever.hits = [{"id": "d7", "score": 0.91, "text": "dense text"}]
        hit = dense_top1(stub_retriever.url, "some query")
        assert hit.doc_id == "d7"
        assert hit.score == pytest.approx(0.91)
        assert hit.source == "dense"
        sent = json.loads(stub_retriever.requests[0]["body"])
        assert sent == {"query": "some query", "k": 1}

    def test_empty_hits(self, stub_retriever):
        stub_retriever.hits = []
        assert dense_top1(stub_retriever.url, "q") is None

    def test_service_down(self):
        with pytest.raises(RetrieverUnavailable):
            dense_top1("http://127.0.0.1:9", "q", timeout=0.2)

    def test_http_error(self, stub_retriever):
        stub_retriever.status = 500
        with pytest.raises(RetrieverUnavailable):
            dense_top1(stub_retriever.url, "q")

    def test_malformed_body(self, stub_retriever):
        stub_retriever.raw_body = b'{"nope": 1}'
        with pytest.raises(MalformedResponse):
            dense_top1(stub_retriever.url, "q")


class TestRetrievers:
    def test_call_counter(self):
        item = QAItem(id="x", question="apple", gold_answers=("a",), gold_document="doc a")
        retriever = GoldRetriever()
        retriever.top1(item)
        retriever.top1(item)
        assert retriever.calls == 2

    def test_corrupt_retriever(self):
        item = QAItem(id="x", question="q", gold_answers=("Hawaii",),
                      gold_document="Hawaii is sunny.")
        hit = CorruptRetriever().top1(item)
        assert hit.text == "Tom is sunny."
        assert hit.source == "corrupt"

    def test_sparse_retriever_uses_question(self):
        store = CorpusStore({"d1": "apple pie", "d2": "banana bread"})
        item = QAItem(id="x", question="banana", gold_answers=("a",))
        hit = SparseRetriever(store).top1(item)
        assert hit.doc_id == "d2"

    def test_dense_retriever_wraps_client(self, stub_retriever):
        stub_retriever.hits = [{"id": "d1", "score": 0.5, "text": "t"}]
        retriever = DenseRetriever(stub_retriever.url)
        item = QAItem(id="x", question="q", gold_answers=("a",))
        assert retriever.top1(item).doc_id == "d1"
        assert retriever.calls == 1


class TestPrecisionAt1:
    def test_counts_hits_containing_answers(self):
        store = CorpusStore({
            "d1": "Paris is the capital of France",
            "d2": "bananas are yellow fruit",
        })
        items = [
            QAItem(id="a", question="capital France Paris", gold_answers=("Paris",)),
            QAItem(id="b", question="yellow fruit", gold_answers=("kiwi",)),
            QAItem(id="c", question="zzz nothing", gold_answers=("x",)),
        ]
        report = precision_at_1(SparseRetriever(store), items)
        assert report.n == 3
        assert report.with_hit == 2
        assert report.hit_contains_answer == 1
        assert report.p_at_1 == pytest.approx(1 / 3)
        assert report.coverage == pytest.approx(2 / 3)
