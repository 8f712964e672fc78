import json

import numpy as np
import pytest

from embedsvc.embedder import build_embedder
from embedsvc.index import (
    DuplicateId,
    IndexVersionMismatch,
    MalformedRecord,
    build_index,
    load_index,
    retrieve,
    save_index,
)
from toydata import TOY_DOCS


class TestBuild:
    def test_embeds_every_document(self, toy_corpus_file):
        corpus = build_index(toy_corpus_file, "token-hash-64")
        assert len(corpus) == 5
        assert corpus.vectors.shape == (5, 64)
        assert np.allclose(np.linalg.norm(corpus.vectors, axis=1), 1.0, atol=1e-6)

    def test_empty_corpus(self, empty_corpus_file):
        corpus = build_index(empty_corpus_file, "token-hash-64")
        assert len(corpus) == 0
        assert retrieve(corpus, build_embedder("token-hash-64"), "anything", 3) == []

    def test_rebuild_identical_vectors(self, toy_corpus_file):
        a = build_index(toy_corpus_file, "token-hash-64")
        b = build_index(toy_corpus_file, "token-hash-64")
        assert np.array_equal(a.vectors, b.vectors)

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        row = json.dumps({"id": "d1", "text": "x"})
        path.write_text(row + "\n" + row + "\n", encoding="utf-8")
        with pytest.raises(DuplicateId):
            build_index(path, "token-hash-64")

    def test_malformed_record_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "d1", "text": "ok"}\n{"id": "d2"}\n', encoding="utf-8")
        with pytest.raises(MalformedRecord) as err:
            build_index(path, "token-hash-64")
        assert err.value.line == 2


class TestPersistence:
    def test_roundtrip(self, toy_corpus_file, tmp_path):
        corpus = build_index(toy_corpus_file, "token-hash-64")
        path = save_index(corpus, tmp_path / "index")
        loaded = load_index(path)
        assert loaded.doc_ids == corpus.doc_ids
        assert loaded.texts == corpus.texts
        assert loaded.model_name == corpus.model_name
        assert np.array_equal(loaded.vectors, corpus.vectors)

    def test_version_mismatch(self, toy_corpus_file, tmp_path):
        corpus = build_index(toy_corpus_file, "token-hash-64")
        path = save_index(corpus, tmp_path / "index")
        payload = dict(np.load(path, allow_pickle=True))
        payload["meta"] = np.array(json.dumps({"format": "other", "version": 0}))
        np.savez(path, **payload)
        with pytest.raises(IndexVersionMismatch):
            load_index(path)


class TestRetrieve:
    def test_brute_force_oracle(self, toy_corpus_file):
        corpus = build_index(toy_corpus_file, "token-hash-256")
        embedder = build_embedder("token-hash-256")
        query = "tower in paris"
        hits = retrieve(corpus, embedder, query, k=5)

        query_vec = embedder.embed([query])[0]
        oracle = {
            doc_id: float(np.dot(corpus.vectors[i], query_vec))
            for i, doc_id in enumerate(corpus.doc_ids)
        }
        for hit in hits:
            assert abs(hit["score"] - oracle[hit["id"]]) < 1e-6
        assert hits[0]["score"] == max(oracle.values())

    def test_scores_non_increasing(self, toy_corpus_file):
        corpus = build_index(toy_corpus_file, "token-hash-64")
        hits = retrieve(corpus, build_embedder("token-hash-64"), "paris fruit moon", k=5)
        scores = [h["score"] for h in hits]
        assert scores == sorted(scores, reverse=True)

    def test_k_larger_than_corpus(self, toy_corpus_file):
        corpus = build_index(toy_corpus_file, "token-hash-64")
        hits = retrieve(corpus, build_embedder("token-hash-64"), "paris", k=50)
        assert len(hits) == len(TOY_DOCS)

    def test_self_query_ranks_first(self, toy_corpus_file):
        corpus = build_index(toy_corpus_file, "token-hash-256")
        embedder = build_embedder("token-hash-256")
        for doc_id, text in TOY_DOCS:
            hits = retrieve(corpus, embedder, text, k=1)
            assert hits[0]["id"] == doc_id

    def test_tie_break_by_doc_id(self, tmp_path):
        path = tmp_path / "ties.jsonl"
        with path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"id": "zz", "text": "same words"}) + "\n")
            fh.write(json.dumps({"id": "aa", "text": "same words"}) + "\n")
        corpus = build_index(path, "token-hash-64")
        hits = retrieve(corpus, build_embedder("token-hash-64"), "same words", k=2)
        assert [h["id"] for h in hits] == ["aa", "zz"]
