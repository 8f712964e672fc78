import numpy as np
import pytest

from embedsvc.embedder import ModelLoadFailure, TokenHashEmbedder, build_embedder


class TestTokenHashEmbedder:
    def test_unit_norms(self):
        embedder = TokenHashEmbedder(dim=64)
        vectors = embedder.embed(["alpha beta gamma", "delta", "epsilon zeta"])
        norms = np.linalg.norm(vectors, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-6)

    def test_deterministic(self):
        a = TokenHashEmbedder(dim=128).embed(["same text here"] * 2)
        b = TokenHashEmbedder(dim=128).embed(["same text here"] * 2)
        assert np.array_equal(a, b)
        assert np.array_equal(a[0], a[1])

    def test_empty_text_is_zero_vector(self):
        vec = TokenHashEmbedder(dim=32).embed([""])[0]
        assert np.all(vec == 0.0)

    def test_identical_text_maximal_similarity(self):
        embedder = TokenHashEmbedder(dim=256)
        texts = ["paris is in france", "bananas are yellow", "the moon is far"]
        vectors = embedder.embed(texts)
        query = embedder.embed([texts[0]])[0]
        scores = vectors @ query
        assert scores[0] == pytest.approx(1.0, abs=1e-9)
        assert scores[0] > scores[1] and scores[0] > scores[2]

    def test_rejects_tiny_dim(self):
        with pytest.raises(ValueError):
            TokenHashEmbedder(dim=4)


class TestBuildEmbedder:
    def test_hash_names(self):
        embedder = build_embedder("token-hash-128")
        assert embedder.dim == 128
        assert embedder.name == "token-hash-128"

    def test_unknown_model_raises_load_failure(self):
        # No model hub is reachable here, so any non-hash name must fail
        # with the dedicated error.
        with pytest.raises(ModelLoadFailure):
            build_embedder("no-such-model-anywhere-404")
