"""Embedding backends.

The default backend is a deterministic token-hash featurizer: each token
hashes to a signed coordinate, counts accumulate, rows are unit-normalized.
It needs no model download, is bit-reproducible, and exercises the full
wire contract. Any sentence-transformers model can be used instead by
passing its name.
"""

from __future__ import annotations

import hashlib
import re
from typing import Protocol, Sequence

import numpy as np

_HASH_NAME_RE = re.compile(r"^token-hash-(\d+)$")


class ModelLoadFailure(Exception):
    """The named embedding model could not be loaded."""


class Embedder(Protocol):
    name: str
    dim: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class TokenHashEmbedder:
    """Signed feature hashing of lowercase whitespace tokens."""

    def __init__(self, dim: int = 512):
        if dim < 8:
            raise ValueError("dim must be >= 8")
        self.dim = dim
        self.name = f"token-hash-{dim}"

    def _slot(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        value = int.from_bytes(digest, "big")
        index = value % self.dim
        sign = 1.0 if (value >> 63) & 1 else -1.0
        return index, sign

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for token in text.lower().split():
                index, sign = self._slot(token)
                out[row, index] += sign
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        np.divide(out, norms, out=out, where=norms > 0)
        return out


class SentenceTransformerEmbedder:
    """Thin adapter over a sentence-transformers model, normalized output."""

    def __init__(self, model_name: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise ModelLoadFailure(f"sentence-transformers is not installed: {exc}") from exc
        try:
            self._model = SentenceTransformer(model_name)
        except Exception as exc:
            raise ModelLoadFailure(f"cannot load model {model_name!r}: {exc}") from exc
        self._model.eval()
        self.name = model_name
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        vectors = self._model.encode(
            list(texts), convert_to_numpy=True, normalize_embeddings=True,
            show_progress_bar=False,
        )
        return np.asarray(vectors, dtype=np.float64)


def build_embedder(name: str) -> Embedder:
    """Resolve an embedder by name; "token-hash-<dim>" needs no downloads."""
    match = _HASH_NAME_RE.match(name)
    if match:
        return TokenHashEmbedder(dim=int(match.group(1)))
    return SentenceTransformerEmbedder(name)
