"""embedsvc: cosine-similarity top-k retrieval over HTTP.

Embeds a JSONL corpus with a configurable sentence-embedding backend and
serves POST /retrieve {query, k} -> {hits: [{id, score, text}]} plus a
GET /health probe.
"""

from .embedder import ModelLoadFailure, TokenHashEmbedder, build_embedder
from .index import EmbeddedCorpus, build_index, load_index, retrieve, save_index

__version__ = "0.1.0"

__all__ = [
    "EmbeddedCorpus",
    "ModelLoadFailure",
    "TokenHashEmbedder",
    "build_embedder",
    "build_index",
    "load_index",
    "retrieve",
    "save_index",
]
