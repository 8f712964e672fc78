"""FastAPI application serving the retrieval wire contract.

POST /retrieve {"query": str, "k": int >= 1} -> {"hits": [{id, score, text}]}
GET  /health -> {"status", "corpus_size", "dim"}

Malformed bodies answer 400; requests before the index is ready answer
503. The index is read-only after load, so request handling is freely
concurrent.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .embedder import Embedder, build_embedder
from .index import EmbeddedCorpus, load_index, retrieve


class RetrieveRequest(BaseModel):
    query: str
    k: int = Field(default=1, ge=1)


def create_app(
    corpus: EmbeddedCorpus | None = None,
    embedder: Embedder | None = None,
    index_path: str | None = None,
) -> FastAPI:
    """Build the service; pass a corpus directly or an index path to load."""
    app = FastAPI(title="embedsvc", docs_url=None, redoc_url=None)
    if corpus is None and index_path is not None:
        corpus = load_index(index_path)
    if corpus is not None and embedder is None:
        embedder = build_embedder(corpus.model_name)
    app.state.corpus = corpus
    app.state.embedder = embedder

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/health")
    async def health():
        ready = app.state.corpus is not None
        return {
            "status": "ok" if ready else "loading",
            "corpus_size": len(app.state.corpus) if ready else 0,
            "dim": app.state.corpus.dim if ready else 0,
        }

    @app.post("/retrieve")
    async def retrieve_endpoint(request: RetrieveRequest):
        if app.state.corpus is None or app.state.embedder is None:
            return JSONResponse(status_code=503, content={"detail": "index not ready"})
        hits = retrieve(app.state.corpus, app.state.embedder, request.query, request.k)
        return {"hits": hits}

    return app
