"""Command-line entry points: build an index, serve it."""

from __future__ import annotations

import argparse
import sys

from .app import create_app
from .index import build_index, load_index, save_index


def _cmd_build(args: argparse.Namespace) -> int:
    corpus = build_index(args.corpus, args.model)
    written = save_index(corpus, args.out)
    print(f"embedded {len(corpus)} documents with {corpus.model_name} "
          f"(dim {corpus.dim}) -> {written}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    app = create_app(corpus=load_index(args.index))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="embedsvc",
                                     description="cosine top-k retrieval service")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="embed a JSONL corpus into an index file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", default="token-hash-512")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_build)

    p = sub.add_parser("serve", help="serve a built index over HTTP")
    p.add_argument("--index", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8901)
    p.set_defaults(fn=_cmd_serve)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
