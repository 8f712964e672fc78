"""Shared test helpers: a stub retriever server and scripted-mock builders."""

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

from certgate.core import QAItem

_DOC_RE = re.compile(r"Document: (.*?)\nQuestion: (.*?)\n", re.DOTALL)
_QUESTION_RE = re.compile(r"Question: (.*?)\n")
_PRIOR_ANSWER_RE = re.compile(r'previously answered the question with "(.*?)"', re.DOTALL)


class StubRetrieverServer:
    """Minimal HTTP stand-in for the dense retriever wire contract."""

    def __init__(self):
        self.hits = []
        self.status = 200
        self.raw_body = None  # overrides the JSON payload when set
        self.requests = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = self.rfile.read(length)
                outer.requests.append({"path": self.path, "body": body})
                if self.path != "/retrieve":
                    self.send_response(404)
                    self.end_headers()
                    return
                payload = outer.raw_body
                if payload is None:
                    payload = json.dumps({"hits": outer.hits}).encode("utf-8")
                self.send_response(outer.status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self._server = HTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def close(self):
        self._server.shutdown()
        self._server.server_close()


def make_item(i: int, answer: str = "Paris", gold_document: str | None = None) -> QAItem:
    return QAItem(
        id=f"q{i:03d}",
        question=f"test question number {i}",
        gold_answers=(answer,),
        gold_document=gold_document,
    )


def scripted_model(table, ra=None, challenge=None):
    """Build a script callable for the mock backend from a per-question table.

    ``table`` maps question text to either a completion string or a dict
    keyed by strategy kind ("vanilla", "punish_explain", ...), selected by
    sniffing the rendered prompt. ``ra(question, document)`` answers
    document-augmented prompts; ``challenge(prior_answer)`` answers the
    follow-up turn.
    """

    def pick(entry, prompt):
        if isinstance(entry, str):
            return entry
        if "You will be punished" in prompt and "explain" in prompt.lower():
            return entry["punish_explain"]
        if "You will be punished" in prompt:
            return entry.get("punish", entry.get("punish_explain"))
        return entry["vanilla"]

    def script(prompt):
        doc_match = _DOC_RE.search(prompt)
        if doc_match is not None and ra is not None:
            return ra(doc_match.group(2).strip(), doc_match.group(1).strip())
        if "previously answered the question" in prompt and challenge is not None:
            prior = _PRIOR_ANSWER_RE.search(prompt)
            return challenge(prior.group(1) if prior else "")
        question_match = _QUESTION_RE.search(prompt)
        if question_match:
            question = question_match.group(1).strip()
            if question in table:
                return pick(table[question], prompt)
        return None

    return script
