"""Uniform access to chat-completion backends with a persistent cache.

Three backends share one ``complete`` entry point: a remote HTTP endpoint
speaking a chat-completion wire format, a deterministic scripted mock for
tests and dry runs, and a replay mode that only ever serves from cache.
Responses are cached on disk keyed by a content hash of (model, prompt,
decode parameters, turn index), so editing a prompt template transparently
invalidates stale completions while reruns stay free.
"""

from __future__ import annotations

import fnmatch
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import requests

from .core import CertgateError, DecodeParams

log = logging.getLogger(__name__)

BACKENDS = ("remote_chat", "scripted_mock", "replay_cache_only")

#: Script tables map a prompt pattern (exact text or fnmatch glob) to a
#: completion; a callable script receives the prompt and may return None
#: to signal a gap.
ScriptTable = Mapping[str, str] | Callable[[str], "str | None"]


class GatewayError(CertgateError):
    pass


class BackendUnavailable(GatewayError):
    """Network or HTTP failure that survived the retry budget."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class CacheMiss(GatewayError):
    """replay_cache_only was asked for a prompt that is not cached."""


class ScriptGap(GatewayError):
    """The scripted mock has no rule matching the prompt."""


@dataclass
class ModelSpec:
    """Which backend to talk to and how."""

    backend: str
    model_name: str = "mock"
    endpoint: str | None = None
    credentials_ref: str | None = None
    decode: DecodeParams = field(default_factory=DecodeParams)
    script: ScriptTable | None = None
    field_map: Mapping[str, str] = field(default_factory=dict)
    timeout: float = 30.0

    def __post_init__(self) -> None:
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "remote_chat" and not self.endpoint:
            raise ValueError("remote_chat backend requires an endpoint")
        if self.backend == "scripted_mock" and self.script is None:
            raise ValueError("scripted_mock backend requires a script table")

    def snapshot(self) -> dict[str, Any]:
        """JSON-safe description for ledgers; never includes credentials."""
        script_desc: str | None = None
        if callable(self.script):
            script_desc = "<callable>"
        elif self.script is not None:
            script_desc = f"<table:{len(self.script)} rules>"
        return {
            "backend": self.backend,
            "model_name": self.model_name,
            "endpoint": self.endpoint,
            "credentials_ref": self.credentials_ref,
            "decode": {
                "max_output_tokens": self.decode.max_output_tokens,
                "temperature": self.decode.temperature,
                "extra": dict(self.decode.extra),
            },
            "script": script_desc,
        }


def cache_key(model_name: str, prompt: str, decode: DecodeParams, turn_index: int = 0) -> str:
    """Content digest identifying one completion request."""
    payload = json.dumps(
        {
            "model": model_name,
            "prompt": prompt,
            "max_output_tokens": decode.max_output_tokens,
            "temperature": decode.temperature,
            "extra": dict(decode.extra),
            "turn": turn_index,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    """Append-only JSONL store of completions, indexed in memory.

    A crash mid-write loses at most the in-flight record: a truncated
    final line is tolerated on load, anything else malformed is an error.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._index: dict[str, str] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        lines = self.path.read_text("utf-8").splitlines()
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                self._index[record["digest"]] = record["completion"]
            except (json.JSONDecodeError, KeyError, TypeError):
                if lineno == len(lines):
                    log.warning("cache %s: dropping truncated final line", self.path)
                    continue
                raise GatewayError(f"corrupt cache record at {self.path}:{lineno}")

    def get(self, digest: str) -> str | None:
        return self._index.get(digest)

    def put(self, digest: str, model_name: str, prompt: str, completion: str) -> None:
        record = {
            "digest": digest,
            "model_name": model_name,
            "prompt": prompt,
            "completion": completion,
            "timestamp": time.time(),
        }
        line = json.dumps(record, sort_keys=True, ensure_ascii=False)
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
            self._index[digest] = completion

    def __contains__(self, digest: str) -> bool:
        return digest in self._index

    def __len__(self) -> int:
        return len(self._index)


_DEFAULT_FIELD_MAP = {
    "model": "model",
    "messages": "messages",
    "max_tokens": "max_tokens",
    "temperature": "temperature",
    "response_path": "choices.0.message.content",
}


def _extract_path(payload: Any, dotted: str) -> Any:
    node = payload
    for part in dotted.split("."):
        if isinstance(node, list):
            node = node[int(part)]
        elif isinstance(node, dict):
            node = node[part]
        else:
            raise KeyError(part)
    return node


class LLMGateway:
    """One model behind ``complete(prompt)``, with caching and retries.

    Thread-safe: the cache serializes its own writes and counters are
    guarded, so a bounded pool of workers may call ``complete``
    concurrently.
    """

    def __init__(
        self,
        spec: ModelSpec,
        cache: ResponseCache | None = None,
        *,
        max_retries: int = 3,
        backoff: float = 0.5,
        session: Any = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.spec = spec
        self.cache = cache
        self.max_retries = max_retries
        self.backoff = backoff
        self._session = session
        self._sleep = sleep
        self._counter_lock = threading.Lock()
        self.network_requests = 0
        self.cache_hits = 0

    def _bump(self, counter: str) -> None:
        with self._counter_lock:
            setattr(self, counter, getattr(self, counter) + 1)

    def complete(self, prompt: str, turn_index: int = 0) -> str:
        """Return the completion for ``prompt``, consulting the cache first."""
        if not prompt:
            raise ValueError("prompt must be non-empty")
        digest = cache_key(self.spec.model_name, prompt, self.spec.decode, turn_index)
        if self.cache is not None:
            cached = self.cache.get(digest)
            if cached is not None:
                self._bump("cache_hits")
                return cached

        if self.spec.backend == "replay_cache_only":
            raise CacheMiss(f"no cached completion for digest {digest[:12]}...")
        if self.spec.backend == "scripted_mock":
            completion = self._run_script(prompt)
        else:
            completion = self._remote_complete(prompt)

        if self.cache is not None:
            self.cache.put(digest, self.spec.model_name, prompt, completion)
        return completion

    def _run_script(self, prompt: str) -> str:
        script = self.spec.script
        assert script is not None
        if callable(script):
            out = script(prompt)
            if out is None:
                raise ScriptGap(f"script callable returned None for: {prompt[:80]!r}")
            return out
        if prompt in script:
            return script[prompt]
        for pattern, completion in script.items():
            if ("*" in pattern or "?" in pattern) and fnmatch.fnmatchcase(prompt, pattern):
                return completion
        raise ScriptGap(f"no script rule matches prompt: {prompt[:80]!r}")

    def _remote_complete(self, prompt: str) -> str:
        fm = {**_DEFAULT_FIELD_MAP, **self.spec.field_map}
        body: dict[str, Any] = {
            fm["model"]: self.spec.model_name,
            fm["messages"]: [{"role": "user", "content": prompt}],
            fm["max_tokens"]: self.spec.decode.max_output_tokens,
            fm["temperature"]: self.spec.decode.temperature,
        }
        body.update(self.spec.decode.extra)
        headers = {}
        if self.spec.credentials_ref:
            token = os.environ.get(self.spec.credentials_ref)
            if token:
                headers["Authorization"] = f"Bearer {token}"

        session = self._session
        if session is None:
            session = self._session = requests.Session()

        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            if attempt:
                self._sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                self._bump("network_requests")
                resp = session.post(
                    self.spec.endpoint, json=body, headers=headers, timeout=self.spec.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                log.warning("backend request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code == 200:
                try:
                    return str(_extract_path(resp.json(), fm["response_path"]))
                except (ValueError, KeyError, IndexError) as exc:
                    raise BackendUnavailable(
                        f"unparseable backend response: {exc}", status=200
                    ) from exc
            if 400 <= resp.status_code < 500:
                # Client errors are not retryable.
                raise BackendUnavailable(
                    f"backend rejected request: HTTP {resp.status_code}",
                    status=resp.status_code,
                )
            last_error = BackendUnavailable(
                f"backend error: HTTP {resp.status_code}", status=resp.status_code
            )
            log.warning("backend HTTP %d (attempt %d)", resp.status_code, attempt + 1)

        raise BackendUnavailable(f"backend unavailable after {self.max_retries} attempts: {last_error}")
