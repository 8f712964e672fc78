import json

import pytest
import requests

from certgate.core import DecodeParams
from certgate.gateway import (
    BackendUnavailable,
    CacheMiss,
    LLMGateway,
    ModelSpec,
    ResponseCache,
    ScriptGap,
    cache_key,
)


def mock_spec(script, **kwargs):
    return ModelSpec(backend="scripted_mock", model_name="mock", script=script, **kwargs)


class TestCacheKey:
    def test_equal_inputs_equal_digest(self):
        d = DecodeParams()
        assert cache_key("m", "p", d, 0) == cache_key("m", "p", d, 0)

    @pytest.mark.parametrize(
        "other",
        [
            ("m2", "p", DecodeParams(), 0),
            ("m", "p2", DecodeParams(), 0),
            ("m", "p", DecodeParams(max_output_tokens=8), 0),
            ("m", "p", DecodeParams(temperature=0.7), 0),
            ("m", "p", DecodeParams(), 1),
        ],
    )
    def test_any_field_change_changes_digest(self, other):
        assert cache_key("m", "p", DecodeParams(), 0) != cache_key(*other)


class TestScriptedMock:
    def test_exact_match(self):
        gw = LLMGateway(mock_spec({"hello": "world"}))
        assert gw.complete("hello") == "world"

    def test_glob_match(self):
        script = {"who wrote Hamlet*": "Shakespeare\nCertainty: certain"}
        gw = LLMGateway(mock_spec(script))
        assert gw.complete("who wrote Hamlet, please?") == "Shakespeare\nCertainty: certain"

    def test_script_gap(self):
        gw = LLMGateway(mock_spec({"a": "b"}))
        with pytest.raises(ScriptGap):
            gw.complete("unknown prompt")

    def test_callable_script(self):
        gw = LLMGateway(mock_spec(lambda p: p.upper() if "x" in p else None))
        assert gw.complete("axe") == "AXE"
        with pytest.raises(ScriptGap):
            gw.complete("no match")

    def test_empty_prompt_rejected(self):
        gw = LLMGateway(mock_spec({"a": "b"}))
        with pytest.raises(ValueError):
            gw.complete("")


class TestCache:
    def test_second_call_served_from_cache(self, tmp_path):
        calls = []

        def script(prompt):
            calls.append(prompt)
            return "answer"

        cache = ResponseCache(tmp_path / "cache.jsonl")
        gw = LLMGateway(mock_spec(script), cache)
        assert gw.complete("q") == "answer"
        assert gw.complete("q") == "answer"
        assert calls == ["q"]
        assert gw.cache_hits == 1

    def test_cache_survives_restart(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        gw = LLMGateway(mock_spec({"q": "a"}), ResponseCache(path))
        gw.complete("q")
        replay = LLMGateway(
            ModelSpec(backend="replay_cache_only", model_name="mock"), ResponseCache(path)
        )
        assert replay.complete("q") == "a"
        assert replay.network_requests == 0

    def test_replay_empty_cache_misses(self, tmp_path):
        gw = LLMGateway(
            ModelSpec(backend="replay_cache_only", model_name="mock"),
            ResponseCache(tmp_path / "cache.jsonl"),
        )
        with pytest.raises(CacheMiss):
            gw.complete("q")

    def test_truncated_final_line_tolerated(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        record = {"digest": "d1", "model_name": "m", "prompt": "p", "completion": "c",
                  "timestamp": 0}
        path.write_text(json.dumps(record) + "\n" + '{"digest": "d2", "compl', encoding="utf-8")
        cache = ResponseCache(path)
        assert cache.get("d1") == "c"
        assert cache.get("d2") is None

    def test_mid_file_corruption_raises(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        good = json.dumps({"digest": "d1", "model_name": "m", "prompt": "p",
                           "completion": "c", "timestamp": 0})
        path.write_text("garbage\n" + good + "\n", encoding="utf-8")
        with pytest.raises(Exception):
            ResponseCache(path)

    def test_turn_index_caches_independently(self, tmp_path):
        counter = {"n": 0}

        def script(prompt):
            counter["n"] += 1
            return f"reply {counter['n']}"

        gw = LLMGateway(mock_spec(script), ResponseCache(tmp_path / "c.jsonl"))
        first = gw.complete("same prompt", turn_index=0)
        second = gw.complete("same prompt", turn_index=1)
        assert first != second


class _FakeResponse:
    def __init__(self, status_code, payload=None):
        self.status_code = status_code
        self._payload = payload or {}

    def json(self):
        return self._payload


class _FakeSession:
    """Scripted transport standing in for requests.Session."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.requests = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers})
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def remote_spec(**kwargs):
    return ModelSpec(backend="remote_chat", model_name="remote-model",
                     endpoint="http://backend.test/v1/chat", **kwargs)


def _ok(text="fine"):
    return _FakeResponse(200, {"choices": [{"message": {"content": text}}]})


class TestRemoteBackend:
    def test_success_roundtrip(self):
        session = _FakeSession([_ok("hello back")])
        gw = LLMGateway(remote_spec(), session=session, sleep=lambda s: None)
        assert gw.complete("hi") == "hello back"
        sent = session.requests[0]["json"]
        assert sent["model"] == "remote-model"
        assert sent["messages"] == [{"role": "user", "content": "hi"}]
        assert sent["max_tokens"] == 256
        assert sent["temperature"] == 0.0

    def test_bearer_token_from_env(self, monkeypatch):
        monkeypatch.setenv("FAKE_TOKEN_VAR", "sekrit")
        session = _FakeSession([_ok()])
        gw = LLMGateway(remote_spec(credentials_ref="FAKE_TOKEN_VAR"),
                        session=session, sleep=lambda s: None)
        gw.complete("hi")
        assert session.requests[0]["headers"]["Authorization"] == "Bearer sekrit"

    def test_retries_transient_then_succeeds(self):
        session = _FakeSession([
            requests.ConnectionError("boom"),
            _FakeResponse(503),
            _ok("eventually"),
        ])
        gw = LLMGateway(remote_spec(), session=session, sleep=lambda s: None)
        assert gw.complete("hi") == "eventually"
        assert gw.network_requests == 3

    def test_no_retry_on_4xx(self):
        session = _FakeSession([_FakeResponse(401), _ok()])
        gw = LLMGateway(remote_spec(), session=session, sleep=lambda s: None)
        with pytest.raises(BackendUnavailable) as err:
            gw.complete("hi")
        assert err.value.status == 401
        assert gw.network_requests == 1  # second outcome never consumed

    def test_gives_up_after_budget(self):
        session = _FakeSession([_FakeResponse(500)] * 5)
        gw = LLMGateway(remote_spec(), max_retries=3, session=session, sleep=lambda s: None)
        with pytest.raises(BackendUnavailable):
            gw.complete("hi")
        assert gw.network_requests == 3

    def test_second_remote_call_served_from_cache(self, tmp_path):
        session = _FakeSession([_ok("cached me")])
        gw = LLMGateway(remote_spec(), ResponseCache(tmp_path / "c.jsonl"),
                        session=session, sleep=lambda s: None)
        assert gw.complete("hi") == "cached me"
        assert gw.complete("hi") == "cached me"  # would raise if it hit the session again
        assert gw.network_requests == 1
        assert gw.cache_hits == 1

    def test_field_map_override(self):
        payload = {"output": {"text": "mapped"}}
        session = _FakeSession([_FakeResponse(200, payload)])
        spec = remote_spec(field_map={"max_tokens": "max_new_tokens",
                                      "response_path": "output.text"})
        gw = LLMGateway(spec, session=session, sleep=lambda s: None)
        assert gw.complete("hi") == "mapped"
        assert "max_new_tokens" in session.requests[0]["json"]


class TestModelSpecValidation:
    def test_remote_requires_endpoint(self):
        with pytest.raises(ValueError):
            ModelSpec(backend="remote_chat", model_name="m")

    def test_mock_requires_script(self):
        with pytest.raises(ValueError):
            ModelSpec(backend="scripted_mock", model_name="m")

    def test_snapshot_never_holds_secrets(self, monkeypatch):
        monkeypatch.setenv("FAKE_TOKEN_VAR", "sekrit")
        snap = remote_spec(credentials_ref="FAKE_TOKEN_VAR").snapshot()
        assert "sekrit" not in json.dumps(snap)
