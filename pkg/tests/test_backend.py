"""Scripted/live backends and structured-output repair."""

import json
import threading

import httpx
import pytest

from pathfinder.backend import (
    Caller,
    ChatMessage,
    CompletionRequest,
    Gateway,
    LiveBackend,
    NO_SCRIPT_FALLBACK,
    ParseFailure,
    ScenarioMissError,
    ScriptedBackend,
)


def req(role="researcher", version=1, step="s1", iteration=1, schema=None,
        content="hello"):
    return CompletionRequest(
        messages=(ChatMessage("user", content),),
        caller=Caller(role, version, step, iteration),
        schema=schema,
    )


class TestScriptedBackend:
    def test_lookup_by_caller_key(self):
        backend = ScriptedBackend({("researcher", 1, "s1", 1): "42"})
        assert backend.complete(req()) == "42"

    def test_strict_miss_names_the_key(self):
        backend = ScriptedBackend({("researcher", 1, "s1", 1): "42"}, strict=True)
        with pytest.raises(ScenarioMissError) as exc:
            backend.complete(req(iteration=2))
        assert exc.value.key == ("researcher", 1, "s1", 2)

    def test_lenient_miss_returns_sentinel(self):
        backend = ScriptedBackend({}, strict=False)
        assert backend.complete(req()) == NO_SCRIPT_FALLBACK

    def test_deterministic_across_runs(self):
        entries = {("researcher", 1, "s1", i): f"r{i}" for i in range(1, 4)}
        out1 = [ScriptedBackend(entries).complete(req(iteration=i)) for i in (1, 2, 3)]
        out2 = [ScriptedBackend(entries).complete(req(iteration=i)) for i in (1, 2, 3)]
        assert out1 == out2 == ["r1", "r2", "r3"]

    def test_list_entry_served_in_hit_order(self):
        backend = ScriptedBackend({("researcher", 1, "s1", 1): ["bad", "good"]})
        assert backend.complete(req()) == "bad"
        assert backend.complete(req()) == "good"
        assert backend.complete(req()) == "good"

    def test_concurrent_lookups(self):
        entries = {("researcher", 1, "s1", i): str(i) for i in range(1, 33)}
        backend = ScriptedBackend(entries)
        results = {}

        def hit(i):
            results[i] = backend.complete(req(iteration=i))

        threads = [threading.Thread(target=hit, args=(i,)) for i in range(1, 33)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == {i: str(i) for i in range(1, 33)}

    def test_from_file_round_trip(self, tmp_path):
        doc = {"strict": True, "entries": [
            {"role": "researcher", "plan_version": 1, "step_id": "s1",
             "iteration": 1, "response": "42"},
        ]}
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(doc))
        backend = ScriptedBackend.from_file(str(path))
        assert backend.complete(req()) == "42"

    def test_duplicate_keys_rejected(self):
        doc = {"entries": [
            {"role": "r", "plan_version": 1, "step_id": "s", "iteration": 1, "response": "a"},
            {"role": "r", "plan_version": 1, "step_id": "s", "iteration": 1, "response": "b"},
        ]}
        with pytest.raises(ValueError, match="duplicate"):
            ScriptedBackend.from_dict(doc)


FEEDBACK_SCHEMA = {"status": "string"}


class TestParseStructured:
    def gateway(self, entries=None):
        return Gateway(ScriptedBackend(entries or {}, strict=False))

    def test_stage1_direct(self):
        g = self.gateway()
        assert g.parse_structured('{"status":"achieved"}', FEEDBACK_SCHEMA) == \
            {"status": "achieved"}

    def test_stage2_fence_stripped(self):
        g = self.gateway()
        text = '```json\n{"status":"achieved"}\n```'
        assert g.parse_structured(text, FEEDBACK_SCHEMA) == {"status": "achieved"}

    def test_stage3_balanced_braces(self):
        g = self.gateway()
        assert g.parse_structured('the answer is {"a":1} thanks', {"a": "integer"}) == {"a": 1}

    def test_nested_braces_extracted_whole(self):
        g = self.gateway()
        out = g.parse_structured('x {"a": {"b": "}"}} y', {"a": "object"})
        assert out == {"a": {"b": "}"}}

    def test_stage4_corrective_reprompt(self):
        entries = {("researcher", 1, "s1", 1): ["garbage", '{"status":"achieved"}']}
        g = Gateway(ScriptedBackend(entries))
        out = g.complete_structured(req(schema=FEEDBACK_SCHEMA))
        assert out == {"status": "achieved"}
        assert len(g.requests) == 2  # exactly one re-prompt

    def test_all_stages_fail_carries_diagnostics(self):
        entries = {("researcher", 1, "s1", 1): ["garbage", "more garbage"]}
        g = Gateway(ScriptedBackend(entries))
        with pytest.raises(ParseFailure) as exc:
            g.complete_structured(req(schema=FEEDBACK_SCHEMA))
        assert exc.value.raw == "garbage"
        assert len(exc.value.diagnostics) >= 2

    def test_idempotent_on_valid_input(self):
        g = self.gateway()
        text = '{"status":"achieved"}'
        assert g.parse_structured(text, FEEDBACK_SCHEMA) == \
            g.parse_structured(text, FEEDBACK_SCHEMA)
        assert g.call_count() == 0  # stage 1 never touches the backend

    def test_missing_required_field_never_defaulted(self):
        g = self.gateway()
        with pytest.raises(ParseFailure, match="missing required field"):
            g.parse_structured('{"other": 1}', FEEDBACK_SCHEMA)

    def test_wrong_kind_rejected(self):
        g = self.gateway()
        with pytest.raises(ParseFailure):
            g.parse_structured('{"status": 5}', FEEDBACK_SCHEMA)


class TestGatewayRecording:
    def test_requests_recorded_with_prompts(self):
        g = Gateway(ScriptedBackend({}, strict=False))
        g.complete(req(role="planner", content="plan this"))
        g.complete(req(role="researcher", content="find this"))
        assert g.call_count() == 2
        assert g.call_count("planner") == 1
        assert g.prompts_for("planner") == ["plan this"]


class TestLiveBackend:
    def make_backend(self, handler, **kw):
        return LiveBackend("https://llm.example/v1", "test-model",
                           transport=httpx.MockTransport(handler), **kw)

    def test_returns_message_content(self):
        def handler(request):
            body = json.loads(request.content)
            assert body["model"] == "test-model"
            return httpx.Response(200, json={
                "choices": [{"message": {"content": "hello back"}}]})
        backend = self.make_backend(handler)
        assert backend.complete(req()) == "hello back"

    def test_retries_then_succeeds(self):
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            if calls["n"] < 3:
                return httpx.Response(503)
            return httpx.Response(200, json={
                "choices": [{"message": {"content": "ok"}}]})
        backend = self.make_backend(handler, backoff_s=0.0)
        assert backend.complete(req()) == "ok"
        assert calls["n"] == 3

    def test_exhausted_retries_surface_error(self):
        def handler(request):
            return httpx.Response(500)
        backend = self.make_backend(handler, max_retries=1, backoff_s=0.0)
        with pytest.raises(Exception, match="after 2 attempts"):
            backend.complete(req())
