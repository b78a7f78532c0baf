"""Gateway behavior: retries, limits, mocks, ledger, token math."""

from __future__ import annotations

import json
import threading
import time

import pytest

from logcascade.errors import ConfigError, GatewayError, ProtocolError
from logcascade.gateway import (
    CompletionRequest,
    CompletionResponse,
    CostLedger,
    DisabledGateway,
    Gateway,
    GatewayConfig,
    HttpGateway,
    OracleGateway,
    RecordingGateway,
    ScriptedGateway,
    TransientGatewayError,
    count_tokens,
    replay_gateway,
    request_key,
)


def make_request(text: str = "hello there", sample_id: str | None = None) -> CompletionRequest:
    return CompletionRequest(
        model_name="m",
        messages=[{"role": "user", "content": text}],
        metadata={"sample_id": sample_id} if sample_id else {},
    )


class TestCountTokens:
    def test_empty(self):
        assert count_tokens("") == 0

    def test_exact_multiple(self):
        assert count_tokens("abcd") == 1

    def test_ceiling(self):
        assert count_tokens("abcdefghi") == 3


class TestCostLedger:
    def test_cost_formula(self):
        ledger = CostLedger(price_in_per_1k=0.5, price_out_per_1k=1.5)
        ledger.record(2000, 1000)
        assert ledger.estimated_cost == pytest.approx(2000 * 0.5 / 1000 + 1000 * 1.5 / 1000)

    def test_monotone_accumulation(self):
        ledger = CostLedger(0.1, 0.2)
        ledger.record(10, 5)
        ledger.record(30, 15)
        assert ledger.total_requests == 2
        assert ledger.total_input_tokens == 40
        assert ledger.total_output_tokens == 20


class TestRequestValidation:
    def test_empty_messages_rejected(self):
        with pytest.raises(ConfigError):
            CompletionRequest(model_name="m", messages=[])

    def test_negative_temperature_rejected(self):
        with pytest.raises(ConfigError):
            CompletionRequest(model_name="m", messages=[{"role": "user", "content": "x"}], temperature=-1)

    def test_key_ignores_metadata(self):
        a = make_request("same text", sample_id="s1")
        b = make_request("same text", sample_id="s2")
        assert request_key(a) == request_key(b)

    def test_key_sensitive_to_content(self):
        assert request_key(make_request("one")) != request_key(make_request("two"))


class FlakyGateway(Gateway):
    """Fails transiently a set number of times, then succeeds."""

    def __init__(self, failures: int, **kw):
        super().__init__(**kw)
        self.failures = failures

    def _send(self, request):
        if self.attempts <= self.failures:
            raise TransientGatewayError("transient")
        return CompletionResponse("ok", 1, 1, 0)


class TestRetryContract:
    def test_fail_twice_then_succeed(self):
        gw = FlakyGateway(2, config=GatewayConfig(max_retries=3), sleep=lambda s: None)
        response = gw.complete(make_request())
        assert response.content == "ok"
        assert gw.attempts == 3

    def test_exhausted_retries_raise(self):
        gw = FlakyGateway(99, config=GatewayConfig(max_retries=3), sleep=lambda s: None)
        with pytest.raises(GatewayError):
            gw.complete(make_request())
        assert gw.attempts == 4  # initial try plus three retries

    def test_backoff_doubles(self):
        naps = []
        gw = FlakyGateway(
            99,
            config=GatewayConfig(max_retries=3, backoff_base_s=0.5),
            sleep=naps.append,
        )
        with pytest.raises(GatewayError):
            gw.complete(make_request())
        assert naps == [0.5, 1.0, 2.0]

    def test_ledger_updated_once_per_success(self):
        gw = FlakyGateway(2, config=GatewayConfig(max_retries=3), sleep=lambda s: None)
        gw.complete(make_request())
        assert gw.ledger.total_requests == 1

    def test_failed_call_never_touches_ledger(self):
        gw = FlakyGateway(99, config=GatewayConfig(max_retries=1), sleep=lambda s: None)
        with pytest.raises(GatewayError):
            gw.complete(make_request())
        assert gw.ledger.total_requests == 0


class SlowGateway(Gateway):
    def _send(self, request):
        time.sleep(0.02)
        return CompletionResponse("ok", 1, 1, 0)


class TestConcurrencyLimit:
    def test_in_flight_never_exceeds_limit(self):
        gw = SlowGateway(config=GatewayConfig(concurrency_limit=2))
        threads = [
            threading.Thread(target=gw.complete, args=(make_request(f"t{i}"),)) for i in range(8)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert gw.max_in_flight <= 2
        assert gw.ledger.total_requests == 8


class FakeClock:
    def __init__(self):
        self.now = 0.0

    def time(self) -> float:
        return self.now

    def sleep(self, seconds: float) -> None:
        self.now += seconds


class EchoGateway(Gateway):
    def _send(self, request):
        return CompletionResponse("ok", 1, 1, 0)


class TestRateLimit:
    def test_token_bucket_throttles_after_burst(self):
        clock = FakeClock()
        gw = EchoGateway(
            config=GatewayConfig(rpm_limit=6), sleep=clock.sleep, clock=clock.time
        )
        for _ in range(6):
            gw.complete(make_request())
        assert clock.now == 0.0  # the burst capacity absorbs the first six
        gw.complete(make_request())
        assert clock.now == pytest.approx(10.0)  # then one token per 60/6 seconds

    def test_zero_limit_means_unlimited(self):
        clock = FakeClock()
        gw = EchoGateway(config=GatewayConfig(rpm_limit=0), sleep=clock.sleep, clock=clock.time)
        for _ in range(100):
            gw.complete(make_request())
        assert clock.now == 0.0


class TestScriptedGateway:
    def test_scripted_reply_by_prompt_hash(self):
        req = make_request("what is up")
        gw = ScriptedGateway({request_key(req): "scripted answer"})
        assert gw.complete(req).content == "scripted answer"

    def test_identical_requests_identical_responses(self):
        req = make_request("ping")
        gw = ScriptedGateway({request_key(req): "pong"})
        a = gw.complete(req)
        b = gw.complete(make_request("ping"))
        assert a.content == b.content
        assert a.input_tokens == b.input_tokens

    def test_default_entry_catches_unknown(self):
        gw = ScriptedGateway({"default": "fallthrough"})
        assert gw.complete(make_request("anything")).content == "fallthrough"

    def test_unknown_without_default_raises(self):
        gw = ScriptedGateway({})
        with pytest.raises(GatewayError):
            gw.complete(make_request("mystery"))

    def test_from_file(self, tmp_path):
        req = make_request("file test")
        p = tmp_path / "script.json"
        p.write_text(json.dumps({request_key(req): "from disk"}))
        gw = ScriptedGateway.from_file(p)
        assert gw.complete(req).content == "from disk"


class TestDisabledGateway:
    def test_any_call_raises(self):
        gw = DisabledGateway()
        with pytest.raises(GatewayError, match="disabled"):
            gw.complete(make_request("should never happen"))

    def test_ledger_stays_empty(self):
        gw = DisabledGateway()
        with pytest.raises(GatewayError):
            gw.complete(make_request("nope"))
        assert gw.ledger.snapshot()["total_requests"] == 0


class TestOracleGateway:
    TRUTH = {"s1": "Anomaly", "s2": "Normal", "s3": "Anomaly"}
    LABELS = ["Normal", "Anomaly"]

    def test_zero_wrong_rate_answers_truth(self):
        gw = OracleGateway(self.TRUTH, self.LABELS, wrong_rate=0.0)
        for sid, truth in self.TRUTH.items():
            content = gw.complete(make_request("q", sample_id=sid)).content
            assert content == f"Reason: oracle.\nResult: {truth}"

    def test_full_wrong_rate_never_answers_truth(self):
        gw = OracleGateway(self.TRUTH, self.LABELS, wrong_rate=1.0, seed=3)
        for sid, truth in self.TRUTH.items():
            content = gw.complete(make_request("q", sample_id=sid)).content
            assert content.rsplit(" ", 1)[-1] != truth

    def test_half_wrong_rate_deterministic_pattern(self):
        pattern_a = []
        pattern_b = []
        for pattern in (pattern_a, pattern_b):
            gw = OracleGateway(
                {f"s{i}": "Normal" for i in range(50)}, self.LABELS, wrong_rate=0.5, seed=9
            )
            for i in range(50):
                content = gw.complete(make_request("q", sample_id=f"s{i}")).content
                pattern.append(content.rsplit(" ", 1)[-1])
        assert pattern_a == pattern_b
        assert 5 < sum(lab != "Normal" for lab in pattern_a) < 45

    def test_unknown_sample_error_mode(self):
        gw = OracleGateway(self.TRUTH, self.LABELS, unknown_behavior="error")
        with pytest.raises(GatewayError):
            gw.complete(make_request("q", sample_id="nope"))

    def test_unknown_sample_refuse_mode(self):
        gw = OracleGateway(self.TRUTH, self.LABELS, unknown_behavior="refuse")
        content = gw.complete(make_request("q", sample_id="nope")).content
        assert "Result:" not in content


class TestHttpGateway:
    class FakeReply:
        def __init__(self, status_code: int, payload=None, text: str = ""):
            self.status_code = status_code
            self._payload = payload
            self.text = text

        def json(self):
            if self._payload is None:
                raise ValueError("not json")
            return self._payload

    class FakeSession:
        def __init__(self, replies):
            self.replies = list(replies)
            self.sent = []

        def post(self, url, json=None, headers=None, timeout=None):
            self.sent.append({"url": url, "json": json, "headers": headers})
            return self.replies.pop(0)

    def ok_payload(self, content="Result: Normal"):
        return {
            "choices": [{"message": {"content": content}}],
            "usage": {"prompt_tokens": 7, "completion_tokens": 3},
        }

    def test_wire_shape_and_auth_header(self):
        session = self.FakeSession([self.FakeReply(200, self.ok_payload())])
        config = GatewayConfig(endpoint="http://llm.test/v1/chat", model="big", auth_token="sekrit")
        gw = HttpGateway(config, session=session, sleep=lambda s: None)
        response = gw.complete(make_request("classify this"))
        body = session.sent[0]["json"]
        assert body["model"] == "m"
        assert body["messages"] == [{"role": "user", "content": "classify this"}]
        assert body["temperature"] == 0.0
        assert body["max_tokens"] == 1024
        assert session.sent[0]["headers"]["Authorization"] == "Bearer sekrit"
        assert response.input_tokens == 7
        assert response.output_tokens == 3

    def test_retries_on_5xx_then_succeeds(self):
        session = self.FakeSession([
            self.FakeReply(500, text="oops"),
            self.FakeReply(503, text="oops"),
            self.FakeReply(200, self.ok_payload()),
        ])
        config = GatewayConfig(endpoint="http://llm.test", max_retries=3)
        gw = HttpGateway(config, session=session, sleep=lambda s: None)
        assert gw.complete(make_request()).content == "Result: Normal"
        assert len(session.sent) == 3

    def test_4xx_fails_fast(self):
        session = self.FakeSession([self.FakeReply(401, text="denied")])
        config = GatewayConfig(endpoint="http://llm.test", max_retries=3)
        gw = HttpGateway(config, session=session, sleep=lambda s: None)
        with pytest.raises(GatewayError):
            gw.complete(make_request())
        assert len(session.sent) == 1  # no retry on auth rejection

    def test_malformed_reply_is_protocol_error(self):
        session = self.FakeSession([self.FakeReply(200, {"weird": True})])
        config = GatewayConfig(endpoint="http://llm.test")
        gw = HttpGateway(config, session=session, sleep=lambda s: None)
        with pytest.raises(ProtocolError):
            gw.complete(make_request())

    def test_missing_endpoint_rejected(self):
        with pytest.raises(ConfigError):
            HttpGateway(GatewayConfig(endpoint=""))


class TestRecordReplay:
    def test_round_trip(self, tmp_path):
        req = make_request("record me", sample_id="s1")
        live = OracleGateway({"s1": "Anomaly"}, ["Normal", "Anomaly"])
        path = tmp_path / "transcript.json"
        recorder = RecordingGateway(live, path)
        first = recorder.complete(req)
        offline = replay_gateway(path)
        second = offline.complete(make_request("record me", sample_id="s1"))
        assert second.content == first.content

    def test_ledger_audit_matches_replayed_totals(self, tmp_path):
        reqs = [make_request(f"query {i}", sample_id=f"s{i}") for i in range(4)]
        live = OracleGateway({f"s{i}": "Normal" for i in range(4)}, ["Normal", "Anomaly"])
        path = tmp_path / "transcript.json"
        recorder = RecordingGateway(live, path)
        responses = [recorder.complete(r) for r in reqs]
        expect_in = sum(r.input_tokens for r in responses)
        expect_out = sum(r.output_tokens for r in responses)
        offline = replay_gateway(path)
        for r in reqs:
            offline.complete(r)
        assert offline.ledger.total_input_tokens == expect_in
        assert offline.ledger.total_output_tokens == expect_out
        assert offline.ledger.total_requests == 4
