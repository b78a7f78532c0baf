"""Client layer for chat-completion endpoints, plus deterministic mocks.

One wire dialect covers every backend: POST {model, messages,
temperature, max_tokens}, read the first choice's message content.
Retries with exponential backoff apply only to transport and 5xx-class
failures. All traffic shares a token-bucket rate limit, a bounded
in-flight semaphore, and a cost ledger. The scripted, oracle, and replay
backends never open a socket, which is what keeps the test suite and CI
hermetic.
"""

from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import requests

from logcascade.errors import ConfigError, GatewayError, ProtocolError
from logcascade.hashing import stable_hash64


def count_tokens(text: str) -> int:
    """Heuristic token estimate: one token per 4 characters, rounded up.

    An approximation by design; exact counts would tie the ledger to a
    specific tokenizer.
    """
    return math.ceil(len(text) / 4)


@dataclass(slots=True)
class CompletionRequest:
    model_name: str
    messages: list[dict[str, str]]
    temperature: float = 0.0
    max_output_tokens: int = 1024
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.messages:
            raise ConfigError("messages must be non-empty")
        if self.temperature < 0.0:
            raise ConfigError("temperature must be >= 0")
        for m in self.messages:
            if "role" not in m or "content" not in m:
                raise ConfigError(f"malformed message: {m!r}")

    def prompt_text(self) -> str:
        return "\n".join(m["content"] for m in self.messages)


@dataclass(slots=True)
class CompletionResponse:
    content: str
    input_tokens: int
    output_tokens: int
    latency_ms: int


def request_key(request: CompletionRequest) -> str:
    """Stable hex fingerprint of the request payload (metadata excluded)."""
    body = json.dumps(
        {
            "model": request.model_name,
            "messages": request.messages,
            "temperature": request.temperature,
        },
        sort_keys=True,
    )
    return f"{stable_hash64(body, namespace='req'):016x}"


class CostLedger:
    """Running token and cost totals across all successful calls."""

    def __init__(self, price_in_per_1k: float = 0.0, price_out_per_1k: float = 0.0) -> None:
        self.price_in_per_1k = price_in_per_1k
        self.price_out_per_1k = price_out_per_1k
        self.total_requests = 0
        self.total_input_tokens = 0
        self.total_output_tokens = 0
        self._lock = threading.Lock()

    def record(self, input_tokens: int, output_tokens: int) -> None:
        with self._lock:
            self.total_requests += 1
            self.total_input_tokens += input_tokens
            self.total_output_tokens += output_tokens

    @property
    def estimated_cost(self) -> float:
        return (
            self.total_input_tokens * self.price_in_per_1k / 1000
            + self.total_output_tokens * self.price_out_per_1k / 1000
        )

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "total_requests": self.total_requests,
                "total_input_tokens": self.total_input_tokens,
                "total_output_tokens": self.total_output_tokens,
                "estimated_cost": self.estimated_cost,
            }


@dataclass(slots=True)
class GatewayConfig:
    endpoint: str = ""
    model: str = "mock"
    price_in_per_1k: float = 0.0
    price_out_per_1k: float = 0.0
    max_retries: int = 3
    rpm_limit: int = 0  # 0 = unlimited
    concurrency_limit: int = 4
    auth_token: str | None = None
    auth_header: str = "Authorization"
    timeout_s: float = 30.0
    backoff_base_s: float = 0.5

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.concurrency_limit < 1:
            raise ConfigError("concurrency_limit must be >= 1")


class TransientGatewayError(GatewayError):
    """Transport or 5xx-class failure; eligible for retry."""


class _TokenBucket:
    def __init__(self, rpm: int, clock: Callable[[], float], sleep: Callable[[float], None]) -> None:
        self.rpm = rpm
        self.clock = clock
        self.sleep = sleep
        self.tokens = float(rpm)
        self.updated = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self.rpm <= 0:
            return
        rate = self.rpm / 60.0
        while True:
            with self._lock:
                now = self.clock()
                self.tokens = min(self.rpm, self.tokens + (now - self.updated) * rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / rate
            self.sleep(wait)


class Gateway:
    """Shared retry/limit/ledger machinery; backends implement _send."""

    def __init__(
        self,
        config: GatewayConfig | None = None,
        ledger: CostLedger | None = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        self.config = config or GatewayConfig()
        self.ledger = ledger or CostLedger(
            self.config.price_in_per_1k, self.config.price_out_per_1k
        )
        self._sleep = sleep
        self._clock = clock
        self._bucket = _TokenBucket(self.config.rpm_limit, clock, sleep)
        self._slots = threading.Semaphore(self.config.concurrency_limit)
        self._inflight_lock = threading.Lock()
        self._in_flight = 0
        self.max_in_flight = 0
        self.attempts = 0

    def _send(self, request: CompletionRequest) -> CompletionResponse:
        raise NotImplementedError

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        self._slots.acquire()
        with self._inflight_lock:
            self._in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self._in_flight)
        try:
            self._bucket.acquire()
            last_error: Exception | None = None
            for attempt in range(self.config.max_retries + 1):
                if attempt > 0:
                    self._sleep(self.config.backoff_base_s * 2 ** (attempt - 1))
                self.attempts += 1
                started = self._clock()
                try:
                    response = self._send(request)
                except TransientGatewayError as exc:
                    last_error = exc
                    continue
                response.latency_ms = int((self._clock() - started) * 1000)
                self.ledger.record(response.input_tokens, response.output_tokens)
                return response
            raise GatewayError(
                f"gave up after {self.config.max_retries + 1} attempts: {last_error}"
            )
        finally:
            with self._inflight_lock:
                self._in_flight -= 1
            self._slots.release()


class HttpGateway(Gateway):
    """Real network backend speaking the chat-completion wire shape."""

    def __init__(self, config: GatewayConfig, session: requests.Session | None = None, **kw) -> None:
        if not config.endpoint:
            raise ConfigError("HttpGateway needs a configured endpoint")
        super().__init__(config, **kw)
        self.session = session or requests.Session()

    def _send(self, request: CompletionRequest) -> CompletionResponse:
        body = {
            "model": request.model_name or self.config.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.config.auth_token:
            headers[self.config.auth_header] = f"Bearer {self.config.auth_token}"
        try:
            reply = self.session.post(
                self.config.endpoint, json=body, headers=headers, timeout=self.config.timeout_s
            )
        except requests.RequestException as exc:
            raise TransientGatewayError(f"transport failure: {exc}") from exc
        if reply.status_code >= 500 or reply.status_code == 429:
            raise TransientGatewayError(f"server returned {reply.status_code}")
        if reply.status_code >= 400:
            raise GatewayError(f"request rejected: {reply.status_code} {reply.text[:200]}")
        try:
            payload = reply.json()
            content = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed endpoint reply: {exc}") from exc
        usage = payload.get("usage") or {}
        return CompletionResponse(
            content=content,
            input_tokens=int(usage.get("prompt_tokens", count_tokens(request.prompt_text()))),
            output_tokens=int(usage.get("completion_tokens", count_tokens(content))),
            latency_ms=0,
        )


class DisabledGateway(Gateway):
    """Placeholder for runs whose routing policy never escalates.

    Lets local-only pipelines skip endpoint configuration entirely while
    still satisfying the gateway interface; any actual call is a wiring
    mistake and fails loudly.
    """

    def _send(self, request: CompletionRequest) -> CompletionResponse:
        raise GatewayError("gateway is disabled for this run")


class ScriptedGateway(Gateway):
    """Deterministic mock: replies come from a prompt-hash script.

    The script maps request_key(request) to reply text; a "default" entry
    catches everything else. Token counts use the same heuristic as the
    live path so ledger audits stay meaningful.
    """

    def __init__(self, script: dict[str, str], config: GatewayConfig | None = None, **kw) -> None:
        super().__init__(config, **kw)
        self.script = dict(script)

    @classmethod
    def from_file(cls, path: str | Path, **kw) -> "ScriptedGateway":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")), **kw)

    def _send(self, request: CompletionRequest) -> CompletionResponse:
        key = request_key(request)
        if key in self.script:
            content = self.script[key]
        elif "default" in self.script:
            content = self.script["default"]
        else:
            raise GatewayError(f"no scripted reply for request {key}")
        return CompletionResponse(
            content=content,
            input_tokens=count_tokens(request.prompt_text()),
            output_tokens=count_tokens(content),
            latency_ms=0,
        )


class OracleGateway(Gateway):
    """Test oracle that answers from ground truth.

    Looks up the sample id carried in request metadata and replies with
    the true label, or with a deterministically chosen wrong one at the
    configured wrong-rate. Stands in for a large model during evaluation
    so end-to-end behavior is reproducible.
    """

    def __init__(
        self,
        truth_map: dict[str, str],
        label_space: list[str],
        wrong_rate: float = 0.0,
        seed: int = 0,
        unknown_behavior: str = "error",
        config: GatewayConfig | None = None,
        **kw,
    ) -> None:
        if not 0.0 <= wrong_rate <= 1.0:
            raise ConfigError(f"wrong_rate out of range: {wrong_rate}")
        if unknown_behavior not in ("error", "refuse"):
            raise ConfigError("unknown_behavior must be error or refuse")
        super().__init__(config, **kw)
        self.truth_map = dict(truth_map)
        self.label_space = list(label_space)
        self.wrong_rate = wrong_rate
        self.seed = seed
        self.unknown_behavior = unknown_behavior

    def _answer_for(self, sample_id: str) -> str:
        truth = self.truth_map[sample_id]
        if self.wrong_rate > 0.0:
            h = stable_hash64(f"{self.seed}:{sample_id}", namespace="oracle-wrong")
            if h / 2**64 < self.wrong_rate:
                pool = [lab for lab in self.label_space if lab != truth]
                if pool:
                    pick = stable_hash64(f"{self.seed}:{sample_id}", namespace="oracle-pick")
                    return pool[pick % len(pool)]
        return truth

    def _send(self, request: CompletionRequest) -> CompletionResponse:
        sample_id = request.metadata.get("sample_id")
        if sample_id is None or sample_id not in self.truth_map:
            if self.unknown_behavior == "refuse":
                content = "I cannot determine the answer for this input."
            else:
                raise GatewayError(f"oracle has no ground truth for sample {sample_id!r}")
        else:
            content = f"Reason: oracle.\nResult: {self._answer_for(sample_id)}"
        return CompletionResponse(
            content=content,
            input_tokens=count_tokens(request.prompt_text()),
            output_tokens=count_tokens(content),
            latency_ms=0,
        )


class RecordingGateway(Gateway):
    """Wraps a live gateway and persists request-hash → reply transcripts."""

    def __init__(self, inner: Gateway, transcript_path: str | Path, **kw) -> None:
        super().__init__(inner.config, ledger=inner.ledger, **kw)
        self.inner = inner
        self.transcript_path = Path(transcript_path)
        self.transcript: dict[str, str] = {}
        if self.transcript_path.exists():
            self.transcript = json.loads(self.transcript_path.read_text(encoding="utf-8"))

    def _send(self, request: CompletionRequest) -> CompletionResponse:
        response = self.inner._send(request)
        self.transcript[request_key(request)] = response.content
        self.transcript_path.write_text(
            json.dumps(self.transcript, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return response


def replay_gateway(transcript_path: str | Path, **kw) -> ScriptedGateway:
    """Serve a recorded transcript back, fully offline."""
    return ScriptedGateway.from_file(transcript_path, **kw)
