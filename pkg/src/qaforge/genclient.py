"""Drive generation providers: rate limiting, retries, strict parsing.

Providers expose ``complete(request) -> raw text`` plus a ProviderConfig;
the executor wraps every call with a per-provider token bucket, retries
transient failures with exponential backoff + jitter, and checkpoints
completions by request_id so interrupted runs resume without repeating
provider calls.
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .hashing import SplitMix64, hash64, mix64
from .promptgen import GenerationPlan, GenerationRequest
from .records import QARecord

# Strict output contract appended to every prompt; parse_completion is the
# counterpart that enforces it.
FORMAT_INSTRUCTIONS = (
    "أجب حصراً بكائن JSON واحد صالح بهذا الشكل دون أي نص قبله أو بعده:\n"
    '{"question": "نص سؤال المريض", "answer": "نص إجابة الطبيب"}'
)

TRANSIENT_STATUSES = {429, 500, 502, 503, 504}


class ProviderError(Exception):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class TransientProviderError(ProviderError):
    """HTTP 429/5xx/timeouts: retried with backoff."""


class PermanentProviderError(ProviderError):
    """Other 4xx and misconfiguration: recorded once, never retried."""


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class ProviderConfig:
    name: str
    endpoint: str = ""
    model: str = ""
    auth_env: str = ""
    temperature: float = 0.9
    max_output_tokens: int = 1024
    requests_per_second: float = 8.0
    max_attempts: int = 5
    backoff_base_ms: int = 500

    def __post_init__(self):
        if self.requests_per_second <= 0:
            raise ValueError("requests_per_second must be positive")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")


@dataclass
class RawCompletion:
    request_id: str
    provider: str
    raw_text: str
    latency_ms: float = 0.0
    attempt_count: int = 1

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "provider": self.provider,
            "raw_text": self.raw_text,
            "latency_ms": self.latency_ms,
            "attempt_count": self.attempt_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RawCompletion":
        return cls(
            request_id=d["request_id"],
            provider=d["provider"],
            raw_text=d["raw_text"],
            latency_ms=d.get("latency_ms", 0.0),
            attempt_count=d.get("attempt_count", 1),
        )


@dataclass
class ExecutionFailure:
    request_id: str
    provider: str
    error: str
    attempts: int
    permanent: bool

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "provider": self.provider,
            "error": self.error,
            "attempts": self.attempts,
            "permanent": self.permanent,
        }


@dataclass
class ExecutionResult:
    completions: list[RawCompletion]
    failures: list[ExecutionFailure]
    provider_calls: int


def backoff_delay_ms(attempt: int, base_ms: int, jitter: float) -> float:
    """Nominal delay before attempt+1: base * 2^(attempt-1) plus jitter.

    jitter must be a uniform draw from [0, 1); it scales to [0, base_ms).
    """
    return base_ms * 2 ** (attempt - 1) + jitter * base_ms


class TokenBucket:
    """Blocking rate limiter: sustained rate `rate`, burst of one token."""

    def __init__(self, rate: float, clock=time.monotonic, sleep_fn=time.sleep):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = 1.0
        self._tokens = 1.0
        self._last = clock()
        self._clock = clock
        self._sleep = sleep_fn
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


def parse_completion(raw_text: str) -> tuple[str, str]:
    """Extract the (question, answer) pair from a model completion.

    Accepts one JSON object, optionally wrapped in code fences or prose:
    the first balanced JSON object found in the text is decoded. Raises
    ParseError otherwise; never raises anything else on arbitrary input.
    """
    decoder = json.JSONDecoder()
    pos = raw_text.find("{")
    while pos != -1:
        try:
            value, _ = decoder.raw_decode(raw_text, pos)
        except (json.JSONDecodeError, ValueError):
            pos = raw_text.find("{", pos + 1)
            continue
        if not isinstance(value, dict):
            pos = raw_text.find("{", pos + 1)
            continue
        question = value.get("question")
        answer = value.get("answer")
        if not isinstance(question, str) or not isinstance(answer, str):
            raise ParseError("JSON object lacks string question/answer fields")
        return question, answer
    raise ParseError("no balanced JSON object found in completion")


_MALFORMED_VARIANTS = (
    "عذراً، لا أستطيع تقديم استشارة طبية في هذه الحالة.",
    '{"question": "سؤال غير مكتمل بدون إغلاق',
    '{"سؤال": "مفاتيح غير صحيحة", "جواب": "لن يمر هذا من المحلل"}',
)


def _sample_span(words: list[str], rng: SplitMix64, min_len: int, max_len: int) -> list[str]:
    span_len = min(len(words), min_len + rng.next_below(max_len - min_len + 1))
    start = rng.next_below(len(words) - span_len + 1)
    return words[start : start + span_len]


def mock_completion_text(
    request: GenerationRequest,
    exemplars: list[QARecord],
    master_seed: int,
    malformed_rate: float = 0.05,
) -> str:
    """Deterministic offline stand-in for a live generation model.

    Recombines word spans from the request's exemplars (question text
    uses exemplar-question vocabulary only) and appends a numeric tag to
    the answer so outputs are unique per request. A malformed_rate slice
    of outputs is deliberately not parseable, to exercise the parse stage.
    """
    if not exemplars:
        raise ValueError("mock provider needs at least one exemplar")
    rng = SplitMix64(mix64(master_seed ^ hash64(request.request_id)))
    if rng.next_float() < malformed_rate:
        return _MALFORMED_VARIANTS[rng.next_below(len(_MALFORMED_VARIANTS))]

    q_parts: list[str] = []
    for _ in range(2):
        exemplar = exemplars[rng.next_below(len(exemplars))]
        q_parts.extend(_sample_span(exemplar.question.split(), rng, 3, 7))
    a_parts: list[str] = []
    for _ in range(2):
        exemplar = exemplars[rng.next_below(len(exemplars))]
        a_parts.extend(_sample_span(exemplar.answer.split(), rng, 5, 10))
    a_parts.append(str(rng.next_u64()))

    payload = json.dumps(
        {"question": " ".join(q_parts), "answer": " ".join(a_parts)},
        ensure_ascii=False,
    )
    wrapper = rng.next_below(3)
    if wrapper == 1:
        return f"```json\n{payload}\n```"
    if wrapper == 2:
        return f"إليك الزوج المطلوب:\n{payload}"
    return payload


class MockProvider:
    """Offline provider; resolves exemplar ids against the seed corpus."""

    def __init__(
        self,
        seed_records: list[QARecord],
        master_seed: int,
        malformed_rate: float = 0.05,
        config: ProviderConfig | None = None,
    ):
        self._by_id = {r.id: r for r in seed_records}
        self.master_seed = master_seed
        self.malformed_rate = malformed_rate
        self.config = config or ProviderConfig(name="mock", requests_per_second=1e9)

    def complete(self, request: GenerationRequest) -> str:
        exemplars = [self._by_id[i] for i in request.exemplar_ids if i in self._by_id]
        return mock_completion_text(
            request, exemplars, self.master_seed, self.malformed_rate
        )


class LiveProvider:
    """Chat-completion HTTP provider with bearer-token auth."""

    def __init__(self, config: ProviderConfig):
        self.config = config
        if not config.endpoint:
            raise PermanentProviderError(f"provider {config.name}: endpoint not configured")
        if not config.auth_env:
            raise PermanentProviderError(f"provider {config.name}: auth_env not configured")
        self._token = os.environ.get(config.auth_env)
        if not self._token:
            raise PermanentProviderError(
                f"provider {config.name}: env var {config.auth_env} is not set"
            )

    def complete(self, request: GenerationRequest) -> str:
        import httpx

        body = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.rendered_prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_output_tokens,
        }
        try:
            response = httpx.post(
                self.config.endpoint,
                json=body,
                headers={"Authorization": f"Bearer {self._token}"},
                timeout=60.0,
            )
        except httpx.TimeoutException as exc:
            raise TransientProviderError(f"timeout: {exc}") from exc
        except httpx.HTTPError as exc:
            raise TransientProviderError(f"transport error: {exc}") from exc
        if response.status_code in TRANSIENT_STATUSES:
            raise TransientProviderError(
                f"HTTP {response.status_code}", status=response.status_code
            )
        if response.status_code >= 400:
            raise PermanentProviderError(
                f"HTTP {response.status_code}: {response.text[:200]}",
                status=response.status_code,
            )
        data = response.json()
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise PermanentProviderError(f"unexpected response shape: {exc}") from exc


def load_checkpoint(path: str | Path | None) -> dict[str, RawCompletion]:
    """First completion per request_id wins (at-most-once acceptance)."""
    done: dict[str, RawCompletion] = {}
    if path is None or not Path(path).exists():
        return done
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            completion = RawCompletion.from_dict(json.loads(line))
            done.setdefault(completion.request_id, completion)
    return done


def execute(
    plan: GenerationPlan,
    providers: dict[str, object],
    concurrency_limit: int = 4,
    checkpoint_path: str | Path | None = None,
    clock=time.monotonic,
    sleep_fn=time.sleep,
) -> ExecutionResult:
    """Run every plan request through its provider.

    Completions come back in plan order; requests already present in the
    checkpoint are skipped without any provider call.
    """
    missing = {r.source for r in plan.requests} - set(providers)
    if missing:
        raise ValueError(f"no provider configured for sources: {sorted(missing)}")

    done = load_checkpoint(checkpoint_path)
    pending = [r for r in plan.requests if r.request_id not in done]
    buckets = {
        name: TokenBucket(provider.config.requests_per_second, clock, sleep_fn)
        for name, provider in providers.items()
    }
    jitter_rng = random.Random(plan.master_seed)
    write_lock = threading.Lock()
    checkpoint_fh = None
    if checkpoint_path is not None:
        Path(checkpoint_path).parent.mkdir(parents=True, exist_ok=True)
        checkpoint_fh = open(checkpoint_path, "a", encoding="utf-8")

    failures: list[ExecutionFailure] = []
    calls = 0

    def run_one(request: GenerationRequest) -> RawCompletion | ExecutionFailure:
        nonlocal calls
        provider = providers[request.source]
        cfg = provider.config
        attempt = 1
        while True:
            buckets[request.source].acquire()
            started = clock()
            try:
                with write_lock:
                    calls += 1
                raw_text = provider.complete(request)
            except TransientProviderError as exc:
                if attempt >= cfg.max_attempts:
                    return ExecutionFailure(
                        request_id=request.request_id,
                        provider=request.source,
                        error=str(exc),
                        attempts=attempt,
                        permanent=False,
                    )
                with write_lock:
                    jitter = jitter_rng.random()
                delay_ms = backoff_delay_ms(attempt, cfg.backoff_base_ms, jitter)
                sleep_fn(delay_ms / 1000.0)
                attempt += 1
                continue
            except PermanentProviderError as exc:
                return ExecutionFailure(
                    request_id=request.request_id,
                    provider=request.source,
                    error=str(exc),
                    attempts=attempt,
                    permanent=True,
                )
            completion = RawCompletion(
                request_id=request.request_id,
                provider=request.source,
                raw_text=raw_text,
                latency_ms=(clock() - started) * 1000.0,
                attempt_count=attempt,
            )
            if checkpoint_fh is not None:
                with write_lock:
                    checkpoint_fh.write(
                        json.dumps(completion.to_dict(), ensure_ascii=False) + "\n"
                    )
                    checkpoint_fh.flush()
            return completion

    try:
        if concurrency_limit <= 1 or not pending:
            outcomes = [run_one(r) for r in pending]
        else:
            with ThreadPoolExecutor(max_workers=concurrency_limit) as pool:
                outcomes = list(pool.map(run_one, pending))
    finally:
        if checkpoint_fh is not None:
            checkpoint_fh.close()

    for request, outcome in zip(pending, outcomes):
        if isinstance(outcome, ExecutionFailure):
            failures.append(outcome)
        else:
            done[request.request_id] = outcome

    ordered = [done[r.request_id] for r in plan.requests if r.request_id in done]
    return ExecutionResult(completions=ordered, failures=failures, provider_calls=calls)
