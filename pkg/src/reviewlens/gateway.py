"""Chat-completion gateway with retries, fingerprinting, and record/replay.

Responsibilities:
  * a provider-agnostic request/response pair for single-turn chat calls
  * a stable content fingerprint identifying a request (the credential is
    deliberately outside the identity)
  * interchangeable backends: live HTTP, replay-from-fixtures, and a
    recording wrapper that captures live traffic for later replay
  * retry with exponential backoff driven by a declarative policy
  * ``lookup_or_call`` / ``complete_parsed``: the cache-aware composition
    used by every pipeline stage

The live backend speaks the common chat-completions JSON dialect: a single
POST with system/user messages and bearer auth, which both OpenAI-style and
Gemini-style endpoints accept.
"""

from __future__ import annotations

import enum
import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Protocol, TypeVar, runtime_checkable

import requests

from .errors import (
    AuthFailedError,
    ExhaustedRetriesError,
    GatewayError,
    MalformedOutputError,
    NoFixtureError,
    RateLimitedError,
    TransportError,
)
from .store import ResponseStore

T = TypeVar("T")

RETRYABLE_ERROR_KINDS = frozenset({"transport", "rate_limited", "malformed_output"})


class ResponseFormat(str, enum.Enum):
    FREE_TEXT = "free_text"
    JSON_OBJECT = "json_object"


@dataclass(frozen=True, slots=True)
class ChatRequest:
    """One single-turn chat call. Temperature defaults to 0.0 for replayability."""

    model: str
    system_prompt: str
    user_prompt: str
    temperature: float = 0.0
    response_format: ResponseFormat = ResponseFormat.FREE_TEXT

    def __post_init__(self) -> None:
        if not self.model:
            raise ValueError("model must be non-empty")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError("temperature must be within [0.0, 1.0]")


@dataclass(frozen=True, slots=True)
class ChatResponse:
    text: str
    model: str
    latency_ms: int = 0

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be >= 0")


@dataclass(frozen=True, slots=True)
class RetryPolicy:
    """Declarative retry behaviour shared by all stages."""

    max_attempts: int = 3
    base_delay_ms: int = 250
    backoff_factor: float = 2.0
    retryable_errors: frozenset[str] = RETRYABLE_ERROR_KINDS

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.base_delay_ms < 0:
            raise ValueError("base_delay_ms must be >= 0")
        if self.backoff_factor < 1.0:
            raise ValueError("backoff_factor must be >= 1.0")
        object.__setattr__(self, "retryable_errors", frozenset(self.retryable_errors))

    def delay_ms(self, retry_index: int) -> float:
        """Delay before re-attempt number ``retry_index`` (1-based).

        Grows as base * factor**(retry_index - 1); nondecreasing since the
        factor is >= 1.
        """
        if retry_index < 1:
            raise ValueError("retry_index is 1-based")
        return self.base_delay_ms * self.backoff_factor ** (retry_index - 1)

    def is_retryable(self, error: BaseException) -> bool:
        return getattr(error, "kind", None) in self.retryable_errors

    def to_dict(self) -> dict[str, Any]:
        return {
            "max_attempts": self.max_attempts,
            "base_delay_ms": self.base_delay_ms,
            "backoff_factor": self.backoff_factor,
            "retryable_errors": sorted(self.retryable_errors),
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "RetryPolicy":
        return cls(
            max_attempts=int(payload.get("max_attempts", 3)),
            base_delay_ms=int(payload.get("base_delay_ms", 250)),
            backoff_factor=float(payload.get("backoff_factor", 2.0)),
            retryable_errors=frozenset(payload.get("retryable_errors", RETRYABLE_ERROR_KINDS)),
        )


@dataclass(frozen=True, slots=True)
class ApiCredential:
    """An API key held in memory only.

    The key is excluded from repr and must never reach any file, log line,
    cache entry, or serialized report. Request fingerprints exclude it by
    construction.
    """

    key: str = field(repr=False)

    def __post_init__(self) -> None:
        if not self.key:
            raise ValueError("credential key must be non-empty")

    @classmethod
    def from_env(cls, variable: str = "REVIEWLENS_API_KEY") -> Optional["ApiCredential"]:
        import os

        value = os.environ.get(variable, "").strip()
        return cls(key=value) if value else None


def fingerprint(request: ChatRequest) -> str:
    """Stable content hash identifying a request across runs and processes.

    Covers model, both prompts, temperature, and response format; never the
    credential. Prompt template edits (and the version marker rendered into
    the system prompt) therefore change the fingerprint.
    """
    payload = {
        "model": request.model,
        "system_prompt": request.system_prompt,
        "user_prompt": request.user_prompt,
        "temperature": request.temperature,
        "response_format": request.response_format.value,
    }
    canonical = json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@runtime_checkable
class ChatBackend(Protocol):
    def complete(self, request: ChatRequest, credential: ApiCredential | None = None) -> ChatResponse:
        ...


class _CallCounter:
    """Thread-safe count of completed backend invocations."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._calls = 0

    def bump(self) -> None:
        with self._lock:
            self._calls += 1

    @property
    def calls(self) -> int:
        with self._lock:
            return self._calls


def _default_session() -> requests.Session:
    return requests.Session()


class HttpBackend:
    """Live chat-completions backend: one JSON POST with bearer auth."""

    def __init__(
        self,
        base_url: str,
        *,
        timeout_s: float = 60.0,
        session: Any | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self._session = session if session is not None else _default_session()
        self._counter = _CallCounter()

    @property
    def calls(self) -> int:
        return self._counter.calls

    def complete(self, request: ChatRequest, credential: ApiCredential | None = None) -> ChatResponse:
        if credential is None:
            raise AuthFailedError("live backend requires an API credential")
        self._counter.bump()
        payload: dict[str, Any] = {
            "model": request.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
        }
        if request.response_format is ResponseFormat.JSON_OBJECT:
            payload["response_format"] = {"type": "json_object"}
        headers = {
            "Authorization": f"Bearer {credential.key}",
            "Content-Type": "application/json",
        }
        started = time.monotonic()
        try:
            response = self._session.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise TransportError(f"request failed: {exc}") from exc
        if response.status_code == 429:
            raise RateLimitedError("provider throttled the request (HTTP 429)")
        if response.status_code in (401, 403):
            raise AuthFailedError(f"credential rejected (HTTP {response.status_code})")
        if response.status_code >= 400:
            raise TransportError(f"provider returned HTTP {response.status_code}")
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected provider payload shape: {exc}") from exc
        if not isinstance(text, str):
            raise TransportError("provider returned a non-string message content")
        latency_ms = int((time.monotonic() - started) * 1000)
        return ChatResponse(text=text, model=str(body.get("model", request.model)), latency_ms=latency_ms)


class ReplayBackend:
    """Serves recorded responses from a fixture directory; never touches the
    network. A missing fixture is a test-setup error, not a retry case."""

    def __init__(self, fixtures_dir: Path | str):
        self._store = ResponseStore(fixtures_dir)
        self._counter = _CallCounter()

    @property
    def calls(self) -> int:
        return self._counter.calls

    def complete(self, request: ChatRequest, credential: ApiCredential | None = None) -> ChatResponse:
        self._counter.bump()
        digest = fingerprint(request)
        payload, problem = self._store.load(digest)
        if payload is None:
            detail = problem or "no recorded response"
            raise NoFixtureError(
                f"{detail} for fingerprint {digest[:16]}... (model {request.model})"
            )
        return ChatResponse(text=payload["text"], model=str(payload.get("model", request.model)), latency_ms=0)


class RecordingBackend:
    """Pass-through wrapper that captures every live response as a fixture."""

    def __init__(self, inner: ChatBackend, fixtures_dir: Path | str):
        self.inner = inner
        self._store = ResponseStore(fixtures_dir)
        self._counter = _CallCounter()

    @property
    def calls(self) -> int:
        return self._counter.calls

    def complete(self, request: ChatRequest, credential: ApiCredential | None = None) -> ChatResponse:
        self._counter.bump()
        response = self.inner.complete(request, credential)
        self._store.save(fingerprint(request), {"text": response.text, "model": response.model})
        return response


def complete_with_retry(
    request: ChatRequest,
    credential: ApiCredential | None,
    policy: RetryPolicy,
    *,
    gateway: ChatBackend,
    stats: Any | None = None,
) -> ChatResponse:
    """Call the backend, retrying retryable failures with exponential backoff.

    Raises ExhaustedRetriesError wrapping the last error once the attempt
    budget is spent; non-retryable errors propagate immediately. Each
    re-attempt is recorded on ``stats`` when one is provided.
    """
    last_error: BaseException | None = None
    for attempt in range(1, policy.max_attempts + 1):
        if attempt > 1:
            delay = policy.delay_ms(attempt - 1) / 1000.0
            if delay > 0:
                time.sleep(delay)
            if stats is not None:
                stats.record_retry()
        try:
            return gateway.complete(request, credential)
        except GatewayError as exc:
            if not policy.is_retryable(exc):
                raise
            last_error = exc
    assert last_error is not None
    raise ExhaustedRetriesError(policy.max_attempts, last_error)


def lookup_or_call(
    request: ChatRequest,
    gateway: ChatBackend,
    cache: Any | None = None,
    *,
    credential: ApiCredential | None = None,
    policy: RetryPolicy | None = None,
    stats: Any | None = None,
    diagnostics: list[str] | None = None,
) -> ChatResponse:
    """Serve a request from the cache when possible, else call and store.

    A cache hit performs zero gateway calls and bumps the cache-hit counter.
    A corrupt cache entry degrades to a miss with a diagnostic note.
    """
    digest = fingerprint(request)
    if cache is not None:
        cached = cache.get(digest, diagnostics=diagnostics)
        if cached is not None:
            if stats is not None:
                stats.record_cache_hit()
            return cached
    if policy is not None:
        response = complete_with_retry(request, credential, policy, gateway=gateway, stats=stats)
    else:
        response = gateway.complete(request, credential)
    if cache is not None:
        cache.put(digest, response)
    return response


def complete_parsed(
    request: ChatRequest,
    parser: Callable[[str, list[str]], T],
    *,
    gateway: ChatBackend,
    credential: ApiCredential | None = None,
    policy: RetryPolicy | None = None,
    cache: Any | None = None,
    stats: Any | None = None,
    diagnostics: list[str] | None = None,
) -> T:
    """Resolve a request into parsed output, retrying malformed generations.

    ``parser`` receives the response text plus a scratch diagnostics list
    that is merged into ``diagnostics`` only when parsing succeeds, so notes
    from abandoned attempts never leak into the run record. A parse failure
    evicts the cached response first: re-sampling is the remedy, and a bad
    answer must not be pinned by the cache.
    """
    policy = policy or RetryPolicy()
    last_error: BaseException | None = None
    for attempt in range(1, policy.max_attempts + 1):
        if attempt > 1:
            delay = policy.delay_ms(attempt - 1) / 1000.0
            if delay > 0:
                time.sleep(delay)
            if stats is not None:
                stats.record_retry()
        response = lookup_or_call(
            request,
            gateway,
            cache,
            credential=credential,
            policy=policy,
            stats=stats,
            diagnostics=diagnostics,
        )
        scratch: list[str] = []
        try:
            parsed = parser(response.text, scratch)
        except MalformedOutputError as exc:
            last_error = exc
            if cache is not None:
                cache.evict(fingerprint(request))
            if not policy.is_retryable(exc):
                raise
            continue
        if diagnostics is not None:
            diagnostics.extend(scratch)
        return parsed
    assert last_error is not None
    raise ExhaustedRetriesError(policy.max_attempts, last_error)
