"""Uniform chat-completion access: remote endpoints, retries, cache, scripted replay.

All pipeline stages talk to models through :class:`CompletionClient`, which
layers a persistent content-addressed response cache and a retry policy over
an underlying provider. The scripted provider replays a fixture file keyed by
request digest, which makes whole pipeline runs bit-deterministic offline.
"""

from __future__ import annotations

import json
import logging
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import httpx

from .records import content_hash

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


class ProviderError(Exception):
    """Base class for completion failures."""

    retryable = False


class AuthError(ProviderError):
    """Credentials missing or rejected. Never retried."""


class RateLimited(ProviderError):
    """Endpoint rate limit; retried with backoff until the attempt cap."""

    retryable = True


class EndpointError(ProviderError):
    """Endpoint returned an error. Retryable only for transient (5xx) statuses."""

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class Timeout(ProviderError):
    """Request timed out; retried until the attempt cap."""

    retryable = True


@dataclass(frozen=True)
class CompletionRequest:
    """One chat-completion call. sample_index distinguishes repeated draws."""

    model_id: str
    messages: tuple[tuple[str, str], ...]
    temperature: float
    top_p: float
    max_tokens: int
    sample_index: int = 0

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        for role, _content in self.messages:
            if role not in ROLES:
                raise ValueError(f"unknown message role: {role!r}")
        if self.messages[-1][0] != "user":
            raise ValueError("final message role must be user")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")
        if self.sample_index < 0:
            raise ValueError("sample_index must be >= 0")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    model_id: str
    cached: bool
    latency_ms: int


def request_digest(request: CompletionRequest) -> str:
    """Cache key: a pure function of the six request fields."""
    return content_hash(
        [
            request.model_id,
            json.dumps(list(request.messages), ensure_ascii=True, separators=(",", ":")),
            repr(float(request.temperature)),
            repr(float(request.top_p)),
            str(request.max_tokens),
            str(request.sample_index),
        ]
    )


@dataclass(frozen=True)
class ModelRole:
    """A pipeline role's model id plus its sampling parameters."""

    name: str
    model_id: str
    temperature: float
    top_p: float
    max_tokens: int


def build_request(role: ModelRole, prompt: str, sample_index: int = 0) -> CompletionRequest:
    """Single-user-message request, the only call shape this pipeline uses."""
    return CompletionRequest(
        model_id=role.model_id,
        messages=(("user", prompt),),
        temperature=float(role.temperature),
        top_p=float(role.top_p),
        max_tokens=role.max_tokens,
        sample_index=sample_index,
    )


class Provider(Protocol):
    def invoke(self, request: CompletionRequest) -> str: ...


class ScriptedProvider:
    """Offline provider that replays a fixture mapping request digest -> text.

    A lookup miss is an EndpointError: scripted fixtures are exhaustive by
    construction, so a miss means the test asked for something unplanned.
    """

    def __init__(self, entries: dict[str, str], description: str = ""):
        self.entries = dict(entries)
        self.description = description
        self.calls = 0

    @classmethod
    def from_file(cls, path: Path | str) -> "ScriptedProvider":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(entries=payload["entries"], description=payload.get("description", ""))

    def invoke(self, request: CompletionRequest) -> str:
        self.calls += 1
        digest = request_digest(request)
        if digest not in self.entries:
            raise EndpointError(f"no scripted response for request digest {digest}")
        return self.entries[digest]


def write_fixture(path: Path | str, entries: dict[str, str], description: str = "") -> None:
    """Write a scripted-provider fixture file (digest-keyed, human-readable)."""
    payload = {"description": description, "entries": dict(sorted(entries.items()))}
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


class HttpProvider:
    """Remote provider speaking the de-facto chat-completions JSON schema.

    Endpoint configuration comes from the environment:
    ``FORGE_<NAME>_BASE_URL`` and ``FORGE_<NAME>_API_KEY``.
    """

    def __init__(
        self,
        name: str,
        base_url: Optional[str] = None,
        api_key: Optional[str] = None,
        timeout_s: float = 120.0,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        env = name.upper().replace("-", "_")
        self.name = name
        self.base_url = base_url or os.environ.get(f"FORGE_{env}_BASE_URL")
        self.api_key = api_key if api_key is not None else os.environ.get(f"FORGE_{env}_API_KEY")
        if not self.base_url:
            raise AuthError(f"FORGE_{env}_BASE_URL is not configured for provider {name!r}")
        self.timeout_s = timeout_s
        self._client = httpx.Client(transport=transport, timeout=timeout_s)

    def invoke(self, request: CompletionRequest) -> str:
        body = {
            "model": request.model_id,
            "messages": [{"role": role, "content": content} for role, content in request.messages],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = self.base_url.rstrip("/") + "/chat/completions"
        try:
            response = self._client.post(url, json=body, headers=headers)
        except httpx.TimeoutException as exc:
            raise Timeout(f"request to {url} timed out: {exc}") from exc
        except httpx.HTTPError as exc:
            raise EndpointError(f"transport failure for {url}: {exc}", retryable=True) from exc

        if response.status_code in (401, 403):
            raise AuthError(f"{self.name}: authentication rejected ({response.status_code})")
        if response.status_code == 429:
            raise RateLimited(f"{self.name}: rate limited")
        if response.status_code in (408, 504):
            raise Timeout(f"{self.name}: endpoint timeout ({response.status_code})")
        if response.status_code >= 500:
            raise EndpointError(f"{self.name}: server error ({response.status_code})", retryable=True)
        if response.status_code >= 400:
            raise EndpointError(f"{self.name}: bad request ({response.status_code}): {response.text[:500]}")

        try:
            payload = response.json()
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise EndpointError(f"{self.name}: malformed completion payload: {exc}") from exc
        # Empty content is recorded as-is, not erased.
        return text if text is not None else ""


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff with jitter. Delays are non-decreasing across attempts."""

    attempts: int = 5
    base_delay_s: float = 1.0
    multiplier: float = 2.0
    jitter: float = 0.25
    max_delay_s: float = 60.0

    def __post_init__(self) -> None:
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")
        # jitter above multiplier-1 could make consecutive delays decrease
        if not 0 <= self.jitter <= max(0.0, self.multiplier - 1.0):
            raise ValueError("jitter must be in [0, multiplier-1]")

    def delay(self, attempt: int, rng: random.Random) -> float:
        # jitter <= multiplier - 1 keeps the sequence non-decreasing
        raw = self.base_delay_s * (self.multiplier**attempt)
        return min(raw * (1.0 + rng.random() * self.jitter), self.max_delay_s)


class ResponseCache:
    """Persistent response cache, one file per request digest.

    Entries are written atomically (temp file + rename), so concurrent readers
    never observe a partial entry.
    """

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)

    def _entry_path(self, digest: str) -> Path:
        return self.directory / f"{digest}.json"

    def get(self, digest: str) -> Optional[dict]:
        path = self._entry_path(digest)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, digest: str, text: str, model_id: str, latency_ms: int) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        entry = {"text": text, "model_id": model_id, "latency_ms": latency_ms}
        tmp = self._entry_path(digest).with_suffix(".tmp")
        tmp.write_text(json.dumps(entry, ensure_ascii=False, sort_keys=True), encoding="utf-8")
        os.replace(tmp, self._entry_path(digest))


class CompletionClient:
    """Provider plus cache plus retry policy; safe for concurrent use."""

    def __init__(
        self,
        provider: Provider,
        cache: Optional[ResponseCache] = None,
        retry: RetryPolicy = RetryPolicy(),
        sleep: Callable[[float], None] = time.sleep,
        rng: Optional[random.Random] = None,
    ):
        self.provider = provider
        self.cache = cache
        self.retry = retry
        self._sleep = sleep
        self._rng = rng if rng is not None else random.Random()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        digest = request_digest(request)
        if self.cache is not None:
            hit = self.cache.get(digest)
            if hit is not None:
                return CompletionResponse(
                    text=hit["text"],
                    model_id=hit["model_id"],
                    cached=True,
                    latency_ms=hit["latency_ms"],
                )

        last_error: Optional[ProviderError] = None
        for attempt in range(self.retry.attempts):
            if attempt > 0:
                self._sleep(self.retry.delay(attempt - 1, self._rng))
            started = time.monotonic()
            try:
                text = self.provider.invoke(request)
            except ProviderError as exc:
                last_error = exc
                if not exc.retryable:
                    raise
                logger.warning(
                    "attempt %d/%d for %s failed: %s", attempt + 1, self.retry.attempts, request.model_id, exc
                )
                continue
            latency_ms = max(0, int((time.monotonic() - started) * 1000))
            if self.cache is not None:
                self.cache.put(digest, text, request.model_id, latency_ms)
            return CompletionResponse(text=text, model_id=request.model_id, cached=False, latency_ms=latency_ms)

        assert last_error is not None
        raise last_error

    def complete_many(
        self, requests: Sequence[CompletionRequest], max_in_flight: int
    ) -> list[CompletionResponse | ProviderError]:
        """Run requests concurrently; results in request order, failures per item."""
        if max_in_flight <= 0:
            raise ValueError("max_in_flight must be > 0")

        def run_one(request: CompletionRequest) -> CompletionResponse | ProviderError:
            try:
                return self.complete(request)
            except ProviderError as exc:
                return exc

        if len(requests) <= 1 or max_in_flight == 1:
            return [run_one(r) for r in requests]
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            return list(pool.map(run_one, requests))
