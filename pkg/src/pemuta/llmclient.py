"""Provider-agnostic chat-completion client.

One client instance serializes all dispatches through a single pacing gate:
successive requests are separated by at least PacingPolicy.min_interval
seconds, transient failures (timeouts, 429, 5xx) are retried with exponential
backoff, and non-transient failures surface immediately. A scripted mock
provider makes the whole pipeline deterministic for offline tests.

Live configuration comes from the environment, never from code:
PEMUTA_API_BASE, PEMUTA_API_KEY, PEMUTA_MODEL. The wire protocol is
OpenAI-compatible chat completions (messages array in,
choices[0].message.content out).
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

logger = logging.getLogger(__name__)

ENV_API_BASE = "PEMUTA_API_BASE"
ENV_API_KEY = "PEMUTA_API_KEY"
ENV_MODEL = "PEMUTA_MODEL"

_VALID_ROLES = ("system", "user", "assistant")


class LlmClientError(Exception):
    """Base class for chat-client errors."""


class AuthError(LlmClientError):
    pass


class RateLimited(LlmClientError):
    pass


class Timeout(LlmClientError):
    pass


class ProviderError(LlmClientError):
    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"provider returned status {status}: {body[:200]}")

    @property
    def transient(self) -> bool:
        return 500 <= self.status < 600


class UnmatchedRequest(LlmClientError):
    pass


def _is_transient(exc: Exception) -> bool:
    if isinstance(exc, (RateLimited, Timeout)):
        return True
    return isinstance(exc, ProviderError) and exc.transient


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in _VALID_ROLES:
            raise ValueError(f"role must be one of {_VALID_ROLES}, got {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_output_tokens: int = 4096

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if not any(m.role == "user" for m in self.messages):
            raise ValueError("request needs at least one user message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")

    @property
    def flat_content(self) -> str:
        return "\n".join(m.content for m in self.messages)


@dataclass(frozen=True)
class TokenUsage:
    prompt: int
    completion: int


@dataclass(frozen=True)
class ChatResponse:
    content: str
    token_usage: TokenUsage
    latency_ms: float
    provider_id: str

    def __post_init__(self):
        if not self.content:
            raise ValueError("successful response must carry non-empty content")


@dataclass(frozen=True)
class PacingPolicy:
    """Dispatch discipline. min_interval defaults to the 30 s gap used for
    live endpoints; tests shrink it."""

    min_interval: float = 30.0
    max_retries: int = 3
    backoff_base: float = 1.0

    def __post_init__(self):
        if self.min_interval < 0 or self.max_retries < 0 or self.backoff_base < 0:
            raise ValueError("pacing parameters must be non-negative")


class Provider(Protocol):
    provider_id: str

    def complete(self, request: ChatRequest) -> ChatResponse: ...


class ChatClient:
    """Shareable across threads; one in-flight window at a time per client."""

    def __init__(
        self,
        provider: Provider,
        policy: PacingPolicy | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._provider = provider
        self._policy = policy or PacingPolicy()
        self._clock = clock
        self._sleep = sleep
        self._gate = threading.Lock()
        self._last_dispatch: float | None = None

    def chat(self, request: ChatRequest, policy: PacingPolicy | None = None) -> ChatResponse:
        policy = policy or self._policy
        with self._gate:
            attempt = 0
            while True:
                self._pace(policy.min_interval)
                try:
                    return self._provider.complete(request)
                except Exception as exc:
                    if not _is_transient(exc) or attempt >= policy.max_retries:
                        raise
                    delay = policy.backoff_base * (2**attempt)
                    logger.warning(
                        "transient provider failure (%s), retry %d/%d in %.1fs",
                        type(exc).__name__,
                        attempt + 1,
                        policy.max_retries,
                        delay,
                    )
                    self._sleep(delay)
                    attempt += 1

    def _pace(self, min_interval: float):
        now = self._clock()
        if self._last_dispatch is not None:
            wait = self._last_dispatch + min_interval - now
            if wait > 0:
                self._sleep(wait)
                now = self._clock()
        self._last_dispatch = now


def estimate_tokens(text: str) -> int:
    """Rough budget heuristic: four characters per token."""
    return math.ceil(len(text) / 4)


# ---------------------------------------------------------------------------
# Mock provider
# ---------------------------------------------------------------------------

Predicate = Callable[[ChatRequest], bool]


@dataclass
class ScriptEntry:
    predicate: Predicate
    response: str | Exception
    once: bool = False
    used: bool = False


class MockProvider:
    """Answers the first script entry whose predicate matches the request.

    Matching is keyed on request content only, so the provider is
    deterministic and safe under concurrent calls. The match log records
    (request, entry index) pairs for test inspection.
    """

    provider_id = "mock"

    def __init__(self, script: Sequence[ScriptEntry]):
        self._script = list(script)
        self._lock = threading.Lock()
        self.match_log: list[tuple[ChatRequest, int]] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            for i, entry in enumerate(self._script):
                if entry.once and entry.used:
                    continue
                if entry.predicate(request):
                    entry.used = True
                    self.match_log.append((request, i))
                    if isinstance(entry.response, Exception):
                        raise entry.response
                    return ChatResponse(
                        content=entry.response,
                        token_usage=TokenUsage(
                            prompt=estimate_tokens(request.flat_content),
                            completion=estimate_tokens(entry.response),
                        ),
                        latency_ms=0.0,
                        provider_id=self.provider_id,
                    )
        raise UnmatchedRequest(
            f"no script entry matched request starting {request.flat_content[:120]!r}"
        )


def mock_provider(
    script: Sequence[tuple[Predicate, str | Exception]], once: bool = False
) -> MockProvider:
    return MockProvider([ScriptEntry(predicate=p, response=r, once=once) for p, r in script])


_SCRIPT_ERRORS: dict[str, Callable[[], Exception]] = {
    "RateLimited": lambda: RateLimited("scripted rate limit"),
    "Timeout": lambda: Timeout("scripted timeout"),
    "AuthError": lambda: AuthError("scripted auth failure"),
    "ProviderError": lambda: ProviderError(500, "scripted provider failure"),
}


def load_mock_script(path: str | Path) -> MockProvider:
    """Build a mock provider from a JSON script file.

    The file is a list of entries; each entry has a `match` clause --
    {"contains": str}, {"regex": str}, or {"any": true} -- and either a
    `reply` string or an `error` name. Optional `once` consumes the entry.
    """
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise ValueError("mock script must be a JSON list of entries")
    entries: list[ScriptEntry] = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or "match" not in item:
            raise ValueError(f"script entry {i} needs a 'match' clause")
        match = item["match"]
        if "contains" in match:
            needle = match["contains"]
            predicate = lambda req, needle=needle: needle in req.flat_content
        elif "regex" in match:
            rx = re.compile(match["regex"], re.DOTALL)
            predicate = lambda req, rx=rx: rx.search(req.flat_content) is not None
        elif match.get("any"):
            predicate = lambda req: True
        else:
            raise ValueError(f"script entry {i} has an unsupported match clause: {match}")
        if "error" in item:
            name = item["error"]
            if name not in _SCRIPT_ERRORS:
                raise ValueError(f"script entry {i} names unknown error {name!r}")
            response: str | Exception = _SCRIPT_ERRORS[name]()
        elif "reply" in item:
            response = item["reply"]
        else:
            raise ValueError(f"script entry {i} needs a 'reply' or 'error'")
        entries.append(ScriptEntry(predicate=predicate, response=response, once=bool(item.get("once"))))
    return MockProvider(entries)


# ---------------------------------------------------------------------------
# OpenAI-compatible HTTP provider
# ---------------------------------------------------------------------------

class OpenAiChatProvider:
    """Chat-completions over HTTPS against any OpenAI-compatible endpoint."""

    def __init__(
        self,
        base_url: str,
        api_key: str,
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.provider_id = f"openai-compatible:{httpx.URL(base_url).host or base_url}"
        self._http = httpx.Client(
            base_url=base_url.rstrip("/"),
            headers={"Authorization": f"Bearer {api_key}"},
            timeout=timeout,
            transport=transport,
        )

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        started = time.perf_counter()
        try:
            response = self._http.post("/chat/completions", json=payload)
        except httpx.TimeoutException as exc:
            raise Timeout(str(exc)) from None
        except httpx.HTTPError as exc:
            raise ProviderError(0, f"transport failure: {exc}") from None
        latency_ms = (time.perf_counter() - started) * 1000.0
        if response.status_code in (401, 403):
            raise AuthError(f"authentication rejected ({response.status_code})")
        if response.status_code == 429:
            raise RateLimited(response.text[:200])
        if response.status_code != 200:
            raise ProviderError(response.status_code, response.text)
        try:
            body = response.json()
            content = body["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError):
            raise ProviderError(200, f"malformed completion body: {response.text[:200]}") from None
        if not content:
            raise ProviderError(200, "completion carried empty content")
        usage = body.get("usage") or {}
        return ChatResponse(
            content=content,
            token_usage=TokenUsage(
                prompt=int(usage.get("prompt_tokens", estimate_tokens(request.flat_content))),
                completion=int(usage.get("completion_tokens", estimate_tokens(content))),
            ),
            latency_ms=latency_ms,
            provider_id=self.provider_id,
        )

    def close(self):
        self._http.close()


def provider_from_env(environ: dict[str, str] | None = None) -> tuple[OpenAiChatProvider, str]:
    """Build the live provider and default model id from the environment."""
    env = os.environ if environ is None else environ
    base = env.get(ENV_API_BASE)
    key = env.get(ENV_API_KEY)
    model = env.get(ENV_MODEL)
    missing = [
        name
        for name, value in ((ENV_API_BASE, base), (ENV_API_KEY, key), (ENV_MODEL, model))
        if not value
    ]
    if missing:
        raise AuthError(f"missing provider configuration: {', '.join(missing)}")
    return OpenAiChatProvider(base_url=base, api_key=key), model
