"""Uniform access to chat-completion backends.

Two backend kinds sit behind one ``Gateway.complete`` call: deterministic
scripted mocks for tests and demos, and a generic HTTP client speaking the
common chat wire shape (``model``/``messages``/``temperature``/``max_tokens``
in, first choice's message content out). Every call is identified by a stable
fingerprint of (backend, messages, params), which also keys the optional
on-disk response cache.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence
from urllib.parse import urlparse

import requests

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
OPENAI_CHAT_V1 = "openai_chat_v1"
REQUEST_SHAPES = (OPENAI_CHAT_V1,)

DEFAULT_MAX_NEW_TOKENS = 2048


class GatewayError(Exception):
    """Base class for gateway failures."""


class UnknownBackendError(GatewayError):
    pass


class DuplicateBackendError(GatewayError):
    pass


class BackendConfigError(GatewayError):
    pass


class ScriptedMissError(GatewayError):
    """A mock backend had no rule (and no fallback) for the request."""


class TransportError(GatewayError):
    """Timeout or connection failure; retried with backoff."""


class RateLimitError(GatewayError):
    """Provider signalled rate limiting; retried with backoff."""


class HttpStatusError(GatewayError):
    def __init__(self, status: int, body_excerpt: str):
        super().__init__(f"provider returned HTTP {status}: {body_excerpt!r}")
        self.status = status
        self.body_excerpt = body_excerpt


class ProtocolError(GatewayError):
    """Provider payload did not match the expected wire shape."""


class EmptyResponseError(GatewayError):
    """The backend produced an empty completion."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown message role: {self.role!r}")


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS
    stop: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be positive")
        if self.stop is not None:
            object.__setattr__(self, "stop", tuple(self.stop))


@dataclass(frozen=True)
class ChatRequest:
    backend_id: str
    messages: tuple[ChatMessage, ...]
    params: GenerationParams = field(default_factory=GenerationParams)

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("request must carry at least one message")
        if self.messages[0].role == "assistant":
            raise ValueError("first message must be a system or user message")

    def last_user_content(self) -> str:
        for message in reversed(self.messages):
            if message.role == "user":
                return message.content
        return ""


def simple_request(backend_id: str, prompt: str,
                   params: GenerationParams | None = None) -> ChatRequest:
    """A single-user-message request, the shape every agent uses."""
    return ChatRequest(backend_id, (ChatMessage("user", prompt),),
                       params or GenerationParams())


def _canonical_payload(request: ChatRequest) -> dict:
    return {
        "backend": request.backend_id,
        "messages": [[m.role, m.content] for m in request.messages],
        "params": {
            "temperature": request.params.temperature,
            "max_new_tokens": request.params.max_new_tokens,
            "stop": list(request.params.stop) if request.params.stop else None,
        },
    }


def request_fingerprint(request: ChatRequest) -> str:
    """Stable content hash of (backend, messages, params)."""
    blob = json.dumps(_canonical_payload(request), ensure_ascii=False,
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class ChatExchange:
    """One completed gateway call, as recorded in run transcripts."""

    request: ChatRequest
    response_text: str
    latency_ms: int
    cache_hit: bool
    fingerprint: str
    attempts: int = 1

    def to_dict(self, volatile: bool = True) -> dict:
        out = {
            "backend_id": self.request.backend_id,
            "messages": [{"role": m.role, "content": m.content} for m in self.request.messages],
            "params": {
                "temperature": self.request.params.temperature,
                "max_new_tokens": self.request.params.max_new_tokens,
                "stop": list(self.request.params.stop) if self.request.params.stop else None,
            },
            "response_text": self.response_text,
            "fingerprint": self.fingerprint,
        }
        if volatile:
            out["latency_ms"] = self.latency_ms
            out["cache_hit"] = self.cache_hit
            out["attempts"] = self.attempts
        return out


# --- matchers and mock backends ---------------------------------------------

Matcher = Callable[[ChatRequest], bool]
Responder = Callable[[ChatRequest], str]


def request_text(request: ChatRequest) -> str:
    """All message contents joined; what substring matchers scan."""
    return "\n".join(m.content for m in request.messages)


def match_substring(needle: str) -> Matcher:
    return lambda request: needle in request_text(request)


def match_all_substrings(needles: Sequence[str]) -> Matcher:
    needles = tuple(needles)
    return lambda request: all(n in request_text(request) for n in needles)


def match_fingerprint(fingerprint: str) -> Matcher:
    return lambda request: request_fingerprint(request) == fingerprint


def echo_last_user(request: ChatRequest) -> str:
    return request.last_user_content()


class MockBackend:
    """Deterministic scripted backend.

    ``script`` is an ordered sequence of (matcher, response) rules; the first
    matching rule wins. A matcher may be a callable or a plain string, which
    matches as a substring of the joined message contents. A response may be
    a string or a callable taking the request. Immutable after construction.
    """

    def __init__(self, backend_id: str,
                 script: Sequence[tuple[Matcher | str, str | Responder]] | Mapping,
                 fallback: str | Responder | None = None):
        self.backend_id = backend_id
        items = script.items() if isinstance(script, Mapping) else script
        self._rules = tuple(
            (match_substring(m) if isinstance(m, str) else m, r) for m, r in items
        )
        self._fallback = fallback

    def generate(self, request: ChatRequest) -> str:
        for matcher, response in self._rules:
            if matcher(request):
                return response(request) if callable(response) else response
        if self._fallback is not None:
            return self._fallback(request) if callable(self._fallback) else self._fallback
        head = request.last_user_content()[:160]
        raise ScriptedMissError(
            f"backend {self.backend_id!r} has no scripted response for request "
            f"{request_fingerprint(request)[:12]} (last user message: {head!r})")


class HttpBackend:
    """Generic chat-completion HTTP client for one provider endpoint."""

    def __init__(self, backend_id: str, endpoint_url: str, model_name: str,
                 auth_token: str | None = None, timeout_s: float = 30.0):
        self.backend_id = backend_id
        self.endpoint_url = endpoint_url
        self.model_name = model_name
        self.auth_token = auth_token
        self.timeout_s = timeout_s

    def generate(self, request: ChatRequest) -> str:
        payload: dict = {
            "model": self.model_name,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_new_tokens,
        }
        if request.params.stop:
            payload["stop"] = list(request.params.stop)
        headers = {"Content-Type": "application/json"}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        try:
            resp = requests.post(self.endpoint_url, json=payload, headers=headers,
                                 timeout=self.timeout_s)
        except (requests.Timeout, requests.ConnectionError) as err:
            raise TransportError(f"transport failure calling {self.endpoint_url}: {err}") from err
        if resp.status_code == 429:
            raise RateLimitError(f"rate limited by {self.endpoint_url}")
        if not 200 <= resp.status_code < 300:
            raise HttpStatusError(resp.status_code, resp.text[:200])
        try:
            data = resp.json()
        except ValueError as err:
            raise ProtocolError(f"provider returned non-JSON payload: {resp.text[:200]!r}") from err
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as err:
            raise ProtocolError(f"provider payload missing choices[0].message.content: {err}") from err
        if not isinstance(text, str):
            raise ProtocolError("provider message content is not a string")
        return text


class Gateway:
    """Backend registry, retry policy, and content-addressed response cache.

    Cache entries live at ``<cache_dir>/<fp[:2]>/<fp>.json`` and are written
    atomically (temp file + rename), so concurrent runs may share a cache
    directory.
    """

    def __init__(self, cache_dir: str | os.PathLike | None = None,
                 max_new_tokens_ceiling: int = DEFAULT_MAX_NEW_TOKENS,
                 max_attempts: int = 3, retry_base_delay_s: float = 0.5):
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.max_new_tokens_ceiling = max_new_tokens_ceiling
        self.max_attempts = max_attempts
        self.retry_base_delay_s = retry_base_delay_s
        self._backends: dict[str, MockBackend | HttpBackend] = {}

    # -- registration --------------------------------------------------

    def _claim_id(self, backend_id: str) -> None:
        if backend_id in self._backends:
            raise DuplicateBackendError(f"backend id already registered: {backend_id!r}")

    def register_mock(self, backend_id: str,
                      script: Sequence[tuple[Matcher | str, str | Responder]] | Mapping,
                      fallback: str | Responder | None = None) -> str:
        self._claim_id(backend_id)
        self._backends[backend_id] = MockBackend(backend_id, script, fallback)
        return backend_id

    def register_http(self, backend_id: str, endpoint_url: str, model_name: str,
                      auth_token_env_var: str | None = None,
                      request_shape: str = OPENAI_CHAT_V1,
                      timeout_s: float = 30.0) -> str:
        self._claim_id(backend_id)
        parsed = urlparse(endpoint_url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise BackendConfigError(f"malformed endpoint URL: {endpoint_url!r}")
        if request_shape not in REQUEST_SHAPES:
            raise BackendConfigError(f"unsupported request shape: {request_shape!r}")
        token = None
        if auth_token_env_var:
            token = os.environ.get(auth_token_env_var)
            if not token:
                raise BackendConfigError(
                    f"auth env var {auth_token_env_var!r} is not set for backend {backend_id!r}")
        self._backends[backend_id] = HttpBackend(
            backend_id, endpoint_url, model_name, token, timeout_s)
        return backend_id

    def has_backend(self, backend_id: str) -> bool:
        return backend_id in self._backends

    # -- completion ------------------------------------------------------

    def complete(self, request: ChatRequest) -> ChatExchange:
        backend = self._backends.get(request.backend_id)
        if backend is None:
            raise UnknownBackendError(f"unknown backend: {request.backend_id!r}")
        if request.params.max_new_tokens > self.max_new_tokens_ceiling:
            raise GatewayError(
                f"max_new_tokens {request.params.max_new_tokens} exceeds ceiling "
                f"{self.max_new_tokens_ceiling}")
        fingerprint = request_fingerprint(request)
        started = time.perf_counter()

        if self.cache_dir is not None:
            cached = self._cache_read(fingerprint)
            if cached is not None:
                return ChatExchange(request, cached, _elapsed_ms(started),
                                    cache_hit=True, fingerprint=fingerprint, attempts=0)

        text = ""
        attempts = 0
        for attempt in range(1, self.max_attempts + 1):
            attempts = attempt
            try:
                text = backend.generate(request)
                break
            except (TransportError, RateLimitError) as err:
                if attempt >= self.max_attempts:
                    raise
                delay = self.retry_base_delay_s * (2 ** (attempt - 1))
                log.warning("retrying %s after %s (attempt %d/%d, sleeping %.2fs)",
                            request.backend_id, err, attempt, self.max_attempts, delay)
                time.sleep(delay)
        if not text.strip():
            raise EmptyResponseError(
                f"backend {request.backend_id!r} returned an empty completion")

        if self.cache_dir is not None:
            self._cache_write(fingerprint, request, text)
        return ChatExchange(request, text, _elapsed_ms(started),
                            cache_hit=False, fingerprint=fingerprint, attempts=attempts)

    # -- cache ----------------------------------------------------------

    def _cache_path(self, fingerprint: str) -> Path:
        return self.cache_dir / fingerprint[:2] / f"{fingerprint}.json"

    def _cache_read(self, fingerprint: str) -> str | None:
        path = self._cache_path(fingerprint)
        try:
            entry = json.loads(path.read_text("utf-8"))
            text = entry["response_text"]
        except FileNotFoundError:
            return None
        except (ValueError, KeyError, TypeError):
            log.warning("ignoring corrupt cache entry %s", path)
            return None
        return text if isinstance(text, str) else None

    def _cache_write(self, fingerprint: str, request: ChatRequest, text: str) -> None:
        path = self._cache_path(fingerprint)
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {
            "fingerprint": fingerprint,
            "request": _canonical_payload(request),
            "response_text": text,
            "timestamp": time.time(),
        }
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                json.dump(entry, handle, ensure_ascii=False, sort_keys=True)
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise


def _elapsed_ms(started: float) -> int:
    return max(0, int(round((time.perf_counter() - started) * 1000)))
