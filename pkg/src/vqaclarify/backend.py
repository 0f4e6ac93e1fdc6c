"""Pluggable chat-completion backends.

One request/response shape for every model role, with three transports: an
HTTP client speaking the common /chat/completions wire format, a scripted
mock for offline runs and tests, and a caching wrapper that makes repeated
identical calls free. Images travel as opaque references (URL or local file
encoded to a base64 data URI); pixels are never decoded here.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import math
import mimetypes
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import requests

logger = logging.getLogger(__name__)

API_KEY_ENV = "VQACLARIFY_API_KEY"
BASE_URL_ENV = "VQACLARIFY_BASE_URL"
_FALLBACK_KEY_ENV = "OPENAI_API_KEY"
_FALLBACK_URL_ENV = "OPENAI_BASE_URL"

DEFAULT_MAX_PROMPT_TOKENS = 1000
DEFAULT_MAX_COMPLETION_TOKENS = 768
# Crude but monotone: whitespace word count scaled up for subword splits.
TOKENS_PER_WORD = 1.3


class BackendError(Exception):
    """Base class for everything a backend can raise."""


class BackendUnavailable(BackendError):
    """Transient failures survived every retry."""


class ConfigError(BackendError):
    """Bad setup or a request the service rejects outright; never retried."""


class PromptTooLong(ConfigError):
    """Preflight token estimate exceeded the prompt budget."""


class MockScriptError(BackendError):
    """Scripted mock has no response for the incoming request."""


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text.split()) * TOKENS_PER_WORD)


@dataclass(frozen=True)
class GenerationLimits:
    max_prompt_tokens: int = DEFAULT_MAX_PROMPT_TOKENS
    max_completion_tokens: int = DEFAULT_MAX_COMPLETION_TOKENS


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" | "user" | "assistant"
    content: str
    image_ref: Optional[str] = None

    def __post_init__(self):
        if self.image_ref is not None and self.role != "user":
            raise ValueError("image attachments are only valid on user messages")


@dataclass(frozen=True)
class ChatRequest:
    """One completion call. ``role`` tags which pipeline agent is asking."""

    messages: tuple[ChatMessage, ...]
    role: str = "default"
    temperature: float = 0.0
    max_tokens: Optional[int] = None
    seed: Optional[int] = None

    def prompt_text(self) -> str:
        return "\n".join(m.content for m in self.messages)

    def canonical_json(self) -> str:
        payload = {
            "messages": [
                {"role": m.role, "content": m.content, "image_ref": m.image_ref}
                for m in self.messages
            ],
            "role": self.role,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "seed": self.seed,
        }
        return json.dumps(payload, sort_keys=True, ensure_ascii=False)


def request_hash(request: ChatRequest) -> str:
    """Stable sha256 of the full request; the mock and cache key on this."""
    return hashlib.sha256(request.canonical_json().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    text: str
    backend_id: str
    cached: bool = False
    latency_s: float = 0.0


class ModelBackend:
    """Interface every transport implements."""

    id: str = "backend"

    def complete(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError


def check_prompt_budget(
    request: ChatRequest,
    limits: GenerationLimits,
    estimator: Callable[[str], int] = estimate_tokens,
) -> None:
    estimated = sum(estimator(m.content) for m in request.messages)
    if estimated > limits.max_prompt_tokens:
        raise PromptTooLong(
            f"estimated {estimated} prompt tokens exceeds the "
            f"{limits.max_prompt_tokens}-token budget"
        )


def _image_content(image_ref: str) -> dict:
    if image_ref.startswith(("http://", "https://", "data:")):
        url = image_ref
    else:
        # Local file: ship as a base64 data URI, bytes passed through untouched.
        mime = mimetypes.guess_type(image_ref)[0] or "image/jpeg"
        with open(image_ref, "rb") as fh:
            encoded = base64.b64encode(fh.read()).decode("ascii")
        url = f"data:{mime};base64,{encoded}"
    return {"type": "image_url", "image_url": {"url": url}}


def wire_messages(messages: Sequence[ChatMessage]) -> list[dict]:
    """Encode messages for the /chat/completions JSON body."""
    out = []
    for m in messages:
        if m.image_ref is None:
            out.append({"role": m.role, "content": m.content})
        else:
            out.append(
                {
                    "role": m.role,
                    "content": [
                        {"type": "text", "text": m.content},
                        _image_content(m.image_ref),
                    ],
                }
            )
    return out


@dataclass
class HttpConfig:
    base_url: str = ""
    model: str = ""
    api_key: Optional[str] = None
    timeout_s: float = 60.0
    max_attempts: int = 3
    backoff_s: float = 0.5
    max_in_flight: int = 8

    def resolved_base_url(self) -> str:
        url = self.base_url or os.environ.get(BASE_URL_ENV) or os.environ.get(
            _FALLBACK_URL_ENV, ""
        )
        if not url:
            raise ConfigError(
                f"no base URL configured (set base_url or ${BASE_URL_ENV})"
            )
        return url.rstrip("/")

    def resolved_api_key(self) -> Optional[str]:
        return (
            self.api_key
            or os.environ.get(API_KEY_ENV)
            or os.environ.get(_FALLBACK_KEY_ENV)
        )


class HttpChatBackend(ModelBackend):
    """OpenAI-compatible /chat/completions client with retries and a cap on
    concurrent requests. HTTP 4xx (except 429) means the request itself is
    bad and raises ConfigError immediately; 429, 5xx, and network errors
    retry with exponential backoff until attempts run out."""

    def __init__(
        self,
        config: HttpConfig,
        id: Optional[str] = None,
        limits: Optional[GenerationLimits] = None,
        session: Optional[requests.Session] = None,
        token_estimator: Callable[[str], int] = estimate_tokens,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self.id = id or f"http:{config.model or 'unnamed'}"
        self.limits = limits or GenerationLimits()
        self._session = session or requests.Session()
        self._estimator = token_estimator
        self._sleep = sleep
        self._gate = threading.Semaphore(max(1, config.max_in_flight))

    def _payload(self, request: ChatRequest) -> dict:
        max_tokens = self.limits.max_completion_tokens
        if request.max_tokens is not None:
            max_tokens = min(request.max_tokens, max_tokens)
        payload = {
            "model": self.config.model,
            "messages": wire_messages(request.messages),
            "temperature": request.temperature,
            "max_tokens": max_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        return payload

    def complete(self, request: ChatRequest) -> ChatResponse:
        check_prompt_budget(request, self.limits, self._estimator)
        url = self.config.resolved_base_url() + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        api_key = self.config.resolved_api_key()
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = self._payload(request)

        last_error: Optional[Exception] = None
        started = time.perf_counter()
        for attempt in range(self.config.max_attempts):
            if attempt:
                delay = self.config.backoff_s * (2 ** (attempt - 1))
                logger.warning(
                    "%s: retrying in %.1fs (attempt %d/%d): %s",
                    self.id, delay, attempt + 1, self.config.max_attempts, last_error,
                )
                self._sleep(delay)
            try:
                with self._gate:
                    resp = self._session.post(
                        url, json=payload, headers=headers,
                        timeout=self.config.timeout_s,
                    )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                continue
            if resp.status_code >= 400:
                raise ConfigError(f"HTTP {resp.status_code}: {resp.text[:500]}")
            text = self._extract_text(resp)
            return ChatResponse(
                text=text,
                backend_id=self.id,
                latency_s=time.perf_counter() - started,
            )
        raise BackendUnavailable(
            f"{self.id}: {self.config.max_attempts} attempts failed "
            f"(last error: {last_error})"
        )

    def _extract_text(self, resp: requests.Response) -> str:
        try:
            body = resp.json()
            content = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(
                f"{self.id}: malformed completion body: {resp.text[:200]}"
            ) from exc
        if content is None:
            raise BackendError(f"{self.id}: completion arrived with null content")
        return content


class ScriptedMockBackend(ModelBackend):
    """Deterministic offline backend.

    Responses are a pure function of (role tag, request hash, call ordinal):
    a hash-keyed entry wins when present, otherwise the role's queue is
    consumed in call order. Exhausted or missing scripts raise rather than
    invent output. No network is touched.
    """

    def __init__(
        self,
        script: Mapping[str, object],
        id: str = "mock",
        limits: Optional[GenerationLimits] = None,
    ):
        self.id = id
        self.limits = limits or GenerationLimits()
        self._queues: dict[str, list[str]] = {}
        self._by_hash: dict[str, dict[str, str]] = {}
        for role, entry in script.items():
            if isinstance(entry, (list, tuple)):
                self._queues[role] = [str(x) for x in entry]
                self._by_hash[role] = {}
            elif isinstance(entry, Mapping):
                self._queues[role] = [str(x) for x in entry.get("queue", [])]
                self._by_hash[role] = {
                    str(k): str(v) for k, v in (entry.get("by_hash") or {}).items()
                }
            else:
                raise MockScriptError(
                    f"role {role!r}: script entry must be a list or an object"
                )
        self._ordinals: dict[str, int] = {role: 0 for role in self._queues}
        self._lock = threading.Lock()
        self.call_count = 0

    def reset(self) -> None:
        """Rewind every queue so a scripted run can be replayed."""
        with self._lock:
            self._ordinals = {role: 0 for role in self._queues}
            self.call_count = 0

    def complete(self, request: ChatRequest) -> ChatResponse:
        check_prompt_budget(request, self.limits)
        digest = request_hash(request)
        with self._lock:
            self.call_count += 1
            if request.role not in self._queues:
                raise MockScriptError(
                    f"no script for role {request.role!r} "
                    f"(scripted roles: {sorted(self._queues)})"
                )
            hashed = self._by_hash[request.role].get(digest)
            if hashed is not None:
                return ChatResponse(text=hashed, backend_id=self.id)
            ordinal = self._ordinals[request.role]
            queue = self._queues[request.role]
            if ordinal >= len(queue):
                raise MockScriptError(
                    f"script exhausted for role {request.role!r} "
                    f"after {len(queue)} call(s)"
                )
            self._ordinals[request.role] = ordinal + 1
            return ChatResponse(text=queue[ordinal], backend_id=self.id)


def mock_from_fixture(path, id: Optional[str] = None) -> ScriptedMockBackend:
    """Load a scripted mock from a JSON fixture.

    Shape: ``{"version": 1, "roles": {role: [response, ...] |
    {"queue": [...], "by_hash": {sha256: response}}}}``. Malformed JSON
    reports the line number; schema problems name the offending role.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MockScriptError(
                f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}"
            ) from exc
    if not isinstance(raw, dict) or "roles" not in raw:
        raise MockScriptError(f"{path}: fixture must be an object with a 'roles' key")
    version = raw.get("version", 1)
    if version != 1:
        raise MockScriptError(f"{path}: unsupported fixture version {version!r}")
    roles = raw["roles"]
    if not isinstance(roles, dict):
        raise MockScriptError(f"{path}: 'roles' must be an object")
    return ScriptedMockBackend(roles, id=id or f"mock:{os.path.basename(str(path))}")


class ResponseCache:
    """Thread-safe response store keyed by content hash.

    Optionally persists to an append-only JSONL file so later processes see
    earlier answers. Concurrent fetches of the same key are collapsed to one
    backend call via per-key locks.
    """

    def __init__(self, path=None):
        self._path = str(path) if path else None
        self._entries: dict[str, str] = {}
        self._lock = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}
        if self._path and os.path.exists(self._path):
            with open(self._path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    record = json.loads(line)
                    self._entries[record["key"]] = record["text"]

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> Optional[str]:
        with self._lock:
            return self._entries.get(key)

    def _persist(self, key: str, text: str) -> None:
        if not self._path:
            return
        record = json.dumps({"key": key, "text": text}, sort_keys=True, ensure_ascii=False)
        with open(self._path, "a", encoding="utf-8") as fh:
            fh.write(record + "\n")

    def get_or_fetch(self, key: str, fetch: Callable[[], str]) -> tuple[str, bool]:
        """Return (text, hit). ``fetch`` runs at most once per key."""
        with self._lock:
            if key in self._entries:
                return self._entries[key], True
            key_lock = self._key_locks.setdefault(key, threading.Lock())
        with key_lock:
            with self._lock:
                if key in self._entries:
                    return self._entries[key], True
            text = fetch()
            with self._lock:
                self._entries[key] = text
                self._persist(key, text)
                self._key_locks.pop(key, None)
            return text, False


class CachedBackend(ModelBackend):
    """Wrap a backend so identical requests are answered from the cache."""

    def __init__(self, inner: ModelBackend, cache: ResponseCache, namespace: str = ""):
        self.inner = inner
        self.cache = cache
        self.namespace = namespace
        self.id = inner.id

    def _key(self, request: ChatRequest) -> str:
        blob = json.dumps(
            {
                "namespace": self.namespace,
                "backend_id": self.inner.id,
                "request": request.canonical_json(),
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = self._key(request)
        text, hit = self.cache.get_or_fetch(
            key, lambda: self.inner.complete(request).text
        )
        return ChatResponse(text=text, backend_id=self.id, cached=hit)
