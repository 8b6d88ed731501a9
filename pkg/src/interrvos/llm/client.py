"""Backend-agnostic chat completion with retries and a per-backend concurrency cap."""
from __future__ import annotations

import enum
import hashlib
import json
import logging
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from ..errors import BackendError, RateLimited, TransportError, UnsupportedKind

log = logging.getLogger(__name__)


class RequestKind(str, enum.Enum):
    VISION_CHAT = "vision"
    TEXT_CHAT = "text"


@dataclass(frozen=True)
class DecodeParams:
    temperature: float = 0.0
    max_tokens: int = 512
    seed: int | None = None


@dataclass(frozen=True)
class LlmRequest:
    kind: RequestKind
    system_prompt: str
    user_prompt: str
    images: tuple[bytes, ...] = ()
    decode: DecodeParams = field(default_factory=DecodeParams)
    # template id that produced the prompt; informational, not part of the cache key
    tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", RequestKind(self.kind))
        object.__setattr__(self, "images", tuple(self.images))
        if self.kind is RequestKind.VISION_CHAT and not self.images:
            raise ValueError("vision requests need at least one image")
        if self.kind is RequestKind.TEXT_CHAT and self.images:
            raise ValueError("text requests cannot carry images")


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class LlmResponse:
    text: str
    usage: Usage = field(default_factory=Usage)
    backend_id: str = ""
    attempts: int = 1


def request_key(request: LlmRequest) -> str:
    """Stable digest of the system prompt, user prompt and image contents."""
    h = hashlib.sha256()
    for part in (request.system_prompt, request.user_prompt):
        data = part.encode("utf-8")
        h.update(len(data).to_bytes(8, "big"))
        h.update(data)
    for image in request.images:
        h.update(hashlib.sha256(image).digest())
    return h.hexdigest()


@dataclass
class Telemetry:
    requests: int = 0
    attempts: int = 0
    retries: int = 0
    failures: int = 0
    in_flight: int = 0
    max_in_flight: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def enter(self):
        with self._lock:
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
            self.attempts += 1

    def leave(self):
        with self._lock:
            self.in_flight -= 1

    def bump(self, name: str, n: int = 1):
        with self._lock:
            setattr(self, name, getattr(self, name) + n)


class Backend:
    """Base class: subclasses implement :meth:`send` for a single attempt."""

    backend_id = "backend"
    kinds = frozenset({RequestKind.TEXT_CHAT, RequestKind.VISION_CHAT})

    def __init__(self, max_concurrency: int = 4):
        if max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        self.max_concurrency = max_concurrency
        self._slots = threading.BoundedSemaphore(max_concurrency)
        self.telemetry = Telemetry()

    def supports(self, kind: RequestKind) -> bool:
        return RequestKind(kind) in self.kinds

    def send(self, request: LlmRequest) -> LlmResponse:
        raise NotImplementedError


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_delay: float = 0.5
    max_delay: float = 20.0
    jitter: float = 0.1
    sleep: Callable[[float], None] = time.sleep
    rng: random.Random = field(default_factory=random.Random, compare=False)

    def delay(self, attempt: int, retry_after: float | None = None) -> float:
        d = min(self.max_delay, self.base_delay * (2 ** (attempt - 1)))
        if self.jitter:
            d *= 1 + self.rng.uniform(-self.jitter, self.jitter)
        if retry_after is not None:
            d = max(d, retry_after)
        return max(0.0, d)


DEFAULT_POLICY = RetryPolicy()


def complete(backend: Backend, request: LlmRequest, policy: RetryPolicy | None = None) -> LlmResponse:
    """One completion, retrying transient and rate-limit failures with backoff."""
    policy = policy or DEFAULT_POLICY
    if not backend.supports(request.kind):
        raise UnsupportedKind(f"{backend.backend_id} does not accept {request.kind.value} requests")
    backend.telemetry.bump("requests")
    attempt = 0
    while True:
        attempt += 1
        try:
            with backend._slots:
                backend.telemetry.enter()
                try:
                    response = backend.send(request)
                finally:
                    backend.telemetry.leave()
        except (TransportError, RateLimited) as exc:
            if attempt >= policy.max_attempts:
                backend.telemetry.bump("failures")
                log.warning("%s: giving up after %d attempts: %s", backend.backend_id, attempt, exc)
                raise
            backend.telemetry.bump("retries")
            retry_after = getattr(exc, "retry_after", None)
            delay = policy.delay(attempt, retry_after)
            log.debug("%s: attempt %d failed (%s), retrying in %.2fs", backend.backend_id, attempt, exc, delay)
            policy.sleep(delay)
            continue
        return LlmResponse(
            text=response.text if response.text is not None else "",
            usage=response.usage,
            backend_id=response.backend_id or backend.backend_id,
            attempts=attempt,
        )


# --- deterministic backends -------------------------------------------------------

class MockBackend(Backend):
    """Canned replies keyed by :func:`request_key`.

    Lookups fall back to ``responder(request)`` when given; otherwise an
    unknown request is a :class:`BackendError`.
    """

    backend_id = "mock"

    def __init__(
        self,
        responses: Mapping[str, str] | None = None,
        responder: Callable[[LlmRequest], str] | None = None,
        vision: bool = True,
        max_concurrency: int = 4,
    ):
        super().__init__(max_concurrency)
        self.responses = dict(responses or {})
        self.responder = responder
        if not vision:
            self.kinds = frozenset({RequestKind.TEXT_CHAT})

    @classmethod
    def from_file(cls, path, **kwargs) -> "MockBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(responses=data.get("responses", data), **kwargs)

    def send(self, request: LlmRequest) -> LlmResponse:
        key = request_key(request)
        if key in self.responses:
            text = self.responses[key]
        elif self.responder is not None:
            text = self.responder(request)
        else:
            raise BackendError(f"mock has no reply for request {key[:12]} ({request.tag or 'untagged'})")
        return LlmResponse(
            text=text,
            usage=Usage(len(request.user_prompt.split()), len(text.split())),
            backend_id=self.backend_id,
        )


class ScriptedBackend(Backend):
    """Replays a fixed sequence of outcomes; exceptions in the script are raised."""

    backend_id = "scripted"

    def __init__(self, script, max_concurrency: int = 4, vision: bool = True):
        super().__init__(max_concurrency)
        self._script = list(script)
        self._lock = threading.Lock()
        self.calls: list[LlmRequest] = []
        if not vision:
            self.kinds = frozenset({RequestKind.TEXT_CHAT})

    def send(self, request):
        with self._lock:
            self.calls.append(request)
            if not self._script:
                raise BackendError("script exhausted")
            item = self._script.pop(0)
        if isinstance(item, BaseException):
            raise item
        return LlmResponse(text=item, backend_id=self.backend_id)


class RecordingBackend(Backend):
    """Wraps another backend and keeps every reply for later replay by MockBackend."""

    def __init__(self, inner: Backend):
        super().__init__(inner.max_concurrency)
        self.inner = inner
        self.kinds = inner.kinds
        self.backend_id = inner.backend_id
        self.recorded: dict[str, str] = {}
        self._lock = threading.Lock()

    def send(self, request):
        response = self.inner.send(request)
        with self._lock:
            self.recorded[request_key(request)] = response.text
        return response

    def save(self, path) -> None:
        from ..dataset import atomic_write_text

        payload = {"responses": dict(sorted(self.recorded.items()))}
        atomic_write_text(path, json.dumps(payload, indent=1, ensure_ascii=False) + "\n")
