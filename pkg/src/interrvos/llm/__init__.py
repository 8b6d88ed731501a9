from .client import (
    Backend,
    DecodeParams,
    LlmRequest,
    LlmResponse,
    MockBackend,
    RecordingBackend,
    RequestKind,
    RetryPolicy,
    ScriptedBackend,
    Telemetry,
    Usage,
    complete,
    request_key,
)
from .prompts import render_prompt

__all__ = [
    "Backend",
    "DecodeParams",
    "LlmRequest",
    "LlmResponse",
    "MockBackend",
    "RecordingBackend",
    "RequestKind",
    "RetryPolicy",
    "ScriptedBackend",
    "Telemetry",
    "Usage",
    "complete",
    "render_prompt",
    "request_key",
]
