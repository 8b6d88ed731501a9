"""OpenAI-style chat-completion backend over HTTP."""
from __future__ import annotations

import base64
import hashlib
import itertools
import json
import os
import threading
from pathlib import Path

import httpx

from ..errors import BackendError, RateLimited, TransportError
from .client import Backend, LlmRequest, LlmResponse, RequestKind, Usage, request_key

API_KEY_ENV = "INTERRVOS_LLM_KEY"


def _image_url(data: bytes) -> str:
    mime = "image/png" if data[:8] == b"\x89PNG\r\n\x1a\n" else "image/jpeg"
    return f"data:{mime};base64," + base64.b64encode(data).decode("ascii")


def build_payload(model: str, request: LlmRequest) -> dict:
    if request.kind is RequestKind.VISION_CHAT:
        content = [{"type": "text", "text": request.user_prompt}]
        content += [{"type": "image_url", "image_url": {"url": _image_url(img)}} for img in request.images]
    else:
        content = request.user_prompt
    payload = {
        "model": model,
        "messages": [
            {"role": "system", "content": request.system_prompt},
            {"role": "user", "content": content},
        ],
        "temperature": request.decode.temperature,
        "max_tokens": request.decode.max_tokens,
    }
    if request.decode.seed is not None:
        payload["seed"] = request.decode.seed
    return payload


class HttpBackend(Backend):
    def __init__(
        self,
        base_url: str,
        model: str,
        vision: bool = True,
        api_key: str | None = None,
        timeout: float = 120.0,
        max_concurrency: int = 4,
        audit_dir=None,
        transport: httpx.BaseTransport | None = None,
    ):
        super().__init__(max_concurrency)
        self.model = model
        self.backend_id = f"http:{model}"
        if not vision:
            self.kinds = frozenset({RequestKind.TEXT_CHAT})
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"), headers=headers, timeout=timeout, transport=transport
        )
        self.audit_dir = Path(audit_dir) if audit_dir else None
        self._audit_seq = itertools.count()
        self._audit_lock = threading.Lock()

    def close(self):
        self._client.close()

    def _audit(self, request: LlmRequest, payload: dict, status: int, body) -> None:
        if self.audit_dir is None:
            return
        self.audit_dir.mkdir(parents=True, exist_ok=True)
        logged = json.loads(json.dumps(payload))
        # keep the audit readable: replace inline images by their digests
        for msg in logged["messages"]:
            if isinstance(msg["content"], list):
                for part in msg["content"]:
                    if part.get("type") == "image_url":
                        raw = part["image_url"]["url"].encode()
                        part["image_url"]["url"] = "sha256:" + hashlib.sha256(raw).hexdigest()
        key = request_key(request)
        with self._audit_lock:
            n = next(self._audit_seq)
        record = {"tag": request.tag, "request": logged, "status": status, "response": body}
        (self.audit_dir / f"{n:06d}-{key[:16]}.json").write_text(
            json.dumps(record, indent=1, ensure_ascii=False), encoding="utf-8"
        )

    def send(self, request: LlmRequest) -> LlmResponse:
        payload = build_payload(self.model, request)
        try:
            resp = self._client.post("/chat/completions", json=payload)
        except httpx.TransportError as exc:
            self._audit(request, payload, 0, str(exc))
            raise TransportError(str(exc)) from exc
        try:
            body = resp.json()
        except ValueError:
            body = resp.text
        self._audit(request, payload, resp.status_code, body)
        if resp.status_code == 429:
            retry_after = resp.headers.get("retry-after")
            try:
                retry_after = float(retry_after) if retry_after is not None else None
            except ValueError:
                retry_after = None
            raise RateLimited(f"HTTP 429 from {self.backend_id}", retry_after=retry_after)
        if resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code} from {self.backend_id}")
        if resp.status_code >= 400:
            raise BackendError(f"HTTP {resp.status_code} from {self.backend_id}: {resp.text[:200]}")
        try:
            text = body["choices"][0]["message"]["content"] or ""
            usage = body.get("usage") or {}
        except (KeyError, IndexError, TypeError):
            raise BackendError(f"malformed completion body from {self.backend_id}") from None
        return LlmResponse(
            text=text,
            usage=Usage(int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))),
            backend_id=self.backend_id,
        )
