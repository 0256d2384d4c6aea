"""Chat-completion and embedding backends.

Two chat backends exist: ``mock`` (scripted, offline, a pure function of the
request) and ``http`` (JSON POST to an OpenAI-compatible chat-completions
endpoint, screenshots inlined as base64 data URLs).  Embeddings come from either
a seeded feature-hashing backend (``hash``) or an HTTP embeddings endpoint.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import math
import mimetypes
import re
import time
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence

import httpx

from .model import ScreenshotRef

log = logging.getLogger(__name__)

ROLES = ("system", "user")


class BackendError(RuntimeError):
    pass


class MockMiss(BackendError):
    def __init__(self, prompt_hash: str):
        super().__init__(f"mock has no scripted response for prompt hash {prompt_hash}")
        self.prompt_hash = prompt_hash


class ProtocolError(BackendError):
    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body[:500]}")
        self.status = status
        self.body = body


class BackendUnavailable(BackendError):
    """The endpoint could not be reached (connection failure or timeout) after all retries."""


@dataclass(frozen=True)
class Message:
    role: str
    text: str
    images: tuple[ScreenshotRef, ...] = ()

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unsupported message role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("chat request needs at least one message")
        if self.messages[-1].role != "user":
            raise ValueError("last message of a chat request must have role 'user'")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")

    @classmethod
    def simple(cls, text: str, images: Sequence[ScreenshotRef] = (), system: str | None = None,
               **kwargs: Any) -> "ChatRequest":
        msgs = []
        if system:
            msgs.append(Message("system", system))
        msgs.append(Message("user", text, tuple(images)))
        return cls(tuple(msgs), **kwargs)

    @property
    def text(self) -> str:
        return "\n".join(m.text for m in self.messages)

    @property
    def images(self) -> list[ScreenshotRef]:
        return [img for m in self.messages for img in m.images]

    def prompt_hash(self) -> str:
        """Stable digest of the message content (roles, texts, image paths)."""
        payload = [
            {"role": m.role, "text": m.text, "images": [i.path for i in m.images]}
            for m in self.messages
        ]
        blob = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("embedding must have dim > 0")

    @property
    def dim(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class MockRule:
    """Respond with ``response`` when every string in ``contains`` occurs in the prompt text."""

    contains: tuple[str, ...]
    response: str

    def matches(self, text: str) -> bool:
        return all(c in text for c in self.contains)


@dataclass(frozen=True)
class ChatBackendConfig:
    kind: str = "mock"
    url: str = ""
    api_key: str = field(default="", repr=False)
    model: str = ""
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 0.5
    temperature: float = 0.0
    max_tokens: int = 1024
    verbose: bool = False
    # mock only
    script: Mapping[str, str] = field(default_factory=dict)
    rules: tuple[MockRule, ...] = ()
    responder: Optional[str] = None
    fallback: Optional[Callable[[ChatRequest], str]] = field(default=None, compare=False)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ChatBackendConfig":
        data = dict(data)
        rules = []
        for r in data.pop("rules", []):
            contains = r["contains"]
            if isinstance(contains, str):
                contains = [contains]
            rules.append(MockRule(tuple(contains), str(r["response"])))
        known = {f for f in cls.__dataclass_fields__} - {"rules", "fallback"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown chat backend option(s): {', '.join(sorted(unknown))}")
        cfg = cls(rules=tuple(rules), **data)
        if cfg.kind not in ("mock", "http"):
            raise ValueError(f"unknown chat backend kind {cfg.kind!r}")
        if cfg.kind == "mock" and cfg.responder and cfg.responder not in RESPONDERS:
            raise ValueError(f"unknown mock responder {cfg.responder!r}")
        if cfg.kind == "http" and not cfg.url:
            raise ValueError("http chat backend needs a url")
        if cfg.retries < 0:
            raise ValueError("retries must be >= 0")
        return cfg


@dataclass(frozen=True)
class EmbedBackendConfig:
    kind: str = "hash"
    dim: int = 64
    seed: int = 0
    url: str = ""
    api_key: str = field(default="", repr=False)
    model: str = ""
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 0.5
    verbose: bool = False

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EmbedBackendConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown embedding backend option(s): {', '.join(sorted(unknown))}")
        cfg = cls(**data)
        if cfg.kind not in ("hash", "http"):
            raise ValueError(f"unknown embedding backend kind {cfg.kind!r}")
        if cfg.kind == "hash" and cfg.dim <= 0:
            raise ValueError("embedding dim must be > 0")
        if cfg.kind == "http" and not cfg.url:
            raise ValueError("http embedding backend needs a url")
        return cfg


# -- mock responders ---------------------------------------------------------

_TAG = r"<{0}>\n?(.*?)\n?</{0}>"


def echo_rewrite(req: ChatRequest) -> str:
    """Identity rewriter: answers with the query and SOP found in the prompt's tagged sections."""
    text = req.text
    q = re.search(_TAG.format("query"), text, re.S)
    p = re.search(_TAG.format("sop"), text, re.S)
    if q is None or p is None:
        raise MockMiss(req.prompt_hash())
    return f"QUERY: {q.group(1).strip()}\n{p.group(1).strip()}"


RESPONDERS: dict[str, Callable[[ChatRequest], str]] = {"echo_rewrite": echo_rewrite}


def _mock_chat(cfg: ChatBackendConfig, req: ChatRequest) -> str:
    h = req.prompt_hash()
    if h in cfg.script:
        return cfg.script[h]
    text = req.text
    for rule in cfg.rules:
        if rule.matches(text):
            return rule.response
    if cfg.fallback is not None:
        return cfg.fallback(req)
    if cfg.responder:
        return RESPONDERS[cfg.responder](req)
    raise MockMiss(h)


# -- HTTP ----------------------------------------------------------------------

def _data_url(img: ScreenshotRef) -> str:
    mime = mimetypes.guess_type(img.path)[0] or "image/png"
    try:
        raw = Path(img.path).read_bytes()
    except OSError as exc:
        raise BackendError(f"cannot read screenshot {img.path}: {exc}") from exc
    return f"data:{mime};base64,{base64.b64encode(raw).decode('ascii')}"


def build_chat_payload(cfg: ChatBackendConfig, req: ChatRequest) -> dict[str, Any]:
    messages = []
    for m in req.messages:
        if m.images:
            content: Any = [{"type": "text", "text": m.text}]
            content += [{"type": "image_url", "image_url": {"url": _data_url(i)}} for i in m.images]
        else:
            content = m.text
        messages.append({"role": m.role, "content": content})
    return {
        "model": cfg.model,
        "messages": messages,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }


def _redact(payload: Any) -> str:
    s = json.dumps(payload, ensure_ascii=False)
    return re.sub(r"base64,[A-Za-z0-9+/=]+", "base64,<omitted>", s)


def _post_json(url: str, payload: dict[str, Any], *, api_key: str, timeout: float,
               retries: int, backoff: float, verbose: bool) -> Any:
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    if verbose:
        log.info("POST %s (authorization redacted) body=%s", url, _redact(payload))

    last_exc: Exception | None = None
    for attempt in range(retries + 1):
        if attempt:
            time.sleep(backoff * 2 ** (attempt - 1))
        try:
            resp = httpx.post(url, json=payload, headers=headers, timeout=timeout)
        except httpx.TransportError as exc:
            last_exc = BackendUnavailable(f"{url}: {exc.__class__.__name__}: {exc}")
            log.warning("attempt %d/%d to %s failed: %s", attempt + 1, retries + 1, url, exc)
            continue
        if verbose:
            log.info("response %d from %s: %s", resp.status_code, url, resp.text[:2000])
        if resp.status_code == 429 or resp.status_code >= 500:
            last_exc = ProtocolError(resp.status_code, resp.text)
            log.warning("attempt %d/%d to %s got HTTP %d", attempt + 1, retries + 1, url,
                        resp.status_code)
            continue
        if not 200 <= resp.status_code < 300:
            raise ProtocolError(resp.status_code, resp.text)
        try:
            return resp.json()
        except ValueError:
            raise ProtocolError(resp.status_code, resp.text) from None
    assert last_exc is not None
    raise last_exc


def chat(backend: ChatBackendConfig, req: ChatRequest) -> str:
    """Send ``req`` to the configured backend and return the response text."""
    if backend.kind == "mock":
        return _mock_chat(backend, req)
    body = _post_json(
        backend.url,
        build_chat_payload(backend, req),
        api_key=backend.api_key,
        timeout=backend.timeout,
        retries=backend.retries,
        backoff=backend.backoff,
        verbose=backend.verbose,
    )
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise ProtocolError(200, json.dumps(body)[:2000]) from None
    if isinstance(content, list):
        content = "".join(part.get("text", "") for part in content if isinstance(part, dict))
    return content or ""


# -- embeddings -----------------------------------------------------------------

_WORD = re.compile(r"\w+", re.UNICODE)


def _features(text: str) -> list[tuple[str, float]]:
    norm = " ".join(unicodedata.normalize("NFKC", text).lower().split())
    feats = [("w:" + w, 1.0) for w in _WORD.findall(norm)]
    padded = f" {norm} "
    feats += [("c:" + padded[i:i + 3], 0.5) for i in range(len(padded) - 2)]
    return feats


def hash_embedding(text: str, dim: int = 64, seed: int = 0) -> EmbeddingVector:
    """Deterministic pseudo-embedding via signed feature hashing of words and character trigrams.

    Texts sharing words land near each other, which is enough for retrieval tests.
    """
    acc = [0.0] * dim
    for feat, weight in _features(text):
        digest = hashlib.blake2b(f"{seed}\x00{feat}".encode("utf-8"), digest_size=8).digest()
        h = int.from_bytes(digest, "big")
        sign = 1.0 if (h >> 63) & 1 else -1.0
        acc[h % dim] += sign * weight
    norm = math.sqrt(sum(v * v for v in acc))
    if norm == 0.0:
        # every feature cancelled out; fall back to a one-hot on the text digest
        h = int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "big")
        acc[h % dim] = 1.0
        norm = 1.0
    return EmbeddingVector(tuple(v / norm for v in acc))


def embed(backend: EmbedBackendConfig, text: str) -> EmbeddingVector:
    if not text or not text.strip():
        raise ValueError("cannot embed empty text")
    if backend.kind == "hash":
        return hash_embedding(text, backend.dim, backend.seed)
    body = _post_json(
        backend.url,
        {"model": backend.model, "input": text},
        api_key=backend.api_key,
        timeout=backend.timeout,
        retries=backend.retries,
        backoff=backend.backoff,
        verbose=backend.verbose,
    )
    try:
        values = tuple(float(v) for v in body["data"][0]["embedding"])
    except (KeyError, IndexError, TypeError, ValueError):
        raise ProtocolError(200, json.dumps(body)[:2000]) from None
    if backend.dim and len(values) != backend.dim:
        raise BackendError(f"embedding has dim {len(values)}, expected {backend.dim}")
    return EmbeddingVector(values)
