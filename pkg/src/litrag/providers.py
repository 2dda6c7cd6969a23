"""Chat-completion and embedding backends behind one small interface.

The real backend speaks the OpenAI-compatible HTTP API (``/v1/embeddings``
and ``/v1/chat/completions``); the mock backends are pure functions of
their inputs so every pipeline stage can be tested offline and
deterministically.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import random
import threading
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

import httpx

from .errors import ProviderError

logger = logging.getLogger(__name__)

EMBED_BATCH_SIZE = 128

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    """One turn of a chat-completion conversation."""

    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role in ("system", "user") and not self.content:
            raise ValueError(f"{self.role} message must have content")


def user_message(content: str) -> list[ChatMessage]:
    """Wrap a bare prompt as a single-user-message conversation."""
    return [ChatMessage("user", content)]


@dataclass(frozen=True)
class EmbeddingVector:
    """A fixed-length embedding with the model that produced it."""

    values: tuple[float, ...]
    model_id: str = ""

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("embedding must be non-empty")
        if any(not math.isfinite(v) for v in self.values):
            raise ValueError("embedding contains non-finite values")

    @property
    def dim(self) -> int:
        return len(self.values)


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine similarity of two equal-length vectors; 0.0 if either is null."""
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)}")
    dot = sum(x * y for x, y in zip(a, b))
    norm_a = math.sqrt(sum(x * x for x in a))
    norm_b = math.sqrt(sum(y * y for y in b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return max(-1.0, min(1.0, dot / (norm_a * norm_b)))


@dataclass(frozen=True)
class ProviderConfig:
    """Connection settings for an OpenAI-compatible backend."""

    base_url: str = "https://api.openai.com"
    api_key: str = ""
    chat_model: str = "gpt-4o-mini"
    embed_model: str = "text-embedding-ada-002"
    timeout: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 8

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None, **overrides) -> "ProviderConfig":
        env = os.environ if env is None else env
        values = {
            "base_url": env.get("LITRAG_BASE_URL", cls.base_url),
            "api_key": env.get("LITRAG_API_KEY", cls.api_key),
            "chat_model": env.get("LITRAG_CHAT_MODEL", cls.chat_model),
            "embed_model": env.get("LITRAG_EMBED_MODEL", cls.embed_model),
        }
        values.update(overrides)
        return cls(**values)


class Embedder(Protocol):
    """Anything that maps a batch of texts to embeddings, order-preserving."""

    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


class ChatModel(Protocol):
    """Anything that completes a chat conversation with assistant text."""

    def complete(
        self,
        messages: Sequence[ChatMessage],
        *,
        temperature: float = 0.0,
        max_tokens: int = 1024,
    ) -> str: ...


@dataclass
class CallStats:
    """Mutable counters shared by all providers, read by the engine trace."""

    chat_calls: int = 0
    embed_calls: int = 0
    texts_embedded: int = 0

    def snapshot(self) -> dict[str, int]:
        return {
            "chat_calls": self.chat_calls,
            "embed_calls": self.embed_calls,
            "texts_embedded": self.texts_embedded,
        }


def _check_embed_inputs(texts: Sequence[str]) -> None:
    if not texts:
        raise ValueError("texts must be non-empty")
    for i, t in enumerate(texts):
        if not t:
            raise ValueError(f"texts[{i}] is empty")


def _check_chat_inputs(messages: Sequence[ChatMessage]) -> None:
    if not messages:
        raise ValueError("messages must be non-empty")
    if messages[-1].role != "user":
        raise ValueError("conversation must end with a user message")


def render_messages(messages: Sequence[ChatMessage]) -> str:
    """Canonical text form of a conversation, used for transcript keying."""
    return "\n\n".join(f"[{m.role}]\n{m.content}" for m in messages)


def prompt_sha256(messages: Sequence[ChatMessage]) -> str:
    return hashlib.sha256(render_messages(messages).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# OpenAI-compatible HTTP backend
# ---------------------------------------------------------------------------


class OpenAIProvider:
    """OpenAI-compatible client with bounded concurrency and retry/backoff.

    Retries 429 and 5xx responses (and transport errors) with exponential
    backoff: sleep is drawn uniformly from [0.5, 1.0] * base * 2**attempt
    with base 1 s. Other 4xx responses fail immediately. The API key never
    appears in log lines or error messages.
    """

    def __init__(
        self,
        config: ProviderConfig,
        *,
        transport: httpx.BaseTransport | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self.stats = CallStats()
        self._sleep = sleeper
        self._rng = random.Random()
        self._semaphore = threading.BoundedSemaphore(config.max_in_flight)
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            headers={"Authorization": f"Bearer {config.api_key}"},
            timeout=config.timeout,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def _post_with_retries(self, path: str, payload: dict) -> dict:
        attempts = self.config.max_retries + 1
        last_error = "request not attempted"
        for attempt in range(attempts):
            if attempt > 0:
                delay = self._rng.uniform(0.5, 1.0) * (2 ** (attempt - 1))
                self._sleep(delay)
            try:
                with self._semaphore:
                    response = self._client.post(path, json=payload)
            except httpx.HTTPError as exc:
                last_error = f"transport error calling {path}: {type(exc).__name__}"
                logger.warning("%s (attempt %d/%d)", last_error, attempt + 1, attempts)
                continue
            if response.status_code == 200:
                try:
                    return response.json()
                except json.JSONDecodeError:
                    raise ProviderError(f"malformed JSON body from {path}", retryable=False)
            if response.status_code == 429 or response.status_code >= 500:
                last_error = f"{path} returned HTTP {response.status_code}"
                logger.warning("%s (attempt %d/%d)", last_error, attempt + 1, attempts)
                continue
            # Remaining 4xx are permanent; do not retry.
            raise ProviderError(f"{path} returned HTTP {response.status_code}", retryable=False)
        raise ProviderError(f"retries exhausted: {last_error}", retryable=True)

    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        _check_embed_inputs(texts)
        vectors: list[EmbeddingVector] = []
        for start in range(0, len(texts), EMBED_BATCH_SIZE):
            batch = list(texts[start : start + EMBED_BATCH_SIZE])
            body = self._post_with_retries(
                "/v1/embeddings", {"model": self.config.embed_model, "input": batch}
            )
            self.stats.embed_calls += 1
            self.stats.texts_embedded += len(batch)
            try:
                rows = sorted(body["data"], key=lambda d: d["index"])
                batch_vectors = [
                    EmbeddingVector(tuple(float(v) for v in row["embedding"]), self.config.embed_model)
                    for row in rows
                ]
            except (KeyError, TypeError, ValueError) as exc:
                raise ProviderError(f"malformed embeddings response: {exc}") from exc
            if len(batch_vectors) != len(batch):
                raise ProviderError(
                    f"embeddings response had {len(batch_vectors)} rows for {len(batch)} inputs"
                )
            vectors.extend(batch_vectors)
        dims = {v.dim for v in vectors}
        if len(dims) > 1:
            raise ProviderError(f"inconsistent embedding dimensions across batches: {sorted(dims)}")
        return vectors

    def complete(
        self,
        messages: Sequence[ChatMessage],
        *,
        temperature: float = 0.0,
        max_tokens: int = 1024,
    ) -> str:
        _check_chat_inputs(messages)
        body = self._post_with_retries(
            "/v1/chat/completions",
            {
                "model": self.config.chat_model,
                "messages": [{"role": m.role, "content": m.content} for m in messages],
                "temperature": temperature,
                "max_tokens": max_tokens,
            },
        )
        self.stats.chat_calls += 1
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat response: {exc}") from exc


# ---------------------------------------------------------------------------
# Deterministic mocks
# ---------------------------------------------------------------------------


def mock_embed(text: str, dim: int = 64, seed: int = 0) -> EmbeddingVector:
    """Deterministic unit-norm embedding derived from sha256(seed, text).

    Only integer hashing feeds the vector, followed by a fixed division to
    float, so identical inputs give bit-identical vectors on any platform.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    raw: list[int] = []
    block = 0
    payload = text.encode("utf-8")
    while len(raw) < dim:
        digest = hashlib.sha256(f"{seed}:{block}:".encode("ascii") + payload).digest()
        for i in range(0, 32, 8):
            raw.append(int.from_bytes(digest[i : i + 8], "little", signed=True))
        block += 1
    values = [r / 2**63 for r in raw[:dim]]
    norm = math.sqrt(sum(v * v for v in values))
    if norm == 0.0:  # unreachable in practice; keeps the unit-norm contract total
        values[0] = 1.0
        norm = 1.0
    return EmbeddingVector(tuple(v / norm for v in values), model_id=f"mock-{dim}-{seed}")


class HashEmbeddings:
    """Offline embedder: every text maps to its `mock_embed` vector."""

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self.stats = CallStats()

    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        _check_embed_inputs(texts)
        self.stats.embed_calls += 1
        self.stats.texts_embedded += len(texts)
        return [mock_embed(t, self.dim, self.seed) for t in texts]


class ScriptedChatModel:
    """Replays a recorded transcript keyed by the sha256 of the prompt.

    Two modes, combinable:

    - transcript entries registered with :meth:`add` (or loaded from a
      transcript file) are matched by prompt hash;
    - a ``queue`` of responses is consumed in order for any prompt, before
      the transcript is consulted. Queue entries may be exceptions, which
      are raised instead of returned.

    Unknown prompts fail loudly; silent fallbacks would let a drifting
    prompt template go unnoticed in tests.
    """

    def __init__(self, queue: Sequence[str | Exception] | None = None):
        self._by_hash: dict[str, str] = {}
        self._queue: list[str | Exception] = list(queue or [])
        self.stats = CallStats()
        self.prompts_seen: list[str] = []

    def add(self, prompt: str | Sequence[ChatMessage], response: str) -> None:
        messages = user_message(prompt) if isinstance(prompt, str) else prompt
        self._by_hash[prompt_sha256(messages)] = response

    def add_hashed(self, prompt_sha256_hex: str, response: str) -> None:
        self._by_hash[prompt_sha256_hex] = response

    @classmethod
    def from_file(cls, path) -> "ScriptedChatModel":
        model = cls()
        entries = json.loads(open(path, encoding="utf-8").read())
        for entry in entries:
            model.add_hashed(entry["prompt_sha256"], entry["response_text"])
        return model

    def to_file(self, path) -> None:
        entries = [
            {"prompt_sha256": h, "response_text": r} for h, r in sorted(self._by_hash.items())
        ]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(entries, fh, indent=2)

    def complete(
        self,
        messages: Sequence[ChatMessage],
        *,
        temperature: float = 0.0,
        max_tokens: int = 1024,
    ) -> str:
        _check_chat_inputs(messages)
        self.stats.chat_calls += 1
        rendered = render_messages(messages)
        self.prompts_seen.append(rendered)
        if self._queue:
            item = self._queue.pop(0)
            if isinstance(item, Exception):
                raise item
            return item
        key = prompt_sha256(messages)
        if key not in self._by_hash:
            raise ProviderError(
                f"scripted transcript has no entry for prompt {key[:12]}… "
                f"(prompt starts: {rendered[:80]!r})"
            )
        return self._by_hash[key]


class StaticChatModel:
    """Returns one fixed response to every prompt; offline smoke runs only."""

    def __init__(self, response: str = "insufficient context"):
        self.response = response
        self.stats = CallStats()

    def complete(
        self,
        messages: Sequence[ChatMessage],
        *,
        temperature: float = 0.0,
        max_tokens: int = 1024,
    ) -> str:
        _check_chat_inputs(messages)
        self.stats.chat_calls += 1
        return self.response
