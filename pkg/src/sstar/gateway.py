"""Uniform access to chat-completion models.

Covers prompt templating, a live OpenAI-compatible HTTP provider, a
deterministic record/replay mock, retry with backoff, and a
content-addressed response cache. With the mock provider and a fixed
tape, any pipeline run is bit-reproducible end to end.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import string
import threading
import time
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping

logger = logging.getLogger(__name__)

__all__ = [
    "Message",
    "ChatRequest",
    "ChatResponse",
    "FinishReason",
    "PromptKind",
    "MissingField",
    "render_prompt",
    "apply_sample_tag",
    "detect_prompt_kind",
    "extract_code",
    "request_key",
    "template_versions",
    "ProviderError",
    "TransientProviderError",
    "ProviderExhausted",
    "TapeMiss",
    "MockProvider",
    "ScriptedProvider",
    "RecordingProvider",
    "LiveProvider",
    "load_tape",
    "save_tape",
    "RetryPolicy",
    "Gateway",
    "DEFAULT_MAX_TOKENS",
]

DEFAULT_MAX_TOKENS = 4096

_ROLES = ("system", "user", "assistant")


class FinishReason(str, Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


class PromptKind(str, Enum):
    GENERATE = "generate"
    DEBUG = "debug"
    TEST_INPUT_GEN = "test_input_gen"
    DISTINGUISH_INPUT_GEN = "distinguish_input_gen"
    PAIR_JUDGE = "pair_judge"


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ValueError(f"unknown role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[Message, ...]
    temperature: float = 0.7
    max_tokens: int = DEFAULT_MAX_TOKENS
    sample_tag: str = ""

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].role not in ("system", "user"):
            raise ValueError("first message role must be system or user")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    content: str
    finish_reason: FinishReason = FinishReason.STOP
    usage: tuple[int, int] | None = None

    def __post_init__(self):
        if self.finish_reason is FinishReason.ERROR and self.content:
            raise ValueError("error responses carry no content")


class MissingField(Exception):
    def __init__(self, name: str):
        super().__init__(f"prompt context missing field {name!r}")
        self.name = name


# One template file per PromptKind, shipped as versioned text assets.
_TEMPLATE_FILES = {
    PromptKind.GENERATE: "generate.txt",
    PromptKind.DEBUG: "debug.txt",
    PromptKind.TEST_INPUT_GEN: "test_input_gen.txt",
    PromptKind.DISTINGUISH_INPUT_GEN: "distinguish_input_gen.txt",
    PromptKind.PAIR_JUDGE: "pair_judge.txt",
}

# Distinctive phrases per kind; lets scripted providers and tests recover
# the kind from a rendered request without guessing. The debug signature
# lives in the user turn because threaded debug conversations reuse the
# generate system message.
_KIND_SIGNATURES = {
    PromptKind.GENERATE: "You are an expert competitive programmer. Solve the problem",
    PromptKind.DEBUG: "It fails on this test:",
    PromptKind.TEST_INPUT_GEN: "You design test cases for programming problems",
    PromptKind.DISTINGUISH_INPUT_GEN: "You design test inputs that expose behavioral differences",
    PromptKind.PAIR_JUDGE: "You judge which of two candidate programs",
}

_template_cache: dict[PromptKind, tuple[str, str]] = {}


def _template_text(kind: PromptKind) -> str:
    return (resources.files("sstar") / "templates" / _TEMPLATE_FILES[kind]).read_text(encoding="utf-8")


def _load_template(kind: PromptKind) -> tuple[str, str]:
    """Split a template file into its [system] and [user] sections."""
    if kind in _template_cache:
        return _template_cache[kind]
    text = _template_text(kind)
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for line in text.splitlines():
        if line.strip() in ("[system]", "[user]"):
            current = sections.setdefault(line.strip()[1:-1], [])
            continue
        if current is not None:
            current.append(line)
    if "system" not in sections or "user" not in sections:
        raise ValueError(f"template for {kind} lacks [system]/[user] sections")
    parsed = ("\n".join(sections["system"]).strip(), "\n".join(sections["user"]).strip())
    _template_cache[kind] = parsed
    return parsed


def render_prompt(kind: PromptKind, context: Mapping[str, str]) -> tuple[Message, ...]:
    """Render the fixed template for `kind`; pure and deterministic.

    Raises MissingField if the context lacks a placeholder the template
    uses. Substituted values are inserted verbatim (never re-scanned),
    so program sources containing ``$`` are safe.
    """
    system_tpl, user_tpl = _load_template(kind)
    rendered = []
    for tpl in (system_tpl, user_tpl):
        try:
            rendered.append(string.Template(tpl).substitute(context))
        except KeyError as e:
            raise MissingField(e.args[0]) from None
    return (Message("system", rendered[0]), Message("user", rendered[1]))


def apply_sample_tag(messages: tuple[Message, ...], sample_tag: str) -> tuple[Message, ...]:
    """Append the sample tag as a trailing system note.

    Forces distinct cache entries (and visible variation for live
    models) when N parallel samples share one prompt at a fixed
    temperature.
    """
    if not sample_tag:
        return messages
    return messages + (Message("system", f"sampling slot: {sample_tag}"),)


def detect_prompt_kind(req: ChatRequest) -> PromptKind | None:
    """Best-effort classification of a rendered request, for scripted mocks.

    Scans newest message first, so a threaded debug conversation (which
    still opens with the generate system prompt) classifies as Debug.
    """
    for message in reversed(req.messages):
        for kind, signature in _KIND_SIGNATURES.items():
            if signature in message.content:
                return kind
    return None


def extract_code(response_text: str) -> str:
    """Content of the last fenced code block, or the full text when unfenced.

    Never raises; a response that is not code-shaped simply flows through
    (it will fail every test downstream, which is the honest outcome).
    """
    blocks = []
    lines = response_text.split("\n")
    open_idx: int | None = None
    for i, line in enumerate(lines):
        if line.lstrip().startswith("```"):
            if open_idx is None:
                open_idx = i
            else:
                blocks.append("\n".join(lines[open_idx + 1 : i]))
                open_idx = None
    if blocks:
        return blocks[-1]
    return response_text


def request_key(req: ChatRequest) -> str:
    """Stable content digest used for caching and tape replay."""
    payload = {
        "model_id": req.model_id,
        "messages": [{"role": m.role, "content": m.content} for m in req.messages],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
        "sample_tag": req.sample_tag,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def template_versions() -> dict[str, str]:
    """Digest of each shipped template, recorded in run manifests."""
    return {
        kind.value: hashlib.sha256(_template_text(kind).encode("utf-8")).hexdigest()[:12]
        for kind in PromptKind
    }


class ProviderError(Exception):
    """Base class for provider failures."""


class TransientProviderError(ProviderError):
    """Retryable transport failure (429, 5xx, timeout)."""


class ProviderExhausted(ProviderError):
    def __init__(self, attempts: int, last: Exception | None = None):
        super().__init__(f"provider failed after {attempts} attempts: {last}")
        self.attempts = attempts
        self.last = last


class TapeMiss(ProviderError):
    def __init__(self, key: str):
        super().__init__(f"no tape entry for request key {key}")
        self.key = key


def load_tape(path: str | Path) -> dict[str, str]:
    """Read a JSONL tape of {"key": hex digest, "response": str} records."""
    tape: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        tape[record["key"]] = record["response"]
    return tape


def save_tape(tape: Mapping[str, str], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for key in sorted(tape):
            fh.write(json.dumps({"key": key, "response": tape[key]}, ensure_ascii=False) + "\n")


class MockProvider:
    """Strict replay from a recorded tape; unknown keys raise TapeMiss."""

    def __init__(self, tape: Mapping[str, str]):
        self.tape = dict(tape)

    def send(self, req: ChatRequest) -> ChatResponse:
        key = request_key(req)
        if key not in self.tape:
            raise TapeMiss(key)
        return ChatResponse(content=self.tape[key])


class ScriptedProvider:
    """Deterministic request -> response function, for synthetic experiments."""

    def __init__(self, script: Callable[[ChatRequest], str]):
        self.script = script

    def send(self, req: ChatRequest) -> ChatResponse:
        return ChatResponse(content=self.script(req))


class RecordingProvider:
    """Wraps another provider and records key -> response, for cutting tapes."""

    def __init__(self, inner):
        self.inner = inner
        self.records: dict[str, str] = {}
        self._lock = threading.Lock()

    def send(self, req: ChatRequest) -> ChatResponse:
        resp = self.inner.send(req)
        with self._lock:
            self.records[request_key(req)] = resp.content
        return resp


class LiveProvider:
    """OpenAI-compatible chat-completions endpoint.

    Base URL from SSTAR_API_BASE, key from SSTAR_API_KEY (constructor
    arguments win). Transient HTTP failures surface as
    TransientProviderError so the gateway can retry them.
    """

    def __init__(self, base_url: str | None = None, api_key: str | None = None, timeout: float = 120.0):
        self.base_url = (base_url or os.environ.get("SSTAR_API_BASE", "")).rstrip("/")
        self.api_key = api_key or os.environ.get("SSTAR_API_KEY", "")
        self.timeout = timeout
        if not self.base_url:
            raise ValueError("live provider needs a base URL (SSTAR_API_BASE)")

    def send(self, req: ChatRequest) -> ChatResponse:
        import requests

        payload = {
            "model": req.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions", json=payload, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as e:
            raise TransientProviderError(f"transport failure: {e}") from e
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientProviderError(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            choice = body["choices"][0]
            content = choice["message"]["content"] or ""
            finish = choice.get("finish_reason", "stop")
        except (KeyError, IndexError, ValueError) as e:
            raise ProviderError(f"malformed completion body: {e}") from e
        usage = None
        if isinstance(body.get("usage"), dict):
            u = body["usage"]
            usage = (int(u.get("prompt_tokens", 0)), int(u.get("completion_tokens", 0)))
        reason = FinishReason.LENGTH if finish == "length" else FinishReason.STOP
        return ChatResponse(content=content, finish_reason=reason, usage=usage)


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 5
    base_delay: float = 0.5
    factor: float = 2.0
    jitter: bool = True

    def delay(self, attempt: int, rng: random.Random) -> float:
        cap = self.base_delay * (self.factor**attempt)
        return rng.uniform(0.0, cap) if self.jitter else cap


@dataclass
class GatewayStats:
    calls: int = 0
    cache_hits: int = 0
    provider_successes: int = 0
    provider_failures: int = 0
    retries: int = 0


class Gateway:
    """Completion front door: cache, retry, in-flight cap, model routing.

    `models` maps PromptKind to model id (a bare string routes every
    kind to one model). Safe for concurrent callers; cache writes are
    atomic per key.
    """

    def __init__(
        self,
        provider,
        models: str | Mapping[PromptKind, str] = "mock-model",
        cache_dir: str | Path | None = None,
        retry: RetryPolicy = RetryPolicy(),
        max_in_flight: int = 8,
        min_interval: float = 0.0,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.provider = provider
        self._models = models
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.retry = retry
        self._gate = threading.Semaphore(max_in_flight)
        self._min_interval = min_interval
        self._last_call = 0.0
        self._rate_lock = threading.Lock()
        self._sleep = sleep
        self._rng = rng or random.Random()
        self.stats = GatewayStats()
        self._stats_lock = threading.Lock()

    def model_for(self, kind: PromptKind) -> str:
        if isinstance(self._models, str):
            return self._models
        return self._models[kind]

    def _respect_rate_ceiling(self) -> None:
        if self._min_interval <= 0:
            return
        with self._rate_lock:
            wait = self._min_interval - (time.monotonic() - self._last_call)
            if wait > 0:
                self._sleep(wait)
            self._last_call = time.monotonic()

    def _cache_path(self, key: str) -> Path:
        assert self.cache_dir is not None
        return self.cache_dir / key

    def _cache_read(self, key: str) -> ChatResponse | None:
        if not self.cache_dir:
            return None
        path = self._cache_path(key)
        if not path.exists():
            return None
        try:
            body = json.loads(path.read_text(encoding="utf-8"))
            resp = body["response"]
            usage = tuple(resp["usage"]) if resp.get("usage") else None
            return ChatResponse(
                content=resp["content"],
                finish_reason=FinishReason(resp.get("finish_reason", "stop")),
                usage=usage,
            )
        except (ValueError, KeyError):
            logger.warning("discarding unreadable cache entry %s", path)
            return None

    def _cache_write(self, key: str, req: ChatRequest, resp: ChatResponse) -> None:
        if not self.cache_dir:
            return
        body = {
            "request": {
                "model_id": req.model_id,
                "messages": [{"role": m.role, "content": m.content} for m in req.messages],
                "temperature": req.temperature,
                "max_tokens": req.max_tokens,
                "sample_tag": req.sample_tag,
            },
            "response": {
                "content": resp.content,
                "finish_reason": resp.finish_reason.value,
                "usage": list(resp.usage) if resp.usage else None,
            },
        }
        path = self._cache_path(key)
        tmp = path.with_suffix(".tmp-%d" % threading.get_ident())
        tmp.write_text(json.dumps(body, sort_keys=True, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, path)

    def complete(self, req: ChatRequest) -> ChatResponse:
        """Cache-first completion with retry on transient provider failures.

        Raises ProviderExhausted once the attempt cap is hit, and lets
        non-transient provider errors (including TapeMiss) through
        immediately.
        """
        with self._stats_lock:
            self.stats.calls += 1
        key = request_key(req)
        cached = self._cache_read(key)
        if cached is not None:
            with self._stats_lock:
                self.stats.cache_hits += 1
            return cached

        last: Exception | None = None
        for attempt in range(self.retry.attempts):
            if attempt > 0:
                self._sleep(self.retry.delay(attempt - 1, self._rng))
                with self._stats_lock:
                    self.stats.retries += 1
            try:
                with self._gate:
                    self._respect_rate_ceiling()
                    resp = self.provider.send(req)
            except TransientProviderError as e:
                last = e
                logger.warning("transient provider failure (attempt %d): %s", attempt + 1, e)
                continue
            except ProviderError:
                with self._stats_lock:
                    self.stats.provider_failures += 1
                raise
            with self._stats_lock:
                self.stats.provider_successes += 1
            self._cache_write(key, req, resp)
            return resp
        with self._stats_lock:
            self.stats.provider_failures += 1
        raise ProviderExhausted(self.retry.attempts, last)
