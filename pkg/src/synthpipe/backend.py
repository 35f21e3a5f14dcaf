"""Completion backends: an OpenAI-compatible HTTP client plus deterministic mocks.

Every backend enforces its own parallelism bound, so a handle can be
shared freely across concurrent callers.
"""

from __future__ import annotations

import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import requests

from .prompting import INPUT_TAG, OUTPUT_TAG

DEFAULT_STOP = (INPUT_TAG,)
DEFAULT_TIMEOUT = 120.0

ANNOTATE_TEMPERATURE = 0.1
GENERATE_TEMPERATURE = 0.8

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class BackendError(RuntimeError):
    pass


class BackendUnavailable(BackendError):
    """Transient failures exhausted all retry attempts."""


class BackendRejected(BackendError):
    """Non-retryable 4xx from the server; carries the server message."""


class LookupMiss(BackendError):
    """Lookup mock has no entry for the prompt's target input."""


def default_temperature(mode: str) -> float:
    if mode == "annotate":
        return ANNOTATE_TEMPERATURE
    if mode == "generate":
        return GENERATE_TEMPERATURE
    raise ValueError(f"unknown mode {mode!r}")


def default_max_tokens(task_kind: str) -> int:
    return 64 if task_kind == "classification" else 256


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    temperature: float
    max_tokens: int = 256
    stop: tuple[str, ...] = DEFAULT_STOP
    request_id: str = ""

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if not self.stop:
            raise ValueError("stop strings must be non-empty")
        object.__setattr__(self, "stop", tuple(self.stop))


@dataclass(frozen=True)
class UsageRecord:
    request_id: str
    prompt_chars: int
    completion_chars: int
    latency: float
    attempts: int


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff: float = 0.5
    backoff_multiplier: float = 2.0


@dataclass(frozen=True)
class BackendConfig:
    kind: str  # http | mock-lookup | mock-echo | mock-scripted
    model_name: str = "mock"
    endpoint: Optional[str] = None
    auth: Optional[str] = None  # env var name holding the token
    parallelism: int = 1
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    timeout: float = DEFAULT_TIMEOUT
    # mock payloads
    lookup_table: Optional[dict[str, str]] = None
    script: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.kind not in ("http", "mock-lookup", "mock-echo", "mock-scripted"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not self.endpoint:
            raise ValueError("http backend requires an endpoint")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.script is not None:
            object.__setattr__(self, "script", tuple(self.script))

    @classmethod
    def from_dict(cls, d: dict) -> "BackendConfig":
        retry = RetryPolicy(**d["retry"]) if "retry" in d else RetryPolicy()
        return cls(
            kind=d["kind"],
            model_name=d.get("model_name", "mock"),
            endpoint=d.get("endpoint"),
            auth=d.get("auth"),
            parallelism=d.get("parallelism", 1),
            retry=retry,
            timeout=d.get("timeout", DEFAULT_TIMEOUT),
            lookup_table=d.get("lookup_table"),
            script=tuple(d["script"]) if d.get("script") else None,
        )


def strip_stop(text: str, stop: Sequence[str]) -> str:
    """Truncate at the earliest occurrence of any stop string."""
    cut = len(text)
    for s in stop:
        pos = text.find(s)
        if pos >= 0:
            cut = min(cut, pos)
    return text[:cut]


def last_input_segment(prompt: str) -> str:
    """Text between the last [INPUT] tag and the following [OUTPUT] tag (or end)."""
    start = prompt.rfind(INPUT_TAG)
    if start < 0:
        return ""
    seg = prompt[start + len(INPUT_TAG):]
    end = seg.find(OUTPUT_TAG)
    return seg if end < 0 else seg[:end]


class Backend:
    """Base class: parallelism bound, stop-string stripping, usage accounting."""

    def __init__(self, cfg: BackendConfig):
        self.cfg = cfg
        self._slots = threading.Semaphore(cfg.parallelism)
        self._usage_lock = threading.Lock()
        # latency deliberately excluded: totals feed deterministic run ledgers
        self.usage_totals = {"requests": 0, "prompt_chars": 0, "completion_chars": 0, "attempts": 0}

    def complete(self, req: CompletionRequest) -> tuple[str, UsageRecord]:
        start = time.monotonic()
        with self._slots:
            text, attempts = self._complete_raw(req)
        text = strip_stop(text, req.stop)
        usage = UsageRecord(
            request_id=req.request_id,
            prompt_chars=len(req.prompt),
            completion_chars=len(text),
            latency=time.monotonic() - start,
            attempts=attempts,
        )
        with self._usage_lock:
            self.usage_totals["requests"] += 1
            self.usage_totals["prompt_chars"] += usage.prompt_chars
            self.usage_totals["completion_chars"] += usage.completion_chars
            self.usage_totals["attempts"] += attempts
        return text, usage

    def _complete_raw(self, req: CompletionRequest) -> tuple[str, int]:
        raise NotImplementedError


class EchoBackend(Backend):
    """Returns the last [INPUT] segment of the prompt verbatim."""

    def _complete_raw(self, req):
        return last_input_segment(req.prompt), 1


class LookupBackend(Backend):
    """Maps the annotate target input (last [INPUT] segment, trimmed) to a canned output."""

    def _complete_raw(self, req):
        key = last_input_segment(req.prompt).strip()
        table = self.cfg.lookup_table or {}
        if key not in table:
            raise LookupMiss(f"no lookup entry for input {key[:80]!r}")
        return " " + table[key], 1


class ScriptedBackend(Backend):
    """Plays back a fixed script, indexed deterministically by the request id.

    The index is the sum of all integers embedded in request_id modulo the
    script length, so sequential job indices walk the script in order and a
    resample attempt advances to the next entry. Tracks in-flight requests
    for concurrency assertions; `delay` holds each request open that long.
    """

    def __init__(self, cfg: BackendConfig, delay: float = 0.0):
        super().__init__(cfg)
        if not cfg.script:
            raise ValueError("mock-scripted backend requires a non-empty script")
        self.delay = delay
        self._lock = threading.Lock()
        self._in_flight = 0
        self.max_in_flight = 0

    def _complete_raw(self, req):
        with self._lock:
            self._in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self._in_flight)
        try:
            if self.delay:
                time.sleep(self.delay)
            nums = [int(m) for m in re.findall(r"\d+", req.request_id)]
            idx = sum(nums) % len(self.cfg.script)
            return self.cfg.script[idx], 1
        finally:
            with self._lock:
                self._in_flight -= 1


class HttpBackend(Backend):
    """POST {endpoint}/v1/completions with retries and exponential backoff."""

    def __init__(self, cfg: BackendConfig, session: Optional[requests.Session] = None):
        super().__init__(cfg)
        self.session = session or requests.Session()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.cfg.auth:
            token = os.environ.get(self.cfg.auth)
            if not token:
                raise BackendRejected(f"auth env var {self.cfg.auth!r} is not set")
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _complete_raw(self, req):
        url = self.cfg.endpoint.rstrip("/") + "/v1/completions"
        body = {
            "model": self.cfg.model_name,
            "prompt": req.prompt,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "stop": list(req.stop),
        }
        retry = self.cfg.retry
        last_error = "no attempts made"
        for attempt in range(1, retry.max_attempts + 1):
            try:
                resp = self.session.post(
                    url, json=body, headers=self._headers(), timeout=self.cfg.timeout
                )
            except (requests.Timeout, requests.ConnectionError) as e:
                last_error = str(e)
            else:
                if resp.status_code == 200:
                    try:
                        text = resp.json()["choices"][0]["text"]
                    except (ValueError, KeyError, IndexError) as e:
                        raise BackendRejected(f"malformed completion response: {e}") from e
                    return text, attempt
                if resp.status_code in RETRYABLE_STATUS:
                    last_error = f"HTTP {resp.status_code}"
                elif 400 <= resp.status_code < 500:
                    raise BackendRejected(f"HTTP {resp.status_code}: {resp.text[:500]}")
                else:
                    last_error = f"HTTP {resp.status_code}"
            if attempt < retry.max_attempts:
                time.sleep(retry.base_backoff * retry.backoff_multiplier ** (attempt - 1))
        raise BackendUnavailable(
            f"{retry.max_attempts} attempts exhausted; last error: {last_error}"
        )


def make_backend(cfg: BackendConfig) -> Backend:
    if cfg.kind == "mock-echo":
        return EchoBackend(cfg)
    if cfg.kind == "mock-lookup":
        return LookupBackend(cfg)
    if cfg.kind == "mock-scripted":
        return ScriptedBackend(cfg)
    return HttpBackend(cfg)
