"""HTTP clients for the completion and generation endpoints, plus the
deterministic mock backends that keep the test suite fully offline.

Wire formats:
  completion  POST {base_url}/complete  {prompt, max_tokens, temperature,
              stop: [string]} -> {choices: [{text}]}
  generation  POST {base_url}/generate  {inputs: [string], num_beams,
              max_new_tokens, stop?} -> {outputs: [string]}

Transient failures (HTTP 429/5xx, connection errors) are retried with
exponential backoff and full jitter; retries resend byte-identical payloads.
Other 4xx responses are treated as fatal configuration errors. API keys come
from the environment and never appear in logs or persisted artifacts.
"""

from __future__ import annotations

import json
import os
import random
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, TypeVar

import requests

from .fusion import FUSION_PREFIX
from .model import DecodeConfig

API_KEY_ENV = "TRIPLETEXT_API_KEY"

T = TypeVar("T")
U = TypeVar("U")


class TransportError(RuntimeError):
    """Retries exhausted against a transient backend failure."""


class BackendRequestError(RuntimeError):
    """The backend rejected the request; retrying cannot help."""


class UnknownRequestError(KeyError):
    """A mock backend received a request missing from its fixture."""


@dataclass(frozen=True)
class BackendConfig:
    """Connection and retry policy for one backend endpoint."""

    base_url: str
    api_key: Optional[str] = None
    timeout: float = 60.0
    max_retries: int = 3
    backoff_initial: float = 1.0
    backoff_multiplier: float = 2.0
    parallelism: int = 4

    def __post_init__(self) -> None:
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")

    def resolved_api_key(self) -> Optional[str]:
        return self.api_key or os.environ.get(API_KEY_ENV)

    def __repr__(self) -> str:  # keep secrets out of logs
        masked = "***" if self.resolved_api_key() else None
        return (
            f"BackendConfig(base_url={self.base_url!r}, api_key={masked}, "
            f"timeout={self.timeout}, max_retries={self.max_retries}, "
            f"parallelism={self.parallelism})"
        )


def _strip_completion(text: str, stop_sequence: Optional[str]) -> str:
    if stop_sequence and stop_sequence in text:
        text = text[: text.index(stop_sequence)]
    return text.lstrip()


class HttpBackend:
    """Serves both pipeline stages over the two JSON endpoints."""

    def __init__(self, config: BackendConfig):
        self.config = config
        self._semaphore = threading.BoundedSemaphore(config.parallelism)
        self._session = requests.Session()

    @property
    def identity(self) -> str:
        return self.config.base_url

    def _post(self, path: str, payload: dict) -> dict:
        url = self.config.base_url.rstrip("/") + path
        headers = {}
        api_key = self.config.resolved_api_key()
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = json.dumps(payload).encode("utf-8")  # built once: retries are byte-identical
        headers["Content-Type"] = "application/json"
        attempt = 0
        while True:
            try:
                with self._semaphore:
                    response = self._session.post(
                        url, data=body, headers=headers, timeout=self.config.timeout
                    )
                status = response.status_code
                if status == 200:
                    return response.json()
                if status != 429 and 400 <= status < 500:
                    raise BackendRequestError(f"{url} answered {status}: {response.text[:500]}")
                reason = f"HTTP {status}"
            except (requests.ConnectionError, requests.Timeout) as exc:
                reason = f"{type(exc).__name__}"
            if attempt >= self.config.max_retries:
                raise TransportError(f"{url} failed after {attempt + 1} attempts ({reason})")
            delay = self.config.backoff_initial * self.config.backoff_multiplier**attempt
            time.sleep(random.uniform(0, delay))  # full jitter
            attempt += 1

    def complete(self, prompt: str, spec) -> str:
        if not prompt:
            raise ValueError("empty prompt")
        payload = {
            "prompt": prompt,
            "max_tokens": spec.max_new_tokens,
            "temperature": spec.temperature,
            "stop": [spec.stop_sequence],
        }
        response = self._post("/complete", payload)
        text = response["choices"][0]["text"]
        return _strip_completion(text, spec.stop_sequence)

    def generate(self, input_text: str, decode: DecodeConfig) -> str:
        if not input_text:
            raise ValueError("empty input text")
        payload = {
            "inputs": [input_text],
            "num_beams": decode.beam_width,
            "max_new_tokens": decode.max_new_tokens,
        }
        if decode.stop_sequence is not None:
            payload["stop"] = decode.stop_sequence
        response = self._post("/generate", payload)
        return response["outputs"][0]


class MockBackend:
    """Deterministic lookup backend driven by a request-to-response mapping."""

    def __init__(self, fixture: dict[str, str], unknown: str = "error"):
        if unknown not in ("error", "echo"):
            raise ValueError(f"unknown policy must be 'error' or 'echo', got {unknown!r}")
        self.fixture = dict(fixture)
        self.unknown = unknown
        self.identity = f"mock(unknown={unknown})"

    def _lookup(self, request_text: str) -> str:
        if request_text in self.fixture:
            return self.fixture[request_text]
        if self.unknown == "echo":
            return request_text
        raise UnknownRequestError(f"no fixture entry for request: {request_text[:200]!r}")

    def complete(self, prompt: str, spec) -> str:
        return _strip_completion(self._lookup(prompt), spec.stop_sequence)

    def generate(self, input_text: str, decode: DecodeConfig) -> str:
        return self._lookup(input_text)


def mock_backend(fixture_path: str | Path, unknown: str = "error") -> MockBackend:
    """Load a JSON request-to-response map as a mock backend."""
    try:
        fixture = json.loads(Path(fixture_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise RuntimeError(f"cannot load mock fixture {fixture_path}: {exc}") from exc
    if not isinstance(fixture, dict):
        raise RuntimeError(f"mock fixture {fixture_path} must be a JSON object")
    return MockBackend(fixture, unknown=unknown)


class IdentityFusionBackend:
    """Echoes the fusion input minus its task prefix; handy for hermetic runs."""

    identity = "identity"

    def generate(self, input_text: str, decode: DecodeConfig) -> str:
        if input_text.startswith(FUSION_PREFIX):
            return input_text[len(FUSION_PREFIX):]
        return input_text


_TABLE_ROW = re.compile(r"Table: (.*) \| (.*) \| (.*)\nText:$")


class SyntheticCompletionBackend:
    """Rule-based completion stand-in: verbalizes the prompt's final table row.

    Deterministic and offline, yet it exercises the full template-mining path
    because its sentences contain the subject and object verbatim.
    """

    identity = "synthetic"

    def complete(self, prompt: str, spec) -> str:
        match = _TABLE_ROW.search(prompt)
        if match is None:
            raise BackendRequestError(f"prompt has no trailing table row: {prompt[-200:]!r}")
        subject, predicate, object_ = match.groups()
        return _strip_completion(
            f" The {predicate} of {subject} is {object_}.", spec.stop_sequence
        )


class CountingBackend:
    """Wraps a backend; counts calls and tracks the concurrency high-water mark."""

    def __init__(self, inner):
        self.inner = inner
        self.completion_calls = 0
        self.generation_calls = 0
        self._lock = threading.Lock()
        self._in_flight = 0
        self.max_in_flight = 0

    @property
    def identity(self) -> str:
        return getattr(self.inner, "identity", repr(self.inner))

    def _enter(self) -> None:
        with self._lock:
            self._in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self._in_flight)

    def _exit(self) -> None:
        with self._lock:
            self._in_flight -= 1

    def complete(self, prompt: str, spec) -> str:
        with self._lock:
            self.completion_calls += 1
        self._enter()
        try:
            return self.inner.complete(prompt, spec)
        finally:
            self._exit()

    def generate(self, input_text: str, decode: DecodeConfig) -> str:
        with self._lock:
            self.generation_calls += 1
        self._enter()
        try:
            return self.inner.generate(input_text, decode)
        finally:
            self._exit()


class RecordingBackend:
    """Wraps a backend; keeps every request so tests can assert payloads."""

    def __init__(self, inner):
        self.inner = inner
        self.completions: list[tuple[str, object]] = []
        self.generations: list[tuple[str, DecodeConfig]] = []

    @property
    def identity(self) -> str:
        return getattr(self.inner, "identity", repr(self.inner))

    def complete(self, prompt: str, spec) -> str:
        self.completions.append((prompt, spec))
        return self.inner.complete(prompt, spec)

    def generate(self, input_text: str, decode: DecodeConfig) -> str:
        self.generations.append((input_text, decode))
        return self.inner.generate(input_text, decode)


def parallel_map(
    fn: Callable[[T], U], items: Sequence[T], parallelism: int
) -> list[U]:
    """Apply fn to every item, at most ``parallelism`` in flight, order kept."""
    if parallelism <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, items))


def build_backend(spec: dict):
    """Construct a backend from its JSON description (config files, CLI)."""
    kind = spec.get("kind")
    if kind == "offline":
        return None
    if kind == "http":
        keys = {k: v for k, v in spec.items() if k != "kind"}
        return HttpBackend(BackendConfig(**keys))
    if kind == "mock":
        return mock_backend(spec["fixture"], unknown=spec.get("unknown", "error"))
    if kind == "identity":
        return IdentityFusionBackend()
    if kind == "synthetic":
        return SyntheticCompletionBackend()
    raise ValueError(f"unknown backend kind {spec.get('kind')!r}")
