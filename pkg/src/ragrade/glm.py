"""Generative grading backends and verdict parsing.

Backends share one interface: complete(prompt, params) -> raw text.  A
deterministic mock echoes the first retrieved example's judgment (turning
the whole pipeline into a 1-NN classifier, which tests exploit as an
exact oracle), a remote client talks JSON-over-HTTP with retries and
rate limiting, a replay backend serves recorded completions, and a
scripted backend plays back a fixed list.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Scheme

ENV_ENDPOINT = "RAGRADE_GLM_ENDPOINT"
ENV_API_KEY = "RAGRADE_GLM_API_KEY"
ENV_MODEL = "RAGRADE_GLM_MODEL"
ENV_TEXT_PATH = "RAGRADE_GLM_TEXT_PATH"


@dataclass(frozen=True)
class GenParams:
    temperature: float = 0.0
    max_tokens: int = 64
    model_id: str = "default"

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class Judgment:
    label: str  # canonical string of the active scheme
    raw: str  # matched text before normalization


class GlmError(Exception):
    pass


class AuthError(GlmError):
    pass


class NonRetryableError(GlmError):
    pass


class RetryExhausted(GlmError):
    pass


class ParseFailure(GlmError):
    """The raw completion yielded no resolvable judgment."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class GlmBackend:
    def complete(self, prompt: str, params: GenParams) -> str:
        raise NotImplementedError


_EXAMPLE1_RE = re.compile(r"Example 1:\nAnswer: .*?\nJudgment: (.*?)\n", re.DOTALL)


class MockBackend(GlmBackend):
    """Deterministic grader: echo the first example's judgment.

    Prompts whose examples block starts with "Example 1:" get that
    example's judgment back inside <judgment> tags; prompts without
    examples always get "incorrect".
    """

    def complete(self, prompt: str, params: GenParams) -> str:
        match = _EXAMPLE1_RE.search(prompt)
        if match:
            return f"<judgment>{match.group(1)}</judgment>"
        return "<judgment>incorrect</judgment>"


class ScriptedBackend(GlmBackend):
    """Plays back a fixed list of completions in order (then repeats the last)."""

    def __init__(self, completions: list[str]):
        if not completions:
            raise ValueError("scripted backend needs at least one completion")
        self.completions = list(completions)
        self.calls = 0

    def complete(self, prompt: str, params: GenParams) -> str:
        text = self.completions[min(self.calls, len(self.completions) - 1)]
        self.calls += 1
        return text


class RateLimiter:
    """Token bucket on request starts plus a cap on in-flight requests."""

    def __init__(self, requests_per_second: float = 10.0, max_in_flight: int = 4, clock=None):
        if requests_per_second <= 0 or max_in_flight < 1:
            raise ValueError("requests_per_second must be > 0 and max_in_flight >= 1")
        self.interval = 1.0 / requests_per_second
        self._clock = clock or time.monotonic
        self._lock = threading.Lock()
        self._next_start = self._clock()
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def __enter__(self):
        self._slots.acquire()
        with self._lock:
            now = self._clock()
            wait = self._next_start - now
            self._next_start = max(self._next_start, now) + self.interval
        if wait > 0:
            time.sleep(wait)
        return self

    def __exit__(self, *exc):
        self._slots.release()
        return False


def _lookup_path(obj, dotted: str):
    """Walk a JSON object by a dotted path; integer parts index lists."""
    node = obj
    for part in dotted.split("."):
        if isinstance(node, list):
            node = node[int(part)]
        elif isinstance(node, dict):
            node = node[part]
        else:
            raise KeyError(dotted)
    return node


RETRYABLE_STATUS = (408, 429, 500, 502, 503, 504, 529)


class RemoteBackend(GlmBackend):
    """JSON-over-HTTP completion client.

    Request: {"model", "prompt", "temperature", "max_tokens"}; the
    completion text is extracted from the response JSON at a dotted field
    path (default "text").  Transient failures are retried with
    exponential backoff up to max_attempts total attempts; 401/403 raise
    AuthError immediately and other non-retryable statuses raise
    NonRetryableError.  Endpoint, credential, model, and field path come
    from arguments or the RAGRADE_GLM_* environment variables.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        text_path: str | None = None,
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        limiter: RateLimiter | None = None,
        log_path: str | Path | None = None,
        session=None,
        sleep=time.sleep,
    ):
        self.endpoint = endpoint or os.environ.get(ENV_ENDPOINT)
        if not self.endpoint:
            raise GlmError(f"no endpoint configured (set {ENV_ENDPOINT})")
        self.api_key = api_key or os.environ.get(ENV_API_KEY)
        self.text_path = text_path or os.environ.get(ENV_TEXT_PATH, "text")
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.limiter = limiter or RateLimiter()
        self.log_path = Path(log_path) if log_path else None
        self._log_lock = threading.Lock()
        # module-level requests.post is safe for concurrent callers; an
        # injected session (tests, custom transports) is used as given
        self._session = session
        self._sleep = sleep

    def _post(self, payload, headers):
        import requests

        poster = self._session.post if self._session is not None else requests.post
        return poster(self.endpoint, json=payload, headers=headers, timeout=self.timeout)

    def complete(self, prompt: str, params: GenParams) -> str:
        import requests

        payload = {
            "model": params.model_id or os.environ.get(ENV_MODEL, "default"),
            "prompt": prompt,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        headers = {"content-type": "application/json"}
        if self.api_key:
            headers["authorization"] = f"Bearer {self.api_key}"

        last_failure = None
        for attempt in range(1, self.max_attempts + 1):
            if attempt > 1:
                self._sleep(self.backoff_base * 2 ** (attempt - 2))
            try:
                with self.limiter:
                    resp = self._post(payload, headers)
            except requests.RequestException as exc:
                last_failure = f"transport error: {exc}"
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"authentication failed with status {resp.status_code}")
            if resp.status_code in RETRYABLE_STATUS:
                last_failure = f"status {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise NonRetryableError(f"unexpected status {resp.status_code}: {resp.text[:200]}")
            try:
                text = str(_lookup_path(resp.json(), self.text_path))
            except (ValueError, KeyError, IndexError) as exc:
                raise NonRetryableError(
                    f"response JSON lacks field path {self.text_path!r}: {exc}"
                ) from exc
            self._log(prompt, params, text)
            return text
        raise RetryExhausted(
            f"giving up after {self.max_attempts} attempts; last failure: {last_failure}"
        )

    def _log(self, prompt: str, params: GenParams, completion: str) -> None:
        if self.log_path is None:
            return
        record = {
            "prompt_sha256": prompt_digest(prompt),
            "prompt": prompt,
            "model": params.model_id,
            "temperature": params.temperature,
            "completion": completion,
        }
        with self._log_lock, self.log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ReplayBackend(GlmBackend):
    """Serves completions recorded by RemoteBackend, keyed by prompt hash."""

    def __init__(self, log_path: str | Path):
        self.completions: dict[str, str] = {}
        with Path(log_path).open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    record = json.loads(line)
                    self.completions[record["prompt_sha256"]] = record["completion"]

    def complete(self, prompt: str, params: GenParams) -> str:
        key = prompt_digest(prompt)
        if key not in self.completions:
            raise GlmError(f"no recorded completion for prompt hash {key[:12]}...")
        return self.completions[key]


# ---------------------------------------------------------------------------
# Verdict parsing
# ---------------------------------------------------------------------------

_JUDGMENT_SPAN_RE = re.compile(r"<judgment>(.*?)</judgment>", re.IGNORECASE | re.DOTALL)
_DSPY_MARKER = "Judgment of the New Answer:"


def _normalize_verdict(text: str) -> str:
    text = text.lower().replace("_", " ").replace("-", " ")
    text = re.sub(r"[^a-z0-9 ]+", " ", text)
    return re.sub(r"\s+", " ", text).strip()


def parse_judgment(raw: str, scheme: Scheme, style: str = "cpg") -> Judgment:
    """Extract the categorical verdict from a raw completion.

    cpg style reads the last <judgment>...</judgment> span; dspy style
    reads the text after the final "Judgment of the New Answer:" marker.
    The span is normalized and resolved against the scheme's canonical
    labels by longest-substring match, so "partially correct but
    incomplete" can never be mistaken for "correct".
    """
    if style == "cpg":
        spans = _JUDGMENT_SPAN_RE.findall(raw)
        if not spans:
            raise ParseFailure("no <judgment> span found", raw)
        span = spans[-1].strip()
    elif style == "dspy":
        idx = raw.rfind(_DSPY_MARKER)
        if idx < 0:
            raise ParseFailure(f"no {_DSPY_MARKER!r} marker found", raw)
        span = raw[idx + len(_DSPY_MARKER) :].strip()
    else:
        raise ValueError(f"unknown template style {style!r}")

    normalized = _normalize_verdict(span)
    best = None
    for label in scheme.labels():
        if _normalize_verdict(label) in normalized:
            if best is None or len(label) > len(best):
                best = label
    if best is None:
        raise ParseFailure(f"verdict {span!r} matches no {scheme.value} label", raw)
    return Judgment(label=best, raw=span)


def make_backend(spec: str) -> GlmBackend:
    """Backend from a selector string: mock, remote, replay:PATH, scripted:PATH."""
    if spec == "mock":
        return MockBackend()
    if spec == "remote":
        return RemoteBackend()
    if spec.startswith("replay:"):
        return ReplayBackend(spec.split(":", 1)[1])
    if spec.startswith("scripted:"):
        completions = json.loads(Path(spec.split(":", 1)[1]).read_text(encoding="utf-8"))
        return ScriptedBackend(completions)
    raise ValueError(f"unknown backend selector {spec!r}")
