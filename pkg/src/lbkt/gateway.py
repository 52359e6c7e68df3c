"""Completion backends behind one interface.

Three kinds: "http" speaks a chat-completion wire protocol with bearer auth,
bounded concurrency and retry with backoff; "replay" serves canned responses
from a line-delimited transcript keyed by a hash of the prompt, making runs
bit-reproducible; "oracle" parses the canonical summary out of a decoder
prompt and replays the student answer policy, giving a deterministic
upper-bound decoder for synthetic data.

Any non-replay backend can also record its responses to a transcript file,
which is what turns a live run into a replayable one.
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
from typing import NamedTuple

import httpx

from .students import Question, deterministic_answer, parse_question_text, true_answer
from .summary import parse_summary_cached

# Punctuation marks that count as their own tokens.
_TOKEN_RE = re.compile(r"[.,;:!?]|[^\s.,;:!?]+")


def count_tokens(text: str) -> int:
    """Whitespace tokenization with . , ; : ! ? split off as separate tokens."""
    return len(_TOKEN_RE.findall(text))


def truncate_to_tokens(text: str, budget: int) -> str:
    """Longest prefix of text containing at most budget tokens."""
    if budget < 0:
        raise ValueError("budget must be non-negative")
    end = 0
    for n, m in enumerate(_TOKEN_RE.finditer(text), start=1):
        if n > budget:
            break
        end = m.end()
    else:
        return text
    return text[:end]


class BackendError(RuntimeError):
    pass


class ReplayMissError(BackendError):
    pass


class UnsupportedBackendError(BackendError):
    pass


@dataclass(frozen=True)
class BackendSpec:
    kind: str  # "http" | "replay" | "oracle"
    endpoint: str | None = None
    model: str | None = None
    credential_env: str | None = None
    transcript_path: str | None = None
    record_path: str | None = None
    max_in_flight: int = 4
    max_attempts: int = 3
    backoff_s: float = 0.1
    timeout_s: float = 60.0

    def __post_init__(self):
        if self.kind not in ("http", "replay", "oracle"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not self.endpoint:
            raise ValueError("http backend requires an endpoint")
        if self.kind == "replay" and not self.transcript_path:
            raise ValueError("replay backend requires a transcript_path")
        if self.max_in_flight < 1 or self.max_attempts < 1:
            raise ValueError("max_in_flight and max_attempts must be at least 1")

    @property
    def id(self) -> str:
        if self.kind == "http":
            return f"http:{self.model or self.endpoint}"
        if self.kind == "replay":
            return f"replay:{Path(self.transcript_path).name}"
        return "oracle"


@dataclass(frozen=True)
class CompletionRequest:
    system_text: str
    user_text: str
    max_new_tokens: int = 256
    temperature: float = 0.0
    stop: tuple[str, ...] = ()

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be at least 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    token_count: int
    latency_s: float = 0.0


def request_key(request: CompletionRequest) -> str:
    """Stable transcript key; \\x1f keeps (system, user) pairs unambiguous."""
    payload = request.system_text + "\x1f" + request.user_text
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# replay transcripts

_transcript_lock = threading.Lock()
_transcript_cache: dict[str, tuple[float, dict[str, str]]] = {}


def _load_transcript(path: str) -> dict[str, str]:
    mtime = os.path.getmtime(path)
    with _transcript_lock:
        cached = _transcript_cache.get(path)
        if cached and cached[0] == mtime:
            return cached[1]
    table: dict[str, str] = {}
    with open(path) as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                table[rec["key"]] = rec["text"]
    with _transcript_lock:
        _transcript_cache[path] = (mtime, table)
    return table


def _record(spec: BackendSpec, key: str, text: str):
    with _transcript_lock:
        with open(spec.record_path, "a") as f:
            f.write(json.dumps({"key": key, "text": text}, sort_keys=True) + "\n")
        _transcript_cache.pop(spec.record_path, None)


# ---------------------------------------------------------------------------
# http

_semaphore_lock = threading.Lock()
_semaphores: dict[BackendSpec, threading.Semaphore] = {}


def _semaphore(spec: BackendSpec) -> threading.Semaphore:
    with _semaphore_lock:
        sem = _semaphores.get(spec)
        if sem is None:
            sem = threading.Semaphore(spec.max_in_flight)
            _semaphores[spec] = sem
        return sem


def _http_complete(spec: BackendSpec, request: CompletionRequest) -> CompletionResponse:
    headers = {"Content-Type": "application/json"}
    if spec.credential_env:
        token = os.environ.get(spec.credential_env)
        if not token:
            raise BackendError(
                f"credential environment variable {spec.credential_env} is not set"
            )
        headers["Authorization"] = f"Bearer {token}"
    payload = {
        "messages": [
            {"role": "system", "content": request.system_text},
            {"role": "user", "content": request.user_text},
        ],
        "max_tokens": request.max_new_tokens,
        "temperature": request.temperature,
    }
    if spec.model:
        payload["model"] = spec.model
    if request.stop:
        payload["stop"] = list(request.stop)

    last_error: Exception | None = None
    for attempt in range(spec.max_attempts):
        if attempt:
            time.sleep(spec.backoff_s * (2 ** (attempt - 1)))
        started = time.monotonic()
        try:
            with _semaphore(spec):
                resp = httpx.post(
                    spec.endpoint, json=payload, headers=headers, timeout=spec.timeout_s
                )
            if resp.status_code >= 500 or resp.status_code == 429:
                last_error = BackendError(f"server returned {resp.status_code}")
                continue
            resp.raise_for_status()
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
            usage = data.get("usage", {}).get("completion_tokens")
            return CompletionResponse(
                text=text,
                token_count=int(usage) if usage is not None else count_tokens(text),
                latency_s=time.monotonic() - started,
            )
        # Client errors (4xx) are not retried: the request itself is wrong.
        except httpx.HTTPStatusError as exc:
            raise BackendError(f"http backend rejected request: {exc}") from exc
        except (httpx.TransportError, KeyError, ValueError) as exc:
            last_error = exc
    raise BackendError(
        f"http backend failed after {spec.max_attempts} attempts: {last_error}"
    )


# ---------------------------------------------------------------------------
# oracle

class OraclePrediction(NamedTuple):
    correct: bool
    answer: int


def oracle_decode(summary_text: str, question: Question) -> OraclePrediction:
    """Parse the summary into a profile and replay the noise-free answer policy."""
    if not question.is_arithmetic:
        raise UnsupportedBackendError(
            f"oracle cannot decode non-arithmetic question {question.id!r}"
        )
    profile = parse_summary_cached(summary_text)
    answer = deterministic_answer(profile, question)
    truth = true_answer(question.op, question.lhs, question.rhs)
    return OraclePrediction(correct=answer == truth, answer=answer)


_SUMMARY_BLOCK_RE = re.compile(
    r"Student knowledge summary:\n(.*?)\n*Question:", re.DOTALL
)
_QUESTION_LINE_RE = re.compile(r"^Question:\s*(.+)$", re.MULTILINE)


def _oracle_complete(request: CompletionRequest) -> CompletionResponse:
    block = _SUMMARY_BLOCK_RE.search(request.user_text)
    qline = _QUESTION_LINE_RE.search(request.user_text)
    if not block or not qline:
        raise UnsupportedBackendError(
            "oracle backend only answers decoder prompts "
            "(summary block plus a Question: line)"
        )
    parsed = parse_question_text(qline.group(1))
    if parsed is None:
        raise UnsupportedBackendError(
            f"oracle cannot parse question text {qline.group(1)!r}"
        )
    op, lhs, rhs = parsed
    question = Question(id="prompt", text=qline.group(1), op=op, lhs=lhs, rhs=rhs)
    prediction = oracle_decode(block.group(1).strip(), question)
    text = "Yes" if prediction.correct else "No"
    return CompletionResponse(text=text, token_count=count_tokens(text))


# ---------------------------------------------------------------------------

def complete(spec: BackendSpec, request: CompletionRequest) -> CompletionResponse:
    """Run one completion through the configured backend."""
    if spec.kind == "replay":
        key = request_key(request)
        if not os.path.exists(spec.transcript_path):
            raise ReplayMissError(f"transcript {spec.transcript_path} does not exist")
        table = _load_transcript(spec.transcript_path)
        if key not in table:
            raise ReplayMissError(
                f"no transcript entry for request key {key} in {spec.transcript_path}"
            )
        text = table[key]
        return CompletionResponse(text=text, token_count=count_tokens(text))

    if spec.kind == "http":
        response = _http_complete(spec, request)
    elif spec.kind == "oracle":
        response = _oracle_complete(request)
    else:  # unreachable given BackendSpec validation
        raise UnsupportedBackendError(f"unknown backend kind {spec.kind!r}")

    if spec.record_path:
        _record(spec, request_key(request), response.text)
    return response
