"""Streaming token interface over a chat-completions wire backend and a
deterministic scripted mock.

A "token" here is one stream event as delimited by the backend; no
independent tokenization is performed. The mock splits its scripted
emissions on whitespace (one event per unit) and joins text back with
single spaces, so fixtures are stable. Wire deltas concatenate directly.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, TypeVar

import requests

log = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.0
DEFAULT_SEED = 42

# hard output ceiling for reasoning-trace generation
TRACE_TOKEN_LIMIT = 8192

# terminating causes for a token stream; exhaustive and mutually exclusive
CAUSE_MARKER = "marker"
CAUSE_CAP = "cap"
CAUSE_BACKEND_STOP = "backend-stop"

API_KEY_ENV = "M1_API_KEY"
CHAT_COMPLETIONS_PATH = "/v1/chat/completions"


class BackendError(Exception):
    """Base class for backend failures. ``retryable`` drives retry policy."""

    retryable = False


class ConnectionFailure(BackendError):
    retryable = True


class BackendStatusError(BackendError):
    """Non-success HTTP status from the wire backend."""

    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"backend returned status {status}: {detail}".rstrip(": "))
        self.status = status
        self.retryable = status >= 500 or status == 429


class TruncatedStreamError(BackendError):
    """The stream ended without the completion sentinel."""

    retryable = True


@dataclass(frozen=True)
class GenerationRequest:
    """One generation call.

    Defaults are greedy sampling (temperature 0) with a fixed seed of 42.
    ``stop_on`` is a marker string watched for client-side; it is never
    delivered in the emitted tokens.
    """

    prompt: str
    max_new_tokens: int
    temperature: float = DEFAULT_TEMPERATURE
    seed: int = DEFAULT_SEED
    stop_on: str | None = None

    def __post_init__(self) -> None:
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class TokenEvent:
    """One emitted token. ``cause`` is set on the final event of a stream."""

    text: str
    ordinal: int
    cause: str | None = None


class _StopScanner:
    """Incremental stop-marker detection over a token stream.

    Tokens are scanned in the text formed by joining them with ``joiner``
    (backends may split markers across token events, and an occurrence may
    begin inside a joiner). The scanner releases a token only once no
    future occurrence of the marker can overlap it; when the marker
    completes, a straddling token is truncated to its text before the
    marker, so the marker never reaches the consumer.
    """

    def __init__(self, marker: str, joiner: str):
        if not marker:
            raise ValueError("stop marker must be nonempty")
        self.marker = marker
        self.joiner = joiner
        self.found = False
        self._held: list[tuple[str, int]] = []  # (token, global start offset)
        self._text_len = 0  # length of the joined text seen so far
        self._tail = ""  # joined text from _tail_from onward
        self._tail_from = 0

    def push(self, token: str) -> list[str]:
        if self.found:
            return []
        if self._text_len == 0:
            addition, start = token, 0
        else:
            addition, start = self.joiner + token, self._text_len + len(self.joiner)
        if self._tail_from <= self._text_len:
            self._tail += addition
        else:
            # the tail watermark sits inside the committed joiner
            self._tail = addition[self._tail_from - self._text_len :]
        self._held.append((token, start))
        self._text_len = start + len(token)

        idx = self._tail.find(self.marker)
        if idx != -1:
            self.found = True
            out = self._cut_tokens(self._tail_from + idx)
            self._held = []
            self._tail = ""
            return out
        return self._release(self._earliest_future_start())

    def finish(self) -> list[str]:
        """Flush anything withheld once the backend stops on its own."""
        out = [tok for tok, _ in self._held]
        self._held = []
        return out

    def _earliest_future_start(self) -> int:
        # a future occurrence must end beyond the current text; its known
        # prefix (remaining text plus the joiner committed before any next
        # token) must match the start of the marker
        known = self._tail + self.joiner
        lo = max(0, self._text_len - len(self.marker) + 1 - self._tail_from)
        for p in range(lo, len(known) + 1):
            if self.marker.startswith(known[p:]):
                return self._tail_from + p
        return self._tail_from + len(known)

    def _cut_tokens(self, marker_start: int) -> list[str]:
        out = []
        for tok, start in self._held:
            end = start + len(tok)
            if end <= marker_start:
                out.append(tok)
            elif start < marker_start:
                out.append(tok[: marker_start - start])
            else:
                break
        return out

    def _release(self, safe_until: int) -> list[str]:
        released = []
        kept: list[tuple[str, int]] = []
        for tok, start in self._held:
            if start + len(tok) <= safe_until and not kept:
                released.append(tok)
            else:
                kept.append((tok, start))
        self._held = kept
        if safe_until > self._tail_from:
            self._tail = self._tail[safe_until - self._tail_from :]
            self._tail_from = safe_until
        return released


class TokenStream:
    """Single-consumer iterator of ``TokenEvent``.

    ``cause`` is ``None`` while streaming and one of ``CAUSE_*`` once the
    stream is exhausted; the final yielded event carries it too. Streams no
    more than ``req.max_new_tokens`` events.
    """

    def __init__(self, backend, req: GenerationRequest):
        self._inner = self._events(backend, req)
        self._buffered: TokenEvent | None = None
        self._done = False
        self.cause: str | None = None

    def __iter__(self) -> "TokenStream":
        return self

    def __next__(self) -> TokenEvent:
        if self._done:
            raise StopIteration
        if self._buffered is None:
            self._buffered = next(self._inner)  # may raise StopIteration
        event = self._buffered
        try:
            self._buffered = next(self._inner)
        except StopIteration:
            self._buffered = None
            self._done = True
            event = replace(event, cause=self.cause)
        return event

    def _events(self, backend, req: GenerationRequest) -> Iterator[TokenEvent]:
        joiner = getattr(backend, "token_joiner", "")
        scanner = _StopScanner(req.stop_on, joiner) if req.stop_on else None
        emitted = 0
        raw = backend.raw_stream(req)
        try:
            for raw_token in raw:
                ready = scanner.push(raw_token) if scanner else [raw_token]
                for text in ready:
                    yield TokenEvent(text, emitted)
                    emitted += 1
                    if emitted >= req.max_new_tokens:
                        self.cause = CAUSE_CAP
                        return
                if scanner is not None and scanner.found:
                    self.cause = CAUSE_MARKER
                    return
            if scanner is not None:
                for text in scanner.finish():
                    yield TokenEvent(text, emitted)
                    emitted += 1
                    if emitted >= req.max_new_tokens:
                        self.cause = CAUSE_CAP
                        return
            self.cause = CAUSE_BACKEND_STOP
        finally:
            close = getattr(raw, "close", None)
            if close is not None:
                close()


def stream_generate(backend, req: GenerationRequest) -> TokenStream:
    """Stream tokens from ``backend`` until it stops, ``req.stop_on`` is
    emitted, or ``req.max_new_tokens`` events have been yielded."""
    return TokenStream(backend, req)


def collect(stream: TokenStream) -> tuple[list[str], str]:
    """Drain a stream; returns (token texts, terminating cause)."""
    texts = [event.text for event in stream]
    assert stream.cause is not None
    return texts, stream.cause


@dataclass(frozen=True)
class ScriptEntry:
    """One scripted reaction.

    ``trigger`` is a suffix pattern on the current prompt/context; the empty
    string matches any context. ``emission`` is whitespace-tokenized. An
    optional ``terminal_marker`` is emitted as a final token after the
    emission (a watched ``stop_on`` marker turns it into a ``marker`` stop;
    otherwise it is ordinary text).
    """

    trigger: str
    emission: str
    terminal_marker: str | None = None


@dataclass(frozen=True)
class ScriptedModel:
    """Deterministic scripted backend used by tests and offline runs.

    The first entry whose trigger matches the context wins; replaying the
    same context yields the identical emission. Immutable after
    construction and safe for concurrent use.
    """

    entries: tuple[ScriptEntry, ...]

    token_joiner = " "

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("script must contain at least one entry")

    def match(self, context: str) -> ScriptEntry | None:
        for entry in self.entries:
            if context.endswith(entry.trigger):
                return entry
        return None

    def raw_stream(self, req: GenerationRequest) -> Iterator[str]:
        entry = self.match(req.prompt)
        if entry is None:
            return
        yield from entry.emission.split()
        if entry.terminal_marker is not None:
            yield entry.terminal_marker

    @classmethod
    def from_dict(cls, data: dict) -> "ScriptedModel":
        entries = tuple(
            ScriptEntry(
                trigger=item.get("trigger", ""),
                emission=item.get("emission", ""),
                terminal_marker=item.get("terminal_marker"),
            )
            for item in data["entries"]
        )
        return cls(entries)

    @classmethod
    def from_file(cls, path: str) -> "ScriptedModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class WireBackend:
    """Chat-completions backend speaking server-sent events.

    POSTs to ``base_url + /v1/chat/completions`` with body fields ``model``,
    ``messages``, ``temperature``, ``seed``, ``max_tokens`` and
    ``stream: true``; reads one ``data: <json>`` line per chunk until
    ``data: [DONE]``. The bearer token comes from ``api_key`` or the
    ``M1_API_KEY`` environment variable. Handles are shareable across
    workers; each stream is owned by one consumer.
    """

    base_url: str
    model: str
    api_key: str | None = None
    timeout: float = 120.0

    token_joiner = ""

    def raw_stream(self, req: GenerationRequest) -> Iterator[str]:
        url = self.base_url.rstrip("/") + CHAT_COMPLETIONS_PATH
        headers = {"Content-Type": "application/json"}
        key = self.api_key if self.api_key is not None else os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "seed": req.seed,
            "max_tokens": req.max_new_tokens,
            "stream": True,
        }
        try:
            resp = requests.post(url, json=body, headers=headers, stream=True, timeout=self.timeout)
        except requests.RequestException as exc:
            raise ConnectionFailure(str(exc)) from exc
        with resp:
            if resp.status_code != 200:
                raise BackendStatusError(resp.status_code, resp.text[:200])
            completed = False
            try:
                for line in resp.iter_lines(decode_unicode=True):
                    if not line or not line.startswith("data:"):
                        continue
                    payload = line[len("data:"):].strip()
                    if payload == "[DONE]":
                        completed = True
                        break
                    try:
                        chunk = json.loads(payload)
                    except json.JSONDecodeError as exc:
                        raise TruncatedStreamError(f"malformed stream chunk: {payload[:80]}") from exc
                    choices = chunk.get("choices") or []
                    if not choices:
                        continue
                    delta = choices[0].get("delta") or {}
                    text = delta.get("content")
                    if text:
                        yield text
                    if choices[0].get("finish_reason"):
                        completed = True
            except requests.RequestException as exc:
                raise ConnectionFailure(str(exc)) from exc
            if not completed:
                raise TruncatedStreamError("stream ended without completion sentinel")


T = TypeVar("T")


def with_retries(fn: Callable[[], T], retries: int = 2, backoff: float = 0.5) -> T:
    """Run ``fn`` with at most ``retries`` retries (exponential backoff) on
    retryable backend errors. Non-retryable errors propagate immediately."""
    attempt = 0
    while True:
        try:
            return fn()
        except BackendError as exc:
            if not exc.retryable or attempt >= retries:
                raise
            delay = backoff * (2 ** attempt)
            log.warning("retryable backend error (%s); retry %d in %.2fs", exc, attempt + 1, delay)
            if delay > 0:
                time.sleep(delay)
            attempt += 1


def probe_answer(
    backend,
    question_prompt: str,
    *,
    max_new_tokens: int = TRACE_TOKEN_LIMIT,
    temperature: float = DEFAULT_TEMPERATURE,
    seed: int = DEFAULT_SEED,
    retries: int = 2,
    backoff: float = 0.5,
) -> str:
    """Full non-streamed completion text for grading.

    Collects the whole stream before returning, so a failed call surfaces
    as an error with no partial text. Retried per ``with_retries``.
    """

    def attempt() -> str:
        req = GenerationRequest(
            prompt=question_prompt,
            max_new_tokens=max_new_tokens,
            temperature=temperature,
            seed=seed,
        )
        texts, _ = collect(stream_generate(backend, req))
        joiner = getattr(backend, "token_joiner", "")
        return joiner.join(texts)

    return with_retries(attempt, retries=retries, backoff=backoff)
