"""Batch-ranking backends: a remote chat-model ranker and a synthetic oracle.

Both implement the same capability: given a keyed batch of texts and a
query, return the keys ordered from most to least relevant. The engine
keys batches by document id; the remote ranker swaps those for short
random tokens before prompting so the model never sees ids.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import string
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Mapping, Protocol, Sequence

import httpx

from .errors import (
    BudgetExceededError,
    RankerError,
    RemoteRankerError,
    UnrepairableOutputError,
)

KEY_ALPHABET = string.ascii_lowercase + string.digits
DEFAULT_KEY_LENGTH = 8

RANKING_LINE_PREFIX = "RANKING:"

_RETRYABLE_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class BatchRequest:
    """One batch of keyed texts to order against a query."""

    entries: Mapping[str, str]
    query: str
    attempt: int = 0


@dataclass
class TokenUsage:
    requests: int = 0
    input_tokens: int = 0
    output_tokens: int = 0

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.requests + other.requests,
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
        )


@dataclass
class BatchOrdering:
    """Ordered keys (most relevant first) plus optional model reasoning."""

    ordered_keys: list[str]
    reasoning: str | None = None
    usage: TokenUsage = field(default_factory=TokenUsage)


class Ranker(Protocol):
    def rank_batch(self, request: BatchRequest) -> BatchOrdering: ...


class UsageLedger:
    """Thread-safe accumulator of request and token counts."""

    def __init__(self):
        self._lock = threading.Lock()
        self._total = TokenUsage()

    def add(self, usage: TokenUsage) -> None:
        with self._lock:
            self._total = self._total + usage

    def snapshot(self) -> TokenUsage:
        with self._lock:
            return replace(self._total)


def make_batch_keys(count: int, rng: random.Random,
                    length: int = DEFAULT_KEY_LENGTH) -> list[str]:
    """Mint ``count`` distinct random alphanumeric keys."""
    keys: list[str] = []
    seen: set[str] = set()
    while len(keys) < count:
        key = "".join(rng.choice(KEY_ALPHABET) for _ in range(length))
        if key not in seen:
            seen.add(key)
            keys.append(key)
    return keys


def build_prompt(request: BatchRequest, *, include_reasoning: bool = False) -> list[dict[str, str]]:
    """Build the chat messages for one batch.

    The batch is rendered as a JSON dictionary so arbitrary text cannot be
    confused with the keys, and the model is told to answer with a single
    machine-parsable line of ordered keys. Identical requests produce
    byte-identical payloads.
    """
    entries_json = json.dumps(dict(request.entries), ensure_ascii=False, indent=2)
    if include_reasoning:
        answer_rule = (
            "First give one short paragraph explaining your ordering. "
            f"Then answer on a final line starting with '{RANKING_LINE_PREFIX}' followed by "
            "every key exactly once, comma-separated, most relevant first."
        )
    else:
        answer_rule = (
            "Answer with a single line containing every key exactly once, "
            "comma-separated, most relevant first. Output nothing else."
        )
    system = (
        "You rank items. You are given a query and a JSON dictionary mapping "
        "short keys to item texts. Order the keys so the item most relevant "
        "to the query comes first."
    )
    user = f"Query: {request.query}\n\nItems:\n{entries_json}\n\n{answer_rule}"
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": user},
    ]


def parse_and_repair(raw: str, expected_keys: Sequence[str]) -> list[str]:
    """Recover a full key ordering from arbitrary model output.

    Keys are collected in order of first mention (longest match wins at a
    given position), duplicates and unknown tokens are dropped, and any
    missing keys are appended in their original presentation order. Raises
    UnrepairableOutputError when the text mentions no expected key at all.
    """
    if not expected_keys:
        raise ValueError("expected_keys must be non-empty")
    pattern = "|".join(re.escape(k) for k in sorted(expected_keys, key=len, reverse=True))
    ordered: list[str] = []
    seen: set[str] = set()
    for match in re.finditer(pattern, raw):
        key = match.group(0)
        if key not in seen:
            seen.add(key)
            ordered.append(key)
    if not ordered:
        raise UnrepairableOutputError("no expected keys found in ranker output", raw=raw)
    for key in expected_keys:
        if key not in seen:
            seen.add(key)
            ordered.append(key)
    return ordered


def split_reasoning(raw: str) -> tuple[str, str | None]:
    """Split model output into (ranking text, reasoning text).

    Looks for the last line bearing the ranking prefix; everything before
    it is reasoning. Without the prefix the whole text is the ranking.
    """
    lines = raw.splitlines()
    for i in range(len(lines) - 1, -1, -1):
        stripped = lines[i].strip()
        if stripped.upper().startswith(RANKING_LINE_PREFIX):
            reasoning = "\n".join(lines[:i]).strip() or None
            return stripped[len(RANKING_LINE_PREFIX):], reasoning
    return raw, None


@dataclass(frozen=True)
class RemoteModelConfig:
    """Connection settings for an OpenAI-compatible chat-completions API."""

    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-5-nano"
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float | None = None
    reasoning_effort: str | None = "minimal"
    timeout: float = 120.0
    retry_limit: int = 3
    backoff_base: float = 0.5
    backoff_cap: float = 8.0
    requests_per_second: float | None = None


class _TokenBucket:
    """Blocking token bucket limiting outbound request rate."""

    def __init__(self, rate: float, capacity: float | None = None):
        self._rate = rate
        self._capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self._capacity
        self._stamp = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self._capacity, self._tokens + (now - self._stamp) * self._rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            time.sleep(wait)


class ChatCompletionsClient:
    """Minimal OpenAI-compatible chat client with retries and usage accounting.

    The API key is read from the configured environment variable at
    construction time, so authentication problems surface before any
    ranking spend. Safe to share across threads.
    """

    def __init__(self, config: RemoteModelConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        api_key = os.environ.get(config.api_key_env, "")
        if not api_key:
            raise RemoteRankerError(
                f"API key environment variable {config.api_key_env!r} is not set"
            )
        self._http = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            headers={"Authorization": f"Bearer {api_key}"},
            timeout=config.timeout,
            transport=transport,
        )
        self._ledger = UsageLedger()
        self._bucket = (
            _TokenBucket(config.requests_per_second)
            if config.requests_per_second
            else None
        )

    @property
    def usage(self) -> TokenUsage:
        return self._ledger.snapshot()

    def close(self) -> None:
        self._http.close()

    def complete(self, messages: list[dict[str, str]]) -> tuple[str, TokenUsage]:
        """POST one chat completion, retrying transient failures with backoff."""
        payload: dict = {"model": self.config.model, "messages": messages}
        if self.config.temperature is not None:
            payload["temperature"] = self.config.temperature
        if self.config.reasoning_effort is not None:
            payload["reasoning_effort"] = self.config.reasoning_effort
        last_error: Exception | None = None
        for attempt in range(self.config.retry_limit + 1):
            if attempt:
                time.sleep(min(self.config.backoff_cap,
                               self.config.backoff_base * (2 ** (attempt - 1))))
            if self._bucket is not None:
                self._bucket.acquire()
            try:
                response = self._http.post("/chat/completions", json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code in (401, 403):
                raise RemoteRankerError(
                    f"authentication rejected by {self.config.base_url} "
                    f"(HTTP {response.status_code})",
                    status_code=response.status_code,
                    body=response.text,
                )
            if response.status_code in _RETRYABLE_STATUS:
                last_error = RemoteRankerError(
                    f"HTTP {response.status_code} from model endpoint",
                    status_code=response.status_code,
                    body=response.text,
                )
                continue
            if response.status_code != 200:
                raise RemoteRankerError(
                    f"HTTP {response.status_code} from model endpoint",
                    status_code=response.status_code,
                    body=response.text,
                )
            try:
                body = response.json()
                text = body["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                last_error = RemoteRankerError(
                    f"malformed completion response: {exc}", body=response.text
                )
                continue
            raw_usage = body.get("usage") or {}
            usage = TokenUsage(
                requests=1,
                input_tokens=int(raw_usage.get("prompt_tokens", 0) or 0),
                output_tokens=int(raw_usage.get("completion_tokens", 0) or 0),
            )
            self._ledger.add(usage)
            return text or "", usage
        raise RemoteRankerError(
            f"model call failed after {self.config.retry_limit + 1} attempts: {last_error}",
            status_code=getattr(last_error, "status_code", None),
            body=getattr(last_error, "body", ""),
        )


class LLMRanker:
    """Ranks batches through a chat model.

    Document ids never reach the model: each batch is re-keyed with fresh
    short random tokens (derived from the batch content, so repeated
    requests build identical prompts), the ordered tokens are parsed and
    repaired from the reply, then translated back to the caller's keys.

    With ``capture_reasoning`` the model explains each batch ordering; the
    explanation rides on the returned ordering and the most recent ones are
    kept in ``recent_reasoning`` so a practitioner can inspect how the
    query is being interpreted and tune it.
    """

    REASONING_LOG_SIZE = 20

    def __init__(self, client: ChatCompletionsClient, *,
                 capture_reasoning: bool = False,
                 key_length: int = DEFAULT_KEY_LENGTH,
                 retry_limit: int | None = None):
        self._client = client
        self._capture_reasoning = capture_reasoning
        self._key_length = key_length
        self._retry_limit = (client.config.retry_limit if retry_limit is None
                             else retry_limit)
        self._reasoning_lock = threading.Lock()
        self._reasoning_log: deque[str] = deque(maxlen=self.REASONING_LOG_SIZE)

    @property
    def usage(self) -> TokenUsage:
        return self._client.usage

    @property
    def recent_reasoning(self) -> list[str]:
        with self._reasoning_lock:
            return list(self._reasoning_log)

    def rank_batch(self, request: BatchRequest) -> BatchOrdering:
        if not request.entries:
            raise RankerError("cannot rank an empty batch")
        for key, text in request.entries.items():
            if not text:
                raise RankerError(f"entry {key!r} has empty text")
        digest = hashlib.sha256(
            json.dumps([request.query, list(request.entries.items())],
                       ensure_ascii=False).encode("utf-8")
        ).hexdigest()
        tokens = make_batch_keys(len(request.entries), random.Random(digest),
                                 self._key_length)
        token_to_key = dict(zip(tokens, request.entries))
        prompted = BatchRequest(
            entries=dict(zip(tokens, request.entries.values())),
            query=request.query,
            attempt=request.attempt,
        )
        messages = build_prompt(prompted, include_reasoning=self._capture_reasoning)
        spent = TokenUsage()
        last: UnrepairableOutputError | None = None
        for attempt in range(self._retry_limit + 1):
            if attempt:
                time.sleep(min(self._client.config.backoff_cap,
                               self._client.config.backoff_base * (2 ** (attempt - 1))))
            text, usage = self._client.complete(messages)
            spent = spent + usage
            ranking_text, reasoning = (
                split_reasoning(text) if self._capture_reasoning else (text, None)
            )
            try:
                ordered_tokens = parse_and_repair(ranking_text, tokens)
            except UnrepairableOutputError as exc:
                last = exc
                continue
            if reasoning:
                with self._reasoning_lock:
                    self._reasoning_log.append(reasoning)
            return BatchOrdering(
                ordered_keys=[token_to_key[t] for t in ordered_tokens],
                reasoning=reasoning,
                usage=spent,
            )
        raise UnrepairableOutputError(
            f"unrepairable model output after {self._retry_limit + 1} attempts",
            raw=last.raw if last else "",
        )


@dataclass(frozen=True)
class NoiseModel:
    """Perturbation applied to the oracle's ideal ordering.

    adjacent_swap: one left-to-right pass, each neighbor pair swapped
    independently with probability ``parameter``.
    uniform_shuffle_prob: with probability ``parameter`` the whole batch
    ordering is replaced by a uniform shuffle.
    """

    kind: str = "none"
    parameter: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "adjacent_swap", "uniform_shuffle_prob"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.parameter <= 1.0:
            raise ValueError("noise parameter must lie in [0, 1]")


def oracle_rank(batch_keys: Sequence[str], ground_truth: Mapping[str, int],
                noise: NoiseModel) -> list[str]:
    """Order batch keys by a known total order, then apply the noise model.

    ``ground_truth`` maps id to its global relevance position (0 = best).
    The noise RNG is derived from the noise seed and the batch itself, so
    results are reproducible regardless of call scheduling.
    """
    for key in batch_keys:
        if key not in ground_truth:
            raise RankerError(f"id {key!r} missing from oracle ground truth")
    ordered = sorted(batch_keys, key=ground_truth.__getitem__)
    if noise.kind == "none" or noise.parameter == 0.0:
        return ordered
    material = f"{noise.rng_seed}|" + "\x1f".join(batch_keys)
    rng = random.Random(hashlib.sha256(material.encode("utf-8")).hexdigest())
    if noise.kind == "adjacent_swap":
        for i in range(len(ordered) - 1):
            if rng.random() < noise.parameter:
                ordered[i], ordered[i + 1] = ordered[i + 1], ordered[i]
        return ordered
    if rng.random() < noise.parameter:
        rng.shuffle(ordered)
    return ordered


class OracleRanker:
    """Synthetic ranker backed by a known total order, for tests and simulation."""

    def __init__(self, ground_truth: Sequence[str], noise: NoiseModel | None = None):
        if len(set(ground_truth)) != len(ground_truth):
            raise ValueError("ground truth order contains duplicate ids")
        self._position = {doc_id: i for i, doc_id in enumerate(ground_truth)}
        self._noise = noise or NoiseModel()
        self._ledger = UsageLedger()

    @property
    def usage(self) -> TokenUsage:
        return self._ledger.snapshot()

    def rank_batch(self, request: BatchRequest) -> BatchOrdering:
        if not request.entries:
            raise RankerError("cannot rank an empty batch")
        ordered = oracle_rank(list(request.entries), self._position, self._noise)
        usage = TokenUsage(requests=1)
        self._ledger.add(usage)
        return BatchOrdering(ordered_keys=ordered, usage=usage)


class BudgetedRanker:
    """Wraps a ranker and aborts before a request budget would be exceeded."""

    def __init__(self, inner: Ranker, max_requests: int):
        if max_requests < 1:
            raise ValueError("max_requests must be positive")
        self._inner = inner
        self._limit = max_requests
        self._count = 0
        self._lock = threading.Lock()

    @property
    def usage(self) -> TokenUsage:
        return getattr(self._inner, "usage", TokenUsage())

    def rank_batch(self, request: BatchRequest) -> BatchOrdering:
        with self._lock:
            if self._count >= self._limit:
                raise BudgetExceededError(self._limit)
            self._count += 1
        return self._inner.rank_batch(request)
