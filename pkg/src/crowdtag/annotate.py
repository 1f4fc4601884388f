"""LLM workers over homophily-tie prompts: building, querying, caching.

Each (node, configuration) pair is one "worker": a prompt built from the
texts of the tie members, sent to a chat-completions endpoint, parsed into a
ranked guess list. Responses are cached in an append-only JSONL file keyed by
a content hash of (model, prompt body), so a second run never re-queries, and
every request is charged against a hard dollar budget.

A synthetic oracle client stands in for the remote model in tests and
offline runs: it votes per tie member from ground truth under a noise rate
and emits the same JSON response shape the prompt requests.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .graph import (
    NUM_TIE_CONFIGS,
    ROLE_PRED,
    ROLE_PRED_OF_PRED,
    ROLE_PRED_OF_SUCC,
    ROLE_SELF,
    ROLE_SUCC,
    ROLE_SUCC_OF_PRED,
    ROLE_SUCC_OF_SUCC,
    DirectedTAG,
    HomophilyTie,
)

CACHE_SCHEMA_VERSION = 1

# Sentinel guess recorded when a response cannot be parsed after retries.
UNPARSEABLE = "UNPARSEABLE"


class BudgetExhaustedError(RuntimeError):
    """Projected spend exceeds the configured dollar limit."""


class TransportError(RuntimeError):
    """Request failed after all retries."""


class ResponseParseError(ValueError):
    """No well-formed guess array found in the response text."""


@dataclass(frozen=True)
class TruncationPolicy:
    """Caps that bound prompt size (and therefore token cost).

    Neighbors beyond ``max_neighbors_per_role`` are dropped deterministically,
    keeping the lowest node ids.
    """

    max_neighbors_per_role: int = 5
    neighbor_text_chars: int = 600
    center_text_chars: int = 1200


@dataclass(frozen=True)
class PromptSpec:
    center: int
    config_k: int
    body: str
    category_list: tuple[str, ...]
    guess_count: int
    prompt_hash: str


@dataclass
class WorkerAnnotation:
    """One worker's ranked (label, confidence) guesses for one node."""

    center: int
    config_k: int
    guesses: list[tuple[str, int]]
    raw_response: str
    tokens_in: int = 0
    tokens_out: int = 0
    from_cache: bool = False
    parse_failed: bool = False


@dataclass
class BudgetState:
    """Dollar accounting; refuses new requests once the limit is reached."""

    limit_usd: float
    price_per_1k_in: float = 0.0005
    price_per_1k_out: float = 0.0015
    spent_usd: float = 0.0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def check(self) -> None:
        with self._lock:
            if self.spent_usd >= self.limit_usd:
                raise BudgetExhaustedError(
                    f"budget exhausted: spent ${self.spent_usd:.4f} of ${self.limit_usd:.4f}"
                )

    def charge(self, tokens_in: int, tokens_out: int) -> None:
        cost = tokens_in / 1000.0 * self.price_per_1k_in + tokens_out / 1000.0 * self.price_per_1k_out
        with self._lock:
            self.spent_usd += cost


def estimate_tokens(text: str) -> int:
    """Rough token estimate when the server omits usage data."""
    return math.ceil(len(text) / 4)


# ---------------------------------------------------------------------------
# Prompt construction
# ---------------------------------------------------------------------------

_ROLE_PHRASES = {
    ROLE_PRED: "which is cited by the paper(s) that",
    ROLE_SUCC: "which cites the paper(s) that",
    ROLE_PRED_OF_PRED: "which is cited by paper(s) that are in turn cited by the paper(s) that",
    ROLE_SUCC_OF_SUCC: "which cites paper(s) that in turn cite the paper(s) that",
    ROLE_SUCC_OF_PRED: "which is co-cited, by its citing paper(s), together with the paper(s) that",
    ROLE_PRED_OF_SUCC: "which shares a cited paper with the paper(s) that",
}

# Rendering order of relation groups inside the prompt body.
_ROLE_ORDER = (
    ROLE_PRED,
    ROLE_SUCC,
    ROLE_PRED_OF_PRED,
    ROLE_SUCC_OF_SUCC,
    ROLE_SUCC_OF_PRED,
    ROLE_PRED_OF_SUCC,
)


def _clip(text: str, limit: int) -> str:
    text = " ".join(text.split())
    return text if len(text) <= limit else text[:limit].rstrip() + "..."


def prompt_hash(model: str, body: str) -> str:
    digest = hashlib.sha256()
    digest.update(model.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(body.encode("utf-8"))
    return digest.hexdigest()


def build_prompt(
    tie: HomophilyTie,
    texts: list[str],
    class_names: list[str],
    policy: TruncationPolicy = TruncationPolicy(),
    model: str = "",
) -> PromptSpec:
    """Render the annotation prompt for one tie.

    The center's text appears first; each relation group contributes one
    clause listing its member texts in ascending node-id order, truncated
    per the policy. The instruction asks for exactly ``len(class_names)``
    ranked guesses with confidences meant to sum to 100.
    """
    if not class_names:
        raise ValueError("class_names must not be empty")
    center_text = _clip(texts[tie.center], policy.center_text_chars)

    parts = [f"The content of the paper is {center_text}"]
    for role in _ROLE_ORDER:
        members = tie.members_with_role(role)
        if not members:
            continue
        members = members[: policy.max_neighbors_per_role]
        joined = " ; ".join(
            _clip(texts[m], policy.neighbor_text_chars) for m in members
        )
        parts.append(f", {_ROLE_PHRASES[role]} {joined}")
    categories = ", ".join(class_names)
    guess_count = len(class_names)
    parts.append(f". There are following categories: {categories}.\n")
    parts.append(
        f"Task: What's the category of this paper? Provide your {guess_count} best guesses"
        " and a confidence number that each is correct (0 to 100) for the following"
        " question from the most probable to the least. The sum of all confidence"
        ' should be 100. For example, [{"answer": <your_first_answer>,'
        ' "confidence": <confidence_for_first_answer>}, ...]'
    )
    body = "".join(parts)
    return PromptSpec(
        center=tie.center,
        config_k=tie.config_k,
        body=body,
        category_list=tuple(class_names),
        guess_count=guess_count,
        prompt_hash=prompt_hash(model, body),
    )


# ---------------------------------------------------------------------------
# Response parsing
# ---------------------------------------------------------------------------

def parse_response(raw: str, class_names: list[str]) -> list[tuple[str, int]]:
    """Extract the first well-formed guess array from arbitrary response text.

    Tolerates surrounding prose and code fences. Labels are matched to
    ``class_names`` case-insensitively (unmatched entries dropped);
    confidences are clamped to [0, 100]. Raises ResponseParseError when
    nothing usable is found.
    """
    canonical = {c.strip().lower(): c for c in class_names}
    decoder = json.JSONDecoder()
    start = 0
    while True:
        idx = raw.find("[", start)
        if idx < 0:
            break
        try:
            value, _ = decoder.raw_decode(raw, idx)
        except (json.JSONDecodeError, ValueError):
            start = idx + 1
            continue
        guesses = _extract_guesses(value, canonical)
        if guesses:
            return guesses
        start = idx + 1
    raise ResponseParseError("no parseable guess array in response")


def _extract_guesses(
    value: object, canonical: dict[str, str]
) -> list[tuple[str, int]]:
    if not isinstance(value, list):
        return []
    guesses: list[tuple[str, int]] = []
    for item in value:
        if not isinstance(item, dict) or "answer" not in item:
            continue
        answer = item.get("answer")
        if not isinstance(answer, str):
            continue
        label = canonical.get(answer.strip().lower())
        if label is None:
            continue
        conf_raw = item.get("confidence", 0)
        try:
            conf = int(round(float(conf_raw)))  # JSON allows 9e999 -> inf
        except (TypeError, ValueError, OverflowError):
            conf = 0
        guesses.append((label, max(0, min(100, conf))))
    return guesses


# ---------------------------------------------------------------------------
# Clients
# ---------------------------------------------------------------------------

@dataclass
class ClientResponse:
    text: str
    tokens_in: int = 0
    tokens_out: int = 0


class Client(Protocol):
    def complete(self, prompt: PromptSpec) -> ClientResponse: ...


class HttpChatClient:
    """Chat-completions client over HTTP POST.

    The API key is read from the environment variable named in the config,
    never passed on the command line. Transient failures retry with
    exponential backoff before raising TransportError.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        temperature: float = 0.0,
        timeout_s: float = 60.0,
        retries: int = 3,
        backoff_s: float = 1.0,
        session=None,
    ) -> None:
        import requests

        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.temperature = temperature
        self.timeout_s = timeout_s
        self.retries = retries
        self.backoff_s = backoff_s
        self.session = session or requests.Session()

    def complete(self, prompt: PromptSpec) -> ClientResponse:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt.body}],
            "temperature": self.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            try:
                resp = self.session.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout_s
                )
                resp.raise_for_status()
                data = resp.json()
                text = data["choices"][0]["message"]["content"] or ""
                usage = data.get("usage") or {}
                return ClientResponse(
                    text=text,
                    tokens_in=int(usage.get("prompt_tokens", estimate_tokens(prompt.body))),
                    tokens_out=int(usage.get("completion_tokens", estimate_tokens(text))),
                )
            except Exception as exc:  # noqa: BLE001 - every failure is retried
                last_error = exc
        raise TransportError(
            f"request failed after {self.retries + 1} attempts: {last_error}"
        ) from last_error


def synthetic_oracle(
    tie: HomophilyTie,
    graph: DirectedTAG,
    noise: float,
    seed: int,
) -> WorkerAnnotation:
    """Ground-truth-backed stand-in for a remote worker.

    Every tie member casts a vote: its true label with probability
    ``1 - noise``, otherwise a uniformly random label. The center's vote
    counts twice. The plurality vote wins (ties to the lower class index)
    and receives confidence ``(100 - 40 * noise) * vote_share`` (rounded),
    so a unanimous tie yields the full ``100 - 40 * noise`` and a contested
    one proportionally less; the remainder is split evenly over the other
    labels. Deterministic given (seed, node, config).
    """
    if not 0.0 <= noise <= 1.0:
        raise ValueError(f"noise must be in [0, 1], got {noise}")
    num_classes = graph.num_classes
    rng = np.random.default_rng([seed, tie.center, tie.config_k])

    votes = np.zeros(num_classes)
    for member, role in zip(tie.members, tie.roles):
        truth = graph.labels[member]
        if truth is None:
            continue
        if rng.random() < noise:
            vote = int(rng.integers(num_classes))
        else:
            vote = truth
        votes[vote] += 2.0 if role == ROLE_SELF else 1.0
    winner = int(votes.argmax())
    share = votes[winner] / votes.sum() if votes.sum() > 0 else 1.0

    top_conf = int(round((100 - 40 * noise) * share))
    rest = (100 - top_conf) / (num_classes - 1) if num_classes > 1 else 0
    guesses = [(graph.class_names[winner], top_conf)]
    for c in range(num_classes):
        if c != winner:
            guesses.append((graph.class_names[c], int(round(rest))))
    raw = json.dumps(
        [{"answer": label, "confidence": conf} for label, conf in guesses]
    )
    return WorkerAnnotation(
        center=tie.center,
        config_k=tie.config_k,
        guesses=guesses,
        raw_response=raw,
        tokens_in=0,
        tokens_out=0,
    )


class SyntheticOracleClient:
    """Client facade over the synthetic oracle; zero-cost responses."""

    def __init__(self, graph: DirectedTAG, noise: float, seed: int) -> None:
        self.graph = graph
        self.noise = noise
        self.seed = seed

    def complete(self, prompt: PromptSpec) -> ClientResponse:
        tie = self.graph.homophily_tie(prompt.center, prompt.config_k)
        ann = synthetic_oracle(tie, self.graph, self.noise, self.seed)
        return ClientResponse(text=ann.raw_response, tokens_in=0, tokens_out=0)


# ---------------------------------------------------------------------------
# Cache
# ---------------------------------------------------------------------------

class ResponseCache:
    """Append-only JSONL response store with in-memory hash index.

    Each record: {hash, model, prompt, raw_response, tokens_in, tokens_out,
    timestamp}. The file doubles as the replay fixture format for tests.
    Records lacking a ``hash`` key (e.g. the metadata header) are ignored on
    load.
    """

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._records: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                if "hash" in record:
                    self._records[record["hash"]] = record

    def __len__(self) -> int:
        return len(self._records)

    def get(self, key: str) -> dict | None:
        with self._lock:
            return self._records.get(key)

    def put(self, record: dict) -> None:
        with self._lock:
            self._records[record["hash"]] = record
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record) + "\n")

    @staticmethod
    def write_header(path: str | Path, config_hash: str) -> None:
        header = {"meta": {"schema_version": CACHE_SCHEMA_VERSION, "config_hash": config_hash}}
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header) + "\n")


class RateLimiter:
    """Token bucket; ``acquire`` blocks until a slot is available."""

    def __init__(self, rate_per_s: float | None, burst: int = 1) -> None:
        self.rate = rate_per_s
        self.capacity = max(1, burst)
        self.tokens = float(self.capacity)
        self.updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self.rate is None:
            return
        while True:
            with self._lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            time.sleep(wait)


# ---------------------------------------------------------------------------
# Annotation driver
# ---------------------------------------------------------------------------

def annotate(
    prompt: PromptSpec,
    client: Client,
    cache: ResponseCache,
    budget: BudgetState,
    model: str = "",
    limiter: RateLimiter | None = None,
) -> WorkerAnnotation:
    """Annotate one prompt: cache first, then one budgeted request.

    Unparseable responses produce a flagged sentinel annotation rather than
    an exception; budget exhaustion and transport failure raise their own
    error types.
    """
    cached = cache.get(prompt.prompt_hash)
    if cached is not None:
        return _annotation_from_record(prompt, cached, from_cache=True)

    budget.check()
    if limiter is not None:
        limiter.acquire()
    response = client.complete(prompt)
    budget.charge(response.tokens_in, response.tokens_out)
    record = {
        "hash": prompt.prompt_hash,
        "model": model,
        "prompt": prompt.body,
        "raw_response": response.text,
        "tokens_in": response.tokens_in,
        "tokens_out": response.tokens_out,
        "timestamp": time.time(),
    }
    cache.put(record)
    return _annotation_from_record(prompt, record, from_cache=False)


def _annotation_from_record(
    prompt: PromptSpec, record: dict, from_cache: bool
) -> WorkerAnnotation:
    raw = record["raw_response"]
    try:
        guesses = parse_response(raw, list(prompt.category_list))
        failed = False
    except ResponseParseError:
        guesses = [(UNPARSEABLE, 0)]
        failed = True
    return WorkerAnnotation(
        center=prompt.center,
        config_k=prompt.config_k,
        guesses=guesses,
        raw_response=raw,
        tokens_in=int(record.get("tokens_in", 0)),
        tokens_out=int(record.get("tokens_out", 0)),
        from_cache=from_cache,
        parse_failed=failed,
    )


def annotate_graph(
    graph: DirectedTAG,
    nodes: list[int],
    client: Client,
    cache: ResponseCache,
    budget: BudgetState,
    model: str = "",
    policy: TruncationPolicy = TruncationPolicy(),
    max_inflight: int = 1,
    requests_per_second: float | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> dict[int, list[WorkerAnnotation]]:
    """Run all eight workers for every requested node.

    Requests may run concurrently up to ``max_inflight``; cache and budget
    updates are lock-protected. Results are keyed by node id with workers
    ordered by configuration index.
    """
    prompts = [
        build_prompt(graph.homophily_tie(v, k), graph.texts, graph.class_names, policy, model)
        for v in nodes
        for k in range(NUM_TIE_CONFIGS)
    ]
    limiter = RateLimiter(requests_per_second, burst=max_inflight)
    results: dict[tuple[int, int], WorkerAnnotation] = {}

    if max_inflight <= 1:
        for i, spec in enumerate(prompts):
            results[(spec.center, spec.config_k)] = annotate(
                spec, client, cache, budget, model, limiter
            )
            if progress is not None:
                progress(i + 1, len(prompts))
    else:
        from concurrent.futures import ThreadPoolExecutor

        def work(spec: PromptSpec) -> tuple[tuple[int, int], WorkerAnnotation]:
            return (spec.center, spec.config_k), annotate(
                spec, client, cache, budget, model, limiter
            )

        with ThreadPoolExecutor(max_workers=max_inflight) as pool:
            for i, (key, ann) in enumerate(pool.map(work, prompts)):
                results[key] = ann
                if progress is not None:
                    progress(i + 1, len(prompts))

    return {
        v: [results[(v, k)] for k in range(NUM_TIE_CONFIGS)] for v in nodes
    }
