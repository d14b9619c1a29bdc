"""Token-level conditional score acquisition and caching.

A scorer assigns natural-log probabilities to each target token of a
segment pair, conditioned on the source. Scores come from one of three
backends: an external subprocess speaking a newline-delimited JSON
protocol, a precomputed score file, or a content-addressed cache
directory. Every score obtained from a live backend is cached before it
is returned, so reruns are inference-free.

Wire protocol (UTF-8, one JSON object per line on stdin/stdout):

    engine -> scorer   {"op": "hello", "protocol": 1}
    scorer -> engine   {"op": "hello", "protocol": 1, "scorer_id": "..."}
    engine -> scorer   {"id", "src_lang", "tgt_lang", "source", "target"}
    scorer -> engine   {"id", "token_logprobs": [...]}    (optional "tokens")
                    or {"id", "error": "..."}

Responses may arrive in any order; they are matched to requests by id.

Score file format: one record per line,
{"scorer_id","src_lang","tgt_lang","source","target","token_logprobs":[...]}.
A cache directory holds one such record per file, named by the lowercase
hex digest of the entry's cache key.
"""

from __future__ import annotations

import abc
import contextlib
import hashlib
import json
import math
import os
import shlex
import subprocess
import tempfile
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Iterator, Mapping

from .errors import (
    ConflictingDuplicate,
    InputError,
    InvalidScores,
    ParseError,
    ProtocolViolation,
    ScorerError,
    ScorerUnavailable,
)

if TYPE_CHECKING:  # pragma: no cover
    from .detection import SegmentPair

PROTOCOL_VERSION = 1
DEFAULT_BATCH_SIZE = 32


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TokenScores:
    """Per-token conditional log-probabilities of one target given one source.

    Each entry is the natural log of the softmax mass assigned to the
    realized token, so entries must be finite and <= 0. A scorer emitting
    -inf is rejected rather than clamped: a proper softmax cannot assign
    exactly zero probability, so -inf indicates a backend bug.
    """

    token_logprobs: tuple[float, ...]
    scorer_id: str
    src_lang: str
    tgt_lang: str
    tokens: tuple[str, ...] | None = None

    def __post_init__(self):
        logprobs = tuple(float(v) for v in self.token_logprobs)
        object.__setattr__(self, "token_logprobs", logprobs)
        if len(logprobs) < 1:
            raise InvalidScores("token_logprobs must contain at least one entry")
        for j, lp in enumerate(logprobs):
            if not math.isfinite(lp):
                raise InvalidScores(f"token {j}: non-finite log-probability {lp!r}")
            if lp > 0.0:
                raise InvalidScores(f"token {j}: positive log-probability {lp!r}")
        if self.tokens is not None:
            toks = tuple(self.tokens)
            object.__setattr__(self, "tokens", toks)
            if len(toks) != len(logprobs):
                raise InvalidScores(
                    f"tokens length {len(toks)} != token_logprobs length {len(logprobs)}"
                )

    def __len__(self) -> int:
        return len(self.token_logprobs)


@dataclass(frozen=True)
class ScoreRequest:
    """One scoring job: log P(target | source) in the given direction."""

    id: str
    src_lang: str
    tgt_lang: str
    source: str
    target: str

    def __post_init__(self):
        if not self.id:
            raise InputError("request id must be non-empty")
        if not self.source.strip():
            raise InputError(f"request {self.id}: source is empty")
        if not self.target.strip():
            raise InputError(f"request {self.id}: target is empty")


@dataclass(frozen=True)
class ScoreResponse:
    """Backend answer to one request: scores or an error, never both."""

    id: str
    token_logprobs: tuple[float, ...] | None = None
    tokens: tuple[str, ...] | None = None
    error: str | None = None

    def __post_init__(self):
        if (self.token_logprobs is None) == (self.error is None):
            raise ProtocolViolation(
                f"response {self.id!r} must carry exactly one of token_logprobs/error"
            )


def canonical_text(text: str) -> str:
    """NFC-normalize and trim trailing newlines; no other mutation.

    Forensic inputs (OCR output in particular) must not be silently
    altered, so there is no case folding and no whitespace collapse.
    """
    return unicodedata.normalize("NFC", text.rstrip("\r\n"))


@dataclass(frozen=True)
class CacheKey:
    """Content hash identifying one (scorer, direction, source, target) job.

    Direction is part of the identity: source and target occupy fixed
    positions in the hashed byte sequence.
    """

    digest: str

    @classmethod
    def of(cls, scorer_id: str, src_lang: str, tgt_lang: str, source: str, target: str) -> CacheKey:
        parts = (
            canonical_text(scorer_id),
            canonical_text(src_lang),
            canonical_text(tgt_lang),
            canonical_text(source),
            canonical_text(target),
        )
        payload = b"\x1f".join(p.encode("utf-8") for p in parts)
        return cls(hashlib.sha256(payload).hexdigest())

    @classmethod
    def for_request(cls, scorer_id: str, req: ScoreRequest) -> CacheKey:
        return cls.of(scorer_id, req.src_lang, req.tgt_lang, req.source, req.target)


# ---------------------------------------------------------------------------
# Record (de)serialization — score files and cache entries share one schema
# ---------------------------------------------------------------------------


def record_to_json(source: str, target: str, scores: TokenScores) -> str:
    """Serialize one score record; floats keep their shortest round-trip form."""
    rec: dict = {
        "scorer_id": scores.scorer_id,
        "src_lang": scores.src_lang,
        "tgt_lang": scores.tgt_lang,
        "source": source,
        "target": target,
        "token_logprobs": list(scores.token_logprobs),
    }
    if scores.tokens is not None:
        rec["tokens"] = list(scores.tokens)
    return json.dumps(rec, ensure_ascii=False)


def record_from_json(line: str) -> tuple[CacheKey, str, str, TokenScores]:
    """Parse one record line into (key, source, target, scores)."""
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    missing = [k for k in ("scorer_id", "src_lang", "tgt_lang", "source", "target", "token_logprobs") if k not in obj]
    if missing:
        raise ValueError(f"record missing fields: {', '.join(missing)}")
    tokens = obj.get("tokens")
    scores = TokenScores(
        token_logprobs=tuple(obj["token_logprobs"]),
        scorer_id=obj["scorer_id"],
        src_lang=obj["src_lang"],
        tgt_lang=obj["tgt_lang"],
        tokens=tuple(tokens) if tokens is not None else None,
    )
    key = CacheKey.of(obj["scorer_id"], obj["src_lang"], obj["tgt_lang"], obj["source"], obj["target"])
    return key, obj["source"], obj["target"], scores


# ---------------------------------------------------------------------------
# Score stores and caches
# ---------------------------------------------------------------------------


class ScoreStore(Mapping[str, TokenScores]):
    """Immutable digest -> TokenScores map loaded from a score file.

    Safe to share across threads after construction.
    """

    def __init__(self, entries: dict[str, TokenScores], scorer_ids: frozenset[str]):
        self._entries = dict(entries)
        self.scorer_ids = scorer_ids

    def __getitem__(self, digest: str) -> TokenScores:
        return self._entries[digest]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)


def load_score_file(path: str | Path) -> ScoreStore:
    """Load a newline-delimited score file into an in-memory store.

    Identical duplicate records are collapsed; records that share a key
    but disagree on the payload raise ConflictingDuplicate.
    """
    entries: dict[str, TokenScores] = {}
    scorer_ids: set[str] = set()
    path = Path(path)
    try:
        fh = path.open("r", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read score file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                key, _, _, scores = record_from_json(line)
            except (ValueError, KeyError, TypeError, InvalidScores) as exc:
                raise ParseError(str(exc), line=lineno) from exc
            previous = entries.get(key.digest)
            if previous is not None:
                if previous != scores:
                    raise ConflictingDuplicate(
                        f"line {lineno}: key {key.digest} already loaded with a different payload"
                    )
                continue
            entries[key.digest] = scores
            scorer_ids.add(scores.scorer_id)
    return ScoreStore(entries, frozenset(scorer_ids))


class ScoreCache(abc.ABC):
    """Write-through cache of score records, keyed by content digest."""

    @abc.abstractmethod
    def get(self, key: CacheKey) -> TokenScores | None: ...

    @abc.abstractmethod
    def put(self, key: CacheKey, source: str, target: str, scores: TokenScores) -> None: ...


class MemoryCache(ScoreCache):
    """Process-local cache; the default when no cache directory is set."""

    def __init__(self):
        self._entries: dict[str, TokenScores] = {}

    def get(self, key: CacheKey) -> TokenScores | None:
        return self._entries.get(key.digest)

    def put(self, key: CacheKey, source: str, target: str, scores: TokenScores) -> None:
        self._entries[key.digest] = scores

    def __len__(self) -> int:
        return len(self._entries)


class DirectoryCache(ScoreCache):
    """Content-addressed cache directory; one record per digest-named file.

    Writes go through a temp file followed by os.replace, so concurrent
    writers of the same entry cannot leave a torn file behind. Reads are
    memoized in memory for the lifetime of the object.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._memo: dict[str, TokenScores] = {}

    def get(self, key: CacheKey) -> TokenScores | None:
        hit = self._memo.get(key.digest)
        if hit is not None:
            return hit
        path = self.root / key.digest
        if not path.exists():
            return None
        try:
            _, _, _, scores = record_from_json(path.read_text(encoding="utf-8"))
        except (ValueError, KeyError, TypeError, InvalidScores) as exc:
            raise ParseError(f"corrupt cache entry {path.name}: {exc}") from exc
        self._memo[key.digest] = scores
        return scores

    def put(self, key: CacheKey, source: str, target: str, scores: TokenScores) -> None:
        payload = record_to_json(source, target, scores) + "\n"
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(payload)
            os.replace(tmp, self.root / key.digest)
        except BaseException:
            with contextlib.suppress(FileNotFoundError):
                os.unlink(tmp)
            raise
        self._memo[key.digest] = scores

    def digests(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if not p.name.startswith("."))

    def clear(self) -> int:
        n = 0
        for name in self.digests():
            (self.root / name).unlink()
            n += 1
        self._memo.clear()
        return n


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


class ScorerBackend(abc.ABC):
    """A source of token scores plus the cache that fronts it.

    Backends are not assumed reentrant: one handle is driven by one flow
    at a time. `calls` counts requests that actually reached the backend
    (cache hits never do).
    """

    batch_size: int = DEFAULT_BATCH_SIZE

    def __init__(self, cache: ScoreCache | None = None):
        self.cache: ScoreCache = cache if cache is not None else MemoryCache()
        self.calls = 0

    @property
    @abc.abstractmethod
    def scorer_id(self) -> str: ...

    @abc.abstractmethod
    def score_batch(self, requests: list[ScoreRequest]) -> dict[str, ScoreResponse]:
        """Score a batch; returns responses keyed by request id."""

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class StoreScorer(ScorerBackend):
    """Serves scores from a preloaded score file; never computes anything."""

    def __init__(self, store: ScoreStore, scorer_id: str | None = None, cache: ScoreCache | None = None):
        super().__init__(cache)
        self._store = store
        if scorer_id is None:
            if len(store.scorer_ids) != 1:
                raise InputError(
                    "score file contains scores for "
                    f"{sorted(store.scorer_ids) or 'no'} scorers; pass scorer_id explicitly"
                )
            scorer_id = next(iter(store.scorer_ids))
        self._scorer_id = scorer_id

    @property
    def scorer_id(self) -> str:
        return self._scorer_id

    def score_batch(self, requests: list[ScoreRequest]) -> dict[str, ScoreResponse]:
        out: dict[str, ScoreResponse] = {}
        for req in requests:
            self.calls += 1
            key = CacheKey.for_request(self._scorer_id, req)
            scores = self._store.get(key.digest)
            if scores is None:
                raise ScorerUnavailable(
                    f"no stored scores for direction {req.src_lang}->{req.tgt_lang} (request {req.id})"
                )
            out[req.id] = ScoreResponse(
                id=req.id, token_logprobs=scores.token_logprobs, tokens=scores.tokens
            )
        return out


class CacheOnlyScorer(ScorerBackend):
    """Backend used when only a cache directory is configured."""

    def __init__(self, scorer_id: str, cache: ScoreCache):
        super().__init__(cache)
        self._scorer_id = scorer_id

    @property
    def scorer_id(self) -> str:
        return self._scorer_id

    def score_batch(self, requests: list[ScoreRequest]) -> dict[str, ScoreResponse]:
        req = requests[0]
        raise ScorerUnavailable(
            f"cache miss for {req.src_lang}->{req.tgt_lang} (request {req.id}) and no live backend configured"
        )


class SubprocessScorer(ScorerBackend):
    """Drives an external scorer process over the NDJSON wire protocol.

    The process is launched lazily from the configured command line and
    greeted with a protocol handshake before any scoring traffic. Up to
    `batch_size` requests are kept in flight; responses are matched back
    to requests by id, so arrival order does not matter.
    """

    def __init__(self, command: str | list[str], batch_size: int = DEFAULT_BATCH_SIZE,
                 cache: ScoreCache | None = None):
        super().__init__(cache)
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.batch_size = max(1, int(batch_size))
        self._proc: subprocess.Popen | None = None
        self._scorer_id: str | None = None

    @property
    def scorer_id(self) -> str:
        self._ensure_started()
        assert self._scorer_id is not None
        return self._scorer_id

    def _ensure_started(self) -> None:
        if self._proc is not None:
            if self._proc.poll() is not None:
                raise ScorerUnavailable(
                    f"scorer process exited with code {self._proc.returncode}"
                )
            return
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise ScorerUnavailable(f"cannot start scorer {self.command!r}: {exc}") from exc
        self._send({"op": "hello", "protocol": PROTOCOL_VERSION})
        hello = self._read_json()
        if (
            not isinstance(hello, dict)
            or hello.get("op") != "hello"
            or hello.get("protocol") != PROTOCOL_VERSION
            or not isinstance(hello.get("scorer_id"), str)
            or not hello["scorer_id"]
        ):
            raise ProtocolViolation(f"bad handshake from scorer: {hello!r}")
        self._scorer_id = hello["scorer_id"]

    def _send(self, obj: dict) -> None:
        assert self._proc is not None and self._proc.stdin is not None
        try:
            self._proc.stdin.write(json.dumps(obj, ensure_ascii=False) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ScorerUnavailable(f"scorer process closed its stdin: {exc}") from exc

    def _read_json(self) -> dict:
        assert self._proc is not None and self._proc.stdout is not None
        line = self._proc.stdout.readline()
        if line == "":
            code = self._proc.poll()
            raise ScorerUnavailable(f"scorer stdout closed (exit code {code})")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolViolation(f"malformed response line: {line.rstrip()!r}") from exc

    def score_batch(self, requests: list[ScoreRequest]) -> dict[str, ScoreResponse]:
        self._ensure_started()
        out: dict[str, ScoreResponse] = {}
        pending: list[ScoreRequest] = list(requests)
        while pending:
            window, pending = pending[: self.batch_size], pending[self.batch_size:]
            awaiting = {r.id: r for r in window}
            if len(awaiting) != len(window):
                raise InputError("duplicate request ids within one batch")
            for req in window:
                self.calls += 1
                self._send(
                    {
                        "id": req.id,
                        "src_lang": req.src_lang,
                        "tgt_lang": req.tgt_lang,
                        "source": req.source,
                        "target": req.target,
                    }
                )
            while awaiting:
                obj = self._read_json()
                rid = obj.get("id") if isinstance(obj, dict) else None
                if rid not in awaiting:
                    raise ProtocolViolation(f"response for unknown request id {rid!r}")
                del awaiting[rid]
                if "error" in obj:
                    out[rid] = ScoreResponse(id=rid, error=str(obj["error"]))
                    continue
                logprobs = obj.get("token_logprobs")
                if not isinstance(logprobs, list):
                    raise ProtocolViolation(f"response {rid!r} lacks token_logprobs and error")
                tokens = obj.get("tokens")
                if tokens is not None and not isinstance(tokens, list):
                    raise ProtocolViolation(f"response {rid!r} has non-list tokens field")
                out[rid] = ScoreResponse(
                    id=rid,
                    token_logprobs=tuple(logprobs),
                    tokens=tuple(tokens) if tokens is not None else None,
                )
        return out

    def close(self) -> None:
        if self._proc is None:
            return
        proc, self._proc = self._proc, None
        try:
            if proc.stdin is not None:
                proc.stdin.close()
            proc.wait(timeout=10)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def score_pair(backend: ScorerBackend, req: ScoreRequest) -> TokenScores:
    """Obtain token scores for P(target | source), cache-first.

    The result is written to the backend's cache before it is returned;
    a repeated identical request is served from cache without touching
    the backend.
    """
    key = CacheKey.for_request(backend.scorer_id, req)
    cached = backend.cache.get(key)
    if cached is not None:
        return cached
    responses = backend.score_batch([req])
    return _accept_response(backend, req, key, responses)


def _accept_response(
    backend: ScorerBackend, req: ScoreRequest, key: CacheKey, responses: dict[str, ScoreResponse]
) -> TokenScores:
    resp = responses.get(req.id)
    if resp is None:
        raise ProtocolViolation(f"backend returned no response for request {req.id!r}")
    if resp.error is not None:
        raise ScorerError(f"request {req.id}: {resp.error}")
    assert resp.token_logprobs is not None
    try:
        scores = TokenScores(
            token_logprobs=resp.token_logprobs,
            scorer_id=backend.scorer_id,
            src_lang=req.src_lang,
            tgt_lang=req.tgt_lang,
            tokens=resp.tokens,
        )
    except InvalidScores as exc:
        raise InvalidScores(f"request {req.id}: {exc}") from exc
    backend.cache.put(key, req.source, req.target, scores)
    return scores


def score_bidirectional(backend: ScorerBackend, pair: "SegmentPair") -> tuple[TokenScores, TokenScores]:
    """Score both directions of one segment pair.

    Returns (xy, yx): xy scores text_y given text_x, yx scores text_x
    given text_y. A failure in either direction fails the whole call.
    """
    req_xy = ScoreRequest(
        id=f"{pair.pair_id}#xy",
        src_lang=pair.lang_x,
        tgt_lang=pair.lang_y,
        source=pair.text_x,
        target=pair.text_y,
    )
    req_yx = ScoreRequest(
        id=f"{pair.pair_id}#yx",
        src_lang=pair.lang_y,
        tgt_lang=pair.lang_x,
        source=pair.text_y,
        target=pair.text_x,
    )
    xy = score_pair(backend, req_xy)
    yx = score_pair(backend, req_yx)
    return xy, yx


def score_requests(backend: ScorerBackend, requests: Iterable[ScoreRequest]) -> dict[str, TokenScores]:
    """Score many requests, batching cache misses through the backend.

    Misses are grouped into windows of backend.batch_size so a subprocess
    backend can pipeline them. Results are keyed by request id.
    """
    requests = list(requests)
    out: dict[str, TokenScores] = {}
    misses: list[tuple[ScoreRequest, CacheKey]] = []
    seen: set[str] = set()
    scorer_id = backend.scorer_id
    for req in requests:
        if req.id in seen:
            raise InputError(f"duplicate request id {req.id!r}")
        seen.add(req.id)
        key = CacheKey.for_request(scorer_id, req)
        cached = backend.cache.get(key)
        if cached is not None:
            out[req.id] = cached
        else:
            misses.append((req, key))
    for start in range(0, len(misses), backend.batch_size):
        window = misses[start: start + backend.batch_size]
        responses = backend.score_batch([req for req, _ in window])
        for req, key in window:
            out[req.id] = _accept_response(backend, req, key, responses)
    return out
