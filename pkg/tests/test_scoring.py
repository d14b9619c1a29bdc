"""Score plumbing: keys, records, caches, backends, wire protocol."""

import json
import sys
from pathlib import Path

import pytest

from dirdetect.detection import SegmentPair
from dirdetect.errors import (
    ConflictingDuplicate,
    InputError,
    InvalidScores,
    ParseError,
    ProtocolViolation,
    ScorerError,
    ScorerUnavailable,
)
from dirdetect.scoring import (
    CacheKey,
    DirectoryCache,
    MemoryCache,
    ScoreRequest,
    ScoreResponse,
    ScoreStore,
    StoreScorer,
    SubprocessScorer,
    TokenScores,
    canonical_text,
    load_score_file,
    record_from_json,
    record_to_json,
    score_bidirectional,
    score_pair,
    score_requests,
)

FIXTURES = Path(__file__).parent / "fixtures"
FAKE_CMD = [sys.executable, str(FIXTURES / "fake_scorer.py")]


def ts(logprobs, src="de", tgt="en", scorer="t", tokens=None):
    return TokenScores(
        token_logprobs=tuple(logprobs), scorer_id=scorer, src_lang=src, tgt_lang=tgt,
        tokens=tuple(tokens) if tokens else None,
    )


class TestCanonicalText:
    def test_nfc_normalization(self):
        composed = "café"
        decomposed = "café"
        assert canonical_text(decomposed) == composed

    def test_trailing_newlines_trimmed(self):
        assert canonical_text("hello\r\n") == "hello"
        assert canonical_text("hello\n\n") == "hello"

    def test_interior_untouched(self):
        # case and inner whitespace are meaningful and must survive
        assert canonical_text("  A  b\tc ") == "  A  b\tc "


class TestCacheKey:
    def test_canonically_equal_inputs_share_a_key(self):
        a = CacheKey.of("s", "de", "en", "café", "x\r\n")
        b = CacheKey.of("s", "de", "en", "café", "x")
        assert a == b and a.digest == b.digest

    def test_any_field_changes_the_key(self):
        base = ("s", "de", "en", "src", "tgt")
        digests = {CacheKey.of(*base).digest}
        for i in range(5):
            variant = list(base)
            variant[i] += "!"
            digests.add(CacheKey.of(*variant).digest)
        assert len(digests) == 6

    def test_digest_shape(self):
        d = CacheKey.of("s", "de", "en", "a", "b").digest
        assert len(d) == 64 and d == d.lower() and set(d) <= set("0123456789abcdef")


class TestTokenScores:
    def test_rejects_empty_and_out_of_range(self):
        with pytest.raises(InvalidScores):
            ts([])
        with pytest.raises(InvalidScores):
            ts([0.5])
        with pytest.raises(InvalidScores):
            ts([float("nan")])
        with pytest.raises(InvalidScores):
            ts([float("-inf")])

    def test_zero_logprob_allowed(self):
        assert len(ts([0.0, -1.0])) == 2

    def test_tokens_must_match_length(self):
        with pytest.raises(InvalidScores):
            ts([-1.0, -2.0], tokens=["a"])


class TestRequests:
    def test_blank_fields_rejected(self):
        with pytest.raises(InputError):
            ScoreRequest(id="", src_lang="de", tgt_lang="en", source="a", target="b")
        with pytest.raises(InputError):
            ScoreRequest(id="r", src_lang="de", tgt_lang="en", source=" ", target="b")

    def test_response_needs_exactly_one_payload(self):
        with pytest.raises(ProtocolViolation):
            ScoreResponse(id="r")
        with pytest.raises(ProtocolViolation):
            ScoreResponse(id="r", token_logprobs=(-1.0,), error="boom")


class TestRecords:
    def test_round_trip(self):
        scores = ts([-0.1, -2.5], tokens=["▁a", "b"])
        line = record_to_json("die Quelle", "the target", scores)
        key, source, target, back = record_from_json(line)
        assert back == scores
        assert (source, target) == ("die Quelle", "the target")
        assert key == CacheKey.of("t", "de", "en", "die Quelle", "the target")

    def test_floats_survive_shortest_form(self):
        line = record_to_json("s", "t", ts([-0.1]))
        assert json.loads(line)["token_logprobs"] == [-0.1]


class TestScoreFile(object):
    def write(self, tmp_path, lines):
        p = tmp_path / "scores.ndjson"
        p.write_text("".join(l + "\n" for l in lines), encoding="utf-8")
        return p

    def test_load_and_lookup(self, tmp_path):
        line = record_to_json("src", "tgt", ts([-1.0]))
        store = load_score_file(self.write(tmp_path, [line, "", line]))
        assert len(store) == 1
        assert store.scorer_ids == frozenset(["t"])

    def test_conflicting_duplicate(self, tmp_path):
        a = record_to_json("src", "tgt", ts([-1.0]))
        b = record_to_json("src", "tgt", ts([-2.0]))
        with pytest.raises(ConflictingDuplicate):
            load_score_file(self.write(tmp_path, [a, b]))

    def test_parse_error_names_line(self, tmp_path):
        good = record_to_json("src", "tgt", ts([-1.0]))
        with pytest.raises(ParseError, match="line 2"):
            load_score_file(self.write(tmp_path, [good, "{\"nope\": 1}"]))

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            load_score_file(tmp_path / "absent.ndjson")


class TestCaches:
    def test_memory_cache(self):
        cache = MemoryCache()
        key = CacheKey.of("t", "de", "en", "s", "g")
        assert cache.get(key) is None
        cache.put(key, "s", "g", ts([-1.0]))
        assert cache.get(key) == ts([-1.0])

    def test_directory_cache_persists(self, tmp_path):
        root = tmp_path / "cache"
        key = CacheKey.of("t", "de", "en", "s", "g")
        DirectoryCache(root).put(key, "s", "g", ts([-1.5, -0.5]))
        again = DirectoryCache(root)
        assert again.get(key) == ts([-1.5, -0.5])
        assert again.digests() == [key.digest]
        # no temp droppings
        assert [p.name for p in root.iterdir() if p.name.startswith(".")] == []

    def test_directory_cache_clear(self, tmp_path):
        cache = DirectoryCache(tmp_path / "c")
        key = CacheKey.of("t", "de", "en", "s", "g")
        cache.put(key, "s", "g", ts([-1.0]))
        assert cache.clear() == 1
        assert cache.digests() == []
        assert cache.get(key) is None

    def test_corrupt_entry_reported(self, tmp_path):
        cache = DirectoryCache(tmp_path / "c")
        key = CacheKey.of("t", "de", "en", "s", "g")
        (cache.root / key.digest).write_text("garbage", encoding="utf-8")
        with pytest.raises(ParseError, match="corrupt cache entry"):
            cache.get(key)


def store_with(*records):
    entries = {}
    ids = set()
    for source, target, scores in records:
        key = CacheKey.of(scores.scorer_id, scores.src_lang, scores.tgt_lang, source, target)
        entries[key.digest] = scores
        ids.add(scores.scorer_id)
    return ScoreStore(entries, frozenset(ids))


class TestStoreScorer:
    def test_serves_and_caches(self):
        backend = StoreScorer(store_with(("s", "g", ts([-1.0]))))
        req = ScoreRequest(id="r1", src_lang="de", tgt_lang="en", source="s", target="g")
        assert score_pair(backend, req) == ts([-1.0])
        assert backend.calls == 1
        assert score_pair(backend, req) == ts([-1.0])
        assert backend.calls == 1  # second hit served from cache

    def test_miss_names_direction_and_request(self):
        backend = StoreScorer(store_with(("s", "g", ts([-1.0]))))
        req = ScoreRequest(id="r9", src_lang="en", tgt_lang="de", source="g", target="s")
        with pytest.raises(ScorerUnavailable, match=r"en->de.*r9"):
            score_pair(backend, req)

    def test_scorer_id_inference_requires_single_id(self):
        multi = store_with(("a", "b", ts([-1.0], scorer="s1")), ("c", "d", ts([-1.0], scorer="s2")))
        with pytest.raises(InputError):
            StoreScorer(multi)
        assert StoreScorer(multi, scorer_id="s1").scorer_id == "s1"

    def test_score_bidirectional(self):
        pair = SegmentPair(
            pair_id="p", doc_id="d", text_x="quelle", text_y="target",
            lang_x="de", lang_y="en",
        )
        backend = StoreScorer(
            store_with(
                ("quelle", "target", ts([-1.0], src="de", tgt="en")),
                ("target", "quelle", ts([-2.0, -2.0], src="en", tgt="de")),
            )
        )
        xy, yx = score_bidirectional(backend, pair)
        assert (xy.src_lang, xy.tgt_lang) == ("de", "en")
        assert (yx.src_lang, yx.tgt_lang) == ("en", "de")
        assert yx.token_logprobs == (-2.0, -2.0)


class TestScoreRequests:
    def make_backend(self, n):
        records = [(f"s{i}", f"g{i}", ts([-float(i + 1)])) for i in range(n)]
        return StoreScorer(store_with(*records)), [
            ScoreRequest(id=f"r{i}", src_lang="de", tgt_lang="en", source=f"s{i}", target=f"g{i}")
            for i in range(n)
        ]

    def test_bulk_scoring_and_cache_reuse(self):
        backend, requests = self.make_backend(5)
        out = score_requests(backend, requests)
        assert set(out) == {f"r{i}" for i in range(5)}
        assert backend.calls == 5
        out2 = score_requests(backend, requests)
        assert out2 == out
        assert backend.calls == 5

    def test_duplicate_ids_rejected(self):
        backend, requests = self.make_backend(2)
        with pytest.raises(InputError, match="duplicate request id"):
            score_requests(backend, [requests[0], requests[0]])


def req(i, src="de", tgt="en"):
    return ScoreRequest(id=f"q{i}", src_lang=src, tgt_lang=tgt, source=f"src {i}", target=f"tgt {i}")


class TestSubprocessScorer:
    def test_handshake_and_scores(self):
        with SubprocessScorer(FAKE_CMD) as backend:
            assert backend.scorer_id == "fake/1"
            scores = score_pair(backend, req(1))
            assert all(lp <= 0 for lp in scores.token_logprobs)

    def test_deterministic_across_processes(self):
        with SubprocessScorer(FAKE_CMD) as a:
            first = score_pair(a, req(7))
        with SubprocessScorer(FAKE_CMD) as b:
            second = score_pair(b, req(7))
        assert first == second

    def test_batch_pipelining(self):
        with SubprocessScorer(FAKE_CMD, batch_size=3) as backend:
            out = score_requests(backend, [req(i) for i in range(8)])
            assert len(out) == 8
            assert backend.calls == 8

    def test_out_of_order_responses_matched_by_id(self, monkeypatch):
        monkeypatch.setenv("FAKE_SCORER_MODE", "reorder")
        with SubprocessScorer(FAKE_CMD, batch_size=4) as backend:
            out = score_requests(backend, [req(i) for i in range(4)])
        monkeypatch.delenv("FAKE_SCORER_MODE")
        with SubprocessScorer(FAKE_CMD) as plain:
            expected = score_requests(plain, [req(i) for i in range(4)])
        assert out == expected

    def test_error_response_raises_scorer_error(self):
        with SubprocessScorer(FAKE_CMD) as backend:
            with pytest.raises(ScorerError, match="unsupported language"):
                score_pair(backend, req(1, src="zz"))

    def test_bad_json_line(self, monkeypatch):
        monkeypatch.setenv("FAKE_SCORER_MODE", "bad_json")
        with SubprocessScorer(FAKE_CMD) as backend:
            with pytest.raises(ProtocolViolation):
                score_pair(backend, req(1))

    def test_unknown_response_id(self, monkeypatch):
        monkeypatch.setenv("FAKE_SCORER_MODE", "wrong_id")
        with SubprocessScorer(FAKE_CMD) as backend:
            with pytest.raises(ProtocolViolation, match="unknown request id"):
                score_pair(backend, req(1))

    def test_positive_logprob_rejected(self, monkeypatch):
        monkeypatch.setenv("FAKE_SCORER_MODE", "positive")
        with SubprocessScorer(FAKE_CMD) as backend:
            with pytest.raises(InvalidScores, match="q1"):
                score_pair(backend, req(1))

    def test_dead_process(self, monkeypatch):
        monkeypatch.setenv("FAKE_SCORER_MODE", "dead")
        with SubprocessScorer(FAKE_CMD) as backend:
            with pytest.raises(ScorerUnavailable):
                score_pair(backend, req(1))

    def test_unlaunchable_command(self):
        backend = SubprocessScorer(["/nonexistent/scorer"])
        with pytest.raises(ScorerUnavailable):
            score_pair(backend, req(1))

    def test_bad_handshake(self):
        cmd = [
            sys.executable,
            "-c",
            "import sys; print('{\"op\": \"hello\", \"protocol\": 99, \"scorer_id\": \"x\"}');"
            "sys.stdout.flush(); sys.stdin.read()",
        ]
        with SubprocessScorer(cmd) as backend:
            with pytest.raises(ProtocolViolation, match="handshake"):
                score_pair(backend, req(1))

    def test_results_cached_to_directory(self, tmp_path):
        cache = DirectoryCache(tmp_path / "c")
        with SubprocessScorer(FAKE_CMD, cache=cache) as backend:
            scores = score_pair(backend, req(3))
        fresh = DirectoryCache(tmp_path / "c")
        assert fresh.get(CacheKey.for_request("fake/1", req(3))) == scores
