"""End-to-end command-line behaviour, golden outputs, and exit codes."""

import json
import sys
from pathlib import Path

import pytest

from dirdetect.cli import ENV_CACHE_DIR, main
from dirdetect.corpus import pair_to_record
from dirdetect.detection import GoldDirection, SegmentPair, TranslationType

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"
CORPUS = str(FIXTURES / "fixture_corpus.ndjson")
SCORES = str(FIXTURES / "fixture_scores.ndjson")
FORENSIC_CORPUS = str(FIXTURES / "forensic_corpus.ndjson")
FAKE_SCORER = f"{sys.executable} {FIXTURES / 'fake_scorer.py'}"


@pytest.fixture(autouse=True)
def no_ambient_cache_dir(monkeypatch):
    monkeypatch.delenv(ENV_CACHE_DIR, raising=False)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def golden(name):
    return (GOLDEN / name).read_text(encoding="utf-8")


def write_corpus(path, pairs):
    path.write_text(
        "".join(json.dumps(pair_to_record(p), ensure_ascii=False) + "\n" for p in pairs),
        encoding="utf-8",
    )
    return str(path)


def make_pair(pid, doc, gold="x2y", lx="de", ly="en", tt="HT", i=0):
    return SegmentPair(
        pair_id=pid, doc_id=doc,
        text_x=f"Beispielsatz Nummer {i} im Dokument {doc}.",
        text_y=f"Example sentence number {i} in document {doc}.",
        lang_x=lx, lang_y=ly,
        gold_direction=GoldDirection.from_wire(gold),
        translation_type=TranslationType.from_wire(tt),
    )


class TestGoldenOutputs:
    def test_detect_stdout(self, capsys, tmp_path):
        out_path = tmp_path / "detect.ndjson"
        code, out, err = run(
            capsys, "detect", "--corpus", CORPUS, "--scores-file", SCORES,
            "--out", str(out_path),
        )
        assert (code, err) == (0, "")
        assert out == golden("golden_detect.txt")
        assert out_path.read_bytes() == (GOLDEN / "golden_detect.ndjson").read_bytes()

    @pytest.mark.parametrize("fmt, name", [
        ("markdown", "golden_evaluate.md"),
        ("csv", "golden_evaluate.csv"),
        ("json", "golden_evaluate.json"),
    ])
    def test_evaluate_formats(self, capsys, fmt, name):
        code, out, err = run(
            capsys, "evaluate", "--corpus", CORPUS, "--scores-file", SCORES,
            "--buckets", "20", "--format", fmt,
        )
        assert (code, err) == (0, "")
        assert out == golden(name)

    def test_evaluate_out_file_matches_stdout(self, capsys, tmp_path):
        out_path = tmp_path / "report.csv"
        code, _, _ = run(
            capsys, "evaluate", "--corpus", CORPUS, "--scores-file", SCORES,
            "--buckets", "20", "--format", "csv", "--out", str(out_path),
        )
        assert code == 0
        assert out_path.read_text(encoding="utf-8") == golden("golden_evaluate.csv")

    def test_forensic(self, capsys, tmp_path):
        out_path = tmp_path / "forensic.json"
        code, out, err = run(
            capsys, "forensic", "--corpus", FORENSIC_CORPUS, "--scores-file", SCORES,
            "--out", str(out_path),
        )
        assert (code, err) == (0, "")
        assert out == golden("golden_forensic.txt")
        assert out_path.read_bytes() == (GOLDEN / "golden_forensic.json").read_bytes()

    def test_stats(self, capsys):
        code, out, err = run(capsys, "stats", "--corpus", CORPUS)
        assert (code, err) == (0, "")
        assert out == golden("golden_stats.md")

    def test_detect_deterministic_across_runs(self, capsys):
        _, first, _ = run(capsys, "detect", "--corpus", CORPUS, "--scores-file", SCORES)
        _, second, _ = run(capsys, "detect", "--corpus", CORPUS, "--scores-file", SCORES)
        assert first == second


class TestExitCodes:
    def test_empty_corpus(self, capsys, tmp_path):
        empty = tmp_path / "empty.ndjson"
        empty.write_text("\n")
        code, _, err = run(capsys, "detect", "--corpus", str(empty), "--scores-file", SCORES)
        assert code == 2
        assert "no segments" in err

    def test_missing_corpus_file(self, capsys, tmp_path):
        code, _, err = run(
            capsys, "detect", "--corpus", str(tmp_path / "nope.ndjson"),
            "--scores-file", SCORES,
        )
        assert code == 2
        assert "cannot read corpus" in err

    def test_unknown_format(self, capsys):
        code, _, err = run(
            capsys, "evaluate", "--corpus", CORPUS, "--scores-file", SCORES,
            "--format", "xml",
        )
        assert code == 2
        assert "xml" in err

    def test_forensic_needs_single_document(self, capsys):
        code, _, err = run(capsys, "forensic", "--corpus", CORPUS, "--scores-file", SCORES)
        assert code == 2
        assert "exactly one document" in err

    def test_forensic_needs_two_segments(self, capsys, tmp_path):
        corpus = write_corpus(tmp_path / "one.ndjson", [make_pair("p1", "solo")])
        code, _, err = run(capsys, "forensic", "--corpus", corpus, "--scorer-cmd", FAKE_SCORER)
        assert code == 2
        assert ">= 2 segments" in err

    def test_evaluate_needs_gold_labels(self, capsys, tmp_path):
        corpus = write_corpus(
            tmp_path / "nolabels.ndjson",
            [make_pair(f"p{i}", "d0", gold="unknown", i=i) for i in range(3)],
        )
        code, _, err = run(capsys, "evaluate", "--corpus", corpus, "--scorer-cmd", FAKE_SCORER)
        assert code == 2
        assert "no gold direction labels" in err

    def test_evaluate_needs_both_directions(self, capsys, tmp_path):
        corpus = write_corpus(
            tmp_path / "oneway.ndjson",
            [make_pair(f"p{i}", "d0", gold="x2y", i=i) for i in range(3)],
        )
        code, _, err = run(capsys, "evaluate", "--corpus", corpus, "--scorer-cmd", FAKE_SCORER)
        assert code == 2
        assert "en->de" in err

    def test_dead_scorer(self, capsys):
        code, _, err = run(
            capsys, "detect", "--corpus", CORPUS,
            "--scorer-cmd", f"{sys.executable} -c 'import sys; sys.exit(1)'",
        )
        assert code == 3
        assert "error:" in err

    def test_scorer_error_response(self, capsys, tmp_path):
        corpus = write_corpus(
            tmp_path / "zz.ndjson",
            [make_pair(f"p{i}", "d0", lx="zz", ly="en", i=i) for i in range(2)],
        )
        code, _, err = run(capsys, "detect", "--corpus", corpus, "--scorer-cmd", FAKE_SCORER)
        assert code == 3
        assert "p0#xy" in err

    def test_conflicting_backends(self, capsys):
        code, _, err = run(
            capsys, "detect", "--corpus", CORPUS,
            "--scorer-cmd", FAKE_SCORER, "--scores-file", SCORES,
        )
        assert code == 2
        assert "exactly one" in err

    def test_no_backend(self, capsys):
        code, _, err = run(capsys, "detect", "--corpus", CORPUS)
        assert code == 2
        assert "no scorer configured" in err

    def test_cache_only_needs_scorer_id(self, capsys, tmp_path):
        code, _, err = run(
            capsys, "detect", "--corpus", CORPUS, "--cache-dir", str(tmp_path / "c"),
        )
        assert code == 2
        assert "--scorer-id" in err

    def test_corpus_and_aligned_inputs_conflict(self, capsys, tmp_path):
        src = tmp_path / "a.de"
        src.write_text("Hallo.\n")
        code, _, err = run(
            capsys, "detect", "--corpus", CORPUS, "--src", str(src),
            "--scores-file", SCORES,
        )
        assert code == 2
        assert "not both" in err

    def test_bad_langs_spec(self, capsys, tmp_path):
        src, tgt = tmp_path / "a.de", tmp_path / "a.en"
        src.write_text("Hallo.\n")
        tgt.write_text("Hello.\n")
        code, _, err = run(
            capsys, "detect", "--src", str(src), "--tgt", str(tgt),
            "--langs", "deen", "--scorer-cmd", FAKE_SCORER,
        )
        assert code == 2
        assert "de:en" in err

    def test_missing_gold_side_in_score_store(self, capsys, tmp_path):
        corpus = write_corpus(tmp_path / "extra.ndjson", [make_pair("p1", "d0")])
        code, _, err = run(capsys, "detect", "--corpus", corpus, "--scores-file", SCORES)
        assert code == 3
        assert "no stored scores" in err


class TestConfigAndEnv:
    def test_config_supplies_backend_and_format(self, capsys, tmp_path):
        config = tmp_path / "dirdetect.conf"
        config.write_text(
            f"# fixture-backed run\nscores-file = {SCORES}\nformat = csv\nbuckets = 20\n"
        )
        code, out, _ = run(
            capsys, "evaluate", "--corpus", CORPUS, "--config", str(config),
        )
        assert code == 0
        assert out == golden("golden_evaluate.csv")

    def test_flag_beats_config(self, capsys, tmp_path):
        config = tmp_path / "dirdetect.conf"
        config.write_text(f"scores-file = {SCORES}\nformat = csv\nbuckets = 20\n")
        code, out, _ = run(
            capsys, "evaluate", "--corpus", CORPUS, "--config", str(config),
            "--format", "json",
        )
        assert code == 0
        assert out == golden("golden_evaluate.json")

    def test_unknown_config_key(self, capsys, tmp_path):
        config = tmp_path / "bad.conf"
        config.write_text("charset = utf-8\n")
        code, _, err = run(capsys, "detect", "--corpus", CORPUS, "--config", str(config))
        assert code == 2
        assert "unknown key" in err

    def test_malformed_config_line(self, capsys, tmp_path):
        config = tmp_path / "bad.conf"
        config.write_text("format json\n")
        code, _, err = run(capsys, "detect", "--corpus", CORPUS, "--config", str(config))
        assert code == 2
        assert "expected key = value" in err

    def test_env_cache_dir_used_when_flag_absent(self, capsys, tmp_path, monkeypatch):
        cache_dir = tmp_path / "cache"
        monkeypatch.setenv(ENV_CACHE_DIR, str(cache_dir))
        code, out, _ = run(capsys, "cache", "import", "--scores-file", SCORES)
        assert code == 0
        assert "imported 40 records" in out
        code, out, _ = run(capsys, "cache", "ls")
        assert code == 0
        assert len(out.splitlines()) == 40

    def test_flag_beats_env_cache_dir(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv(ENV_CACHE_DIR, str(tmp_path / "unused"))
        used = tmp_path / "used"
        code, _, _ = run(
            capsys, "cache", "import", "--cache-dir", str(used), "--scores-file", SCORES,
        )
        assert code == 0
        assert used.is_dir()
        assert not (tmp_path / "unused").exists()


class TestCacheWorkflow:
    def test_import_ls_detect_clear(self, capsys, tmp_path):
        cache_dir = str(tmp_path / "cache")
        code, out, _ = run(
            capsys, "cache", "import", "--cache-dir", cache_dir, "--scores-file", SCORES,
        )
        assert code == 0 and "imported 40 records" in out

        code, out, _ = run(capsys, "cache", "ls", "--cache-dir", cache_dir)
        digests = out.splitlines()
        assert code == 0 and len(digests) == 40
        assert all(len(d) == 64 for d in digests)
        assert digests == sorted(digests)

        code, out, _ = run(
            capsys, "detect", "--corpus", CORPUS,
            "--cache-dir", cache_dir, "--scorer-id", "fixture-v1",
        )
        assert code == 0
        assert out == golden("golden_detect.txt")

        code, out, _ = run(capsys, "cache", "clear", "--cache-dir", cache_dir)
        assert code == 0 and "removed 40" in out
        code, out, _ = run(capsys, "cache", "ls", "--cache-dir", cache_dir)
        assert code == 0 and out == ""

    def test_detect_fills_cache_from_scores_file(self, capsys, tmp_path):
        cache_dir = str(tmp_path / "cache")
        code, _, _ = run(
            capsys, "detect", "--corpus", CORPUS, "--scores-file", SCORES,
            "--cache-dir", cache_dir,
        )
        assert code == 0
        _, out, _ = run(capsys, "cache", "ls", "--cache-dir", cache_dir)
        assert len(out.splitlines()) == 40

    def test_cache_import_requires_scores_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "cache", "import", "--cache-dir", str(tmp_path / "c"))
        assert code == 2
        assert "--scores-file" in err

    def test_cache_commands_require_cache_dir(self, capsys):
        code, _, err = run(capsys, "cache", "ls")
        assert code == 2
        assert "--cache-dir" in err


class TestLiveScorer:
    def test_aligned_input_via_subprocess(self, capsys, tmp_path):
        src, tgt = tmp_path / "a.de", tmp_path / "a.en"
        src.write_text("Der Hund schläft.\nDie Katze wacht.\nDas Haus steht.\n", encoding="utf-8")
        tgt.write_text("The dog sleeps.\nThe cat is awake.\nThe house stands.\n", encoding="utf-8")
        code, out, err = run(
            capsys, "detect", "--src", str(src), "--tgt", str(tgt), "--langs", "de:en",
            "--gold", "x2y", "--translation-type", "HT", "--scorer-cmd", FAKE_SCORER,
        )
        assert (code, err) == (0, "")
        lines = out.splitlines()
        assert len(lines) == 4  # 3 pair lines + 1 document line
        assert lines[0].startswith("pair=doc0#1 doc=doc0 ")
        assert lines[3].startswith("doc=doc0 segments=3 ")

    def test_subprocess_results_land_in_cache(self, capsys, tmp_path):
        cache_dir = str(tmp_path / "cache")
        code, first, _ = run(
            capsys, "detect", "--corpus", CORPUS,
            "--scorer-cmd", FAKE_SCORER, "--cache-dir", cache_dir,
        )
        assert code == 0
        _, listed, _ = run(capsys, "cache", "ls", "--cache-dir", cache_dir)
        assert len(listed.splitlines()) == 40
        # cache-only rerun reproduces the live run byte for byte
        code, second, _ = run(
            capsys, "detect", "--corpus", CORPUS,
            "--cache-dir", cache_dir, "--scorer-id", "fake/1",
        )
        assert code == 0
        assert second == first

    def test_forensic_monte_carlo_on_long_document(self, capsys, tmp_path):
        corpus = write_corpus(
            tmp_path / "long.ndjson",
            [make_pair(f"m{i}", "mc-doc", i=i) for i in range(21)],
        )
        code, out, _ = run(
            capsys, "forensic", "--corpus", corpus, "--scorer-cmd", FAKE_SCORER,
            "--permutations", "500", "--seed", "7",
        )
        assert code == 0
        assert "method=monte_carlo n=500 seed=7" in out

    def test_forensic_small_sample_correction_flag(self, capsys, tmp_path):
        corpus = write_corpus(
            tmp_path / "long.ndjson",
            [make_pair(f"m{i}", "mc-doc", i=i) for i in range(21)],
        )
        out_path = tmp_path / "report.json"
        code, _, _ = run(
            capsys, "forensic", "--corpus", corpus, "--scorer-cmd", FAKE_SCORER,
            "--permutations", "200", "--small-sample-correction", "--out", str(out_path),
        )
        assert code == 0
        report = json.loads(out_path.read_text())
        assert report["small_sample_correction"] is True
        assert report["p_value"] == min(1.0, 2 * (report["extreme_count"] + 1) / 201)


class TestFiltersAndVariants:
    def test_types_filter_restricts_report(self, capsys):
        code, out, _ = run(
            capsys, "evaluate", "--corpus", CORPUS, "--scores-file", SCORES,
            "--types", "HT",
        )
        assert code == 0
        assert "| HT |" in out and "| NMT |" not in out

    def test_min_doc_sents_filter(self, capsys):
        code, _, err = run(
            capsys, "detect", "--corpus", CORPUS, "--scores-file", SCORES,
            "--min-doc-sents", "6",
        )
        assert code == 2
        assert "no segments" in err

    def test_stats_doc_threshold(self, capsys):
        code, out, _ = run(capsys, "stats", "--corpus", CORPUS, "--doc-threshold", "5")
        assert code == 0
        assert "docs_ge_5" in out
        assert "| de-en | de->en | 10 | 2 | 2 | 5 | 5 |" in out

    def test_stats_json(self, capsys):
        code, out, _ = run(capsys, "stats", "--corpus", CORPUS, "--format", "json")
        assert code == 0
        obj = json.loads(out)
        assert obj["doc_threshold"] == 10
        assert obj["totals"]["documents"] == 4
        assert obj["totals"]["pairs_by_type"] == {"HT": 10, "NMT": 10}

    def test_stats_csv(self, capsys):
        code, out, _ = run(capsys, "stats", "--corpus", CORPUS, "--format", "csv")
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "pair,direction,source_sents,docs,docs_ge_10,HT,NMT"
        assert lines[-1] == "total,-,20,4,0,10,10"

    def test_prediction_share_section_for_unlabelled_originals(self, capsys, tmp_path):
        pairs = (
            [make_pair(f"f{i}", "fwd", gold="x2y", i=i) for i in range(2)]
            + [make_pair(f"r{i}", "rev", gold="y2x", i=i) for i in range(2)]
            + [make_pair(f"n{i}", "none", gold="none", i=i) for i in range(2)]
        )
        corpus = write_corpus(tmp_path / "shares.ndjson", pairs)
        code, out, _ = run(capsys, "evaluate", "--corpus", corpus, "--scorer-cmd", FAKE_SCORER)
        assert code == 0
        assert "prediction shares (no original side)" in out

    def test_evaluate_without_buckets_has_no_bucket_section(self, capsys):
        code, out, _ = run(
            capsys, "evaluate", "--corpus", CORPUS, "--scores-file", SCORES,
        )
        assert code == 0
        assert "accuracy by source length" not in out
