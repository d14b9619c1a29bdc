"""Command-line front end: detect, evaluate, forensic, stats, cache.

Exit codes: 0 success, 2 input problem, 3 scorer problem. argparse's own
usage errors also exit 2, so "2 means your input, 3 means the scorer"
holds across the board.

Settings resolve in precedence order: command-line flag, then the
DIRDETECT_CACHE_DIR environment variable (cache dir only), then the
--config file, then built-in defaults. The config file is plain
key-value text: one `key = value` per line, keys named like the long
flags without the leading dashes (`cache-dir = /var/cache/dirdetect`),
`#` starts a comment. Keys that a subcommand does not understand are
ignored so one config file can serve every subcommand.

A scorer backend is exactly one of: --scorer-cmd (external process
speaking the NDJSON scoring protocol), --scores-file (precomputed
records, repeatable), or --cache-dir plus --scorer-id (serve purely
from a previously filled cache). --cache-dir alongside a live backend
makes every obtained score persistent, so analysis reruns are
inference-free.

Numbers in human-readable output: probabilities are shown in the linear
domain with 3 significant digits, probability ratios with 4; table
accuracies are percentages with 2 decimals (bias stays a plain 2-decimal
fraction); JSON output always carries full precision.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path
from typing import Sequence

from .corpus import (
    Corpus,
    FilterPredicate,
    ImportMeta,
    CorpusStats,
    corpus_stats,
    filter_corpus,
    import_aligned_files,
    load_corpus,
)
from .detection import (
    DirectionScores,
    Document,
    DirectionVerdict,
    GoldDirection,
    Predicted,
    SegmentPair,
    TranslationType,
    detect_document,
    pooled_direction_scores,
    verdict_from_scores,
)
from .errors import (
    ConflictingDuplicate,
    InputError,
    ParseError,
    ScoringError,
    TooFewSegments,
    UnsupportedFormat,
)
from .scoring import (
    CacheOnlyScorer,
    DirectoryCache,
    MemoryCache,
    ScoreRequest,
    ScoreStore,
    ScorerBackend,
    StoreScorer,
    SubprocessScorer,
    load_score_file,
    record_from_json,
    score_requests,
)
from .stats import (
    EvalItem,
    EvaluationReport,
    PValueMethod,
    PValueReport,
    build_evaluation_report,
    exact_permutation_test,
    permutation_test,
)

ENV_CACHE_DIR = "DIRDETECT_CACHE_DIR"
EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SCORER = 3

EXHAUSTIVE_LIMIT = 20

_FORMATS = ("markdown", "csv", "json")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise InputError(f"not a boolean: {raw!r}")


def _parse_scores_files(raw: str) -> list[str]:
    return [raw]


_CONFIG_KEYS = {
    "scorer-cmd": str,
    "scores-file": _parse_scores_files,
    "cache-dir": str,
    "scorer-id": str,
    "corpus": str,
    "src": str,
    "tgt": str,
    "langs": str,
    "gold": str,
    "translation-type": str,
    "doc-ids": str,
    "dataset-tag": str,
    "types": str,
    "min-doc-sents": int,
    "min-docs-per-direction": int,
    "buckets": int,
    "permutations": int,
    "seed": int,
    "format": str,
    "out": str,
    "small-sample-correction": _parse_bool,
    "doc-threshold": int,
}

_DEFAULTS = {
    "format": "markdown",
    "permutations": 10000,
    "seed": 0,
    "gold": "unknown",
    "translation_type": "unknown",
    "small_sample_correction": False,
    "doc_threshold": 10,
}


def _load_config(path: str) -> dict[str, str]:
    """Read the key-value config format; values stay raw strings here."""
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise InputError(f"config {path} line {line_no}: expected key = value")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS:
            raise InputError(f"config {path} line {line_no}: unknown key {key!r}")
        values[key] = value
    return values


def _resolve(args: argparse.Namespace) -> None:
    """Fill unset flags from env (cache dir), config file, then defaults."""
    if getattr(args, "cache_dir", None) is None and os.environ.get(ENV_CACHE_DIR):
        args.cache_dir = os.environ[ENV_CACHE_DIR]
    config = _load_config(args.config) if getattr(args, "config", None) else {}
    for key, raw in config.items():
        dest = key.replace("-", "_")
        if hasattr(args, dest) and getattr(args, dest) is None:
            try:
                setattr(args, dest, _CONFIG_KEYS[key](raw))
            except ValueError as exc:
                raise InputError(f"config key {key}: {exc}") from exc
    for dest, value in _DEFAULTS.items():
        if hasattr(args, dest) and getattr(args, dest) is None:
            setattr(args, dest, value)


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------


def _load_input_corpus(args: argparse.Namespace) -> Corpus:
    if args.corpus and (args.src or args.tgt):
        raise InputError("give either --corpus or --src/--tgt, not both")
    if args.corpus:
        corpus = load_corpus(args.corpus)
    elif args.src or args.tgt:
        if not (args.src and args.tgt and args.langs):
            raise InputError("aligned mode needs --src, --tgt and --langs X:Y")
        lang_x, sep, lang_y = args.langs.partition(":")
        if not sep or not lang_x or not lang_y:
            raise InputError(f"--langs must look like de:en, got {args.langs!r}")
        meta = ImportMeta(
            lang_x=lang_x,
            lang_y=lang_y,
            gold_direction=GoldDirection.from_wire(args.gold),
            translation_type=TranslationType.from_wire(args.translation_type),
            dataset_tag=args.dataset_tag,
            doc_ids_path=args.doc_ids,
        )
        corpus = import_aligned_files(args.src, args.tgt, meta)
    else:
        raise InputError("no input given: use --corpus, or --src/--tgt with --langs")

    types = None
    if args.types:
        types = frozenset(TranslationType.from_wire(t.strip()) for t in args.types.split(","))
    predicate = FilterPredicate(
        translation_types=types,
        min_doc_sentences=args.min_doc_sents,
        min_docs_per_direction=args.min_docs_per_direction,
    )
    if predicate != FilterPredicate():
        corpus = filter_corpus(corpus, predicate)
    return corpus


def _merge_stores(paths: Sequence[str]) -> ScoreStore:
    entries: dict = {}
    ids: set[str] = set()
    for path in paths:
        store = load_score_file(path)
        for digest, scores in store.items():
            previous = entries.get(digest)
            if previous is not None and previous != scores:
                raise ConflictingDuplicate(
                    f"{path}: key {digest} conflicts with an earlier score file"
                )
            entries[digest] = scores
        ids |= store.scorer_ids
    return ScoreStore(entries, frozenset(ids))


def _make_backend(args: argparse.Namespace) -> ScorerBackend:
    cache = DirectoryCache(args.cache_dir) if args.cache_dir else MemoryCache()
    if args.scorer_cmd and args.scores_file:
        raise InputError("give exactly one of --scorer-cmd and --scores-file")
    if args.scorer_cmd:
        return SubprocessScorer(args.scorer_cmd, cache=cache)
    if args.scores_file:
        return StoreScorer(_merge_stores(args.scores_file), scorer_id=args.scorer_id, cache=cache)
    if args.cache_dir:
        if not args.scorer_id:
            raise InputError("cache-only mode needs --scorer-id to address cache entries")
        return CacheOnlyScorer(args.scorer_id, cache)
    raise InputError(
        "no scorer configured: use --scorer-cmd, --scores-file, or --cache-dir with --scorer-id"
    )


def _score_corpus(backend: ScorerBackend, corpus: Corpus) -> dict[str, DirectionScores]:
    """Score every pair in both directions; returns pair_id -> DirectionScores."""
    requests = []
    for pair in corpus.pairs:
        requests.append(
            ScoreRequest(
                id=f"{pair.pair_id}#xy",
                src_lang=pair.lang_x,
                tgt_lang=pair.lang_y,
                source=pair.text_x,
                target=pair.text_y,
            )
        )
        requests.append(
            ScoreRequest(
                id=f"{pair.pair_id}#yx",
                src_lang=pair.lang_y,
                tgt_lang=pair.lang_x,
                source=pair.text_y,
                target=pair.text_x,
            )
        )
    scored = score_requests(backend, requests)
    out: dict[str, DirectionScores] = {}
    for pair in corpus.pairs:
        xy, yx = scored[f"{pair.pair_id}#xy"], scored[f"{pair.pair_id}#yx"]
        out[pair.pair_id] = DirectionScores(
            sum_xy=math.fsum(xy.token_logprobs),
            count_xy=len(xy),
            sum_yx=math.fsum(yx.token_logprobs),
            count_yx=len(yx),
        )
    return out


def _require_pairs(corpus: Corpus) -> None:
    if corpus.n_pairs == 0:
        raise InputError("no segments after loading and filtering")


def _linear(logp: float) -> str:
    return format(math.exp(logp), ".3g")


def _ratio(value: float) -> str:
    return format(value, ".4g")


def _finite_or_none(value: float) -> float | None:
    return value if math.isfinite(value) else None


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------


def _pair_line(pair: SegmentPair, scores: DirectionScores, verdict: DirectionVerdict) -> str:
    return (
        f"pair={pair.pair_id} doc={pair.doc_id}"
        f" ptok_xy={_linear(scores.logp_tok_xy)} ptok_yx={_linear(scores.logp_tok_yx)}"
        f" ratio={_ratio(verdict.prob_ratio)} verdict={verdict.predicted.value}"
        f" tie={int(verdict.tie)}"
    )


def _doc_line(doc: Document, pooled: DirectionScores, verdict: DirectionVerdict) -> str:
    return (
        f"doc={doc.doc_id} segments={len(doc)}"
        f" ptok_xy={_linear(pooled.logp_tok_xy)} ptok_yx={_linear(pooled.logp_tok_yx)}"
        f" ratio={_ratio(verdict.prob_ratio)} verdict={verdict.predicted.value}"
        f" tie={int(verdict.tie)}"
    )


def cmd_detect(args: argparse.Namespace) -> int:
    corpus = _load_input_corpus(args)
    _require_pairs(corpus)
    with _make_backend(args) as backend:
        scores = _score_corpus(backend, corpus)

    lines: list[str] = []
    records: list[dict] = []
    for doc in corpus.documents:
        doc_scores: list[DirectionScores] = []
        for pair in doc.pairs:
            ds = scores[pair.pair_id]
            doc_scores.append(ds)
            verdict = verdict_from_scores(ds)
            lines.append(_pair_line(pair, ds, verdict))
            records.append(
                {
                    "kind": "pair",
                    "pair_id": pair.pair_id,
                    "doc_id": pair.doc_id,
                    "lang_x": pair.lang_x,
                    "lang_y": pair.lang_y,
                    "logp_tok_xy": ds.logp_tok_xy,
                    "logp_tok_yx": ds.logp_tok_yx,
                    "log_margin": verdict.log_margin,
                    "prob_ratio": _finite_or_none(verdict.prob_ratio),
                    "predicted": verdict.predicted.value,
                    "tie": verdict.tie,
                }
            )
        pooled = pooled_direction_scores(doc_scores)
        verdict = verdict_from_scores(pooled)
        lines.append(_doc_line(doc, pooled, verdict))
        records.append(
            {
                "kind": "document",
                "doc_id": doc.doc_id,
                "segments": len(doc),
                "lang_x": doc.lang_x,
                "lang_y": doc.lang_y,
                "logp_tok_xy": pooled.logp_tok_xy,
                "logp_tok_yx": pooled.logp_tok_yx,
                "log_margin": verdict.log_margin,
                "prob_ratio": _finite_or_none(verdict.prob_ratio),
                "predicted": verdict.predicted.value,
                "tie": verdict.tie,
            }
        )

    sys.stdout.write("".join(line + "\n" for line in lines))
    if args.out:
        Path(args.out).write_text(
            "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records),
            encoding="utf-8",
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _doc_translation_type(doc: Document) -> TranslationType:
    types = {p.translation_type for p in doc.pairs}
    return next(iter(types)) if len(types) == 1 else TranslationType.UNKNOWN


def _doc_dataset_tag(doc: Document) -> str | None:
    tags = {p.dataset_tag for p in doc.pairs}
    return next(iter(tags)) if len(tags) == 1 else None


def _source_chars(pair: SegmentPair) -> int:
    text = pair.text_y if pair.gold_direction is GoldDirection.Y2X else pair.text_x
    return len(text)


def _sentence_items(corpus: Corpus, scores: dict[str, DirectionScores]) -> list[EvalItem]:
    return [
        EvalItem(
            lang_x=pair.lang_x,
            lang_y=pair.lang_y,
            gold=pair.gold_direction,
            verdict=verdict_from_scores(scores[pair.pair_id]),
            translation_type=pair.translation_type,
            dataset_tag=pair.dataset_tag,
            source_chars=_source_chars(pair),
        )
        for pair in corpus.pairs
    ]


def _document_items(corpus: Corpus, scores: dict[str, DirectionScores]) -> list[EvalItem]:
    items = []
    for doc in corpus.documents:
        verdict = detect_document([scores[p.pair_id] for p in doc.pairs])
        items.append(
            EvalItem(
                lang_x=doc.lang_x,
                lang_y=doc.lang_y,
                gold=doc.gold_direction,
                verdict=verdict,
                translation_type=_doc_translation_type(doc),
                dataset_tag=_doc_dataset_tag(doc),
            )
        )
    return items


def _bucket_table(items: list[EvalItem], width: int) -> list[dict]:
    """Per-bucket accuracy and count over gold-directed sentence items."""
    if width < 1:
        raise InputError(f"--buckets must be >= 1, got {width}")
    hits: dict[int, int] = {}
    totals: dict[int, int] = {}
    for item in items:
        if item.gold not in (GoldDirection.X2Y, GoldDirection.Y2X):
            continue
        assert item.source_chars is not None
        bucket = item.source_chars // width
        totals[bucket] = totals.get(bucket, 0) + 1
        hits[bucket] = hits.get(bucket, 0) + (item.verdict.predicted.value == item.gold.value)
    return [
        {
            "bucket": b,
            "lo": b * width,
            "hi": (b + 1) * width,
            "n": n,
            "accuracy": hits.get(b, 0) / n,
        }
        for b, n in sorted(totals.items())
    ]


def cmd_evaluate(args: argparse.Namespace) -> int:
    corpus = _load_input_corpus(args)
    _require_pairs(corpus)
    labelled = [
        p for p in corpus.pairs if p.gold_direction is not GoldDirection.UNKNOWN
    ]
    if not labelled:
        raise InputError("no gold direction labels in corpus; nothing to evaluate")
    with _make_backend(args) as backend:
        scores = _score_corpus(backend, corpus)

    sentence_items = _sentence_items(corpus, scores)
    document_items = _document_items(corpus, scores)
    payload = {
        "sentence": build_evaluation_report(sentence_items),
        "document": build_evaluation_report(document_items),
        "buckets": _bucket_table(sentence_items, args.buckets) if args.buckets else None,
        "bucket_width": args.buckets,
    }
    data = emit_report(payload, args.format)
    _write_text(args.out, data.decode("utf-8"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Report serialization
# ---------------------------------------------------------------------------


def _pct(value: float) -> str:
    return f"{100.0 * value:.2f}"


def _report_json(payload: dict) -> bytes:
    def rows_obj(report: EvaluationReport) -> dict:
        def row_dict(r) -> dict:
            return {
                "translation_type": r.translation_type.wire,
                "dataset_tag": r.dataset_tag,
                "pair": r.pair,
                "fwd": r.fwd,
                "rev": r.rev,
                "acc_fwd": r.acc_fwd,
                "acc_rev": r.acc_rev,
                "avg": r.avg,
                "bias": r.bias,
                "n_fwd": r.n_fwd,
                "n_rev": r.n_rev,
                "ties": r.n_ties,
            }

        return {
            "rows": [row_dict(r) for r in report.rows],
            "macro_rows": [row_dict(r) for r in report.macro_rows],
            "ratio_rows": [
                {
                    "translation_type": r.translation_type.wire,
                    "dataset_tag": r.dataset_tag,
                    "pair": r.pair,
                    "fwd": r.fwd,
                    "rev": r.rev,
                    "ratio_fwd": r.ratio_fwd,
                    "ratio_rev": r.ratio_rev,
                    "n": r.n,
                }
                for r in report.ratio_rows
            ],
        }

    obj = {
        "sentence": rows_obj(payload["sentence"]),
        "document": rows_obj(payload["document"]),
    }
    if payload.get("buckets") is not None:
        obj["buckets"] = {"width": payload["bucket_width"], "rows": payload["buckets"]}
    return (json.dumps(obj, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def _report_csv(payload: dict) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "section", "type", "dataset", "pair", "fwd", "rev",
            "acc_fwd", "acc_rev", "avg", "bias", "n_fwd", "n_rev", "ties",
        ]
    )

    def acc_rows(section: str, report: EvaluationReport) -> None:
        for r in report.rows + report.macro_rows:
            writer.writerow(
                [
                    section, r.translation_type.wire, r.dataset_tag or "", r.pair,
                    r.fwd, r.rev, _pct(r.acc_fwd), _pct(r.acc_rev), _pct(r.avg),
                    f"{r.bias:.2f}", r.n_fwd, r.n_rev, r.n_ties,
                ]
            )
        for r in report.ratio_rows:
            writer.writerow(
                [
                    f"{section}-ratio", r.translation_type.wire, r.dataset_tag or "",
                    r.pair, r.fwd, r.rev, _pct(r.ratio_fwd), _pct(r.ratio_rev),
                    "", "", r.n, "", "",
                ]
            )

    acc_rows("sentence", payload["sentence"])
    acc_rows("document", payload["document"])
    if payload.get("buckets") is not None:
        for row in payload["buckets"]:
            writer.writerow(
                [
                    "bucket", "", "", f"{row['lo']}-{row['hi'] - 1}", "", "",
                    _pct(row["accuracy"]), "", "", "", row["n"], "", "",
                ]
            )
    return buf.getvalue().encode("utf-8")


def _md_table(header: list[str], rows: list[list[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines.extend("| " + " | ".join(str(c) for c in row) + " |" for row in rows)
    return lines


def _report_markdown(payload: dict) -> bytes:
    lines: list[str] = []

    def section(title: str, report: EvaluationReport) -> None:
        lines.append(f"## {title}")
        lines.append("")
        header = ["type", "dataset", "pair", "fwd", "acc_fwd", "rev", "acc_rev",
                  "avg", "bias", "n_fwd", "n_rev", "ties"]
        rows = [
            [
                r.translation_type.wire, r.dataset_tag or "-", r.pair, r.fwd or "-",
                _pct(r.acc_fwd), r.rev or "-", _pct(r.acc_rev), _pct(r.avg),
                f"{r.bias:.2f}", str(r.n_fwd), str(r.n_rev), str(r.n_ties),
            ]
            for r in report.rows + report.macro_rows
        ]
        lines.extend(_md_table(header, rows))
        lines.append("")
        if report.ratio_rows:
            lines.append(f"### {title}: prediction shares (no original side)")
            lines.append("")
            header = ["type", "dataset", "pair", "fwd", "share_fwd", "rev", "share_rev", "n"]
            rows = [
                [
                    r.translation_type.wire, r.dataset_tag or "-", r.pair, r.fwd,
                    _pct(r.ratio_fwd), r.rev, _pct(r.ratio_rev), str(r.n),
                ]
                for r in report.ratio_rows
            ]
            lines.extend(_md_table(header, rows))
            lines.append("")

    section("sentence level", payload["sentence"])
    section("document level", payload["document"])
    if payload.get("buckets") is not None:
        lines.append(f"## accuracy by source length (bucket width {payload['bucket_width']})")
        lines.append("")
        rows = [
            [f"{row['lo']}-{row['hi'] - 1}", str(row["n"]), _pct(row["accuracy"])]
            for row in payload["buckets"]
        ]
        lines.extend(_md_table(["chars", "n", "acc"], rows))
        lines.append("")
    return "\n".join(lines).encode("utf-8")


def emit_report(report: dict, format: str) -> bytes:
    """Serialize an evaluation payload deterministically.

    csv and markdown render accuracies and shares as percentages with 2
    decimals (rounding applied after all averaging); json keeps full
    float precision.
    """
    if format == "json":
        return _report_json(report)
    if format == "csv":
        return _report_csv(report)
    if format == "markdown":
        return _report_markdown(report)
    raise UnsupportedFormat(f"unknown report format {format!r} (expected one of {_FORMATS})")


# ---------------------------------------------------------------------------
# forensic
# ---------------------------------------------------------------------------


def _forensic_conclusion(doc: Document, verdict: DirectionVerdict, report: PValueReport) -> str:
    p = format(report.p_value, ".6g")
    if report.method is PValueMethod.EXHAUSTIVE:
        how = f"exhaustive over {report.n_permutations} permutations"
    else:
        how = f"Monte Carlo, {report.n_permutations} permutations, seed {report.seed}"
    if verdict.tie:
        return (
            "conclusion: both directions pool to the same token-level probability; "
            f"the test is uninformative (p = {p}; {how})."
        )
    if verdict.predicted is Predicted.X2Y:
        origin, dest = doc.lang_x, doc.lang_y
    else:
        origin, dest = doc.lang_y, doc.lang_x
    return (
        f"conclusion: the pooled translation probability favors {origin}->{dest}, "
        f"i.e. {origin} as the original side; under random per-segment direction "
        f"swaps, a margin at least this large arises with p = {p} ({how})."
    )


def cmd_forensic(args: argparse.Namespace) -> int:
    corpus = _load_input_corpus(args)
    if corpus.n_documents != 1:
        raise InputError(
            f"forensic mode analyses exactly one document, got {corpus.n_documents}"
        )
    doc = corpus.documents[0]
    if len(doc) < 2:
        raise TooFewSegments(f"forensic test needs >= 2 segments, got {len(doc)}")
    with _make_backend(args) as backend:
        scores = _score_corpus(backend, corpus)

    doc_scores = [scores[p.pair_id] for p in doc.pairs]
    pooled = pooled_direction_scores(doc_scores)
    verdict = verdict_from_scores(pooled)
    if len(doc) <= EXHAUSTIVE_LIMIT:
        report = exact_permutation_test(doc_scores)
    else:
        report = permutation_test(
            doc_scores,
            n_permutations=args.permutations,
            seed=args.seed,
            plus_one=args.small_sample_correction,
        )

    verdict_text = verdict.predicted.value + (" (tie)" if verdict.tie else "")
    out_lines = [
        f"document {doc.doc_id}: {len(doc)} segments, langs {doc.lang_x}:{doc.lang_y}",
        f"P_tok({doc.lang_x}->{doc.lang_y}) = {_linear(pooled.logp_tok_xy)}",
        f"P_tok({doc.lang_y}->{doc.lang_x}) = {_linear(pooled.logp_tok_yx)}",
        f"ratio = {_ratio(verdict.prob_ratio)}",
        f"verdict: {verdict_text}",
        (
            f"permutation test: method={report.method.value} n={report.n_permutations}"
            f" seed={report.seed} extreme={report.extreme_count}"
            f" p={format(report.p_value, '.6g')}"
        ),
        _forensic_conclusion(doc, verdict, report),
    ]
    sys.stdout.write("".join(line + "\n" for line in out_lines))

    if args.out:
        record = {
            "doc_id": doc.doc_id,
            "segments": len(doc),
            "lang_x": doc.lang_x,
            "lang_y": doc.lang_y,
            "logp_tok_xy": pooled.logp_tok_xy,
            "logp_tok_yx": pooled.logp_tok_yx,
            "log_margin": verdict.log_margin,
            "prob_ratio": _finite_or_none(verdict.prob_ratio),
            "predicted": verdict.predicted.value,
            "tie": verdict.tie,
            "observed_stat": report.observed_stat,
            "p_value": report.p_value,
            "n_permutations": report.n_permutations,
            "seed": report.seed,
            "method": report.method.value,
            "extreme_count": report.extreme_count,
            "small_sample_correction": report.small_sample_correction,
        }
        Path(args.out).write_text(
            json.dumps(record, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------


def _stats_type_columns(st: CorpusStats) -> list[str]:
    present = set(st.totals.pairs_by_type)
    return [t.wire for t in TranslationType if t.wire in present]


def _stats_json(st: CorpusStats) -> bytes:
    def row_dict(r) -> dict:
        return {
            "lang_pair": r.lang_pair,
            "direction": r.direction,
            "source_sentences": r.source_sentences,
            "documents": r.documents,
            "documents_at_threshold": r.documents_at_threshold,
            "pairs_by_type": dict(r.pairs_by_type),
        }

    obj = {
        "doc_threshold": st.doc_threshold,
        "rows": [row_dict(r) for r in st.rows],
        "totals": row_dict(st.totals),
    }
    return (json.dumps(obj, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def _stats_table_rows(st: CorpusStats, type_cols: list[str]) -> list[list[str]]:
    rows = []
    for r in list(st.rows) + [st.totals]:
        rows.append(
            [
                r.lang_pair, r.direction or "-", str(r.source_sentences),
                str(r.documents), str(r.documents_at_threshold),
            ]
            + [str(r.pairs_by_type.get(t, 0)) for t in type_cols]
        )
    return rows


def _emit_stats(st: CorpusStats, format: str) -> bytes:
    if format == "json":
        return _stats_json(st)
    type_cols = _stats_type_columns(st)
    header = ["pair", "direction", "source_sents", "docs", f"docs_ge_{st.doc_threshold}"] + type_cols
    rows = _stats_table_rows(st, type_cols)
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue().encode("utf-8")
    if format == "markdown":
        return ("\n".join(_md_table(header, rows)) + "\n").encode("utf-8")
    raise UnsupportedFormat(f"unknown report format {format!r} (expected one of {_FORMATS})")


def cmd_stats(args: argparse.Namespace) -> int:
    corpus = _load_input_corpus(args)
    st = corpus_stats(corpus, doc_threshold=args.doc_threshold)
    data = _emit_stats(st, args.format)
    _write_text(args.out, data.decode("utf-8"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------


def _require_cache(args: argparse.Namespace) -> DirectoryCache:
    if not args.cache_dir:
        raise InputError(f"cache commands need --cache-dir (or {ENV_CACHE_DIR})")
    return DirectoryCache(args.cache_dir)


def cmd_cache_ls(args: argparse.Namespace) -> int:
    cache = _require_cache(args)
    for digest in cache.digests():
        print(digest)
    return EXIT_OK


def cmd_cache_clear(args: argparse.Namespace) -> int:
    cache = _require_cache(args)
    print(f"removed {cache.clear()} entries from {cache.root}")
    return EXIT_OK


def cmd_cache_import(args: argparse.Namespace) -> int:
    cache = _require_cache(args)
    if not args.scores_file:
        raise InputError("cache import needs --scores-file")
    imported = 0
    for path in args.scores_file:
        try:
            fh = open(path, encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot read score file {path}: {exc}") from exc
        with fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    key, source, target, scores = record_from_json(line)
                except (ValueError, KeyError, TypeError) as exc:
                    raise ParseError(f"{path}: {exc}", line=line_no) from exc
                existing = cache.get(key)
                if existing is not None and existing != scores:
                    raise ConflictingDuplicate(
                        f"{path} line {line_no}: key {key.digest} conflicts with cached entry"
                    )
                cache.put(key, source, target, scores)
                imported += 1
    print(f"imported {imported} records into {cache.root}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key-value config file; flags win over it")


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scorer-cmd", help="command line of an NDJSON-protocol scorer process")
    p.add_argument("--scores-file", action="append", help="precomputed score file (repeatable)")
    p.add_argument("--cache-dir", help=f"score cache directory (env {ENV_CACHE_DIR})")
    p.add_argument("--scorer-id", help="scorer id for cache-only or multi-scorer score files")


def _add_input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", help="normalized NDJSON corpus file")
    p.add_argument("--src", help="aligned text file, side X")
    p.add_argument("--tgt", help="aligned text file, side Y")
    p.add_argument("--langs", help="language codes for aligned mode, X:Y (e.g. de:en)")
    p.add_argument("--gold", help="gold direction for aligned mode (x2y|y2x|none|unknown)")
    p.add_argument(
        "--translation-type", help="translation type for aligned mode (HT|NMT|pre-NMT|LLM|unknown)"
    )
    p.add_argument("--doc-ids", help="file with one doc id per aligned line")
    p.add_argument("--dataset-tag", help="dataset tag for aligned mode")


def _add_filter_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--types", help="comma-separated translation types to keep")
    p.add_argument("--min-doc-sents", type=int, help="drop documents with fewer segments")
    p.add_argument(
        "--min-docs-per-direction",
        type=int,
        help="drop language pairs lacking this many documents in either direction",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dirdetect",
        description=(
            "Detect the original translation direction of parallel text by comparing "
            "token-averaged translation probabilities in both directions."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="per-pair and per-document direction verdicts")
    _add_common(p)
    _add_backend_flags(p)
    _add_input_flags(p)
    _add_filter_flags(p)
    p.add_argument("--out", help="write machine-readable NDJSON results here")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="accuracy/bias tables against gold directions")
    _add_common(p)
    _add_backend_flags(p)
    _add_input_flags(p)
    _add_filter_flags(p)
    p.add_argument("--buckets", type=int, help="add length-bucket accuracies with this bucket width")
    p.add_argument("--format", help="markdown, csv, or json")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("forensic", help="significance test on a single document")
    _add_common(p)
    _add_backend_flags(p)
    _add_input_flags(p)
    _add_filter_flags(p)
    p.add_argument("--permutations", type=int, help="Monte Carlo permutation count (default 10000)")
    p.add_argument("--seed", type=int, help="Monte Carlo seed (default 0)")
    p.add_argument(
        "--small-sample-correction",
        action="store_const",
        const=True,
        help="use (extreme+1)/(n+1) in the Monte Carlo p-value",
    )
    p.add_argument("--out", help="write a machine-readable JSON report here")
    p.set_defaults(func=cmd_forensic)

    p = sub.add_parser("stats", help="corpus statistics table")
    _add_common(p)
    _add_input_flags(p)
    _add_filter_flags(p)
    p.add_argument("--doc-threshold", type=int, help="segment count for the docs-at-threshold column")
    p.add_argument("--format", help="markdown, csv, or json")
    p.add_argument("--out", help="write the table here instead of stdout")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("cache", help="inspect or fill the score cache")
    cache_sub = p.add_subparsers(dest="cache_command", required=True)
    for name, func in (("ls", cmd_cache_ls), ("clear", cmd_cache_clear), ("import", cmd_cache_import)):
        cp = cache_sub.add_parser(name)
        _add_common(cp)
        cp.add_argument("--cache-dir", help=f"score cache directory (env {ENV_CACHE_DIR})")
        if name == "import":
            cp.add_argument("--scores-file", action="append", help="score file(s) to import")
        cp.set_defaults(func=func)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _resolve(args)
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ScoringError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCORER
    except OSError as exc:
        # unreadable or unwritable paths the library did not intercept
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
