"""Corpus ingestion, validation, filtering, and summary statistics.

The on-disk corpus format is newline-delimited JSON, one segment pair
per line:

    {"pair_id": ..., "doc_id": ..., "lang_x": ..., "lang_y": ...,
     "text_x": ..., "text_y": ..., "gold_direction": "x2y|y2x|none|unknown",
     "translation_type": "HT|NMT|pre-NMT|LLM|unknown",
     "system_id"?: ..., "dataset_tag"?: ...}

Documents are assembled by doc_id in order of first appearance; pairs
keep file order within their document. A document must be internally
homogeneous in language pair and gold direction (mixed translation
types within one document are legal: a document's sentences may carry
references from different providers). save_corpus emits a canonical
key order so load -> save -> load is byte-stable.

Aligned plain-text imports follow the 1:1 line alignment convention:
line i of the X file translates line i of the Y file. Lines empty on
both sides are skipped; a line empty on exactly one side breaks the
alignment and is an error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .detection import Document, GoldDirection, SegmentPair, TranslationType
from .errors import (
    DuplicateSegmentId,
    InputError,
    LineCountMismatch,
    OneSidedEmptyLine,
    ParseError,
)

_REQUIRED_FIELDS = (
    "pair_id",
    "doc_id",
    "lang_x",
    "lang_y",
    "text_x",
    "text_y",
    "gold_direction",
    "translation_type",
)
_OPTIONAL_FIELDS = ("system_id", "dataset_tag")


@dataclass(frozen=True)
class Corpus:
    """Immutable set of documents plus free-form provenance metadata."""

    documents: tuple[Document, ...]
    provenance: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "documents", tuple(self.documents))
        seen: set[str] = set()
        for doc in self.documents:
            if doc.doc_id in seen:
                raise InputError(f"duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)

    @property
    def pairs(self) -> Iterator[SegmentPair]:
        for doc in self.documents:
            yield from doc.pairs

    @property
    def n_documents(self) -> int:
        return len(self.documents)

    @property
    def n_pairs(self) -> int:
        return sum(len(doc) for doc in self.documents)


def _pair_from_record(obj: dict, line_no: int) -> SegmentPair:
    if not isinstance(obj, dict):
        raise ParseError("record is not a JSON object", line=line_no)
    unknown = set(obj) - set(_REQUIRED_FIELDS) - set(_OPTIONAL_FIELDS)
    if unknown:
        raise ParseError(f"unexpected fields: {sorted(unknown)}", line=line_no)
    missing = [k for k in _REQUIRED_FIELDS if k not in obj]
    if missing:
        raise ParseError(f"missing fields: {missing}", line=line_no)
    for key in _REQUIRED_FIELDS:
        if not isinstance(obj[key], str):
            raise ParseError(f"field {key} must be a string", line=line_no)
    for key in _OPTIONAL_FIELDS:
        if key in obj and not isinstance(obj[key], str):
            raise ParseError(f"field {key} must be a string", line=line_no)
    try:
        return SegmentPair(
            pair_id=obj["pair_id"],
            doc_id=obj["doc_id"],
            text_x=obj["text_x"],
            text_y=obj["text_y"],
            lang_x=obj["lang_x"],
            lang_y=obj["lang_y"],
            gold_direction=GoldDirection.from_wire(obj["gold_direction"]),
            translation_type=TranslationType.from_wire(obj["translation_type"]),
            system_id=obj.get("system_id"),
            dataset_tag=obj.get("dataset_tag"),
        )
    except InputError as exc:
        raise ParseError(str(exc), line=line_no) from exc


def _assemble(pairs: Iterable[tuple[SegmentPair, int]]) -> tuple[Document, ...]:
    """Group pairs into documents by doc_id, first-appearance order."""
    by_doc: dict[str, list[SegmentPair]] = {}
    seen_ids: dict[str, int] = {}
    for pair, line_no in pairs:
        if pair.pair_id in seen_ids:
            raise DuplicateSegmentId(
                f"line {line_no}: pair_id {pair.pair_id!r} already used on line {seen_ids[pair.pair_id]}"
            )
        seen_ids[pair.pair_id] = line_no
        by_doc.setdefault(pair.doc_id, []).append(pair)
    return tuple(Document(doc_id=doc_id, pairs=tuple(ps)) for doc_id, ps in by_doc.items())


def load_corpus(path: str | Path) -> Corpus:
    """Read a normalized NDJSON corpus file; blank lines are ignored."""
    pairs: list[tuple[SegmentPair, int]] = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read corpus {path}: {exc}") from exc
    with fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise ParseError(f"invalid JSON: {exc}", line=line_no) from exc
            pairs.append((_pair_from_record(obj, line_no), line_no))
    return Corpus(documents=_assemble(pairs))


def pair_to_record(pair: SegmentPair) -> dict:
    rec = {
        "pair_id": pair.pair_id,
        "doc_id": pair.doc_id,
        "lang_x": pair.lang_x,
        "lang_y": pair.lang_y,
        "text_x": pair.text_x,
        "text_y": pair.text_y,
        "gold_direction": pair.gold_direction.wire,
        "translation_type": pair.translation_type.wire,
    }
    if pair.system_id is not None:
        rec["system_id"] = pair.system_id
    if pair.dataset_tag is not None:
        rec["dataset_tag"] = pair.dataset_tag
    return rec


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the canonical NDJSON form (stable key order, stable bytes)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in corpus.pairs:
            fh.write(json.dumps(pair_to_record(pair), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Aligned plain-text import
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImportMeta:
    """Metadata for importing a 1:1 line-aligned file pair.

    doc_ids_path, when given, names a file with one doc_id per line
    (same line count as the text files); otherwise all pairs land in a
    single document named doc_id_default.
    """

    lang_x: str
    lang_y: str
    gold_direction: GoldDirection = GoldDirection.UNKNOWN
    translation_type: TranslationType = TranslationType.UNKNOWN
    system_id: str | None = None
    dataset_tag: str | None = None
    doc_ids_path: str | Path | None = None
    doc_id_default: str = "doc0"


def import_aligned_files(x_path: str | Path, y_path: str | Path, meta: ImportMeta) -> Corpus:
    """Build a corpus from two line-aligned text files.

    Line numbering is 1-based and refers to the original files, so a
    reported OneSidedEmptyLine matches what an editor shows.
    """
    try:
        x_lines = Path(x_path).read_text(encoding="utf-8").splitlines()
        y_lines = Path(y_path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read aligned files: {exc}") from exc
    if len(x_lines) != len(y_lines):
        raise LineCountMismatch(len(x_lines), len(y_lines))
    if meta.doc_ids_path is not None:
        try:
            doc_ids = Path(meta.doc_ids_path).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise InputError(f"cannot read doc id file: {exc}") from exc
        if len(doc_ids) != len(x_lines):
            raise LineCountMismatch(len(doc_ids), len(x_lines))
    else:
        doc_ids = [meta.doc_id_default] * len(x_lines)

    pairs: list[tuple[SegmentPair, int]] = []
    per_doc_counter: dict[str, int] = {}
    for line_no, (tx, ty, doc_id) in enumerate(zip(x_lines, y_lines, doc_ids), start=1):
        x_empty, y_empty = not tx.strip(), not ty.strip()
        if x_empty and y_empty:
            continue
        if x_empty or y_empty:
            raise OneSidedEmptyLine(line_no)
        k = per_doc_counter.get(doc_id, 0) + 1
        per_doc_counter[doc_id] = k
        pairs.append(
            (
                SegmentPair(
                    pair_id=f"{doc_id}#{k}",
                    doc_id=doc_id,
                    text_x=tx,
                    text_y=ty,
                    lang_x=meta.lang_x,
                    lang_y=meta.lang_y,
                    gold_direction=meta.gold_direction,
                    translation_type=meta.translation_type,
                    system_id=meta.system_id,
                    dataset_tag=meta.dataset_tag,
                ),
                line_no,
            )
        )
    return Corpus(documents=_assemble(pairs))


# ---------------------------------------------------------------------------
# Filtering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FilterPredicate:
    """Conjunction of optional criteria; None means "no constraint".

    min_docs_per_direction counts documents that survived the other
    criteria, grouped by unordered language pair, and drops a whole
    group when either gold direction falls short. Documents without a
    gold direction count toward neither side and are dropped with their
    group.
    """

    directions: frozenset[GoldDirection] | None = None
    translation_types: frozenset[TranslationType] | None = None
    dataset_tags: frozenset[str] | None = None
    min_doc_sentences: int | None = None
    min_docs_per_direction: int | None = None


def _pair_passes(pair: SegmentPair, predicate: FilterPredicate) -> bool:
    if predicate.directions is not None and pair.gold_direction not in predicate.directions:
        return False
    if predicate.translation_types is not None and pair.translation_type not in predicate.translation_types:
        return False
    if predicate.dataset_tags is not None and pair.dataset_tag not in predicate.dataset_tags:
        return False
    return True


def _doc_group(doc: Document) -> tuple[str, str]:
    return (doc.lang_x, doc.lang_y) if doc.lang_x <= doc.lang_y else (doc.lang_y, doc.lang_x)


def filter_corpus(corpus: Corpus, predicate: FilterPredicate) -> Corpus:
    """Sub-corpus satisfying every supplied criterion; may be empty.

    Pair-level criteria apply first, then the per-document sentence
    minimum, then the per-language-pair document minimum, mirroring
    the usual "at least N sentences, at least M such documents in both
    directions" pipeline.
    """
    docs: list[Document] = []
    for doc in corpus.documents:
        kept = tuple(p for p in doc.pairs if _pair_passes(p, predicate))
        if not kept:
            continue
        if predicate.min_doc_sentences is not None and len(kept) < predicate.min_doc_sentences:
            continue
        docs.append(Document(doc_id=doc.doc_id, pairs=kept))

    if predicate.min_docs_per_direction is not None:
        counts: dict[tuple[str, str], dict[str, int]] = {}
        for doc in docs:
            group = counts.setdefault(_doc_group(doc), {})
            if doc.gold_direction in (GoldDirection.X2Y, GoldDirection.Y2X):
                origin = doc.lang_x if doc.gold_direction is GoldDirection.X2Y else doc.lang_y
                group[origin] = group.get(origin, 0) + 1
        keep_groups = {
            g
            for g, per_origin in counts.items()
            if len(per_origin) == 2 and min(per_origin.values()) >= predicate.min_docs_per_direction
        }
        docs = [doc for doc in docs if _doc_group(doc) in keep_groups]

    return Corpus(documents=tuple(docs), provenance=dict(corpus.provenance))


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirectionStats:
    """One table row: counts for a language pair in one gold direction.

    source_sentences counts distinct source-side texts, so multiple
    references per source inflate pair counts but not this column. For
    rows without a gold direction the X side stands in as the source.
    """

    lang_pair: str
    direction: str
    source_sentences: int
    documents: int
    documents_at_threshold: int
    pairs_by_type: Mapping[str, int]


@dataclass(frozen=True)
class CorpusStats:
    rows: tuple[DirectionStats, ...]
    totals: DirectionStats
    doc_threshold: int


def corpus_stats(corpus: Corpus, doc_threshold: int = 10) -> CorpusStats:
    """Tally per-direction corpus statistics plus a totals row.

    Totals are the column sums of the rows (including the distinct-
    source column, which is summed per row rather than re-deduplicated
    globally, so the totals invariant holds exactly).
    """
    acc: dict[tuple[str, str], dict] = {}
    for doc in corpus.documents:
        l1, l2 = _doc_group(doc)
        gold = doc.gold_direction
        if gold is GoldDirection.X2Y:
            direction = f"{doc.lang_x}->{doc.lang_y}"
        elif gold is GoldDirection.Y2X:
            direction = f"{doc.lang_y}->{doc.lang_x}"
        else:
            direction = gold.wire
        entry = acc.setdefault(
            (f"{l1}-{l2}", direction),
            {"sources": set(), "docs": 0, "docs_at": 0, "types": {}},
        )
        entry["docs"] += 1
        entry["docs_at"] += len(doc) >= doc_threshold
        for pair in doc.pairs:
            source_text = pair.text_y if gold is GoldDirection.Y2X else pair.text_x
            entry["sources"].add(source_text)
            entry["types"][pair.translation_type.wire] = (
                entry["types"].get(pair.translation_type.wire, 0) + 1
            )

    rows = tuple(
        DirectionStats(
            lang_pair=pair_label,
            direction=direction,
            source_sentences=len(entry["sources"]),
            documents=entry["docs"],
            documents_at_threshold=entry["docs_at"],
            pairs_by_type=dict(sorted(entry["types"].items())),
        )
        for (pair_label, direction), entry in sorted(acc.items())
    )
    total_types: dict[str, int] = {}
    for row in rows:
        for wire, n in row.pairs_by_type.items():
            total_types[wire] = total_types.get(wire, 0) + n
    totals = DirectionStats(
        lang_pair="total",
        direction="",
        source_sentences=sum(r.source_sentences for r in rows),
        documents=sum(r.documents for r in rows),
        documents_at_threshold=sum(r.documents_at_threshold for r in rows),
        pairs_by_type=dict(sorted(total_types.items())),
    )
    return CorpusStats(rows=rows, totals=totals, doc_threshold=doc_threshold)
