"""Evaluation metrics and the permutation significance test.

Accuracy is reported per gold direction; the headline directional bias is
the absolute difference between the two directions' accuracies, from 0
(unbiased) to 1 (a degenerate detector that always predicts one
direction). Macro-averages follow the table convention: average the two
direction accuracies per language pair, then average across pairs.

The permutation test treats one document's per-segment score pairs as
exchangeable under the null hypothesis: each permutation swaps, per
segment with probability 1/2, the whole (sum, count) pair between the
two directions (counts must travel with sums or the pooled statistic
would be ill-defined), recomputes the pooled log-margin, and counts
permutations at least as extreme as the observed margin. The p-value is
twice that proportion, capped at 1. Randomness comes from a PCG64
generator with one independent stream per test run; per-segment coins
are drawn in segment order, so results are reproducible across
platforms for a given seed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .detection import (
    DirectionScores,
    DirectionVerdict,
    GoldDirection,
    Predicted,
    TranslationType,
)
from .errors import (
    EmptyInput,
    InputError,
    NoItemsForDirection,
    TooFewSegments,
    TooManySegments,
)

_CHUNK_ROWS = 1 << 14


# ---------------------------------------------------------------------------
# Accuracy and bias
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirectionAccuracy:
    """Per-gold-direction accuracies with their item counts."""

    acc_xy: float
    acc_yx: float
    n_xy: int
    n_yx: int


def accuracy_by_direction(
    verdicts: Iterable[tuple[DirectionVerdict, GoldDirection]],
) -> DirectionAccuracy:
    """Fraction of items predicted correctly, split by gold direction.

    Ties count as ordinary Y2X predictions, consistent with the decision
    rule's fallback branch.
    """
    hits = {GoldDirection.X2Y: 0, GoldDirection.Y2X: 0}
    totals = {GoldDirection.X2Y: 0, GoldDirection.Y2X: 0}
    for verdict, gold in verdicts:
        if gold not in totals:
            raise InputError(f"gold direction must be x2y or y2x, got {gold}")
        totals[gold] += 1
        if verdict.predicted.value == gold.value:
            hits[gold] += 1
    for direction, n in totals.items():
        if n == 0:
            raise NoItemsForDirection(f"no items with gold direction {direction.wire}")
    return DirectionAccuracy(
        acc_xy=hits[GoldDirection.X2Y] / totals[GoldDirection.X2Y],
        acc_yx=hits[GoldDirection.Y2X] / totals[GoldDirection.Y2X],
        n_xy=totals[GoldDirection.X2Y],
        n_yx=totals[GoldDirection.Y2X],
    )


def directional_bias(acc_xy: float, acc_yx: float) -> float:
    """Absolute accuracy gap between the two gold directions, in [0, 1]."""
    if not (0.0 <= acc_xy <= 1.0 and 0.0 <= acc_yx <= 1.0):
        raise InputError(f"accuracies must lie in [0, 1], got {acc_xy}, {acc_yx}")
    return abs(acc_xy - acc_yx)


def prediction_ratio(verdicts: Sequence[DirectionVerdict]) -> tuple[float, float]:
    """Fraction of predictions per direction; used when no side is original."""
    if not verdicts:
        raise EmptyInput("no verdicts to tally")
    n_xy = sum(1 for v in verdicts if v.predicted is Predicted.X2Y)
    return n_xy / len(verdicts), (len(verdicts) - n_xy) / len(verdicts)


def length_bucket_accuracy(
    items: Iterable[tuple[int, DirectionVerdict, GoldDirection]],
    bucket_width: int = 20,
) -> dict[int, float]:
    """Accuracy per half-open source-length bucket [k*w, (k+1)*w).

    Lengths are character counts of the source sentence; both gold
    directions are pooled. Empty buckets are omitted.
    """
    if bucket_width < 1:
        raise InputError(f"bucket_width must be >= 1, got {bucket_width}")
    hits: dict[int, int] = {}
    totals: dict[int, int] = {}
    for length, verdict, gold in items:
        if gold not in (GoldDirection.X2Y, GoldDirection.Y2X):
            raise InputError(f"gold direction must be x2y or y2x, got {gold}")
        bucket = length // bucket_width
        totals[bucket] = totals.get(bucket, 0) + 1
        if verdict.predicted.value == gold.value:
            hits[bucket] = hits.get(bucket, 0) + 1
    return {b: hits.get(b, 0) / n for b, n in sorted(totals.items())}


# ---------------------------------------------------------------------------
# Permutation significance test
# ---------------------------------------------------------------------------


class PValueMethod(enum.Enum):
    MONTE_CARLO = "monte_carlo"
    EXHAUSTIVE = "exhaustive"


@dataclass(frozen=True)
class PValueReport:
    """Outcome of a permutation test on one document."""

    observed_stat: float
    p_value: float
    n_permutations: int
    seed: int
    method: PValueMethod
    extreme_count: int
    small_sample_correction: bool = False

    def __post_init__(self):
        if not (0.0 <= self.p_value <= 1.0):
            raise InputError(f"p_value out of range: {self.p_value}")


def _score_arrays(doc_scores: Sequence[DirectionScores]) -> tuple[np.ndarray, ...]:
    sxy = np.array([s.sum_xy for s in doc_scores], dtype=np.float64)
    cxy = np.array([s.count_xy for s in doc_scores], dtype=np.float64)
    syx = np.array([s.sum_yx for s in doc_scores], dtype=np.float64)
    cyx = np.array([s.count_yx for s in doc_scores], dtype=np.float64)
    return sxy, cxy, syx, cyx


def _margins(masks: np.ndarray, arrays: tuple[np.ndarray, ...]) -> np.ndarray:
    """Pooled log-margins for a batch of swap masks.

    Selection happens per segment and summation runs in segment order
    regardless of which direction is picked, so swapping all segments'
    directions negates the statistic bit-exactly.
    """
    sxy, cxy, syx, cyx = arrays
    pooled_sum_xy = np.where(masks, syx, sxy).sum(axis=1)
    pooled_cnt_xy = np.where(masks, cyx, cxy).sum(axis=1)
    pooled_sum_yx = np.where(masks, sxy, syx).sum(axis=1)
    pooled_cnt_yx = np.where(masks, cxy, cyx).sum(axis=1)
    return pooled_sum_xy / pooled_cnt_xy - pooled_sum_yx / pooled_cnt_yx


def _observed_margin(arrays: tuple[np.ndarray, ...]) -> float:
    n = arrays[0].shape[0]
    return float(_margins(np.zeros((1, n), dtype=bool), arrays)[0])


def _count_extreme(margins: np.ndarray, observed: float) -> int:
    if observed > 0.0:
        return int(np.count_nonzero(margins >= observed))
    return int(np.count_nonzero(margins <= observed))


def permutation_test(
    doc_scores: Sequence[DirectionScores],
    n_permutations: int = 10000,
    seed: int = 0,
    plus_one: bool = False,
) -> PValueReport:
    """Monte Carlo permutation test of the document-level log-margin.

    Each permutation independently swaps each segment's (sum, count)
    pair between directions with probability 1/2. A permutation is
    extreme when its margin is at least as far from zero, on the
    observed side, as the observed margin; with a zero observed margin
    every permutation counts. p = min(1, 2 * extreme / n).

    plus_one enables the (count+1)/(n+1) small-sample correction; it is
    off by default so reported p-values follow the plain doubled
    proportion.
    """
    if len(doc_scores) < 2:
        raise TooFewSegments(f"permutation test needs >= 2 segments, got {len(doc_scores)}")
    if n_permutations < 1:
        raise InputError(f"n_permutations must be >= 1, got {n_permutations}")
    arrays = _score_arrays(doc_scores)
    observed = _observed_margin(arrays)
    n = len(doc_scores)
    if observed == 0.0:
        extreme = n_permutations
    else:
        rng = np.random.Generator(np.random.PCG64(seed))
        extreme = 0
        remaining = n_permutations
        while remaining > 0:
            rows = min(remaining, _CHUNK_ROWS)
            masks = rng.random((rows, n)) < 0.5
            extreme += _count_extreme(_margins(masks, arrays), observed)
            remaining -= rows
    p = _p_value(extreme, n_permutations, plus_one)
    return PValueReport(
        observed_stat=observed,
        p_value=p,
        n_permutations=n_permutations,
        seed=seed,
        method=PValueMethod.MONTE_CARLO,
        extreme_count=extreme,
        small_sample_correction=plus_one,
    )


def exact_permutation_test(
    doc_scores: Sequence[DirectionScores],
    max_segments: int = 20,
) -> PValueReport:
    """Exhaustive permutation test over all 2^n swap subsets.

    The identity subset is always enumerated, so extreme_count >= 1 and
    the p-value can never be 0. Refuses documents beyond max_segments;
    subset count doubles per segment.
    """
    n = len(doc_scores)
    if n > max_segments:
        raise TooManySegments(f"{n} segments would need 2^{n} subsets (limit {max_segments})")
    arrays = _score_arrays(doc_scores)
    observed = _observed_margin(arrays)
    total = 1 << n
    if observed == 0.0:
        extreme = total
    else:
        bits = np.arange(n, dtype=np.uint32)
        extreme = 0
        for start in range(0, total, _CHUNK_ROWS):
            idx = np.arange(start, min(start + _CHUNK_ROWS, total), dtype=np.uint32)
            masks = ((idx[:, None] >> bits) & 1).astype(bool)
            extreme += _count_extreme(_margins(masks, arrays), observed)
    return PValueReport(
        observed_stat=observed,
        p_value=_p_value(extreme, total, plus_one=False),
        n_permutations=total,
        seed=0,
        method=PValueMethod.EXHAUSTIVE,
        extreme_count=extreme,
    )


def _p_value(extreme: int, n: int, plus_one: bool) -> float:
    if plus_one:
        return min(1.0, 2.0 * (extreme + 1) / (n + 1))
    return min(1.0, 2.0 * extreme / n)


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalItem:
    """One evaluated pair: languages, gold label, verdict, subset metadata."""

    lang_x: str
    lang_y: str
    gold: GoldDirection
    verdict: DirectionVerdict
    translation_type: TranslationType = TranslationType.UNKNOWN
    dataset_tag: str | None = None
    source_chars: int | None = None


@dataclass(frozen=True)
class ReportRow:
    """Accuracy row for one (translation type, dataset, language pair)."""

    translation_type: TranslationType
    dataset_tag: str | None
    pair: str
    fwd: str
    rev: str
    acc_fwd: float
    acc_rev: float
    avg: float
    bias: float
    n_fwd: int
    n_rev: int
    n_ties: int


@dataclass(frozen=True)
class RatioRow:
    """Prediction-ratio row for items where neither side is original."""

    translation_type: TranslationType
    dataset_tag: str | None
    pair: str
    fwd: str
    rev: str
    ratio_fwd: float
    ratio_rev: float
    n: int


@dataclass(frozen=True)
class EvaluationReport:
    """Per-group accuracy rows, macro rows, and indirect-translation ratios."""

    rows: tuple[ReportRow, ...]
    macro_rows: tuple[ReportRow, ...]
    ratio_rows: tuple[RatioRow, ...] = ()


def _canonical_pair(lang_x: str, lang_y: str) -> tuple[str, str]:
    return (lang_x, lang_y) if lang_x <= lang_y else (lang_y, lang_x)


def _item_goes_forward(item: EvalItem, first: str) -> bool:
    """True when the item's gold original language is the canonical first."""
    origin = item.lang_x if item.gold is GoldDirection.X2Y else item.lang_y
    return origin == first


def _predicted_forward(item: EvalItem, first: str) -> bool:
    origin = item.lang_x if item.verdict.predicted is Predicted.X2Y else item.lang_y
    return origin == first


def build_evaluation_report(items: Iterable[EvalItem]) -> EvaluationReport:
    """Group items and compute the accuracy/bias/ratio tables.

    Accuracy rows need gold labels in {x2y, y2x} for both canonical
    directions of each group; unlabeled (unknown) items are ignored and
    indirect (none) items feed the ratio rows instead.
    """
    directed: dict[tuple[str, str | None, str, str], list[EvalItem]] = {}
    indirect: dict[tuple[str, str | None, str, str], list[EvalItem]] = {}
    for item in items:
        l1, l2 = _canonical_pair(item.lang_x, item.lang_y)
        key = (item.translation_type.wire, item.dataset_tag, l1, l2)
        if item.gold in (GoldDirection.X2Y, GoldDirection.Y2X):
            directed.setdefault(key, []).append(item)
        elif item.gold is GoldDirection.NONE:
            indirect.setdefault(key, []).append(item)

    rows = []
    for key in sorted(directed, key=_group_sort_key):
        type_wire, tag, l1, l2 = key
        group = directed[key]
        fwd_hits = fwd_total = rev_hits = rev_total = ties = 0
        for item in group:
            correct = item.verdict.predicted.value == item.gold.value
            if _item_goes_forward(item, l1):
                fwd_total += 1
                fwd_hits += correct
            else:
                rev_total += 1
                rev_hits += correct
            ties += item.verdict.tie
        for total, direction in ((fwd_total, f"{l1}->{l2}"), (rev_total, f"{l2}->{l1}")):
            if total == 0:
                raise NoItemsForDirection(
                    f"group ({type_wire}, {tag or '-'}, {l1}-{l2}): no items with gold {direction}"
                )
        acc_fwd = fwd_hits / fwd_total
        acc_rev = rev_hits / rev_total
        rows.append(
            ReportRow(
                translation_type=TranslationType.from_wire(type_wire),
                dataset_tag=tag,
                pair=f"{l1}-{l2}",
                fwd=f"{l1}->{l2}",
                rev=f"{l2}->{l1}",
                acc_fwd=acc_fwd,
                acc_rev=acc_rev,
                avg=(acc_fwd + acc_rev) / 2.0,
                bias=directional_bias(acc_fwd, acc_rev),
                n_fwd=fwd_total,
                n_rev=rev_total,
                n_ties=ties,
            )
        )

    macro_rows = []
    for (type_wire, tag), group_rows in _grouped_by_subset(rows):
        acc_fwd = sum(r.acc_fwd for r in group_rows) / len(group_rows)
        acc_rev = sum(r.acc_rev for r in group_rows) / len(group_rows)
        macro_rows.append(
            ReportRow(
                translation_type=TranslationType.from_wire(type_wire),
                dataset_tag=tag,
                pair="macro-avg",
                fwd="",
                rev="",
                acc_fwd=acc_fwd,
                acc_rev=acc_rev,
                avg=sum(r.avg for r in group_rows) / len(group_rows),
                bias=directional_bias(acc_fwd, acc_rev),
                n_fwd=sum(r.n_fwd for r in group_rows),
                n_rev=sum(r.n_rev for r in group_rows),
                n_ties=sum(r.n_ties for r in group_rows),
            )
        )

    ratio_rows = []
    for key in sorted(indirect, key=_group_sort_key):
        type_wire, tag, l1, l2 = key
        group = indirect[key]
        n_fwd = sum(1 for item in group if _predicted_forward(item, l1))
        ratio_rows.append(
            RatioRow(
                translation_type=TranslationType.from_wire(type_wire),
                dataset_tag=tag,
                pair=f"{l1}-{l2}",
                fwd=f"{l1}->{l2}",
                rev=f"{l2}->{l1}",
                ratio_fwd=n_fwd / len(group),
                ratio_rev=(len(group) - n_fwd) / len(group),
                n=len(group),
            )
        )

    return EvaluationReport(rows=tuple(rows), macro_rows=tuple(macro_rows), ratio_rows=tuple(ratio_rows))


def _group_sort_key(key: tuple[str, str | None, str, str]):
    type_wire, tag, l1, l2 = key
    return (type_wire, tag or "", l1, l2)


def _grouped_by_subset(rows: list[ReportRow]):
    seen: dict[tuple[str, str | None], list[ReportRow]] = {}
    for row in rows:
        seen.setdefault((row.translation_type.wire, row.dataset_tag), []).append(row)
    return sorted(seen.items(), key=lambda kv: (kv[0][0], kv[0][1] or ""))
