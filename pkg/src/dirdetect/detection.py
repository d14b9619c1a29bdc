"""Original-translation-direction detection from bidirectional token scores.

Given per-token conditional log-probabilities for both directions of a
segment pair, the detector compares the token-averaged values: the
sequence probability P(y|x) is the product of per-token probabilities,
and averaging in log domain yields the log of its geometric mean,
log P_tok(y|x). If P_tok(y|x) > P_tok(x|y) the predicted original
direction is X->Y, otherwise Y->X (ties fall to Y->X by convention and
carry an explicit tie flag).

Documents pool before comparing: the pooled average is the sum of all
segment log-probability sums divided by the total token count, which
equals the token average of the concatenated segments. All functions
here are pure; every value is immutable and freely shareable.

All accumulation runs in binary64 via math.fsum (exact compensated
summation), which keeps the pooling/concatenation discrepancy well below
1e-12 relative error even for documents with thousands of tokens.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .errors import EmptyDocument, HeterogeneousDocument, InputError, MismatchedPair
from .scoring import TokenScores


class GoldDirection(enum.Enum):
    """Annotated true original direction of a pair.

    NONE marks indirect translations where both sides were translated
    from a third language, so neither side is original.
    """

    X2Y = "x2y"
    Y2X = "y2x"
    NONE = "none"
    UNKNOWN = "unknown"

    @property
    def wire(self) -> str:
        return self.value

    @classmethod
    def from_wire(cls, value: str) -> GoldDirection:
        try:
            return cls(value)
        except ValueError:
            raise InputError(f"unknown gold direction {value!r}") from None


class TranslationType(enum.Enum):
    """Provenance category of the translated side."""

    HT = "HT"
    NMT = "NMT"
    PRE_NMT = "pre-NMT"
    LLM = "LLM"
    UNKNOWN = "unknown"

    @property
    def wire(self) -> str:
        return self.value

    @classmethod
    def from_wire(cls, value: str) -> TranslationType:
        try:
            return cls(value)
        except ValueError:
            raise InputError(f"unknown translation type {value!r}") from None


class Predicted(enum.Enum):
    """Predicted original direction: which side was authored first."""

    X2Y = "x2y"
    Y2X = "y2x"


@dataclass(frozen=True)
class SegmentPair:
    """One aligned sentence pair with its gold metadata."""

    pair_id: str
    doc_id: str
    text_x: str
    text_y: str
    lang_x: str
    lang_y: str
    gold_direction: GoldDirection = GoldDirection.UNKNOWN
    translation_type: TranslationType = TranslationType.UNKNOWN
    system_id: str | None = None
    dataset_tag: str | None = None

    def __post_init__(self):
        if self.lang_x == self.lang_y:
            raise InputError(f"pair {self.pair_id}: lang_x equals lang_y ({self.lang_x!r})")
        if not self.text_x.strip() or not self.text_y.strip():
            raise InputError(f"pair {self.pair_id}: empty text")


@dataclass(frozen=True)
class DirectionScores:
    """Sums, token counts and averages for both directions of one item.

    Raw sums and counts are kept alongside the averages so alternative
    length normalizations can be studied without an API change.
    """

    sum_xy: float
    count_xy: int
    sum_yx: float
    count_yx: int
    logp_tok_xy: float = field(init=False)
    logp_tok_yx: float = field(init=False)

    def __post_init__(self):
        if self.count_xy < 1 or self.count_yx < 1:
            raise InputError("token counts must be positive")
        for name in ("sum_xy", "sum_yx"):
            v = getattr(self, name)
            if not math.isfinite(v) or v > 0.0:
                raise InputError(f"{name} must be finite and <= 0, got {v!r}")
        object.__setattr__(self, "logp_tok_xy", self.sum_xy / self.count_xy)
        object.__setattr__(self, "logp_tok_yx", self.sum_yx / self.count_yx)

    def swapped(self) -> DirectionScores:
        return DirectionScores(
            sum_xy=self.sum_yx, count_xy=self.count_yx,
            sum_yx=self.sum_xy, count_yx=self.count_xy,
        )


@dataclass(frozen=True)
class DirectionVerdict:
    """Predicted original direction with its evidence margin.

    log_margin is log P_tok(y|x) - log P_tok(x|y); prob_ratio is its exp,
    so prob_ratio > 1 exactly when the prediction is X2Y. A tie (margin
    exactly zero) predicts Y2X, the rule's fallback branch.
    """

    predicted: Predicted
    tie: bool
    log_margin: float
    prob_ratio: float

    def __post_init__(self):
        if self.tie != (self.log_margin == 0.0):
            raise InputError("tie flag must mirror log_margin == 0")
        expected = Predicted.X2Y if self.log_margin > 0.0 else Predicted.Y2X
        if self.predicted is not expected:
            raise InputError("predicted direction contradicts log_margin")


@dataclass(frozen=True)
class Document:
    """Ordered 1:1-aligned segment pairs sharing one doc id and gold label."""

    doc_id: str
    pairs: tuple[SegmentPair, ...]

    def __post_init__(self):
        pairs = tuple(self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if not pairs:
            raise EmptyDocument(f"document {self.doc_id!r} has no segments")
        first = pairs[0]
        for p in pairs:
            if p.doc_id != self.doc_id:
                raise InputError(f"pair {p.pair_id} belongs to doc {p.doc_id!r}, not {self.doc_id!r}")
            if (p.lang_x, p.lang_y) != (first.lang_x, first.lang_y):
                raise HeterogeneousDocument(f"document {self.doc_id}: mixed language pairs")
            if p.gold_direction is not first.gold_direction:
                raise HeterogeneousDocument(f"document {self.doc_id}: mixed gold directions")

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def lang_x(self) -> str:
        return self.pairs[0].lang_x

    @property
    def lang_y(self) -> str:
        return self.pairs[0].lang_y

    @property
    def gold_direction(self) -> GoldDirection:
        return self.pairs[0].gold_direction


# ---------------------------------------------------------------------------
# Sentence level
# ---------------------------------------------------------------------------


def seq_logprob(ts: TokenScores) -> float:
    """Log of the full sequence probability: sum of token log-probabilities."""
    return math.fsum(ts.token_logprobs)


def avg_token_logprob(ts: TokenScores) -> float:
    """log P_tok: token-averaged log-probability (log of the geometric mean)."""
    return seq_logprob(ts) / len(ts)


def _verdict_from_margin(log_margin: float) -> DirectionVerdict:
    tie = log_margin == 0.0
    predicted = Predicted.X2Y if log_margin > 0.0 else Predicted.Y2X
    try:
        ratio = math.exp(log_margin)
    except OverflowError:
        ratio = math.inf
    return DirectionVerdict(predicted=predicted, tie=tie, log_margin=log_margin, prob_ratio=ratio)


def direction_scores(xy: TokenScores, yx: TokenScores) -> DirectionScores:
    """Bundle both directions' sums and counts for one pair."""
    _check_opposite(xy, yx)
    return DirectionScores(
        sum_xy=seq_logprob(xy), count_xy=len(xy),
        sum_yx=seq_logprob(yx), count_yx=len(yx),
    )


def _check_opposite(xy: TokenScores, yx: TokenScores) -> None:
    if xy.src_lang != yx.tgt_lang or xy.tgt_lang != yx.src_lang:
        raise MismatchedPair(
            "scores do not cover opposite directions: "
            f"{xy.src_lang}->{xy.tgt_lang} vs {yx.src_lang}->{yx.tgt_lang}"
        )


def verdict_from_scores(scores: DirectionScores) -> DirectionVerdict:
    """Apply the decision rule to one pair's (or one pool's) score bundle."""
    return _verdict_from_margin(scores.logp_tok_xy - scores.logp_tok_yx)


def detect_sentence(xy: TokenScores, yx: TokenScores) -> DirectionVerdict:
    """Predict the original direction of one pair.

    X2Y when P_tok(y|x) > P_tok(x|y), otherwise Y2X (tie flagged).
    """
    _check_opposite(xy, yx)
    return _verdict_from_margin(avg_token_logprob(xy) - avg_token_logprob(yx))


# ---------------------------------------------------------------------------
# Document level
# ---------------------------------------------------------------------------


def doc_avg_token_logprob(segments: list[TokenScores]) -> float:
    """Pooled token average across segments of one direction.

    Token-count weighted: (sum of all segment sums) / (total token count),
    which equals the token average of the concatenation. This is not the
    mean of per-segment averages; the two differ whenever lengths differ.
    """
    if not segments:
        raise EmptyDocument("no segments to pool")
    total = math.fsum(seq_logprob(ts) for ts in segments)
    count = sum(len(ts) for ts in segments)
    return total / count


def pooled_direction_scores(doc_scores: list[DirectionScores]) -> DirectionScores:
    """Pool per-segment sums and counts over a document, per direction."""
    if not doc_scores:
        raise EmptyDocument("no segments to pool")
    return DirectionScores(
        sum_xy=math.fsum(s.sum_xy for s in doc_scores),
        count_xy=sum(s.count_xy for s in doc_scores),
        sum_yx=math.fsum(s.sum_yx for s in doc_scores),
        count_yx=sum(s.count_yx for s in doc_scores),
    )


def detect_document(doc_scores: list[DirectionScores]) -> DirectionVerdict:
    """Apply the sentence rule to the two pooled document-level averages."""
    return verdict_from_scores(pooled_direction_scores(doc_scores))
