"""Translation direction detection from bidirectional NMT token scores.

The package compares token-averaged conditional translation
probabilities in both directions of a parallel text to decide which
side is the original, evaluates that detector against gold-labelled
corpora, and attaches permutation-test significance levels to
single-document verdicts.
"""

from .detection import (
    DirectionScores,
    DirectionVerdict,
    Document,
    GoldDirection,
    Predicted,
    SegmentPair,
    TranslationType,
    avg_token_logprob,
    detect_document,
    detect_sentence,
    direction_scores,
    doc_avg_token_logprob,
    pooled_direction_scores,
    seq_logprob,
    verdict_from_scores,
)
from .corpus import (
    Corpus,
    CorpusStats,
    DirectionStats,
    FilterPredicate,
    ImportMeta,
    corpus_stats,
    filter_corpus,
    import_aligned_files,
    load_corpus,
    save_corpus,
)
from .errors import (
    DirDetectError,
    InputError,
    ScoringError,
)
from .scoring import (
    CacheKey,
    CacheOnlyScorer,
    DirectoryCache,
    MemoryCache,
    ScoreRequest,
    ScoreResponse,
    ScoreStore,
    ScorerBackend,
    StoreScorer,
    SubprocessScorer,
    TokenScores,
    canonical_text,
    load_score_file,
    score_bidirectional,
    score_pair,
    score_requests,
)
from .stats import (
    DirectionAccuracy,
    EvalItem,
    EvaluationReport,
    PValueMethod,
    PValueReport,
    RatioRow,
    ReportRow,
    accuracy_by_direction,
    build_evaluation_report,
    directional_bias,
    exact_permutation_test,
    length_bucket_accuracy,
    permutation_test,
    prediction_ratio,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
