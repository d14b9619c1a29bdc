"""Built-in health battery: prints one pass/fail line per check.

Covers protocol encode/decode round trips, handshake identity, score
bounds, determinism, token-count stability, agreement between the
per-token sum and an independently computed single-pass sequence score,
and a fault-injection check proving the bound validator actually
catches a model that emits NaN.
"""

from __future__ import annotations

import contextlib
import math
import sys
from dataclasses import dataclass

from . import protocol
from .adapter import AdapterConfig, ModelAdapter

# battery inputs; codes chosen to exist in every supported family
SAMPLES = (
    ("de", "en", "Der Zug kommt pünktlich an.", "The train arrives on time."),
    ("en", "de", "She reads a book every evening.", "Sie liest jeden Abend ein Buch."),
    ("en", "fr", "The weather is nice today.", "Il fait beau aujourd'hui."),
)

SEQ_SCORE_TOLERANCE = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def validate_scores(values) -> list[str]:
    """Bound check: every entry must be a finite log-probability (<= 0)."""
    problems = []
    for j, v in enumerate(values):
        if not math.isfinite(v):
            problems.append(f"entry {j} is {v!r}")
        elif v > 0.0:
            problems.append(f"entry {j} is positive ({v!r})")
    if not values:
        problems.append("empty score list")
    return problems


@contextlib.contextmanager
def _nan_fault(adapter: ModelAdapter):
    """Patch the model forward pass to corrupt its logits with NaN."""
    model = adapter._model
    original = model.forward

    def corrupted(*args, **kwargs):
        out = original(*args, **kwargs)
        out.logits.fill_(float("nan"))
        return out

    model.forward = corrupted
    try:
        yield
    finally:
        model.forward = original


def _check_protocol_round_trip() -> CheckResult:
    request = protocol.Request(
        id="r1", src_lang="de", tgt_lang="en",
        source="Grüße, „Welt“!", target="Greetings, \"world\"!",
    )
    encoded = (
        '{"id": "r1", "src_lang": "de", "tgt_lang": "en", '
        '"source": "Grüße, „Welt“!", "target": "Greetings, \\"world\\"!"}'
    )
    back = protocol.parse_request(protocol.parse_line(encoded))
    ok = back == request

    line = protocol.encode_response("r1", [-0.5, -1.25], ["▁a", "</s>"])
    rid, logprobs, tokens, error = protocol.decode_response(line)
    ok = ok and (rid, logprobs, tokens, error) == ("r1", [-0.5, -1.25], ["▁a", "</s>"], None)

    err_line = protocol.encode_error("r2", "boom")
    rid, logprobs, tokens, error = protocol.decode_response(err_line)
    ok = ok and (rid, logprobs, tokens, error) == ("r2", None, None, "boom")
    return CheckResult("protocol round trip", ok)


def _check_handshake(adapter: ModelAdapter) -> CheckResult:
    obj = protocol.parse_line(protocol.encode_hello(adapter.scorer_id))
    ok = (
        protocol.is_hello(obj)
        and obj.get("protocol") == protocol.PROTOCOL_VERSION
        and obj.get("scorer_id") == adapter.config.model_id
    )
    return CheckResult("handshake identity", ok, f"scorer_id={obj.get('scorer_id')!r}")


def _check_bounds(adapter: ModelAdapter) -> CheckResult:
    problems = []
    for src_lang, tgt_lang, source, target in SAMPLES:
        scored = adapter.score(src_lang, tgt_lang, source, target)
        problems += validate_scores(scored.token_logprobs)
        if len(scored.token_logprobs) != len(scored.tokens):
            problems.append("tokens/logprobs length mismatch")
        if len(scored.token_logprobs) != adapter.token_count(tgt_lang, target):
            problems.append("length differs from tokenizer count")
    return CheckResult(
        "score bounds and lengths", not problems, "; ".join(problems[:3])
    )


def _check_determinism(adapter: ModelAdapter) -> CheckResult:
    for i, (src_lang, tgt_lang, source, target) in enumerate(SAMPLES):
        first = adapter.score(src_lang, tgt_lang, source, target)
        second = adapter.score(src_lang, tgt_lang, source, target)
        line_a = protocol.encode_response(f"d{i}", list(first.token_logprobs), list(first.tokens))
        line_b = protocol.encode_response(f"d{i}", list(second.token_logprobs), list(second.tokens))
        if line_a.encode() != line_b.encode():
            return CheckResult("determinism", False, f"sample {i} differs across calls")
    return CheckResult("determinism", True, "byte-identical responses on repeat calls")


def _check_token_count_stability(adapter: ModelAdapter) -> CheckResult:
    for tgt_lang, target in {(s[1], s[3]) for s in SAMPLES}:
        if adapter.token_count(tgt_lang, target) != adapter.token_count(tgt_lang, target):
            return CheckResult("token count stability", False, repr(target))
    return CheckResult("token count stability", True)


def _check_sequence_agreement(adapter: ModelAdapter) -> CheckResult:
    worst = 0.0
    for src_lang, tgt_lang, source, target in SAMPLES:
        scored = adapter.score(src_lang, tgt_lang, source, target)
        one_pass = adapter.sequence_logprob(src_lang, tgt_lang, source, target)
        worst = max(worst, abs(math.fsum(scored.token_logprobs) - one_pass))
    return CheckResult(
        "per-token sum vs one-pass sequence score",
        worst <= SEQ_SCORE_TOLERANCE,
        f"max abs diff {worst:.2e} (tolerance {SEQ_SCORE_TOLERANCE:g})",
    )


def _check_fault_detection(adapter: ModelAdapter) -> CheckResult:
    src_lang, tgt_lang, source, target = SAMPLES[0]
    with _nan_fault(adapter):
        scored = adapter.score(src_lang, tgt_lang, source, target)
        caught = bool(validate_scores(scored.token_logprobs))
    healthy_again = not validate_scores(
        adapter.score(src_lang, tgt_lang, source, target).token_logprobs
    )
    return CheckResult(
        "bound check catches injected NaN",
        caught and healthy_again,
        "validator flagged corrupted logits" if caught else "NaN slipped through",
    )


def run_self_test(config: AdapterConfig, out=None) -> int:
    """Run the battery, print one line per check, return a process code."""
    out = out if out is not None else sys.stdout
    results = [_check_protocol_round_trip()]
    adapter = ModelAdapter(config)  # ModelLoadError propagates: fatal
    results += [
        _check_handshake(adapter),
        _check_bounds(adapter),
        _check_determinism(adapter),
        _check_token_count_stability(adapter),
        _check_sequence_agreement(adapter),
        _check_fault_detection(adapter),
    ]
    for result in results:
        line = f"[{'PASS' if result.ok else 'FAIL'}] {result.name}"
        if result.detail:
            line += f": {result.detail}"
        print(line, file=out)
    failed = sum(not r.ok for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed", file=out)
    return 0 if failed == 0 else 1
