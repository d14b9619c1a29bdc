"""NDJSON scoring protocol: line encoding and decoding.

One JSON object per line, UTF-8. The engine opens with a handshake:

    {"op": "hello", "protocol": 1}

which the scorer answers by echoing the line plus its identity:

    {"op": "hello", "protocol": 1, "scorer_id": "..."}

Scoring requests carry {"id", "src_lang", "tgt_lang", "source",
"target"}; each is answered by either {"id", "token_logprobs": [...]}
(optionally with a parallel "tokens" list) or {"id", "error": "..."}.

Encoding is deterministic: fixed key order, ensure_ascii=False, default
float repr (shortest round-trip), so identical payloads serialize to
identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

PROTOCOL_VERSION = 1


class ProtocolError(ValueError):
    """A line does not conform to the wire protocol."""


@dataclass(frozen=True)
class Request:
    id: str
    src_lang: str
    tgt_lang: str
    source: str
    target: str


def parse_line(line: str) -> dict:
    try:
        obj = json.loads(line)
    except ValueError as exc:
        raise ProtocolError(f"not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError("line is not a JSON object")
    return obj


def is_hello(obj: dict) -> bool:
    return obj.get("op") == "hello"


def check_hello(obj: dict) -> None:
    if obj.get("protocol") != PROTOCOL_VERSION:
        raise ProtocolError(
            f"unsupported protocol version {obj.get('protocol')!r}, "
            f"this scorer speaks {PROTOCOL_VERSION}"
        )


def parse_request(obj: dict) -> Request:
    missing = [k for k in ("id", "src_lang", "tgt_lang", "source", "target") if k not in obj]
    if missing:
        raise ProtocolError(f"request missing fields: {missing}")
    for key in ("id", "src_lang", "tgt_lang", "source", "target"):
        if not isinstance(obj[key], str):
            raise ProtocolError(f"request field {key} must be a string")
    return Request(
        id=obj["id"], src_lang=obj["src_lang"], tgt_lang=obj["tgt_lang"],
        source=obj["source"], target=obj["target"],
    )


def encode_hello(scorer_id: str) -> str:
    return json.dumps(
        {"op": "hello", "protocol": PROTOCOL_VERSION, "scorer_id": scorer_id},
        ensure_ascii=False,
    )


def encode_response(request_id: str, token_logprobs: list[float],
                    tokens: list[str] | None = None) -> str:
    obj: dict = {"id": request_id, "token_logprobs": token_logprobs}
    if tokens is not None:
        obj["tokens"] = tokens
    return json.dumps(obj, ensure_ascii=False)


def encode_error(request_id: str, message: str) -> str:
    return json.dumps({"id": request_id, "error": message}, ensure_ascii=False)


def decode_response(line: str) -> tuple[str, list[float] | None, list[str] | None, str | None]:
    """Split a response line into (id, token_logprobs, tokens, error)."""
    obj = parse_line(line)
    if not isinstance(obj.get("id"), str):
        raise ProtocolError("response must carry a string id")
    error = obj.get("error")
    logprobs = obj.get("token_logprobs")
    if (logprobs is None) == (error is None):
        raise ProtocolError("response must carry exactly one of token_logprobs/error")
    if error is not None:
        if not isinstance(error, str):
            raise ProtocolError("error must be a string")
        return obj["id"], None, None, error
    if not isinstance(logprobs, list) or not all(isinstance(v, (int, float)) for v in logprobs):
        raise ProtocolError("token_logprobs must be a list of numbers")
    tokens = obj.get("tokens")
    if tokens is not None and (
        not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens)
    ):
        raise ProtocolError("tokens must be a list of strings")
    return obj["id"], [float(v) for v in logprobs], tokens, None
