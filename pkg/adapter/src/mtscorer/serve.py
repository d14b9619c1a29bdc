"""Stdio serving loop: one request at a time, responses flushed per line.

The engine may queue many request lines before reading responses; the
loop answers them in arrival order, which trivially satisfies the
"response ids are a permutation of request ids" contract.
"""

from __future__ import annotations

import sys

from . import protocol
from .adapter import AdapterConfig, ModelAdapter, RequestError


def serve(config: AdapterConfig, stdin=None, stdout=None, stderr=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr

    adapter = ModelAdapter(config)  # ModelLoadError propagates: fatal

    def emit(line: str) -> None:
        stdout.write(line + "\n")
        stdout.flush()

    for line in stdin:
        if not line.strip():
            continue
        try:
            obj = protocol.parse_line(line)
        except protocol.ProtocolError as exc:
            print(f"mtscorer: ignoring malformed line: {exc}", file=stderr)
            continue
        if protocol.is_hello(obj):
            # always answer with our own version; the engine validates
            emit(protocol.encode_hello(adapter.scorer_id))
            continue
        try:
            request = protocol.parse_request(obj)
        except protocol.ProtocolError as exc:
            rid = obj.get("id")
            if isinstance(rid, str) and rid:
                emit(protocol.encode_error(rid, str(exc)))
            else:
                print(f"mtscorer: unanswerable request: {exc}", file=stderr)
            continue
        try:
            scored = adapter.score(
                request.src_lang, request.tgt_lang, request.source, request.target
            )
        except RequestError as exc:
            emit(protocol.encode_error(request.id, str(exc)))
            continue
        emit(protocol.encode_response(
            request.id, list(scored.token_logprobs), list(scored.tokens)
        ))
    return 0
