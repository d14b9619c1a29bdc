"""Command-line entry points: `mtscorer serve MODEL`, `mtscorer self-test MODEL`."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("model", help="model identifier or local model directory")
    p.add_argument("--device", default="cpu", help="torch device spec (default cpu)")
    p.add_argument("--max-length", type=int, default=512,
                   help="reject inputs longer than this many tokens (default 512)")
    p.add_argument("--exclude-eos", action="store_true",
                   help="drop the end-of-sequence term from the returned scores")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtscorer",
        description=(
            "Serve per-token forced-decoding log-probabilities from a "
            "multilingual translation model over the NDJSON stdio protocol."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("serve", "self-test"):
        p = sub.add_parser(name)
        _add_model_args(p)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    # heavy imports deferred until after argument errors have had their say
    from .adapter import AdapterConfig, ModelLoadError

    config = AdapterConfig(
        model_id=args.model,
        device=args.device,
        max_length=args.max_length,
        include_eos=not args.exclude_eos,
    )
    try:
        if args.command == "serve":
            from .serve import serve

            return serve(config)
        from .selftest import run_self_test

        return run_self_test(config)
    except ModelLoadError as exc:
        print(f"mtscorer: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
