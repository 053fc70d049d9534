"""limnet-export command line entry point."""

from __future__ import annotations

import argparse
import sys

from .encoders import POOLING_MODES, SUBWORD_PASSTHROUGH, build_encoder
from .export import ExportError, export


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="limnet-export")
    parser.add_argument("--texts", required=True, help="JSON-lines input documents")
    parser.add_argument(
        "--model",
        default="hash-64",
        help="hash-<dim> for the offline encoder, or a transformers model id/path",
    )
    parser.add_argument("--out", required=True, help="output .limd path")
    parser.add_argument("--pooling", choices=list(POOLING_MODES), default=SUBWORD_PASSTHROUGH)
    parser.add_argument(
        "--strict",
        action="store_true",
        help="fail instead of dropping sentences that tokenize to nothing",
    )
    args = parser.parse_args(argv)
    try:
        encoder = build_encoder(args.model)
        manifest = export(args.texts, encoder, args.out, args.pooling, strict=args.strict)
    except (ExportError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"wrote {args.out}: {manifest['documents']} documents, "
        f"dim {manifest['dim']}, model {manifest['model']}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
