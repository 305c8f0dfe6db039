"""Command line: drumpipe-extract --in <dir> --out <prefix> [--encoder id]."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import ExtractorError, __version__
from .encoders import DEFAULT_ENCODER, available_encoders
from .extract import ExtractionJob, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drumpipe-extract",
        description="Extract audio embeddings into the drumpipe store format")
    parser.add_argument("--version", action="version",
                        version=f"drumpipe-extract {__version__}")
    parser.add_argument("--in", dest="input_dir", required=True,
                        help="directory of one-shot audio files (.wav)")
    parser.add_argument("--out", dest="out_prefix", required=True,
                        help="output prefix; writes <prefix>.manifest.json and <prefix>.f32")
    parser.add_argument("--encoder", default=DEFAULT_ENCODER,
                        help=f"encoder id (available: {', '.join(available_encoders())})")
    parser.add_argument("--gold-labels", dest="gold_labels",
                        help="optional JSON {sample_id: instrument_id} marking the gold set")
    parser.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        gold = {}
        if args.gold_labels:
            gold = {str(k): int(v)
                    for k, v in json.loads(Path(args.gold_labels).read_text()).items()}
        job = ExtractionJob.from_dir(args.input_dir, args.out_prefix,
                                     encoder_id=args.encoder,
                                     batch_size=args.batch_size, gold_labels=gold)
        manifest = extract(job)
    except (ExtractorError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"extracted {manifest['count']} embeddings "
          f"({len(manifest['skipped'])} skipped) with {manifest['encoder']} "
          f"-> {args.out_prefix}.manifest.json / .f32")
    return 0


if __name__ == "__main__":
    sys.exit(main())
