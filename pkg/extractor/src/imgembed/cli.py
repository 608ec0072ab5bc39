"""The ``extract`` command.

Default invocation runs the extraction pipeline; the ``make-lt``
subcommand derives a long-tailed labels CSV from a balanced one.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .backbones import available
from .extract import ExtractSpec, extract
from .lt import make_long_tail


def _extract_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="extract")
    parser.add_argument("--images", type=Path, required=True,
                        help="root directory of image files")
    parser.add_argument("--labels", type=Path, required=True,
                        help="CSV with columns path,class_name")
    parser.add_argument("--backbone", required=True,
                        help=f"one of: {', '.join(available())}")
    parser.add_argument("--out", type=Path, required=True,
                        help="output manifest path")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--no-normalize", action="store_true")
    parser.add_argument("--test-fraction", type=float, default=0.2)
    parser.add_argument("--seed", type=int, default=0)
    return parser


def _lt_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="extract make-lt")
    parser.add_argument("--labels", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--imbalance", type=float, required=True,
                        help="ratio between largest and smallest class")
    parser.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    argv = sys.argv[1:] if argv is None else argv
    if argv and argv[0] == "make-lt":
        args = _lt_parser().parse_args(argv[1:])
        counts = make_long_tail(args.labels, args.out, args.imbalance, args.seed)
        total = sum(counts.values())
        print(f"wrote {args.out}: {total} rows over {len(counts)} classes "
              f"(largest {max(counts.values())}, smallest {min(counts.values())})")
        return 0
    args = _extract_parser().parse_args(argv)
    spec = ExtractSpec(
        images_root=args.images,
        labels_csv=args.labels,
        backbone=args.backbone,
        output_manifest=args.out,
        batch_size=args.batch_size,
        normalize=not args.no_normalize,
        test_fraction=args.test_fraction,
        seed=args.seed,
    )
    manifest = extract(spec)
    print(f"wrote {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
