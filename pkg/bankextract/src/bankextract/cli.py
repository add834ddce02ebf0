"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 I/O or format error.
"""

from __future__ import annotations

import argparse
import sys

from .errors import BankFormatError, ConfigurationError
from .extract import ExtractSpec, extract
from .verify import parse_bank


def _parse_blocks(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ConfigurationError(f"bad block list {text!r}, expected e.g. 7,8") from None


def _cmd_extract(args) -> int:
    spec = ExtractSpec(
        image_root=args.images,
        out_path=args.out,
        backbone=args.backbone,
        weights=args.weights,
        blocks=_parse_blocks(args.blocks),
        pooled=args.pooled,
        device=args.device,
        batch_size=args.batch,
    )
    report = extract(spec)
    for line in report.lines():
        print(line)
    return 0


def _cmd_verify(args) -> int:
    report = parse_bank(args.bank)
    for line in report.lines():
        print(line)
    if report.nan_count:
        print(f"error: {report.nan_count} NaN values in payload", file=sys.stderr)
        return 3
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bankextract",
        description="Dump pooled backbone activations for labeled images into a feature bank",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="forward images and write a bank")
    p.add_argument("--images", required=True, help="root directory, one subdirectory per class")
    p.add_argument("--out", required=True)
    p.add_argument("--backbone", default="resnet18")
    p.add_argument(
        "--weights",
        default="pretrained",
        help="'pretrained', 'random' (seeded, deterministic), or a state-dict path",
    )
    p.add_argument("--blocks", default="7,8", help="1-based residual block indices")
    p.add_argument("--pooled", type=int, default=3)
    p.add_argument("--device", default="cpu")
    p.add_argument("--batch", type=int, default=16)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("verify", help="re-read a bank and report its contents")
    p.add_argument("bank")
    p.set_defaults(func=_cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BankFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
