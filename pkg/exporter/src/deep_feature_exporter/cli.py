"""Command-line front end for the feature exporter."""

import argparse
import json
import os
import sys

import torch

from . import __version__
from .exporter import ConfigError, EmptyDataset, ExporterConfig, ExportError, export

THREADS_ENV = "DEEP_EXPORT_THREADS"


def _threads_default():
    raw = os.environ.get(THREADS_ENV, "")
    try:
        value = int(raw)
    except ValueError:
        return 1
    return value if value >= 1 else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="export",
        description="Embed object-view images with a CNN backbone and write a feature CSV.",
    )
    parser.add_argument("--images", help="root directory of view images")
    parser.add_argument("--model", default="mobilenet_v3_small")
    parser.add_argument("--resolution", type=int, default=150)
    parser.add_argument("--pooling", default="AVG", help="AVG or MAX across a view's images")
    parser.add_argument("--layer", default="head_input")
    parser.add_argument("--out", help="feature CSV path")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument(
        "--pretrained",
        action="store_true",
        help="download pretrained weights instead of the seeded random init",
    )
    parser.add_argument("--json", action="store_true", help="machine-readable run summary")
    parser.add_argument("--version", action="store_true")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.version:
        print(__version__)
        return 0
    if not args.images or not args.out:
        print("error: --images and --out are required", file=sys.stderr)
        return 2
    threads = _threads_default() if args.threads is None else args.threads
    if threads < 1:
        print(f"error: --threads must be >= 1, got {threads}", file=sys.stderr)
        return 2
    torch.set_num_threads(threads)
    try:
        cfg = ExporterConfig(
            model_name=args.model,
            input_resolution=args.resolution,
            pooling=args.pooling,
            layer=args.layer,
            pretrained=args.pretrained,
            seed=args.seed,
        )
        rows, skips = export(args.images, cfg, out_path=args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EmptyDataset, ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    summary = {
        "views": len(rows),
        "dim": len(rows[0][3]),
        "skipped": len(skips),
        "model": cfg.model_name,
        "pooling": cfg.pooling,
        "resolution": cfg.input_resolution,
        "out": args.out,
    }
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        print(
            f"wrote {summary['views']} views ({summary['dim']} dims), "
            f"{summary['skipped']} skipped -> {args.out}"
        )
    return 0


def console():
    sys.exit(main())


if __name__ == "__main__":
    console()
