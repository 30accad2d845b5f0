"""cafo-export command line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .export import ExportFailedError, ExportJob, export
from .models import UnknownModelError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cafo-export",
        description="Run detector/segmenter/backbone models over image "
                    "patches and emit detections, masks and feature tensors.")
    parser.add_argument("--images", required=True, help="input image directory")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--detector", default="stub")
    parser.add_argument("--segmenter", default="stub")
    parser.add_argument("--backbone", default="stub",
                        help="'stub' or 'torchvision:<model>'")
    parser.add_argument("--patch-size", type=int, default=833)
    parser.add_argument("--stride", type=int, default=104)
    parser.add_argument("--feat-dim", type=int, default=16)
    parser.add_argument("--threads", type=int, default=1)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    image_dir = Path(args.images)
    if not image_dir.is_dir():
        print(f"error: not a directory: {image_dir}", file=sys.stderr)
        return 2
    job = ExportJob(image_dir=image_dir, out_dir=Path(args.out),
                    detector=args.detector, segmenter=args.segmenter,
                    backbone=args.backbone, patch_size=args.patch_size,
                    stride=args.stride, feat_dim=args.feat_dim,
                    threads=args.threads)
    try:
        manifest = export(job)
    except UnknownModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExportFailedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
