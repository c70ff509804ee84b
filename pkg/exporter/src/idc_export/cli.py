"""Command-line entry point: image folders in, embedding CSV out."""

import argparse
import sys

from .errors import ExportError
from .export import ExportJob, export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="idc-export",
        description="Run a frozen image backbone over class-labeled source "
                    "folders and unlabeled target folders; write the "
                    "embedding CSV consumed by the idc tools.",
    )
    parser.add_argument("--source", required=True,
                        help="root directory with one subfolder per class")
    parser.add_argument("--target", required=True,
                        help="root directory of unlabeled images")
    parser.add_argument("--out", required=True, help="output CSV path")
    parser.add_argument("--batch", type=int, default=16,
                        help="images per backbone batch (default 16)")
    args = parser.parse_args(argv)
    job = ExportJob(
        source_root=args.source,
        target_root=args.target,
        out_path=args.out,
        batch_size=args.batch,
    )
    try:
        result = export(job)
    except (ExportError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(
        f"wrote {result.written} rows ({result.n_classes} classes) to "
        f"{job.out_path}; skipped {result.skipped} unreadable"
    )
    return 0


def console() -> None:
    raise SystemExit(main())
