"""CLI: run the extractor over a manifest, or self-check a feature directory."""

from __future__ import annotations

import argparse
import json
import sys

from .extract import ExtractError, ExtractorConfig, extract_features, self_check
from .models import ModelError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vprf-extract",
        description="Extract per-image CLS and patch-token features into VPRF files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="run the model over a manifest")
    p.add_argument("--manifest", required=True, help="line-delimited JSON manifest")
    p.add_argument("--out", required=True, help="output directory for <id>.vprf files")
    p.add_argument("--model", default="toy-vit", help="toy-vit | zero | dinov2:<variant>")
    p.add_argument("--resize", type=int, default=32, help="square input side (patch multiple)")
    p.add_argument("--batch", type=int, default=8, help="inference batch size")
    p.add_argument("--device", default="cpu")

    p = sub.add_parser("self-check", help="verify a feature directory against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "extract":
            config = ExtractorConfig(
                manifest=args.manifest,
                out_dir=args.out,
                model=args.model,
                resize=args.resize,
                device=args.device,
                batch_size=args.batch,
            )
            report = extract_features(config)
            print(
                f"wrote {len(report.written)} feature files "
                f"(dim={report.dim}, n_patches={report.n_patches}) to {args.out}"
            )
            if report.skipped:
                print(f"skipped {len(report.skipped)} images:", file=sys.stderr)
                for ident, reason in report.skipped:
                    print(f"  {ident}: {reason}", file=sys.stderr)
                return 1
            return 0
        result = self_check(args.out, args.manifest)
        print(json.dumps(result, indent=2))
        return 0 if result["status"] == "ok" else 1
    except (ExtractError, ModelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
