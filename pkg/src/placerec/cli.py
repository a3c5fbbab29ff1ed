"""Command-line entry point: composable pipeline stages plus a synthetic world generator."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_run_config, save_run_config
from .pipeline import PipelineError, cmd_eval, cmd_index, cmd_refine, cmd_retrieve, cmd_run
from .synth import generate_world

log = logging.getLogger(__name__)


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="run configuration file (YAML)")
    parser.add_argument("--manifest", help="dataset manifest path")
    parser.add_argument("--features", help="directory of <id>.vprf feature files")
    parser.add_argument("--out-dir", help="directory for stage outputs")
    parser.add_argument("--aggregator", choices=["cls", "gem"], help="descriptor aggregation")
    parser.add_argument("--p", type=float, help="generalized-mean exponent")
    parser.add_argument("--k", type=int, help="coarse candidates per query")
    parser.add_argument("--scene", choices=["indoor", "outdoor"], help="scene kind for prompts")
    parser.add_argument(
        "--refiner",
        help="live or mock:<identity|distance_oracle|similarity_oracle|scripted>",
    )
    parser.add_argument("--transcript", help="transcript file for mock:scripted")
    parser.add_argument("--model", help="refiner model id")
    parser.add_argument("--base-url", help="refiner endpoint base URL")
    parser.add_argument("--cache-dir", help="response cache directory")
    parser.add_argument("--threshold-m", type=float, help="geographic correctness threshold")
    parser.add_argument("--ks", help="comma-separated recall cutoffs, e.g. 1,5")
    parser.add_argument("--subsample", type=int, help="evaluate only this many queries")
    parser.add_argument("--seed", type=int, help="seed for subsampling")
    parser.add_argument("--workers", type=int, help="parallel workers for refine")


def _overrides(args: argparse.Namespace) -> dict:
    ks = None
    if args.ks is not None:
        ks = [int(tok) for tok in str(args.ks).replace(",", " ").split()]
    return {
        "manifest": args.manifest,
        "features": args.features,
        "out_dir": args.out_dir,
        "aggregator": args.aggregator,
        "p": args.p,
        "k": args.k,
        "scene_kind": args.scene,
        "refiner": args.refiner,
        "transcript": args.transcript,
        "model": args.model,
        "base_url": args.base_url,
        "cache_dir": args.cache_dir,
        "threshold_m": args.threshold_m,
        "ks": ks,
        "subsample": args.subsample,
        "seed": args.seed,
        "workers": args.workers,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="placerec",
        description="Training-free place recognition: coarse descriptor retrieval plus MLLM reranking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("index", "build the reference descriptor index"),
        ("retrieve", "run top-k retrieval for all queries"),
        ("refine", "rerank retrieval results with the configured refiner"),
        ("eval", "score coarse and refined rankings"),
        ("run", "run index, retrieve, refine, and eval in sequence"),
    ):
        p = sub.add_parser(name, help=text)
        _add_common_flags(p)
    p = sub.add_parser("synth", help="generate a deterministic synthetic dataset")
    p.add_argument("--out-dir", required=True, help="world output directory")
    p.add_argument("--queries", type=int, default=20)
    p.add_argument("--references", type=int, default=200)
    p.add_argument("--rank3-fraction", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-images", action="store_true", help="skip writing image files")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            world = generate_world(
                args.out_dir,
                n_queries=args.queries,
                n_references=args.references,
                rank3_fraction=args.rank3_fraction,
                seed=args.seed,
                make_images=not args.no_images,
            )
            config = load_run_config(
                overrides={
                    "manifest": str(world.manifest_path),
                    "features": str(world.features_dir),
                    "out_dir": f"{args.out_dir}/out",
                    "refiner": "mock:distance_oracle",
                }
            )
            config_path = f"{args.out_dir}/run.yaml"
            save_run_config(config, config_path)
            log.info(
                "synthetic world: %d queries, %d references (%d planted at rank 3) -> %s",
                world.n_queries,
                world.n_references,
                len(world.rank3_query_ids),
                args.out_dir,
            )
            log.info("run configuration written to %s", config_path)
            return 0
        config = load_run_config(args.config, _overrides(args))
        if args.command == "index":
            cmd_index(config)
        elif args.command == "retrieve":
            cmd_retrieve(config)
        elif args.command == "refine":
            cmd_refine(config)
        elif args.command == "eval":
            cmd_eval(config)
        elif args.command == "run":
            cmd_run(config)
        return 0
    except (ConfigError, PipelineError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
