"""Command line entry point: ``sylunits {assemble,segment,tokenize,eval,calibrate}``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .core import ValidationError
from .pipeline import PipelineConfig


def _add_common(p):
    p.add_argument("--config", help="JSON file with PipelineConfig fields")
    p.add_argument("--workers", type=int, help=f"worker processes (default ${pipeline.WORKERS_ENV} or 1)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_rate(p):
    g = p.add_argument_group("rate control (exactly one)")
    g.add_argument("--delta", type=float)
    g.add_argument("--target-hz", type=float)
    g.add_argument("--units-per-second", type=float)
    g.add_argument("--k", type=int)
    p.add_argument("--G", type=int, dest="G", help="maximum group length in frames")
    p.add_argument("--quantile", type=float)
    p.add_argument("--tol-hz", type=float)
    p.add_argument("--calibration-pooling", choices=["total", "mean"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sylunits", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("assemble", help="build loss matrices from mask-probability records")
    p.add_argument("records_dir")
    p.add_argument("out_dir")
    p.add_argument("--span", type=int)
    p.add_argument("--frame-rate-hz", type=float)
    _add_common(p)

    p = sub.add_parser("segment", help="segment feature files or loss matrices")
    p.add_argument("input_dir")
    p.add_argument("out_dir")
    p.add_argument("--mode", choices=["sylboost", "mincut"], default="sylboost")
    p.add_argument("--calibration-dir", help="corpus used to calibrate delta for --target-hz")
    p.add_argument("--search", choices=["scan", "bisect"])
    p.add_argument("--include-loss", action="store_true", default=None)
    _add_rate(p)
    _add_common(p)

    p = sub.add_parser("tokenize", help="pool, quantize and deduplicate segments")
    p.add_argument("feats_dir")
    p.add_argument("segs_dir")
    p.add_argument("out_dir")
    p.add_argument("--codebook", help="existing SYLC codebook; fitted when omitted")
    p.add_argument("--units", type=int, help="final number of units U")
    p.add_argument("--kmeans-k", type=int, help="intermediate K-Means size (default 2U)")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--max-samples", type=int)
    _add_common(p)

    p = sub.add_parser("eval", help="score boundaries and purity against alignments")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--units-file")
    src.add_argument("--segs-dir")
    p.add_argument("alignments_dir")
    p.add_argument("--out")
    p.add_argument("--tolerances", type=float, nargs="+")
    p.add_argument("--eval-pooling", choices=["pooled", "mean"])
    p.add_argument("--include-edges", action="store_true", default=None)
    p.add_argument("--purity-weighting", choices=["segment", "frame"])
    _add_common(p)

    p = sub.add_parser("calibrate", help="choose delta for a target unit rate")
    p.add_argument("feats_dir")
    p.add_argument("--out")
    p.add_argument("--codebook", help="also report the post-dedup rate with this codebook")
    _add_rate(p)
    _add_common(p)
    return parser


_CONFIG_KEYS = {
    "span", "G", "quantile", "delta", "target_hz", "units_per_second", "k", "tol_hz",
    "calibration_pooling", "search", "kmeans_k", "units", "seed", "max_iters", "max_samples",
    "tolerances", "eval_pooling", "include_edges", "purity_weighting", "frame_rate_hz",
    "include_loss", "workers",
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k in _CONFIG_KEYS}
    try:
        config = PipelineConfig.load(args.config, **overrides)
        if args.command == "assemble":
            return pipeline.cmd_assemble(args.records_dir, args.out_dir, config)
        if args.command == "segment":
            return pipeline.cmd_segment(args.input_dir, args.out_dir, config, args.mode, args.calibration_dir)
        if args.command == "tokenize":
            return pipeline.cmd_tokenize(args.feats_dir, args.segs_dir, args.out_dir, config, args.codebook)
        if args.command == "eval":
            return pipeline.cmd_eval(args.alignments_dir, config, args.units_file, args.segs_dir, args.out)
        if args.command == "calibrate":
            return pipeline.cmd_calibrate(args.feats_dir, config, args.out, args.codebook)
    except (ValidationError, ValueError, OSError) as e:
        print(f"sylunits {args.command}: {e}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
