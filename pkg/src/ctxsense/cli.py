"""``ctxsense`` command line: the full experiment or any single stage."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import OUT_ENV, ConfigError, load_config
from .pipeline import STAGES, ManifestMismatchError, MissingArtifactError, Pipeline, PipelineError

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_MANIFEST = 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment JSON (default: built-in demo)")
    common.add_argument("--out", help=f"output directory (fallback: ${OUT_ENV}, then ./ctxsense-out)")
    common.add_argument("--seed", type=int, help="override the base seed")
    common.add_argument("--parallel", type=int, help="worker processes for simulation cells")
    common.add_argument("--verbose", action="store_true", help="debug logging and per-step CSV logs")

    parser = argparse.ArgumentParser(
        prog="ctxsense", description="Context-aware adaptive sensor sampling experiments."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run every stage and write the manifest")
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=f"run the {stage} stage only")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        config = load_config(args.config, out=args.out, seed=args.seed, parallel=args.parallel)
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        print(f"ctxsense: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    pipe = Pipeline(config)
    try:
        if args.command == "run":
            pipe.run(verbose=args.verbose)
        else:
            pipe.run_stage(args.command, verbose=args.verbose)
    except ManifestMismatchError as exc:
        print(f"ctxsense: {exc}", file=sys.stderr)
        return EXIT_MANIFEST
    except MissingArtifactError as exc:
        print(f"ctxsense: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except PipelineError as exc:
        print(f"ctxsense: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except OSError as exc:
        print(f"ctxsense: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
