"""Command line interface: gear synth|extract|build-tree|train|retrieve|eval|pipeline.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import apply_overrides, load_config
from .errors import DataError, DivergenceError, UsageError
from .pipeline import (
    run_pipeline,
    stage_build_tree,
    stage_eval,
    stage_extract,
    stage_retrieve,
    stage_synth,
    stage_train,
)


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2; usage errors are exit 1
        raise UsageError(message)


def _build_parser() -> _ArgumentParser:
    parser = _ArgumentParser(prog="gear",
                             description="Law-guided generative legal document retrieval")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the key=value config file")
    common.add_argument("--out", default=None, help="output directory (overrides paths.out)")
    common.add_argument("--seed", type=int, default=None, help="seed override")
    common.add_argument("--threads", type=int, default=None, help="worker cap for extraction")
    common.add_argument("--force", action="store_true",
                        help="proceed on mixed config hashes at eval time")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "generate a synthetic corpus, law schema, and qrels"),
        ("extract", "extract rationales for every document"),
        ("build-tree", "build the law structure constraint tree"),
        ("train", "train the retrieval model"),
        ("retrieve", "decode ranked documents for every query"),
        ("eval", "score the run and emit reports and figures"),
        ("pipeline", "run all stages in order"),
    ):
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help
            return int(exc.code or 0)
        cfg = load_config(args.config)
        cfg = apply_overrides(cfg, seed=args.seed, out=args.out, threads=args.threads)
        command = args.command
        if command == "synth":
            print(stage_synth(cfg))
        elif command == "extract":
            print(stage_extract(cfg))
        elif command == "build-tree":
            print(stage_build_tree(cfg))
        elif command == "train":
            print(stage_train(cfg))
        elif command == "retrieve":
            print(stage_retrieve(cfg))
        elif command == "eval":
            summary, _ = stage_eval(cfg, force=args.force)
            print(summary)
        elif command == "pipeline":
            run_pipeline(cfg, force=args.force)
        return 0
    except UsageError as exc:
        print(f"gear: usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"gear: data error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"gear: training diverged: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
