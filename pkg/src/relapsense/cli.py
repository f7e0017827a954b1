"""Command-line orchestration of the pipeline and the experiment grid.

Subcommands: generate, preprocess, extract, train, score, evaluate,
experiment. Exit codes: 0 success, 1 usage error, 2 data contract
violation, 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .dataset import ExperimentCell
from .errors import DataContractError, UsageError
from . import pipeline


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="relapsense", description=__doc__)
    parser.add_argument("--config", help="YAML or JSON pipeline config file")
    parser.add_argument("--seed", type=int, help="run seed (overrides config)")
    parser.add_argument("--threads", type=int, help="worker cap for parallel stages")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic cohort")
    p.add_argument("--out", required=True, help="output data directory")

    p = sub.add_parser("preprocess", help="Hampel-clean raw streams")
    p.add_argument("--data", required=True, help="raw data directory")
    p.add_argument("--out", required=True, help="cleaned data directory")

    p = sub.add_parser("extract", help="extract 5-minute features")
    p.add_argument("--data", required=True, help="cleaned data directory")
    p.add_argument("--out", required=True, help="features directory")

    p = sub.add_parser("train", help="train an Isolation Forest for one cell")
    p.add_argument("--features", required=True, help="features directory")
    p.add_argument("--cell", required=True, help="cell tag, e.g. sleep_with_step_5min")
    p.add_argument("--out", required=True, help="model directory")

    p = sub.add_parser("score", help="score days with a trained model")
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--features", required=True, help="features directory")
    p.add_argument("--out", required=True, help="scores directory")

    p = sub.add_parser("evaluate", help="rank days and compute AUC metrics")
    p.add_argument("--scores", required=True, help="day_scores.csv path")
    p.add_argument("--features", required=True, help="features directory (for labels)")
    p.add_argument("--awake-scores", help="optional awake day_scores.csv for fallback")
    p.add_argument("--cell", default="unspecified", help="cell tag for the report")
    p.add_argument("--out", required=True, help="report directory")

    p = sub.add_parser("experiment", help="run the full 6x3 experiment grid")
    p.add_argument("--features", required=True, help="features directory")
    p.add_argument("--out", required=True, help="grid report directory")
    return parser


def run(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = load_config(args.config, {"seed": args.seed, "threads": args.threads})

    if args.command == "generate":
        if args.seed is not None:
            cfg.generator.seed = args.seed
        pipeline.run_generate(cfg, args.out)
    elif args.command == "preprocess":
        pipeline.run_preprocess(cfg, args.data, args.out)
    elif args.command == "extract":
        pipeline.run_extract(cfg, args.data, args.out)
    elif args.command == "train":
        pipeline.run_train(cfg, args.features, ExperimentCell.parse(args.cell), args.out)
    elif args.command == "score":
        pipeline.run_score(cfg, args.model, args.features, args.out)
    elif args.command == "evaluate":
        pipeline.run_evaluate(
            cfg, args.scores, args.features, args.out, args.awake_scores, args.cell
        )
    elif args.command == "experiment":
        pipeline.run_experiment(cfg, args.features, args.out)
    return 0


def main(argv: list[str] | None = None) -> int:
    try:
        return run(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataContractError as exc:
        print(f"data contract violation: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
