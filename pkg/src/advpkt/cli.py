"""Command-line entry point for the pipeline stages."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import AdvPktError
from .pipeline import Pipeline, RunConfig
from .synthetic import SyntheticTrafficSpec, write_synthetic


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="YAML run configuration")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config root seed")
    parser.add_argument("--out", type=Path, default=Path("runs/out"),
                        help="output directory for artifacts")
    parser.add_argument("--force", action="store_true",
                        help="overwrite stage outputs from other configs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advpkt",
        description="Byte-level adversarial packet generation pipeline: "
                    "ingest captures, train classifiers, train perturbation "
                    "agents, and score evasion.")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
            ("build-dataset", "parse captures into labeled feature datasets"),
            ("train-classifiers", "train surrogate and held-out classifiers"),
            ("evaluate", "score trained agents (ASR, K-S shift, PCAP out)"),
            ("run-all", "run every stage in order"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)

    p = sub.add_parser("train-agent", help="train perturbation agents")
    _add_common(p)
    p.add_argument("--attack", default=None,
                   help="attack class to train (default: every class)")

    p = sub.add_parser("gen-synthetic",
                       help="emit a synthetic capture and its rules file")
    _add_common(p)
    p.add_argument("--pcap", type=Path, default=None,
                   help="output capture path (default: <out>/synthetic.pcap)")
    p.add_argument("--rules", type=Path, default=None,
                   help="output rules path (default: <out>/rules.csv)")
    return parser


_STAGE_BY_COMMAND = {
    "build-dataset": "ingest",
    "train-classifiers": "classify",
    "train-agent": "train",
    "evaluate": "evaluate",
    "run-all": "all",
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig.load(args.config, seed=args.seed)
        if args.command == "gen-synthetic":
            if config["synthetic"] is None:
                raise AdvPktError("config has no synthetic block")
            spec = SyntheticTrafficSpec.from_config(config["synthetic"])
            args.out.mkdir(parents=True, exist_ok=True)
            pcap = args.pcap or args.out / "synthetic.pcap"
            rules = args.rules or args.out / "rules.csv"
            n = write_synthetic(spec, config.rng("synthetic"), pcap, rules)
            print(f"wrote {n} packets to {pcap} and rules to {rules}")
            return 0
        pipeline = Pipeline(config, args.out, force=args.force)
        if args.command == "train-agent":
            with_lock = pipeline
            from .pipeline import RunLock
            with RunLock(with_lock.out):
                pipeline.stage_train(attack=args.attack)
        else:
            pipeline.run(_STAGE_BY_COMMAND[args.command])
        return 0
    except AdvPktError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
