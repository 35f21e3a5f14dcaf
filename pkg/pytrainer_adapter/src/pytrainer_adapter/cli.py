"""Subprocess entry point: train dev test out -> {out}/metrics.json.

Exit codes: 0 success, 2 schema violation, 4 training failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import AdapterConfig, TIERS
from .data import SchemaError, load_split, load_task_card
from .training import TrainingError, run_training

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_TRAINING = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pytrainer-adapter",
        description="Fine-tune a small model on an exported train/dev/test triple.",
    )
    parser.add_argument("train", help="train.jsonl path")
    parser.add_argument("dev", help="dev.jsonl path")
    parser.add_argument("test", help="test.jsonl path")
    parser.add_argument("out", help="output directory for metrics.json")
    parser.add_argument("--task-card", default=None,
                        help="task card path (default: task_card.json beside train)")
    parser.add_argument("--tier", choices=sorted(TIERS), default="tiny")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--learning-rate", type=float, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    card_path = args.task_card or Path(args.train).parent / "task_card.json"
    try:
        card = load_task_card(card_path)
        train = load_split(args.train, "train")
        dev = load_split(args.dev, "dev")
        test = load_split(args.test, "test")
        cfg = AdapterConfig.from_task_card(
            card, tier=args.tier, seed=args.seed, epochs=args.epochs,
            batch_size=args.batch_size, learning_rate=args.learning_rate,
        )
    except (SchemaError, ValueError) as e:
        print(f"schema violation: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    try:
        metrics = run_training(cfg, card, train, dev, test)
    except SchemaError as e:
        print(f"schema violation: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except TrainingError as e:
        print(str(e), file=sys.stderr)
        return EXIT_TRAINING
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.json").write_text(
        json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
