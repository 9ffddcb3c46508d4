"""Command-line entry point: ``bsac train | eval | compare``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import BsacError
from .harness import compare, evaluate, find_records, run


def _train(args) -> int:
    config = load_config(args.config)
    seeds = [args.seed_override] if args.seed_override is not None else None
    for rec in run(config, out_dir=args.out, seeds=seeds):
        last = rec.evals[-1]
        print(f"{rec.label} seed={rec.seed} steps={rec.steps_run} "
              f"final_return={last[1]:.4f} +- {last[2]:.4f} ({rec.wall_clock:.1f}s) -> {rec.checkpoint}")
    return 0


def _eval(args) -> int:
    mean, std = evaluate(args.checkpoint, args.episodes, args.seed)
    print(f"return {mean:.6f} +- {std:.6f} over {args.episodes} episodes")
    return 0


def _compare(args) -> int:
    records = find_records(args.runs)
    csv_text, text = compare(records, args.threshold)
    out = Path(args.out)
    out.write_text(csv_text)
    out.with_suffix(".txt").write_text(text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bsac", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log evaluation progress")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train every seed of a config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed-override", type=int, default=None)
    t.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    t.set_defaults(func=_train)

    e = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=_eval)

    c = sub.add_parser("compare", help="aggregate completed runs")
    c.add_argument("--runs", nargs="+", required=True)
    c.add_argument("--threshold", type=float, required=True)
    c.add_argument("--out", required=True, help="CSV path; a .txt table is written beside it")
    c.set_defaults(func=_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    try:
        return args.func(args)
    except (BsacError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
