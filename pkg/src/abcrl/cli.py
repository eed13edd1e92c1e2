"""Command-line entry point: ``abcrl train|cost|verify|compare``.

Exit codes: 0 success, 1 runtime failure (or a failed verify check),
2 invalid input (config, trace file, RunLog schema).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import harness, kernels
from .config import ConfigError, load_config
from .costs import TraceFormatError, read_trace

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


def _cmd_train(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.output_dir:
        cfg.output_dir = Path(args.output_dir)
    logging.info("kernel backend: %s", kernels.BACKEND)
    try:
        paths = harness.train(cfg, progress=logging.info)
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 1
        logging.error("training failed: %s", exc)
        return EXIT_RUNTIME
    print(f"wrote {len(paths)} RunLogs to {cfg.output_dir}")
    return EXIT_OK


def _cmd_cost(args: argparse.Namespace) -> int:
    try:
        trace = read_trace(args.trace)
    except TraceFormatError as exc:
        print(f"{args.trace}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"cannot read trace: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        signals = harness.cost_report(trace, args.w, args.alpha, args.step_angle, args.shake_moves)
    except ValueError as exc:
        print(f"invalid cost parameters: {exc}", file=sys.stderr)
        return EXIT_INVALID
    row = harness.summary_row(Path(args.trace).name, signals)
    summary = (f"summary: steps={row['steps']} mean_shaking={row['mean_shaking']!r} "
               f"total_spins={row['total_spins']}")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            harness.write_signals(signals, fh)
        print(summary)
    else:
        harness.write_signals(signals, sys.stdout)
        print(summary, file=sys.stderr)
    if args.summary_csv:
        path = Path(args.summary_csv)
        new = not path.exists() or path.stat().st_size == 0
        with open(path, "a", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if new:
                writer.writerow(harness.SUMMARY_COLUMNS)
            writer.writerow([harness.fmt(row[c]) if c != "trace" else row[c]
                             for c in harness.SUMMARY_COLUMNS])
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    results = harness.verify(seed=args.seed, n_prop1=args.samples)
    for r in results:
        print(r.as_json())
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def _cmd_compare(args: argparse.Namespace) -> int:
    try:
        paths = harness.compare(Path(args.dir), Path(args.out) if args.out else None,
                                Path(args.human) if args.human else None, args.smooth)
    except harness.CompareError as exc:
        print(f"compare: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"compare: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for name, p in paths.items():
        print(f"{name}: {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abcrl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train every agent x seed in a run config")
    p.add_argument("config")
    p.add_argument("--output-dir", help="override output_dir from the config")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("cost", help="per-step shaking/spinning costs of a trace file")
    p.add_argument("trace")
    p.add_argument("--w", type=int, default=8)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--step-angle", type=int, default=72)
    p.add_argument("--shake-moves", action="store_true",
                   help="also count forward/backward reversals as shaking")
    p.add_argument("--out", help="write the per-step CSV here instead of stdout")
    p.add_argument("--summary-csv", help="append a summary row (human-baseline format)")
    p.set_defaults(func=_cmd_cost)

    p = sub.add_parser("verify", help="run the math-core oracle checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("compare", help="aggregate a directory of RunLogs")
    p.add_argument("dir")
    p.add_argument("--human", help="human cost summary CSV (from `cost --summary-csv`)")
    p.add_argument("--out", help="output directory (default: the RunLog directory)")
    p.add_argument("--smooth", type=int, default=20)
    p.set_defaults(func=_cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
