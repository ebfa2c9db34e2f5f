"""Command-line entry point.

Subcommands: build, unlearn, noise-recovery, bench-compare, verify-exactness.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime or
training error.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import aggregate, bench, gcn, partition
from .config import ConfigError, ExperimentConfig, load_config
from .engine import verify_exactness
from .graphs import ParseError, ValidationError
from .numerics import ContractError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphunlearn",
        description="Sharded graph unlearning: build, unlearn, and benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "build": "partition, train sub-models, fit the aggregator, persist",
        "unlearn": "apply a deletion request to a persisted pipeline",
        "noise-recovery": "clean vs poisoned vs post-unlearning utility",
        "bench-compare": "full retrain vs random vs trained partitioning",
        "verify-exactness": "replay retraining and report parameter deltas",
    }
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None,
                       help="experiment config file (defaults apply if omitted)")
        p.add_argument("--seed", type=int, default=0, help="global seed")
        p.add_argument("--out", default="runs/latest", help="output directory")
        p.add_argument("--jobs", type=int, default=1,
                       help="max parallel shard-training workers")
        if name == "unlearn":
            p.add_argument("--request", default=None,
                           help="file of node ids to delete (one per line)")
    return parser


def _load(args) -> ExperimentConfig:
    if args.config is None:
        return ExperimentConfig()
    return load_config(args.config)


def _cmd_build(args, config):
    records = bench.run_build(config, args.seed, args.out, jobs=args.jobs)
    for rec in records:
        print(f"{rec.run_id}: f1={rec.f1:.4f} "
              f"total={rec.timings['total_seconds']:.2f}s")
    print(f"state and metrics written to {args.out}")
    return EXIT_OK


def _cmd_unlearn(args, config):
    record, report = bench.run_unlearn(config, args.seed, args.out,
                                       jobs=args.jobs,
                                       request_path=args.request)
    print(f"deleted {report.request_size} nodes; "
          f"retrained shards {report.affected_shards} "
          f"({report.shards_untouched} untouched)")
    print(f"post-unlearn f1={record.f1:.4f} "
          f"total={report.total_seconds:.2f}s "
          f"(aggregator {report.aggregator_seconds:.2f}s)")
    return EXIT_OK


def _cmd_noise_recovery(args, config):
    _, triples = bench.run_noise_recovery(config, args.seed, args.out,
                                          jobs=args.jobs)
    means = triples.mean(axis=0)
    print(f"clean f1={means[0]:.4f}  poisoned f1={means[1]:.4f}  "
          f"unlearned f1={means[2]:.4f} "
          f"(mean of {triples.shape[0]} repetitions)")
    return EXIT_OK


def _cmd_bench_compare(args, config):
    _, results = bench.run_bench_compare(config, args.seed, args.out,
                                         jobs=args.jobs)
    print(f"{'strategy':<10} {'f1_mean':>8} {'unlearn_s_mean':>15}")
    for name in ("retrain", "random", "trained"):
        f1s, times = results[name]
        print(f"{name:<10} {sum(f1s)/len(f1s):>8.4f} "
              f"{sum(times)/len(times):>15.2f}")
    return EXIT_OK


def _cmd_verify_exactness(args, config):
    state = bench.load_state(os.path.join(args.out, "state"), config)
    deltas = verify_exactness(state)
    worst = max(deltas.values(), default=0.0)
    for sid, delta in sorted(deltas.items()):
        print(f"shard {sid}: max parameter delta {delta:.3e}")
    if worst == 0.0:
        print("exactness verified: all shards bitwise identical to retraining")
        return EXIT_OK
    print(f"exactness FAILED: worst delta {worst:.3e}")
    return EXIT_RUNTIME


_HANDLERS = {
    "build": _cmd_build,
    "unlearn": _cmd_unlearn,
    "noise-recovery": _cmd_noise_recovery,
    "bench-compare": _cmd_bench_compare,
    "verify-exactness": _cmd_verify_exactness,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _load(args)
        return _HANDLERS[args.command](args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, ValidationError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ContractError, partition.TrainingError, gcn.TrainingError,
            aggregate.TrainingError, FloatingPointError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
