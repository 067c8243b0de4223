"""``pgce`` command-line driver.

Verbs::

    pgce train --config RUN.cfg [--seed N] [--out DIR]
    pgce verify {gradcheck,unbiasedness,equivalence,losses} [--seed N] [--out DIR]
    pgce compare-schedules --config RUN.cfg --schedule fixed:0.01 --schedule inverse:0.01:0.05 \
        --seeds 0 1 2 [--out DIR]
    pgce eval --params params.txt --config RUN.cfg [--out DIR]

Exit codes: 0 success, 1 a verification check failed, 2 usage or
configuration error, 3 data error, 4 numeric error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import load_config
from .errors import ConfigError, PgceError
from .pgcore import Schedule
from .storage import atomic_write_json, atomic_write_text, load_params
from .training import (
    build_env,
    compare_schedules,
    evaluate,
    format_eval,
    format_summary,
    plot_csv,
    train,
    write_train_outputs,
)
from .verify import SUITES, format_report, run_suite

log = logging.getLogger("pgce")


def _config(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_train(args):
    cfg = _config(args)
    result = train(cfg)
    write_train_outputs(result, args.out)
    last = result.metrics[-1]
    print(
        f"trained {cfg.iterations} iterations; final mean return {last.mean_return!r}, "
        f"entropy {last.entropy!r}; skipped episodes {result.skipped}"
    )
    print(f"outputs in {args.out}")
    return 0


def cmd_verify(args):
    checks = run_suite(args.suite, args.seed or 0)
    report = format_report(args.suite, checks)
    sys.stdout.write(report)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        atomic_write_text(os.path.join(args.out, f"verify-{args.suite}.txt"), report)
    return 0 if all(c.passed for c in checks) else 1


def cmd_compare(args):
    cfg = _config(args)
    if not args.schedule:
        raise ConfigError("at least two --schedule options are required")
    schedules = [Schedule.parse(s) for s in args.schedule]
    rows, summary = compare_schedules(cfg, schedules, args.seeds)
    os.makedirs(args.out, exist_ok=True)
    atomic_write_text(os.path.join(args.out, "schedules.csv"), plot_csv(rows))
    atomic_write_json(os.path.join(args.out, "schedules_summary.json"), summary)
    sys.stdout.write(format_summary(summary))
    return 0


def cmd_eval(args):
    cfg = load_config(args.config)
    env = build_env(cfg)
    params = load_params(args.params)
    report = evaluate(params, env, cfg.gamma)
    sys.stdout.write(format_eval(report))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        atomic_write_json(os.path.join(args.out, "eval.json"), report)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="pgce", description="Policy gradients as weighted cross-entropy.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a policy")
    p.add_argument("--config", help="run configuration file (defaults apply if omitted)")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", help="run an invariant suite")
    p.add_argument("suite", choices=sorted(SUITES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare-schedules", help="train under several learning-rate schedules")
    p.add_argument("--config")
    p.add_argument("--schedule", action="append", default=[], help="fixed:LR or inverse:LR:K (repeat)")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("eval", help="greedy evaluation of a parameter snapshot")
    p.add_argument("--params", required=True)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PgceError as exc:
        print(f"pgce: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
