"""Command-line front end for campaigns and single-run debugging.

Examples:

    quorumcs --mode gcs --n 9 --l 2 --k 5 --coterie grid --seeds 100
    quorumcs --mode mutin --n 4 --l 1 --max-delay 1 --seeds 1 --contention none
    quorumcs --mode explore --n 2 --l 0 --k 1 --coterie single --cycles 1

Exit status: 0 all checks passed, 1 a check failed, 2 bad usage.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .coterie import BUILDERS, ConfigError, coterie_from_lines
from .harness import RunSpec, explore, run_single
from .simnet import render_trace


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="quorumcs",
        description="Simulate and check quorum-based critical-section protocols.")
    p.add_argument("--mode", choices=("mutin", "gcs", "explore"), default="gcs")
    p.add_argument("--n", type=int, required=True, help="number of processes")
    p.add_argument("--l", type=int, default=0, help="floor (minimum InCS)")
    p.add_argument("--k", type=int, default=None, help="ceiling (maximum InCS)")
    p.add_argument("--coterie", choices=sorted(BUILDERS), default="grid")
    p.add_argument("--coterie-file", type=Path, default=None,
                   help="load quorums from a file of `i: j1 j2 ...` lines")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--seeds", type=int, default=1, help="number of seeds to run")
    p.add_argument("--max-delay", type=int, default=1)
    p.add_argument("--cycles", type=int, default=5, help="exit/entry cycles per process")
    p.add_argument("--max-think", type=int, default=3,
                   help="max idle ticks between a completion and the next invocation")
    p.add_argument("--budget", type=int, default=1_000_000, help="event budget per run")
    p.add_argument("--initial-incs", type=int, default=None,
                   help="start with processes 1..COUNT in the CS")
    p.add_argument("--initial-incs-list", type=str, default=None,
                   help="comma-separated explicit initial InCS ids")
    p.add_argument("--contention", choices=("all", "none"), default="all",
                   help="none = only process 1 cycles (waiting-time measurements)")
    p.add_argument("--explore-cap", type=int, default=1_000_000,
                   help="state cap for --mode explore")
    p.add_argument("--trace-out", type=Path, default=None,
                   help="write trace lines here (seed appended when --seeds > 1)")
    p.add_argument("--metrics-out", type=Path, default=None,
                   help="write metrics key=value lines here (per seed)")
    p.add_argument("--quiet", action="store_true")
    return p


def spec_from_args(args) -> RunSpec:
    mode = "mutin" if args.mode == "mutin" else "gcs"
    if args.mode != "mutin":
        if args.k is None:
            raise ConfigError("--k is required for mode %s" % args.mode)
        if not 0 <= args.l < args.k <= args.n:
            raise ConfigError("need 0 <= l < k <= n, got l=%d k=%d n=%d"
                              % (args.l, args.k, args.n))
    elif not 0 <= args.l < args.n:
        raise ConfigError("need 0 <= l < n, got l=%d n=%d" % (args.l, args.n))
    initial = None
    if args.initial_incs_list is not None:
        initial = tuple(int(tok) for tok in args.initial_incs_list.split(",") if tok)
    elif args.initial_incs is not None:
        initial = tuple(range(1, args.initial_incs + 1))
    active = (1,) if args.contention == "none" else None
    return RunSpec(mode=mode, n=args.n, l=args.l, k=args.k, coterie=args.coterie,
                   seed=args.seed, max_delay=args.max_delay, cycles=args.cycles,
                   max_think=args.max_think, budget=args.budget,
                   initial_incs=initial, active=active)


def out_path(base: Path, seed: int, many: bool) -> Path:
    if not many:
        return base
    return base.with_name("%s.seed%d%s" % (base.stem, seed, base.suffix))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
        cot = None
        if args.coterie_file is not None:
            cot = coterie_from_lines(args.coterie_file.read_text().splitlines())
            if cot.n != args.n:
                raise ConfigError("coterie file is for n=%d, --n says %d" % (cot.n, args.n))
    except ConfigError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2

    if args.mode == "explore":
        outcome = explore(replace(spec, max_think=0), cap=args.explore_cap, cot=cot)
        print("explore states=%d transitions=%d complete=%s"
              % (outcome.states, outcome.transitions, outcome.complete))
        if outcome.violation:
            print("VIOLATION: %s" % outcome.violation)
            return 1
        print("no safety violation found")
        return 0

    many = args.seeds > 1
    failures = 0
    for seed in range(args.seed, args.seed + args.seeds):
        result = run_single(replace(spec, seed=seed), cot,
                            want_metrics=True, keep_trace=True)
        status = "PASS" if result.ok else "FAIL"
        if not result.ok:
            failures += 1
        if not args.quiet or not result.ok:
            print("run mode=%s n=%d l=%d k=%s seed=%d delay=%d: %s (%s)"
                  % (args.mode, spec.n, spec.l, spec.k, seed, spec.max_delay,
                     status, result.describe()))
        if result.metrics is not None and not args.quiet:
            for line in result.metrics.render_lines():
                print("  " + line)
        if args.trace_out is not None:
            out_path(args.trace_out, seed, many).write_text(render_trace(result.trace))
        if args.metrics_out is not None:
            out_path(args.metrics_out, seed, many).write_text(
                "\n".join(result.metrics.render_lines()) + "\n")
    if failures:
        print("%d/%d runs failed" % (failures, args.seeds), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
