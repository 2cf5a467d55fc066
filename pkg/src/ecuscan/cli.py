"""Command line: run scenarios, validate them, print timing tables."""

from __future__ import annotations

import argparse
import os
import sys

from .errors import SimError
from .report import check_invariants, summarize
from .scenario import bundled_names, bundled_text, load_scenario, parse_scenario
from .sim import run_scenario
from .timing import BEST, WORST, TimingParams, calibrate_config_cycles, loop_rate, t_total

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_INVARIANT = 2


def _load(path):
    if not os.path.exists(path) and path in bundled_names():
        return parse_scenario(bundled_text(path), path)
    return load_scenario(path)


def cmd_run(args) -> int:
    try:
        s = _load(args.file)
    except (OSError, SimError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    log = run_scenario(s, args.seed)
    csv_text = log.to_csv()
    if args.log:
        with open(args.log, "w", newline="") as fh:
            fh.write(csv_text)
    rep = summarize(log).text()
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(rep)
    else:
        sys.stdout.write(rep)
    problems = check_invariants(log, s.segments, s.pairs)
    for p in problems:
        print(f"invariant violated: {p}", file=sys.stderr)
    return EXIT_INVARIANT if problems else EXIT_OK


def cmd_check(args) -> int:
    try:
        s = _load(args.file)
    except (OSError, SimError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    print(f"{s.name}: ok ({len(s.net.nodes)} nodes, {len(s.tests)} tests, {len(s.faults)} faults)")
    return EXIT_OK


def cmd_timing(args) -> int:
    mode = args.mode
    cycles = args.config_cycles
    if cycles is None:
        ref = 153.0 if mode == BEST else 0.949
        cycles = calibrate_config_cycles(ref, mode, args.nodes, args.tck)
    p = TimingParams(f_tck=args.tck, n_nodes=args.nodes, mode=mode,
                     config_cycles_full=cycles, config_cycles_initial=cycles)
    print(f"mode={mode} nodes={args.nodes} tck={args.tck:g} Hz config_cycles={cycles:.0f}")
    print(f"{'test':<10}{'t_con (s)':>14}{'t_test (s)':>14}{'t_total (s)':>14}")
    for kind in ("dc", "duty", "spectrum"):
        r = t_total(p, kind)
        print(f"{kind:<10}{r.t_con:>14.6e}{r.t_test:>14.6e}{r.t_total:>14.6e}")
    print(f"loop rate: {loop_rate(p):.4f} Hz")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ecuscan", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario")
    run.add_argument("file", help="scenario file, or the name of a bundled scenario")
    run.add_argument("--log", help="write the CSV event log here")
    run.add_argument("--report", help="write the text report here instead of stdout")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.set_defaults(func=cmd_run)

    chk = sub.add_parser("check", help="validate a scenario without running it")
    chk.add_argument("file")
    chk.set_defaults(func=cmd_check)

    tim = sub.add_parser("timing", help="print the analytic timing table")
    tim.add_argument("--nodes", type=int, default=10)
    tim.add_argument("--tck", type=float, default=16e6)
    tim.add_argument("--mode", choices=(BEST, WORST), default=WORST)
    tim.add_argument("--config-cycles", type=float, default=None,
                     help="config cycles per reconfiguration (default: calibrated to the reference rate)")
    tim.set_defaults(func=cmd_timing)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
