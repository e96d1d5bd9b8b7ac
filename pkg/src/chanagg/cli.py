"""Command line: ``chanagg run | sweep | validate | selftest``."""

from __future__ import annotations

import argparse
import math
import os
import sys
from importlib import resources
from typing import List, Optional

from . import __version__
from .ctmc import OracleUnsupported
from .policy import PolicyKind
from .runner import (CSV_COLUMNS, SUMMARY_COLUMNS, VALIDATE_COLUMNS, RunError, result_rows,
                     run_replications, summaries, summary_rows, sweep, to_csv, validate, write_text)
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario

OUT_ENV = "CHANAGG_OUT"

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4


def builtin_scenario(name: str) -> Scenario:
    text = resources.files("chanagg").joinpath("scenarios", name).read_text(encoding="utf-8")
    return parse_scenario(text)


def _out_dir(args) -> str:
    return args.out or os.environ.get(OUT_ENV) or "out"


def _policies(text: Optional[str], default: PolicyKind) -> List[PolicyKind]:
    if not text:
        return [default]
    return [PolicyKind.parse(p) for p in text.split(",") if p.strip()]


def _print_summary(results) -> None:
    for (policy, swept), per in summaries(results).items():
        head = f"{policy.label}" + (f" @ {swept}" if swept else "")
        print(head)
        for name, s in per.items():
            ci = "" if math.isnan(s.half_width) else f"  +/- {s.half_width:.5f}"
            print(f"  {name:<15} {s.mean:.6f}{ci}")


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    policy = PolicyKind.parse(args.policy) if args.policy else sc.policy.kind
    results = run_replications(sc, policy, reps=args.reps, seed=args.seed, jobs=args.jobs)
    out = _out_dir(args)
    write_text(os.path.join(out, "replications.csv"), to_csv(CSV_COLUMNS, result_rows(results)))
    write_text(os.path.join(out, "summary.csv"), to_csv(SUMMARY_COLUMNS, summary_rows(results)))
    write_text(os.path.join(out, "trace.txt"),
               "".join(f"{r.policy.value} {r.replication} {r.seed} {r.trace_hash:016x}\n"
                       for r in results))
    _print_summary(results)
    print(f"wrote {out}/replications.csv, {out}/summary.csv")
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = load_scenario(args.scenario)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ScenarioError(["--values: give at least one value"])
    policies = _policies(args.policy, sc.policy.kind)
    results = sweep(sc, args.param, values, policies, reps=args.reps, seed=args.seed, jobs=args.jobs)
    out = _out_dir(args)
    write_text(os.path.join(out, "sweep.csv"), to_csv(CSV_COLUMNS, result_rows(results)))
    write_text(os.path.join(out, "sweep_summary.csv"), to_csv(SUMMARY_COLUMNS, summary_rows(results)))
    _print_summary(results)
    print(f"wrote {out}/sweep.csv ({len(results)} rows)")
    return EXIT_OK


def _print_validation(rows) -> None:
    print(f"{'metric':<15} {'sim':>10} {'ci':>23} {'oracle':>10} {'|diff|':>9}  result")
    for r in rows:
        ci = "" if math.isnan(r.ci_low) else f"[{r.ci_low:.5f}, {r.ci_high:.5f}]"
        print(f"{r.metric:<15} {r.sim_mean:>10.5f} {ci:>23} {r.oracle:>10.5f} {r.abs_diff:>9.5f}  "
              f"{'PASS' if r.passed else 'FAIL'}")


def cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    if args.policy:
        sc.policy.kind = PolicyKind.parse(args.policy)
    try:
        rows = validate(sc, reps=args.reps, seed=args.seed, tol=args.tol, jobs=args.jobs)
    except OracleUnsupported as exc:
        print(f"refused: scenario is outside the exact oracle's family: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    _print_validation(rows)
    write_text(os.path.join(_out_dir(args), "validate.csv"),
               to_csv(VALIDATE_COLUMNS, [r.as_list() for r in rows]))
    return EXIT_OK if all(r.passed for r in rows) else EXIT_VALIDATION


def cmd_selftest(args) -> int:
    ok = True
    for name, tol in (("mm11.scn", 0.02), ("preempt.scn", 0.03)):
        sc = builtin_scenario(name)
        sc.sim.horizon = 20000.0
        rows = validate(sc, reps=3, seed=args.seed if args.seed is not None else 1, tol=tol)
        print(f"[{name}]")
        _print_validation(rows)
        ok &= all(r.passed for r in rows)
    sc = builtin_scenario("default.scn")
    sc.sim.horizon = 2000.0
    a = to_csv(CSV_COLUMNS, result_rows(run_replications(sc, reps=2)))
    b = to_csv(CSV_COLUMNS, result_rows(run_replications(sc, reps=2)))
    same = a == b
    print(f"determinism: {'PASS' if same else 'FAIL'}")
    ok &= same
    print("selftest", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="base seed (replication k uses seed + k)")
    common.add_argument("--reps", type=int, help="number of replications")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    common.add_argument("--policy", help="IBS, RBS, IBS_Q or RBS_Q (sweep: comma-separated list)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = argparse.ArgumentParser(prog="chanagg", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="replicate one scenario")
    r.add_argument("scenario")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="sweep one scenario field")
    s.add_argument("scenario")
    s.add_argument("--param", required=True, help="dotted field, e.g. traffic.pu_arrival_rate")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", parents=[common], help="compare with the exact CTMC")
    v.add_argument("scenario")
    v.add_argument("--tol", type=float, default=0.02, help="absolute tolerance per metric")
    v.set_defaults(func=cmd_validate)

    t = sub.add_parser("selftest", parents=[common], help="quick built-in checks")
    t.set_defaults(func=cmd_selftest)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        for line in exc.problems:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_PARSE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except RunError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
