"""Replications, parameter sweeps, simulator-vs-oracle validation and CSV output."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

from . import ctmc
from .metrics import METRICS, CounterSet, ReplicationSummary, metric_values, summarize, t_interval
from .policy import PolicyKind
from .scenario import Scenario, with_value
from .simulation import Simulation

CSV_COLUMNS = ["policy", "swept_value", "replication", "P_b", "P_f", "P_a", "capacity",
               "mean_queue_len", "arrivals", "blocked", "admitted", "dropped", "completed", "in_system"]
SUMMARY_COLUMNS = ["policy", "swept_value", "metric", "n", "mean", "std", "ci_low", "ci_high", "half_width"]
VALIDATE_COLUMNS = ["metric", "sim_mean", "ci_low", "ci_high", "oracle", "abs_diff", "tol", "in_ci", "pass"]


class RunError(RuntimeError):
    pass


@dataclass
class RunResult:
    policy: PolicyKind
    swept_value: str
    replication: int
    seed: int
    counters: CounterSet
    trace_hash: int

    @property
    def metrics(self) -> Dict[str, float]:
        return metric_values(self.counters)


def _one(args) -> RunResult:
    sc, policy, rep, seed, swept = args
    try:
        sim = Simulation(sc, seed=seed, policy=policy)
        c = sim.run()
        c.check()
    except Exception as exc:
        raise RunError(f"replication {rep} (policy {policy.value}, seed {seed}) failed: {exc}") from exc
    return RunResult(policy, swept, rep, seed, c, sim.trace_hash)


def _execute(tasks: List[tuple], jobs: int) -> List[RunResult]:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_one, tasks))
    return [_one(t) for t in tasks]


def run_replications(sc: Scenario, policy: Optional[PolicyKind] = None, reps: Optional[int] = None,
                     seed: Optional[int] = None, swept_value: str = "", jobs: int = 1) -> List[RunResult]:
    """Independent replications with seeds ``seed + k``."""
    policy = PolicyKind(policy or sc.policy.kind)
    reps = sc.sim.replications if reps is None else reps
    base = sc.sim.seed if seed is None else seed
    return _execute([(sc, policy, k, base + k, swept_value) for k in range(reps)], jobs)


def sweep(sc: Scenario, path: str, values: Sequence[str], policies: Sequence[PolicyKind],
          reps: Optional[int] = None, seed: Optional[int] = None, jobs: int = 1) -> List[RunResult]:
    """Every (value, policy) cell; policies share seeds, hence common random numbers."""
    reps = sc.sim.replications if reps is None else reps
    base = sc.sim.seed if seed is None else seed
    tasks = []
    for v in values:
        cell = with_value(sc, path, v)
        for p in policies:
            tasks += [(cell, PolicyKind(p), k, base + k, str(v)) for k in range(reps)]
    results = _execute(tasks, jobs)
    order = {str(v): i for i, v in enumerate(values)}
    results.sort(key=lambda r: (r.policy.value, order[r.swept_value], r.replication))
    return results


def group(results: Iterable[RunResult]) -> Dict[tuple, List[RunResult]]:
    out: Dict[tuple, List[RunResult]] = {}
    for r in results:
        out.setdefault((r.policy, r.swept_value), []).append(r)
    return out


def summaries(results: Iterable[RunResult]) -> Dict[tuple, Dict[str, ReplicationSummary]]:
    """Per (policy, swept value): metric -> summary; single replications get no CI."""
    out = {}
    for key, rs in group(results).items():
        if len(rs) >= 2:
            out[key] = summarize([r.counters for r in rs])
        else:
            m = rs[0].metrics
            out[key] = {k: ReplicationSummary([m[k]], m[k], math.nan, math.nan) for k in METRICS}
    return out


# -------------------------------------------------------------------- CSV

def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def result_rows(results: Iterable[RunResult]) -> List[list]:
    rows = []
    for r in results:
        m = r.metrics
        c = r.counters
        rows.append([r.policy.value, r.swept_value, r.replication, m["P_b"], m["P_f"], m["P_a"],
                     m["capacity"], m["mean_queue_len"], c.arrivals, c.blocked, c.admitted,
                     c.dropped, c.completed, c.in_system])
    return rows


def summary_rows(results: Iterable[RunResult]) -> List[list]:
    rows = []
    for (policy, swept), per_metric in summaries(results).items():
        for name, s in per_metric.items():
            rows.append([policy.value, swept, name, s.n, s.mean, s.std, s.low, s.high, s.half_width])
    return rows


def to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def write_text(path: str, text: str) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# -------------------------------------------------------------- validation

@dataclass
class ValidationRow:
    metric: str
    sim_mean: float
    ci_low: float
    ci_high: float
    oracle: float
    abs_diff: float
    tol: float
    in_ci: Optional[bool]
    passed: bool

    def as_list(self) -> list:
        in_ci = "" if self.in_ci is None else str(self.in_ci).lower()
        return [self.metric, self.sim_mean, self.ci_low, self.ci_high, self.oracle, self.abs_diff,
                self.tol, in_ci, str(self.passed).lower()]


def validate(sc: Scenario, reps: Optional[int] = None, seed: Optional[int] = None,
             tol: float = 0.02, require_ci: bool = False, jobs: int = 1,
             metrics: Sequence[str] = ("P_b", "P_f", "capacity", "mean_queue_len")) -> List[ValidationRow]:
    """Compare simulated means with the exact chain.

    Raises :class:`ctmc.OracleUnsupported` for scenarios outside the
    oracle's family; nothing is approximated silently.
    """
    exact = ctmc.solve(sc)
    results = run_replications(sc, reps=reps, seed=seed, jobs=jobs)
    per = [r.metrics for r in results]
    rows = []
    for name in metrics:
        target = getattr(exact, name)
        vals = [p[name] for p in per if not math.isnan(p[name])]
        if len(vals) >= 2:
            s = t_interval(vals)
            mean, lo, hi = s.mean, s.low, s.high
            # a degenerate interval (all replications equal) covers only exact hits
            in_ci = lo - 1e-12 <= target <= hi + 1e-12
        else:
            mean = vals[0] if vals else math.nan
            lo = hi = math.nan
            in_ci = None
        diff = abs(mean - target)
        ok = diff <= tol and (in_ci is not False or not require_ci)
        rows.append(ValidationRow(name, mean, lo, hi, target, diff, tol, in_ci, ok))
    return rows
