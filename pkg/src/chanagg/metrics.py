"""Event counters, the SU performance estimators, and replication summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Dict, List, Sequence

import numpy as np
from scipy import stats


class MetricError(ValueError):
    pass


@dataclass
class CounterSet:
    """Raw counts for the SUs that arrived after warm-up.

    ``admitted`` counts every SU let into the system, whether it went
    straight to service or into a queue. ``carried_completed`` counts
    completions inside the observation window by SUs that arrived during
    warm-up; they feed capacity only.
    """

    arrivals: int = 0
    blocked: int = 0
    admitted: int = 0
    dropped: int = 0
    completed: int = 0
    in_system: int = 0
    carried_completed: int = 0
    preempted: int = 0
    timed_out: int = 0
    pu_arrivals: int = 0
    pu_blocked: int = 0
    queue_area: float = 0.0
    observation_time: float = 0.0

    def check(self) -> None:
        if self.arrivals != self.blocked + self.admitted:
            raise MetricError(f"arrivals {self.arrivals} != blocked {self.blocked} + admitted {self.admitted}")
        if self.admitted != self.completed + self.dropped + self.in_system:
            raise MetricError(
                f"admitted {self.admitted} != completed {self.completed} + dropped {self.dropped}"
                f" + in_system {self.in_system}")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def blocking_probability(c: CounterSet) -> float:
    if c.arrivals <= 0:
        raise MetricError("no SU arrivals observed")
    return c.blocked / c.arrivals


def forced_termination_probability(c: CounterSet) -> float:
    if c.admitted <= 0:
        raise MetricError("no SU admissions observed")
    return c.dropped / c.admitted


def access_probability(c: CounterSet) -> float:
    return 1.0 - blocking_probability(c)


def su_capacity(c: CounterSet) -> float:
    """SU service completions per second over the observation window."""
    if c.observation_time <= 0:
        raise MetricError("empty observation window")
    return (c.completed + c.carried_completed) / c.observation_time


def mean_queue_length(c: CounterSet) -> float:
    if c.observation_time <= 0:
        raise MetricError("empty observation window")
    return c.queue_area / c.observation_time


METRICS = {
    "P_b": blocking_probability,
    "P_f": forced_termination_probability,
    "P_a": access_probability,
    "capacity": su_capacity,
    "mean_queue_len": mean_queue_length,
}


def metric_values(c: CounterSet) -> Dict[str, float]:
    """All estimators for one run; NaN where a guard trips."""
    out = {}
    for name, fn in METRICS.items():
        try:
            out[name] = fn(c)
        except MetricError:
            out[name] = math.nan
    return out


@dataclass
class ReplicationSummary:
    values: List[float]
    mean: float
    std: float
    half_width: float

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width

    def covers(self, x: float) -> bool:
        return self.low <= x <= self.high


def t_interval(values: Sequence[float], confidence: float = 0.95) -> ReplicationSummary:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise MetricError("a confidence interval needs at least 2 replications")
    mean = float(v.mean())
    std = float(v.std(ddof=1))
    hw = float(stats.t.ppf(0.5 + confidence / 2, v.size - 1) * std / math.sqrt(v.size))
    return ReplicationSummary([float(x) for x in v], mean, std, hw)


def summarize(reps: Sequence[CounterSet], confidence: float = 0.95) -> Dict[str, ReplicationSummary]:
    if len(reps) < 2:
        raise MetricError("summarize needs at least 2 replications")
    per_rep = [metric_values(c) for c in reps]
    out = {}
    for name in METRICS:
        vals = [r[name] for r in per_rep if not math.isnan(r[name])]
        if len(vals) >= 2:
            out[name] = t_interval(vals, confidence)
        else:
            out[name] = ReplicationSummary(vals, vals[0] if vals else math.nan, math.nan, math.nan)
    return out
