import math
import statistics

import pytest

from chanagg.engine import (END, EventKind, EventList, HandlerError, RngStream, SchedulingError,
                            StreamSet, TrafficRates, exponential_from_uniform, run_until,
                            sample_exponential, su_service_duration)
from chanagg.scenario import parse_scenario
from chanagg.simulation import Simulation

K = EventKind.SU_ARRIVAL


def drain(el):
    out = []
    while (ev := el.pop_next()) is not END:
        out.append(ev)
    return out


def test_pop_order_and_ties():
    el = EventList()
    el.schedule(5, K, "a")
    el.schedule(3, K, "b")
    el.schedule(7, K, "c")
    el.schedule(7, K, "d")
    assert [e.data for e in drain(el)] == ["b", "a", "c", "d"]


def test_schedule_at_clock_pops_before_later():
    el = EventList()
    el.schedule(2, K, "x")
    el.pop_next()
    el.schedule(9, K, "late")
    el.schedule(2, K, "now")
    assert el.pop_next().data == "now"


def test_past_and_nan_rejected():
    el = EventList()
    el.schedule(4, K)
    el.pop_next()
    with pytest.raises(SchedulingError):
        el.schedule(3.9, K)
    with pytest.raises(SchedulingError):
        el.schedule(math.nan, K)


def test_empty_and_horizon():
    el = EventList(horizon=100)
    assert el.pop_next() is END
    el.schedule(101, K)
    assert el.pop_next() is END
    assert el.clock <= 100
    assert len(el) == 1


def test_heap_order_many():
    import random
    rng = random.Random(3)
    el = EventList()
    for _ in range(500):
        el.schedule(rng.random() * 10, K)
    times = [e.time for e in drain(el)]
    assert times == sorted(times)


def test_inverse_transform_identity():
    assert exponential_from_uniform(1.0, 1 / math.e) == pytest.approx(1.0)


def test_exponential_moments():
    s = RngStream(1, "x")
    xs = [sample_exponential(2.0, s) for _ in range(200_000)]
    assert statistics.fmean(xs) == pytest.approx(0.5, abs=0.005)
    assert statistics.pvariance(xs) == pytest.approx(0.25, abs=0.01)


def test_exponential_rejects_bad_rate():
    with pytest.raises(ValueError):
        sample_exponential(0.0, RngStream(1, "x"))


def test_service_duration_scales_with_theta():
    a = [su_service_duration(1, 0.5, RngStream(9, "s")) for _ in range(1)]
    b = [sample_exponential(0.5, RngStream(9, "s"))]
    assert a == b
    s = RngStream(2, "s")
    xs = [su_service_duration(4, 0.5, s) for _ in range(100_000)]
    assert statistics.fmean(xs) == pytest.approx(0.5, rel=0.02)
    with pytest.raises(ValueError):
        su_service_duration(0, 1.0, s)


def test_substreams_independent_of_each_other():
    a = StreamSet(5)
    b = StreamSet(5)
    first = [a["pu"].uniform() for _ in range(3)]
    for _ in range(10):
        b["su"].uniform()
    assert [b["pu"].uniform() for _ in range(3)] == first
    assert StreamSet(6)["pu"].uniform() != first[0]
    u = [a["z"].uniform() for _ in range(10000)]
    assert all(0 < x <= 1 for x in u)


def test_traffic_rates_validation():
    with pytest.raises(ValueError):
        TrafficRates(0.1, 0.0)
    with pytest.raises(ValueError):
        TrafficRates(0.1, 1.0, su_service={"i": -1})


def test_run_until_counts_and_wraps_errors():
    el = EventList()
    seen = []
    el.schedule(1, K, 1)
    el.schedule(2, K, 2)
    el.schedule(5, K, 3)
    assert run_until(el, 2.0, {K: lambda ev: seen.append(ev.data)}) == 2
    assert seen == [1, 2]

    def boom(ev):
        raise ZeroDivisionError("x")
    with pytest.raises(HandlerError) as info:
        run_until(el, 10.0, {K: boom})
    assert info.value.event.data == 3


MM1 = """
[spectrum]
channels = 1
slots_per_channel = 1
[traffic]
pu_arrival_rate = 0
[class i]
arrival_rate = 1
service_rate = 1
theta = 1
[policy]
kind = IBS
q1_max = 0
q2_max = 0
[sim]
horizon = 100000
"""


def test_zero_horizon_processes_nothing():
    sim = Simulation(parse_scenario(MM1), seed=1)
    c = sim.run(horizon=0.0)
    assert sim.events_processed == 0
    assert c.arrivals == 0 and c.completed == 0


def test_poisson_arrival_count():
    c = Simulation(parse_scenario(MM1), seed=4).run()
    n = 100_000
    assert abs(c.arrivals - n) <= 3 * math.sqrt(n)


def test_same_seed_same_counters_and_trace():
    sc = parse_scenario(MM1.replace("100000", "5000"))
    a, b = Simulation(sc, seed=3), Simulation(sc, seed=3)
    assert a.run().as_dict() == b.run().as_dict()
    assert a.trace_hash == b.trace_hash
    c = Simulation(sc, seed=4)
    c.run()
    assert c.trace_hash != a.trace_hash
