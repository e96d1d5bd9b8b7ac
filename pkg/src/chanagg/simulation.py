"""One replication of the SU channel-aggregation system.

PU traffic is a single Poisson stream (rate ``pu_arrival_rate``) landing on a
uniformly chosen channel; a PU that hits a busy channel is re-aimed at a
uniformly chosen idle one and is lost if none is idle. Each PU holds its
channel for an exponential time with rate ``pu_service_rate``. SU classes
arrive as independent Poisson streams and hold ``theta`` slots for an
exponential time with rate ``theta * service_rate``.
"""

from __future__ import annotations

import hashlib
import math
from typing import List, Optional

from .engine import EventKind, EventList, StreamSet, run_until
from .metrics import CounterSet
from .policy import Displacement, Outcome, PolicyKind, SuRequest, SystemState
from .queues import DualQueueController
from .scenario import Scenario
from .spectrum import SNR_CLASSES, SnrClass, SpectrumPool, draw_row, snr_stationary


class Simulation:
    def __init__(self, scenario: Scenario, seed: Optional[int] = None,
                 policy: Optional[PolicyKind] = None, record_trace: bool = False,
                 check_invariants: bool = False):
        self.scenario = sc = scenario
        self.seed = sc.sim.seed if seed is None else int(seed)
        self.policy = PolicyKind(policy or sc.policy.kind)
        self.warmup = sc.sim.warmup
        self.record_trace = record_trace
        self.check_invariants = check_invariants

        self.pool = SpectrumPool(sc.spectrum.channels, sc.spectrum.slots)
        queues = DualQueueController(sc.policy.q1_max, sc.policy.q2_max, sc.policy.strict_hol)
        self.state = SystemState(self.pool, self.policy, queues, self._deadline_for)
        self.events = EventList()
        self.streams = StreamSet(self.seed)
        self.counters = CounterSet()
        self.trace: List[tuple] = []
        self._digest = hashlib.blake2b(digest_size=8)
        self._pending: List[tuple] = []

        self._classes = sc.classes
        self._service_rate = {k: c.service_rate for k, c in enumerate(sc.classes)}
        self._deadline = {k: (c.deadline if c.deadline is not None else sc.policy.deadline)
                          for k, c in enumerate(sc.classes)}
        self._queue_of = {k: sc.class_queue(k) for k in range(len(sc.classes))}
        self._snr_matrix = sc.traffic.snr_matrix
        self._snr_rate = sc.traffic.snr_rate
        init = sc.traffic.snr_initial.strip().upper()
        self._snr_fixed = None if init == "STATIONARY" else SnrClass(init)
        self._snr_pi = snr_stationary(self._snr_matrix)
        self._demand = [{snr: c.demand(snr) for snr in SNR_CLASSES} for c in sc.classes]
        self._arrival_stream = [self.streams[f"su_arrival/{k}"] for k in range(len(sc.classes))]
        self._service_stream = [self.streams[f"su_service/{k}"] for k in range(len(sc.classes))]
        self._snr_stream = [self.streams[f"snr_arrival/{k}"] for k in range(len(sc.classes))]
        self._next_su = 0
        self._version = 0
        self._class_of = {}
        self._cohort = set()
        self._snr_token = {}
        self._last_t = 0.0
        self._started = False

    # -- random helpers ---------------------------------------------------
    def _exp(self, rate: float, stream: str) -> float:
        return -math.log(self.streams[stream].uniform()) / rate

    def _deadline_for(self, req: SuRequest, now: float) -> float:
        d = self._deadline[self._class_of[req.su_id]]
        if math.isinf(d):
            return math.inf
        if self.scenario.policy.exp_deadline:
            return now + self._exp(1.0 / d, "deadline")
        return now + d

    # -- bookkeeping ------------------------------------------------------
    def _advance(self, now: float) -> None:
        start = self._last_t if self._last_t > self.warmup else self.warmup
        if now > start:
            n = len(self.state.queued)
            if n:
                self.counters.queue_area += n * (now - start)
        self._last_t = now

    def _note(self, now, su_id, what) -> None:
        if self.record_trace:
            self.trace.append((now, su_id, what))

    def _drop(self, req: SuRequest, now: float, why: str) -> None:
        self._note(now, req.su_id, why)
        self._snr_token.pop(req.su_id, None)
        if req.su_id in self._cohort:
            self._cohort.discard(req.su_id)
            self.counters.dropped += 1
            if why == "timeout":
                self.counters.timed_out += 1
            else:
                self.counters.preempted += 1

    def _settle(self, now: float, admitted=()) -> None:
        """Start timers for whatever the last policy call created or changed."""
        if self.record_trace:
            for d in admitted:
                self._note(now, d.request.su_id, "from_queue")
        state = self.state
        changed = state.changed
        if changed:
            schedule = self.events.schedule
            allocations = state.allocations
            for su_id in (sorted(changed) if len(changed) > 1 else changed):
                alloc = allocations.get(su_id)
                if alloc is None:
                    continue
                # versions are run-global so a re-admitted SU never matches an old timer
                self._version += 1
                alloc.version = self._version
                k = self._class_of[su_id]
                dt = -math.log(self._service_stream[k].uniform()) / (len(alloc.slots) * self._service_rate[k])
                schedule(now + dt, EventKind.SU_SERVICE_COMPLETE, (su_id, alloc.version))
            changed.clear()
        if state.new_entries:
            for entry in state.new_entries:
                if not math.isinf(entry.deadline):
                    self.events.schedule(entry.deadline, EventKind.QUEUE_DEADLINE,
                                         (entry.request.su_id, entry.seq))
            state.new_entries.clear()
        if self.check_invariants:
            state.audit()

    # -- handlers ---------------------------------------------------------
    def _on_pu_arrival(self, ev) -> None:
        now = ev.time
        self._advance(now)
        tr = self.scenario.traffic
        self.events.schedule(now + self._exp(tr.pu_arrival_rate, "pu_arrival"), EventKind.PU_ARRIVAL)
        counted = now >= self.warmup
        if counted:
            self.counters.pu_arrivals += 1
        pool = self.pool
        pick = self.streams["pu_channel"]
        c = pick.randrange(pool.num_channels)
        if pool.pu_on[c]:
            idle = pool.idle_channels()
            if not idle:
                if counted:
                    self.counters.pu_blocked += 1
                return
            c = idle[pick.randrange(len(idle))]
        for req, result in self.state.handle_pu_arrival(c, now):
            self._note(now, req.su_id, result.value)
            if result is Displacement.TERMINATED:
                self._drop(req, now, "preempted")
        self.events.schedule(now + self._exp(tr.pu_service_rate, "pu_service"), EventKind.PU_DEPARTURE, c)
        self._settle(now, self.state.drain(now))

    def _on_pu_departure(self, ev) -> None:
        now = ev.time
        self._advance(now)
        self._settle(now, self.state.handle_pu_departure(ev.data, now))

    def _on_su_arrival(self, ev) -> None:
        now = ev.time
        self._advance(now)
        k = ev.data
        cl = self._classes[k]
        dt = -math.log(self._arrival_stream[k].uniform()) / cl.arrival_rate
        self.events.schedule(now + dt, EventKind.SU_ARRIVAL, k)
        if self._snr_fixed is None:
            snr = SNR_CLASSES[draw_row(self._snr_pi, self._snr_stream[k].random())]
        else:
            snr = self._snr_fixed
        theta, tmin, tmax = self._demand[k][snr]
        su_id = self._next_su
        self._next_su += 1
        self._class_of[su_id] = k
        req = SuRequest(su_id, cl.name, now, theta, tmin, tmax, snr, self._queue_of[k])
        decision = self.state.handle_su_arrival(req, now)
        if self.record_trace:
            self._note(now, su_id, decision.outcome.value)
        blocked = decision.outcome is Outcome.BLOCK
        if now >= self.warmup:
            c = self.counters
            c.arrivals += 1
            if blocked:
                c.blocked += 1
            else:
                c.admitted += 1
                self._cohort.add(su_id)
        if blocked:
            del self._class_of[su_id]
        elif self._snr_rate > 0:
            self._snr_token[su_id] = token = self._snr_token.get(su_id, 0) + 1
            self.events.schedule(now + self._exp(self._snr_rate, "snr"), EventKind.SNR_TRANSITION, (su_id, token))
        self._settle(now)

    def _on_complete(self, ev) -> None:
        su_id, version = ev.data
        alloc = self.state.allocations.get(su_id)
        if alloc is None or alloc.version != version:
            return
        now = ev.time
        self._advance(now)
        admitted = self.state.handle_su_departure(su_id, now)
        if self.record_trace:
            self._note(now, su_id, "complete")
        self._snr_token.pop(su_id, None)
        del self._class_of[su_id]
        if su_id in self._cohort:
            self._cohort.discard(su_id)
            self.counters.completed += 1
        elif now >= self.warmup:
            self.counters.carried_completed += 1
        self._settle(now, admitted)

    def _on_deadline(self, ev) -> None:
        now = ev.time
        self._advance(now)
        su_id, seq = ev.data
        entry = self.state.check_queue_timeout(su_id, seq, now)
        if entry is not None:
            self._drop(entry.request, now, "timeout")
            del self._class_of[su_id]
        if self.check_invariants:
            self.state.audit()

    def _on_snr(self, ev) -> None:
        su_id, token = ev.data
        if self._snr_token.get(su_id) != token:
            return
        now = ev.time
        self._advance(now)
        state = self.state
        alloc = state.allocations.get(su_id)
        req = alloc.request if alloc is not None else state.queued[su_id].request
        row = self._snr_matrix[SNR_CLASSES.index(req.snr_class)]
        req.snr_class = SNR_CLASSES[draw_row(row, self.streams["snr"].random())]
        req.theta, req.theta_min, req.theta_max = self._classes[self._class_of[su_id]].demand(req.snr_class)
        self._snr_token[su_id] = token + 1
        self.events.schedule(now + self._exp(self._snr_rate, "snr"), EventKind.SNR_TRANSITION, (su_id, token + 1))
        result = state.apply_demand_change(su_id, now)
        if result is not None:
            self._note(now, su_id, "snr_" + result.value)
            if result is Displacement.TERMINATED:
                self._drop(req, now, "preempted")
                del self._class_of[su_id]
        self._settle(now, state.drain(now))

    # -- driver -----------------------------------------------------------
    def _start(self) -> None:
        tr = self.scenario.traffic
        if tr.pu_arrival_rate > 0:
            self.events.schedule(self._exp(tr.pu_arrival_rate, "pu_arrival"), EventKind.PU_ARRIVAL)
        for k, cl in enumerate(self._classes):
            if cl.arrival_rate > 0:
                self.events.schedule(-math.log(self._arrival_stream[k].uniform()) / cl.arrival_rate,
                                     EventKind.SU_ARRIVAL, k)
        self._started = True

    def _observe(self, ev) -> None:
        # repr of floats, ints, tuples and None is stable across processes, unlike hash()
        pending = self._pending
        pending.append((ev.time, int(ev.kind), ev.data))
        if len(pending) >= 4096:
            self._flush()

    def _flush(self) -> None:
        if self._pending:
            self._digest.update(repr(self._pending).encode())
            self._pending.clear()

    @property
    def trace_hash(self) -> int:
        """64-bit digest of every event dispatched so far."""
        self._flush()
        return int.from_bytes(self._digest.digest(), "big")

    def run(self, horizon: Optional[float] = None) -> CounterSet:
        """Advance to ``horizon`` (default: the scenario's) and return the counters."""
        horizon = self.scenario.sim.horizon if horizon is None else horizon
        if not self._started:
            self._start()
        handlers = {
            EventKind.PU_ARRIVAL: self._on_pu_arrival,
            EventKind.PU_DEPARTURE: self._on_pu_departure,
            EventKind.SU_ARRIVAL: self._on_su_arrival,
            EventKind.SU_SERVICE_COMPLETE: self._on_complete,
            EventKind.QUEUE_DEADLINE: self._on_deadline,
            EventKind.SNR_TRANSITION: self._on_snr,
        }
        self.events_processed = run_until(self.events, horizon, handlers, observer=self._observe)
        self._advance(horizon)
        c = self.counters
        c.observation_time = max(0.0, horizon - self.warmup)
        in_sys = self.state.allocations.keys() | self.state.queued.keys()
        c.in_system = len(self._cohort & in_sys)
        return c


def simulate(scenario: Scenario, seed: Optional[int] = None, policy: Optional[PolicyKind] = None,
             **kw) -> CounterSet:
    return Simulation(scenario, seed=seed, policy=policy, **kw).run()
