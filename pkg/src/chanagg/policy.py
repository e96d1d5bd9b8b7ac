"""Admission, preemption and readjustment for IBS, RBS, IBS+Q and RBS+Q.

All four policies share one :class:`SystemState`. The instant-blocking family
grants exactly ``theta`` slots; the readjustment family grants anywhere in
``[theta_min, theta_max]`` and lets incumbents donate slots to newcomers.
The ``+Q`` variants park SUs in the dual queue instead of blocking or
dropping them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

from .queues import FULL, DualQueueController, Origin, QueuedEntry, dequeue_first_servable, enqueue
from .spectrum import SnrClass, SpectrumPool


class PolicyError(RuntimeError):
    pass


class PolicyKind(str, Enum):
    IBS = "IBS"
    RBS = "RBS"
    IBS_Q = "IBS_Q"
    RBS_Q = "RBS_Q"

    @property
    def elastic(self) -> bool:
        return self in (PolicyKind.RBS, PolicyKind.RBS_Q)

    @property
    def queued(self) -> bool:
        return self in (PolicyKind.IBS_Q, PolicyKind.RBS_Q)

    @property
    def label(self) -> str:
        return self.value.replace("_Q", "+Q")

    @classmethod
    def parse(cls, text: str) -> "PolicyKind":
        key = text.strip().upper().replace("+", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown policy {text!r}; expected one of IBS, RBS, IBS_Q, RBS_Q") from None


@dataclass(eq=False)
class SuRequest:
    su_id: int
    cls: str
    arrival_time: float
    theta: int = 1
    theta_min: int = 1
    theta_max: int = 1
    snr_class: SnrClass = SnrClass.GOOD
    primary_queue: int = 0

    def __post_init__(self):
        if self.theta < 1:
            raise PolicyError("theta must be >= 1")
        if not 1 <= self.theta_min <= self.theta_max:
            raise PolicyError("need 1 <= theta_min <= theta_max")


@dataclass(eq=False)
class Allocation:
    request: SuRequest
    slots: list
    service_start: float
    version: int = 0

    @property
    def su_id(self) -> int:
        return self.request.su_id

    @property
    def granted(self) -> int:
        return len(self.slots)


class Outcome(str, Enum):
    ADMIT = "ADMIT"
    ENQUEUE = "ENQUEUE"
    BLOCK = "BLOCK"


@dataclass
class AdmissionDecision:
    outcome: Outcome
    request: SuRequest
    allocation: Optional[Allocation] = None
    queue_id: Optional[int] = None

    def __post_init__(self):
        if (self.allocation is not None) != (self.outcome is Outcome.ADMIT):
            raise PolicyError("allocation present iff ADMIT")
        if (self.queue_id is not None) != (self.outcome is Outcome.ENQUEUE):
            raise PolicyError("queue id present iff ENQUEUE")


class Displacement(str, Enum):
    RELOCATED = "RELOCATED"
    SHRUNK = "SHRUNK"
    REQUEUED = "REQUEUED"
    TERMINATED = "TERMINATED"


class SystemState:
    """Slot grid, live allocations and the dual queue of one run.

    After each call the caller should consume ``changed`` (SU ids whose
    grant was created or altered, needing a fresh completion timer) and
    ``new_entries`` (queue entries needing a deadline timer).
    """

    def __init__(self, pool: SpectrumPool, policy: PolicyKind,
                 queues: Optional[DualQueueController] = None,
                 deadline_fn: Optional[Callable[[SuRequest, float], float]] = None):
        self.pool = pool
        self.policy = PolicyKind(policy)
        self.elastic = self.policy.elastic
        self.queueing = self.policy.queued
        self.queues = queues if queues is not None else DualQueueController(0, 0)
        self.deadline_fn = deadline_fn or (lambda req, now: math.inf)
        self.allocations: Dict[int, Allocation] = {}
        self.queued: Dict[int, QueuedEntry] = {}
        self.changed: set = set()
        self.new_entries: List[QueuedEntry] = []
        self._entry_seq = itertools.count()

    # -- demand helpers -------------------------------------------------
    def min_demand(self, req: SuRequest) -> int:
        return req.theta_min if self.elastic else req.theta

    def max_demand(self, req: SuRequest) -> int:
        return req.theta_max if self.elastic else req.theta

    @property
    def free(self) -> int:
        return self.pool.free_count

    def donatable(self) -> int:
        return sum(a.granted - a.request.theta_min
                   for a in self.allocations.values()
                   if a.granted > a.request.theta_min)

    # -- primitive grant changes ----------------------------------------
    def _admit(self, req: SuRequest, n: int, now: float) -> Allocation:
        alloc = Allocation(req, self.pool.take_free(n, req.su_id), now)
        self.allocations[req.su_id] = alloc
        self.changed.add(req.su_id)
        return alloc

    def _grow(self, alloc: Allocation, n: int) -> None:
        if n > 0:
            alloc.slots.extend(self.pool.take_free(n, alloc.su_id))
            self.changed.add(alloc.su_id)

    def _shrink(self, alloc: Allocation, n: int) -> list:
        if n <= 0:
            return []
        # give back the most recently added slots
        freed = alloc.slots[-n:]
        del alloc.slots[-n:]
        self.pool.release(freed)
        self.changed.add(alloc.su_id)
        return freed

    def _remove(self, alloc: Allocation) -> None:
        self.pool.release(alloc.slots)
        alloc.slots = []
        del self.allocations[alloc.su_id]
        self.changed.discard(alloc.su_id)

    def _enqueue(self, req: SuRequest, now: float, origin: Origin) -> Optional[int]:
        if not self.queueing:
            return FULL
        entry = QueuedEntry(req, now, self.deadline_fn(req, now), origin, seq=next(self._entry_seq))
        qid = enqueue(entry, self.queues, req.primary_queue)
        if qid is not FULL:
            self.queued[req.su_id] = entry
            self.new_entries.append(entry)
        return qid

    # -- readjustment ---------------------------------------------------
    def readjust_donate(self, needed: int) -> list:
        """Take one slot at a time from the largest grant above its minimum.

        Ties go to the lowest su_id. Stops after ``needed`` slots or when no
        donor is left, so the returned list may be short.
        """
        if needed < 1:
            raise PolicyError("needed must be >= 1")
        freed: list = []
        while len(freed) < needed:
            donor = None
            for a in self.allocations.values():
                if a.granted > a.request.theta_min and (
                        donor is None or a.granted > donor.granted
                        or (a.granted == donor.granted and a.su_id < donor.su_id)):
                    donor = a
            if donor is None:
                break
            freed.extend(self._shrink(donor, 1))
        return freed

    def expand(self) -> None:
        """Hand free slots to elastic SUs below theta_max, largest deficit first."""
        while self.pool.free_count > 0:
            best = None
            best_gap = 0
            for a in self.allocations.values():
                gap = a.request.theta_max - a.granted
                if gap > best_gap or (gap == best_gap and gap > 0 and a.su_id < best.su_id):
                    best, best_gap = a, gap
            if best is None:
                return
            self._grow(best, 1)

    # -- arrivals -------------------------------------------------------
    def ibs_q_handle_su_arrival(self, req: SuRequest, now: float) -> AdmissionDecision:
        if self.pool.free_count >= req.theta:
            return AdmissionDecision(Outcome.ADMIT, req, allocation=self._admit(req, req.theta, now))
        return self._queue_or_block(req, now)

    def rbs_q_handle_su_arrival(self, req: SuRequest, now: float) -> AdmissionDecision:
        free = self.pool.free_count
        if free >= req.theta_min:
            n = min(req.theta_max, free)
            return AdmissionDecision(Outcome.ADMIT, req, allocation=self._admit(req, n, now))
        needed = req.theta_min - free
        # only shrink incumbents when the donation can actually complete
        if self.donatable() >= needed:
            self.readjust_donate(needed)
            return AdmissionDecision(Outcome.ADMIT, req, allocation=self._admit(req, req.theta_min, now))
        return self._queue_or_block(req, now)

    def _queue_or_block(self, req: SuRequest, now: float) -> AdmissionDecision:
        qid = self._enqueue(req, now, Origin.FRESH_ARRIVAL)
        if qid is FULL:
            return AdmissionDecision(Outcome.BLOCK, req)
        return AdmissionDecision(Outcome.ENQUEUE, req, queue_id=qid)

    def handle_su_arrival(self, req: SuRequest, now: float) -> AdmissionDecision:
        if self.elastic:
            return self.rbs_q_handle_su_arrival(req, now)
        return self.ibs_q_handle_su_arrival(req, now)

    # -- PU activity ----------------------------------------------------
    def handle_pu_arrival(self, channel: int, now: float) -> List[Tuple[SuRequest, Displacement]]:
        """PU takes every slot of ``channel``; displaced SUs relocate, requeue or end.

        Displaced SUs are handled earliest arrival first. Queue draining is
        left to the caller (see :meth:`drain`).
        """
        if not self.pool.is_valid_channel(channel):
            raise PolicyError(f"invalid channel {channel}")
        lost = self.pool.seize_channel(channel)
        hit = []
        for su_id, slots in lost.items():
            alloc = self.allocations[su_id]
            gone = set(slots)
            alloc.slots = [s for s in alloc.slots if s not in gone]
            hit.append((alloc, len(slots)))
        hit.sort(key=lambda x: (x[0].request.arrival_time, x[0].su_id))
        return [(alloc.request, self._refit(alloc, k, now)) for alloc, k in hit]

    def _refit(self, alloc: Allocation, short: int, now: float) -> Displacement:
        """Recover ``short`` slots for an SU that just lost them."""
        req = alloc.request
        if not self.elastic:
            if self.pool.free_count >= short:
                self._grow(alloc, short)
                return Displacement.RELOCATED
            return self._displace(alloc, now)
        take = min(short, self.pool.free_count)
        self._grow(alloc, take)
        if alloc.granted >= req.theta_min:
            # a partial relocation changes the service rate
            self.changed.add(alloc.su_id)
            return Displacement.RELOCATED if take == short else Displacement.SHRUNK
        needed = req.theta_min - alloc.granted
        if self.donatable() >= needed:
            self.readjust_donate(needed)
            self._grow(alloc, needed)
            return Displacement.SHRUNK
        return self._displace(alloc, now)

    def _displace(self, alloc: Allocation, now: float) -> Displacement:
        self._remove(alloc)
        if self._enqueue(alloc.request, now, Origin.PREEMPTED_FEEDBACK) is FULL:
            return Displacement.TERMINATED
        return Displacement.REQUEUED

    def handle_pu_departure(self, channel: int, now: float) -> List[AdmissionDecision]:
        self.pool.vacate_channel(channel)
        return self.drain(now)

    # -- departures and the queue ---------------------------------------
    def handle_su_departure(self, su_id: int, now: float) -> List[AdmissionDecision]:
        alloc = self.allocations.get(su_id)
        if alloc is None:
            raise PolicyError(f"unknown allocation {su_id}")
        self._remove(alloc)
        return self.drain(now)

    def drain(self, now: float) -> List[AdmissionDecision]:
        """Admit queued SUs in FIFO order while they fit, then expand (elastic only)."""
        out = []
        if self.queued:
            while True:
                entry = dequeue_first_servable(self.queues, self.pool.free_count, self.min_demand)
                if entry is None:
                    break
                req = entry.request
                del self.queued[req.su_id]
                n = min(self.max_demand(req), self.pool.free_count)
                out.append(AdmissionDecision(Outcome.ADMIT, req, allocation=self._admit(req, n, now)))
        if self.elastic:
            self.expand()
        return out

    def check_queue_timeout(self, su_id: int, entry_seq: int, now: float) -> Optional[QueuedEntry]:
        """Drop the entry if it is still waiting at its deadline; stale timers are no-ops."""
        entry = self.queued.get(su_id)
        if entry is None or entry.seq != entry_seq or now < entry.deadline:
            return None
        self.queues.remove(entry)
        del self.queued[su_id]
        return entry

    # -- link-state changes ---------------------------------------------
    def apply_demand_change(self, su_id: int, now: float) -> Optional[Displacement]:
        """Re-fit an in-service SU after its SNR class (hence demand) changed."""
        alloc = self.allocations.get(su_id)
        if alloc is None:
            return None
        req = alloc.request
        g = alloc.granted
        target = min(max(g, req.theta_min), req.theta_max) if self.elastic else req.theta
        if target < g:
            self._shrink(alloc, g - target)
            return Displacement.SHRUNK
        if target > g:
            return self._refit(alloc, target - g, now)
        return None

    # -- audit ----------------------------------------------------------
    def audit(self) -> None:
        pool = self.pool
        pu, su, free = pool.count()
        if pu + su + free != pool.total_slots:
            raise PolicyError("slot conservation violated")
        if pu != pool.pu_channels * pool.slots_per_channel:
            raise PolicyError("PU must hold whole channels")
        if free != pool.free_count:
            raise PolicyError(f"free counter {pool.free_count} != grid {free}")
        held = 0
        for su_id, a in self.allocations.items():
            for c, s in a.slots:
                if pool.owner[c][s] != su_id:
                    raise PolicyError(f"slot {(c, s)} not owned by SU {su_id}")
            held += a.granted
            lo, hi = self.min_demand(a.request), self.max_demand(a.request)
            if not lo <= a.granted <= hi:
                raise PolicyError(f"SU {su_id} grant {a.granted} outside [{lo}, {hi}]")
        if held != su:
            raise PolicyError("slots owned by SUs without an allocation")
        if len(self.queued) != len(self.queues):
            raise PolicyError("queue index out of sync")
        if set(self.queued) & set(self.allocations):
            raise PolicyError("SU both queued and in service")
        for q in self.queues.queues:
            if len(q) > q.capacity:
                raise PolicyError("queue over capacity")


def ibs_q_handle_su_arrival(req: SuRequest, state: SystemState, now: float = 0.0) -> AdmissionDecision:
    return state.ibs_q_handle_su_arrival(req, now)


def rbs_q_handle_su_arrival(req: SuRequest, state: SystemState, now: float = 0.0) -> AdmissionDecision:
    return state.rbs_q_handle_su_arrival(req, now)


def readjust_donate(needed: int, state: SystemState) -> list:
    return state.readjust_donate(needed)


def handle_pu_arrival(channel: int, state: SystemState, now: float = 0.0):
    return state.handle_pu_arrival(channel, now)


def handle_su_departure(su_id: int, state: SystemState, now: float = 0.0):
    return state.handle_su_departure(su_id, now)


def check_queue_timeout(su_id: int, entry_seq: int, state: SystemState, now: float):
    return state.check_queue_timeout(su_id, entry_seq, now)
