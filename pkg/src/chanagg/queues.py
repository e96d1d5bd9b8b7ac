"""Two bounded FIFO buffers that absorb each other's overflow."""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterator, List, Optional

FULL = None


class Origin(str, Enum):
    FRESH_ARRIVAL = "FRESH_ARRIVAL"
    PREEMPTED_FEEDBACK = "PREEMPTED_FEEDBACK"


_entry_seq = itertools.count()


@dataclass(eq=False)
class QueuedEntry:
    request: Any
    enqueue_time: float
    deadline: float = math.inf
    origin: Origin = Origin.FRESH_ARRIVAL
    seq: int = field(default_factory=lambda: next(_entry_seq))

    def __post_init__(self):
        if self.deadline < self.enqueue_time:
            raise ValueError("deadline precedes enqueue time")

    @property
    def key(self):
        return (self.enqueue_time, self.seq)


class FifoQueue:
    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError("queue capacity must be >= 0")
        self.capacity = capacity
        self.entries: deque = deque()

    def __len__(self):
        return len(self.entries)

    def __iter__(self) -> Iterator[QueuedEntry]:
        return iter(self.entries)

    @property
    def full(self) -> bool:
        return len(self.entries) >= self.capacity

    def push(self, entry: QueuedEntry) -> None:
        if self.full:
            raise OverflowError("queue full")
        if self.entries and entry.key < self.entries[-1].key:
            raise ValueError("entries must arrive in enqueue-time order")
        self.entries.append(entry)

    def remove(self, entry: QueuedEntry) -> None:
        self.entries.remove(entry)


class DualQueueController:
    """queue_1 and queue_2; each request class names a primary queue (0 or 1)."""

    def __init__(self, q1_max: int, q2_max: int, strict_hol: bool = False):
        self.queues = (FifoQueue(q1_max), FifoQueue(q2_max))
        self.strict_hol = strict_hol
        self._where: dict = {}

    def __len__(self):
        return len(self._where)

    def __contains__(self, entry: QueuedEntry) -> bool:
        return entry.seq in self._where

    @property
    def capacity(self) -> int:
        return self.queues[0].capacity + self.queues[1].capacity

    def occupancy(self) -> tuple:
        return len(self.queues[0]), len(self.queues[1])

    def in_fifo_order(self) -> List[QueuedEntry]:
        a, b = self.queues
        if not b.entries:
            return list(a.entries)
        if not a.entries:
            return list(b.entries)
        return sorted(itertools.chain(a.entries, b.entries), key=lambda e: e.key)

    def remove(self, entry: QueuedEntry) -> None:
        q = self._where.pop(entry.seq)
        self.queues[q].remove(entry)


def enqueue(entry: QueuedEntry, ctrl: DualQueueController, primary: int = 0) -> Optional[int]:
    """Place ``entry`` in its primary queue, else the other one.

    Returns the queue id (1 or 2), or FULL (None) if both are at capacity.
    """
    for q in (primary, 1 - primary):
        if not ctrl.queues[q].full:
            ctrl.queues[q].push(entry)
            ctrl._where[entry.seq] = q
            return q + 1
    return FULL


def dequeue_first_servable(ctrl: DualQueueController, free_slots: int, demand_of) -> Optional[QueuedEntry]:
    """Remove and return the earliest-enqueued entry whose demand fits.

    ``demand_of(request)`` gives the minimum slot count the policy needs to
    admit that request. With ``strict_hol`` only the global head is
    considered.
    """
    if free_slots <= 0 or not ctrl._where:
        return None
    for entry in ctrl.in_fifo_order():
        if demand_of(entry.request) <= free_slots:
            ctrl.remove(entry)
            return entry
        if ctrl.strict_hol:
            return None
    return None


def expire_deadlines(ctrl: DualQueueController, now: float) -> List[QueuedEntry]:
    dropped = [e for e in ctrl.in_fifo_order() if e.deadline <= now]
    for e in dropped:
        ctrl.remove(e)
    return dropped
