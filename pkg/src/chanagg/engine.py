"""Discrete-event kernel: future-event list, clock, seeded random substreams."""

from __future__ import annotations

import hashlib
import heapq
import math
import random
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Callable, Dict, NamedTuple, Optional


class EventKind(IntEnum):
    PU_ARRIVAL = 1
    PU_DEPARTURE = 2
    SU_ARRIVAL = 3
    SU_SERVICE_COMPLETE = 4
    QUEUE_DEADLINE = 5
    SNR_TRANSITION = 6
    MEASURE_TICK = 7


class EventRecord(NamedTuple):
    # (time, seq) is unique, so tuple ordering never compares kind or data
    time: float
    seq: int
    kind: EventKind
    data: Any = None


class SchedulingError(ValueError):
    pass


class HandlerError(RuntimeError):
    """A handler raised; carries the offending event."""

    def __init__(self, event: EventRecord, cause: BaseException):
        super().__init__(f"handler failed on {event.kind.name} at t={event.time!r} "
                         f"(seq {event.seq}, data={event.data!r}): {cause!r}")
        self.event = event


END = None


class EventList:
    """Min-heap of pending events keyed by (timestamp, insertion sequence)."""

    def __init__(self, horizon: float = math.inf):
        self._heap: list = []
        self._seq = 0
        self.clock = 0.0
        self.horizon = horizon

    def __len__(self):
        return len(self._heap)

    def schedule(self, time: float, kind: EventKind, data: Any = None) -> EventRecord:
        if time < self.clock or math.isnan(time):
            raise SchedulingError(f"cannot schedule {kind.name} at t={time!r} before clock {self.clock!r}")
        ev = EventRecord(time, self._seq, kind, data)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def pop_next(self) -> Optional[EventRecord]:
        """Next event in (time, seq) order, or END if empty or past the horizon."""
        if not self._heap or self._heap[0].time > self.horizon:
            return END
        ev = heapq.heappop(self._heap)
        self.clock = ev.time
        return ev

    def peek_time(self) -> float:
        return self._heap[0].time if self._heap else math.inf


def substream_seed(seed: int, name: str) -> int:
    digest = hashlib.blake2b(f"{int(seed)}/{name}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """One named random substream.

    Streams are keyed by (base seed, name) so adding draws to one process
    never shifts the draws of another.
    """

    __slots__ = ("name", "seed", "counter", "_rng")

    def __init__(self, seed: int, name: str):
        self.name = name
        self.seed = substream_seed(seed, name)
        self.counter = 0
        self._rng = random.Random(self.seed)

    def uniform(self) -> float:
        """Uniform on (0, 1]."""
        self.counter += 1
        return 1.0 - self._rng.random()

    def random(self) -> float:
        """Uniform on [0, 1)."""
        self.counter += 1
        return self._rng.random()

    def randrange(self, n: int) -> int:
        self.counter += 1
        return int(self._rng.random() * n)


class StreamSet:
    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: Dict[str, RngStream] = {}

    def __getitem__(self, name: str) -> RngStream:
        s = self._streams.get(name)
        if s is None:
            s = self._streams[name] = RngStream(self.seed, name)
        return s


def exponential_from_uniform(rate: float, u: float) -> float:
    return -math.log(u) / rate


def sample_exponential(rate: float, stream: RngStream) -> float:
    if not rate > 0:
        raise ValueError(f"exponential rate must be > 0, got {rate!r}")
    return -math.log(stream.uniform()) / rate


def su_service_duration(theta: int, per_slot_rate: float, stream: RngStream) -> float:
    """Holding time of an SU aggregating ``theta`` slots (total rate theta * mu_s)."""
    if theta < 1:
        raise ValueError("an SU in service holds at least one slot")
    return sample_exponential(theta * per_slot_rate, stream)


@dataclass
class TrafficRates:
    pu_arrival: float
    pu_service: float
    su_arrival: Dict[str, float] = field(default_factory=dict)
    su_service: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.pu_arrival < 0:
            raise ValueError("PU arrival rate must be >= 0")
        if not self.pu_service > 0:
            raise ValueError("PU service rate must be > 0")
        for name, lam in self.su_arrival.items():
            if lam < 0:
                raise ValueError(f"class {name}: arrival rate must be >= 0")
        for name, mu in self.su_service.items():
            if not mu > 0:
                raise ValueError(f"class {name}: per-slot service rate must be > 0")


Handler = Callable[[EventRecord], None]


def run_until(events: EventList, horizon: float, handlers: Dict[EventKind, Handler],
              observer: Optional[Handler] = None) -> int:
    """Dispatch events up to and including ``horizon``; returns the count processed.

    ``observer`` sees every event before its handler (used for trace hashing).
    """
    events.horizon = horizon
    n = 0
    pop = events.pop_next
    while True:
        ev = pop()
        if ev is END:
            return n
        if observer is not None:
            observer(ev)
        try:
            handlers[ev.kind](ev)
        except HandlerError:
            raise
        except Exception as exc:
            raise HandlerError(ev, exc) from exc
        n += 1
