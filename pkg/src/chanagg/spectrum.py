"""Spectrum resource grid, PU ON/OFF channels, SNR classes and AMC arithmetic."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

FREE = -1
PU = -2


class SpectrumError(ValueError):
    pass


class SnrClass(str, Enum):
    GOOD = "GOOD"
    MODERATE = "MODERATE"
    BAD = "BAD"


SNR_CLASSES = (SnrClass.GOOD, SnrClass.MODERATE, SnrClass.BAD)

# slow-fading birth-death default: no direct GOOD <-> BAD jumps
DEFAULT_SNR_MATRIX = (
    (0.9, 0.1, 0.0),
    (0.1, 0.8, 0.1),
    (0.0, 0.1, 0.9),
)


@dataclass(frozen=True)
class AmcMode:
    index: int
    bits_per_symbol: float
    snr_low: float
    snr_high: float

    def __post_init__(self):
        if self.bits_per_symbol <= 0:
            raise SpectrumError(f"mode {self.index}: bits_per_symbol must be > 0")
        if not self.snr_low < self.snr_high:
            raise SpectrumError(f"mode {self.index}: empty SNR interval")

    def contains(self, snr_db: float) -> bool:
        return self.snr_low <= snr_db < self.snr_high


class _Outage:
    index = 0
    bits_per_symbol = 0.0

    def __repr__(self):
        return "OUTAGE"


OUTAGE = _Outage()


def validate_mode_table(table: Sequence[AmcMode]) -> None:
    if not table:
        raise SpectrumError("AMC mode table is empty")
    for lo, hi in zip(table, table[1:]):
        if hi.index != lo.index + 1:
            raise SpectrumError("AMC mode indices must be consecutive")
        if hi.snr_low < lo.snr_high:
            raise SpectrumError(f"modes {lo.index} and {hi.index} overlap")
        if hi.bits_per_symbol <= lo.bits_per_symbol:
            raise SpectrumError("bits_per_symbol must strictly increase with mode index")


@dataclass(frozen=True)
class FrameConfig:
    message_length: float
    channel_constant: float
    symbol_rate: float

    def __post_init__(self):
        for name in ("message_length", "channel_constant", "symbol_rate"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise SpectrumError(f"{name} must be a positive finite number, got {v!r}")


def compute_frame_slots(cfg: FrameConfig, mode: AmcMode) -> int:
    """Number of slots in a frame for a coherent interval.

    The bits-per-symbol factor divides out, so the result does not depend on
    ``mode``; it is still taken as an argument to keep the call site honest
    about which mode was active.
    """
    r_n = mode.bits_per_symbol
    raw = (cfg.message_length / (r_n * cfg.channel_constant * cfg.symbol_rate)) * r_n
    nearest = round(raw)
    # absorb round-off from the r_n cancellation before taking the ceiling
    if abs(raw - nearest) <= 1e-9 * max(1.0, abs(raw)):
        raw = float(nearest)
    return max(1, math.ceil(raw))


def snr_to_mode(snr_db: float, table: Sequence[AmcMode]):
    """Map an SNR (dB) onto the AMC mode whose half-open interval contains it.

    Below the lowest threshold the ``OUTAGE`` sentinel is returned. Above the
    top interval the highest mode is kept.
    """
    if math.isnan(snr_db):
        raise SpectrumError("SNR is NaN")
    if not table:
        raise SpectrumError("AMC mode table is empty")
    if snr_db < table[0].snr_low:
        return OUTAGE
    chosen = table[0]
    for mode in table:
        if snr_db >= mode.snr_low:
            chosen = mode
        else:
            break
    return chosen


class PuState(str, Enum):
    ON = "ON"
    OFF = "OFF"


@dataclass
class PuChannelProcess:
    """Discrete-epoch ON/OFF chain of one licensed channel."""

    channel_index: int
    on_to_off: float
    off_to_on: float
    state: PuState = PuState.OFF

    def __post_init__(self):
        for name in ("on_to_off", "off_to_on"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SpectrumError(f"channel {self.channel_index}: {name}={v} outside [0, 1]")
        if self.on_to_off + self.off_to_on <= 0.0:
            raise SpectrumError(f"channel {self.channel_index}: frozen chain (A_i + C_i = 0)")


def channel_utilization(p: PuChannelProcess) -> float:
    total = p.off_to_on + p.on_to_off
    if total <= 0.0:
        raise SpectrumError("degenerate PU chain: A_i + C_i = 0")
    return p.off_to_on / total


def sample_pu_transition(p: PuChannelProcess, rng: random.Random) -> PuState:
    u = rng.random()
    if p.state is PuState.OFF:
        if u < p.off_to_on:
            p.state = PuState.ON
    elif u < p.on_to_off:
        p.state = PuState.OFF
    return p.state


@dataclass
class SnrProcess:
    su_id: int
    snr_class: SnrClass = SnrClass.GOOD
    matrix: Sequence[Sequence[float]] = DEFAULT_SNR_MATRIX

    def __post_init__(self):
        check_snr_matrix(self.matrix)
        self.snr_class = SnrClass(self.snr_class)


def check_snr_matrix(matrix: Sequence[Sequence[float]]) -> None:
    if len(matrix) != 3 or any(len(row) != 3 for row in matrix):
        raise SpectrumError("SNR transition matrix must be 3x3 (GOOD, MODERATE, BAD)")
    for k, row in enumerate(matrix):
        if any(x < 0 for x in row):
            raise SpectrumError(f"SNR matrix row {k} has a negative entry")
        if abs(math.fsum(row) - 1.0) > 1e-12:
            raise SpectrumError(f"SNR matrix row {k} does not sum to 1")


def draw_row(row: Sequence[float], u: float) -> int:
    acc = 0.0
    for k, p in enumerate(row):
        acc += p
        if u < acc:
            return k
    # u landed in the round-off gap above the cumulative sum
    for k in range(len(row) - 1, -1, -1):
        if row[k] > 0:
            return k
    raise SpectrumError("empty probability row")


def sample_snr_transition(s: SnrProcess, rng: random.Random) -> SnrClass:
    row = s.matrix[SNR_CLASSES.index(s.snr_class)]
    s.snr_class = SNR_CLASSES[draw_row(row, rng.random())]
    return s.snr_class


def snr_stationary(matrix: Sequence[Sequence[float]]) -> tuple:
    import numpy as np

    P = np.asarray(matrix, dtype=float)
    A = np.vstack([P.T - np.eye(3), np.ones(3)])
    b = np.zeros(4)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return tuple(float(x) for x in pi / pi.sum())


class SpectrumPool:
    """M x S slot grid. Each slot is FREE, PU, or the id of the SU holding it.

    A PU always takes a whole channel. SU slots are handed out first-fit in
    channel-major order.
    """

    def __init__(self, num_channels: int, slots_per_channel: int):
        if num_channels < 1 or slots_per_channel < 1:
            raise SpectrumError("need at least one channel and one slot per channel")
        self.num_channels = num_channels
        self.slots_per_channel = slots_per_channel
        self.owner = [[FREE] * slots_per_channel for _ in range(num_channels)]
        self.pu_on = [False] * num_channels
        self._free = [list(range(slots_per_channel - 1, -1, -1)) for _ in range(num_channels)]
        self.free_count = num_channels * slots_per_channel
        self.pu_channels = 0

    @property
    def total_slots(self) -> int:
        return self.num_channels * self.slots_per_channel

    def is_valid_channel(self, i: int) -> bool:
        return 0 <= i < self.num_channels

    def idle_channels(self) -> list:
        return [c for c in range(self.num_channels) if not self.pu_on[c]]

    def take_free(self, n: int, su_id: int) -> list:
        if n > self.free_count:
            raise SpectrumError(f"asked for {n} slots, only {self.free_count} free")
        got = []
        for c in range(self.num_channels):
            fl = self._free[c]
            while fl and len(got) < n:
                s = fl.pop()
                self.owner[c][s] = su_id
                got.append((c, s))
            if len(got) == n:
                break
        self.free_count -= n
        return got

    def release(self, slots) -> None:
        touched = set()
        for c, s in slots:
            self.owner[c][s] = FREE
            self._free[c].append(s)
            touched.add(c)
        self.free_count += len(slots)
        # lowest slot index is handed out first
        for c in touched:
            self._free[c].sort(reverse=True)

    def seize_channel(self, c: int) -> dict:
        """Give channel ``c`` to a PU. Returns {su_id: [slots lost]}."""
        if self.pu_on[c]:
            raise SpectrumError(f"channel {c} already held by a PU")
        lost: dict = {}
        row = self.owner[c]
        for s, o in enumerate(row):
            if o >= 0:
                lost.setdefault(o, []).append((c, s))
            row[s] = PU
        self.free_count -= len(self._free[c])
        self._free[c] = []
        self.pu_on[c] = True
        self.pu_channels += 1
        return lost

    def vacate_channel(self, c: int) -> None:
        if not self.pu_on[c]:
            raise SpectrumError(f"channel {c} not held by a PU")
        self.owner[c] = [FREE] * self.slots_per_channel
        self._free[c] = list(range(self.slots_per_channel - 1, -1, -1))
        self.free_count += self.slots_per_channel
        self.pu_on[c] = False
        self.pu_channels -= 1

    def count(self) -> tuple:
        """(pu slots, su slots, free slots) recounted from the grid."""
        pu = su = free = 0
        for row in self.owner:
            for o in row:
                if o == PU:
                    pu += 1
                elif o == FREE:
                    free += 1
                else:
                    su += 1
        return pu, su, free


def pu_slot_capacity(pool: SpectrumPool, procs: Sequence[PuChannelProcess]) -> float:
    if len(procs) != pool.num_channels:
        raise SpectrumError(f"expected {pool.num_channels} PU processes, got {len(procs)}")
    return pool.slots_per_channel * math.fsum(channel_utilization(p) for p in procs)


def su_slot_capacity(pool: SpectrumPool, pu_capacity: float) -> float:
    total = pool.total_slots
    if not 0.0 <= pu_capacity <= total:
        raise SpectrumError(f"PU capacity {pu_capacity} outside [0, {total}]")
    return total - pu_capacity
