"""Scenario files: named blocks of ``key = value`` lines (or the JSON equivalent).

Example::

    [spectrum]
    channels = 4
    message_length = 1000
    channel_constant = 0.5
    symbol_rate = 1000

    [traffic]
    pu_arrival_rate = 0.2
    pu_service_rate = 1.0

    [class i]
    arrival_rate = 1.0
    service_rate = 0.5
    theta = good:1, moderate:2, bad:3

    [policy]
    kind = RBS_Q
    q1_max = 4
    q2_max = 4
    deadline = 5

    [sim]
    horizon = 20000
    warmup = 500
    replications = 5
    seed = 1

Every key is optional except at least one ``[class ...]`` block; omitted
keys take the defaults on the dataclasses below.
"""

from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

from .policy import PolicyKind
from .spectrum import (DEFAULT_SNR_MATRIX, SNR_CLASSES, AmcMode, FrameConfig, PuChannelProcess,
                       SnrClass, SpectrumError, check_snr_matrix, compute_frame_slots,
                       validate_mode_table)


class ScenarioError(ValueError):
    """One or more field-level problems, each tagged with its line when known."""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


DEFAULT_AMC = (
    AmcMode(1, 1.0, 0.0, 6.0),
    AmcMode(2, 2.0, 6.0, 12.0),
    AmcMode(3, 4.0, 12.0, math.inf),
)


@dataclass
class SpectrumSpec:
    channels: int = 4
    slots_per_channel: Optional[int] = None
    message_length: float = 1000.0
    channel_constant: float = 0.5
    symbol_rate: float = 1000.0
    amc_modes: Tuple[AmcMode, ...] = DEFAULT_AMC
    pu_off_to_on: Optional[Tuple[float, ...]] = None
    pu_on_to_off: Optional[Tuple[float, ...]] = None

    @property
    def frame(self) -> FrameConfig:
        return FrameConfig(self.message_length, self.channel_constant, self.symbol_rate)

    @property
    def slots(self) -> int:
        if self.slots_per_channel is not None:
            return self.slots_per_channel
        return compute_frame_slots(self.frame, self.amc_modes[0])


@dataclass
class TrafficSpec:
    pu_arrival_rate: float = 0.2
    pu_service_rate: float = 1.0
    snr_matrix: Tuple[Tuple[float, ...], ...] = DEFAULT_SNR_MATRIX
    snr_rate: float = 0.0
    snr_initial: str = "stationary"


@dataclass
class ClassSpec:
    name: str
    arrival_rate: float = 1.0
    service_rate: float = 1.0
    theta: Optional[Dict[SnrClass, int]] = None
    theta_min: Optional[Dict[SnrClass, int]] = None
    theta_max: Optional[Dict[SnrClass, int]] = None
    queue: Optional[int] = None
    deadline: Optional[float] = None

    def demand(self, snr: SnrClass) -> Tuple[int, int, int]:
        """(theta, theta_min, theta_max) for this SNR class."""
        tmax = (self.theta_max or self.theta or {}).get(snr, 1)
        tmin = (self.theta_min or {}).get(snr, tmax)
        theta = (self.theta or {}).get(snr, tmax)
        return theta, tmin, tmax


@dataclass
class PolicySpec:
    kind: PolicyKind = PolicyKind.RBS_Q
    q1_max: int = 4
    q2_max: int = 4
    deadline: float = math.inf
    strict_hol: bool = False
    exp_deadline: bool = False
    contiguous: bool = False


@dataclass
class SimSpec:
    horizon: float = 10000.0
    warmup: float = 0.0
    replications: int = 1
    seed: int = 1


@dataclass
class Scenario:
    spectrum: SpectrumSpec = field(default_factory=SpectrumSpec)
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    classes: List[ClassSpec] = field(default_factory=list)
    policy: PolicySpec = field(default_factory=PolicySpec)
    sim: SimSpec = field(default_factory=SimSpec)

    def class_queue(self, k: int) -> int:
        """Primary queue (0 or 1) of the k-th class."""
        q = self.classes[k].queue
        return (q - 1) if q is not None else k % 2

    def pu_processes(self) -> List[PuChannelProcess]:
        """Discrete ON/OFF chains per channel, derived from the PU rates if not given."""
        m = self.spectrum.channels
        a = self.spectrum.pu_off_to_on
        c = self.spectrum.pu_on_to_off
        if a is None or c is None:
            on_rate = self.traffic.pu_arrival_rate / m
            off_rate = self.traffic.pu_service_rate
            a = a or (on_rate / (on_rate + off_rate),) * m
            c = c or (off_rate / (on_rate + off_rate),) * m
        return [PuChannelProcess(i, c[i], a[i]) for i in range(m)]


# ---------------------------------------------------------------- converters

_INF = {"inf", "+inf", "infinity", "none", "off"}


def _float(v) -> float:
    if isinstance(v, bool):
        raise ValueError("expected a number")
    if isinstance(v, (int, float)):
        return float(v)
    s = str(v).strip().lower()
    if s in _INF:
        return math.inf
    return float(s)


def _int(v) -> int:
    if isinstance(v, bool):
        raise ValueError("expected an integer")
    if isinstance(v, int):
        return v
    f = float(str(v).strip())
    if not f.is_integer():
        raise ValueError(f"expected an integer, got {v!r}")
    return int(f)


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _floats(v) -> Tuple[float, ...]:
    if isinstance(v, (list, tuple)):
        return tuple(_float(x) for x in v)
    return tuple(_float(x) for x in re.split(r"[,\s]+", str(v).strip()) if x)


def _matrix(v) -> Tuple[Tuple[float, ...], ...]:
    if isinstance(v, (list, tuple)):
        rows = [_floats(r) for r in v]
    else:
        rows = [_floats(r) for r in str(v).split(";") if r.strip()]
    return tuple(rows)


def _snr_key(s: str) -> SnrClass:
    try:
        return SnrClass(s.strip().upper())
    except ValueError:
        raise ValueError(f"unknown SNR class {s!r}; expected good, moderate or bad") from None


def _demand(v) -> Dict[SnrClass, int]:
    if isinstance(v, dict):
        out = {_snr_key(k): _int(x) for k, x in v.items()}
    elif isinstance(v, int) or (isinstance(v, str) and ":" not in v):
        n = _int(v)
        out = {c: n for c in SNR_CLASSES}
    else:
        out = {}
        for part in str(v).split(","):
            if not part.strip():
                continue
            k, _, x = part.partition(":")
            out[_snr_key(k)] = _int(x)
    missing = [c.value.lower() for c in SNR_CLASSES if c not in out]
    if missing:
        raise ValueError(f"demand map is missing {', '.join(missing)}")
    return out


def _amc(v) -> Tuple[AmcMode, ...]:
    if isinstance(v, (list, tuple)):
        items = [tuple(x) if isinstance(x, (list, tuple)) else str(x).split(":") for x in v]
    else:
        items = [p.split(":") for p in str(v).split(",") if p.strip()]
    modes = []
    for n, it in enumerate(items, start=1):
        if len(it) != 3:
            raise ValueError("AMC modes are written bits:snr_low:snr_high")
        modes.append(AmcMode(n, _float(it[0]), _float(it[1]), _float(it[2])))
    return tuple(modes)


def _policy(v) -> PolicyKind:
    return v if isinstance(v, PolicyKind) else PolicyKind.parse(str(v))


def _word(v) -> str:
    return str(v).strip()


SCHEMA: Dict[str, Dict[str, Callable[[Any], Any]]] = {
    "spectrum": {
        "channels": _int,
        "slots_per_channel": _int,
        "message_length": _float,
        "channel_constant": _float,
        "symbol_rate": _float,
        "amc_modes": _amc,
        "pu_off_to_on": _floats,
        "pu_on_to_off": _floats,
    },
    "traffic": {
        "pu_arrival_rate": _float,
        "pu_service_rate": _float,
        "snr_matrix": _matrix,
        "snr_rate": _float,
        "snr_initial": _word,
    },
    "class": {
        "arrival_rate": _float,
        "service_rate": _float,
        "theta": _demand,
        "theta_min": _demand,
        "theta_max": _demand,
        "queue": _int,
        "deadline": _float,
    },
    "policy": {
        "kind": _policy,
        "q1_max": _int,
        "q2_max": _int,
        "queue_size": _int,
        "deadline": _float,
        "strict_hol": _bool,
        "exp_deadline": _bool,
        "contiguous": _bool,
    },
    "sim": {
        "horizon": _float,
        "warmup": _float,
        "replications": _int,
        "seed": _int,
    },
}


# ------------------------------------------------------------------- parsing

_BLOCK = re.compile(r"^\[\s*([A-Za-z_]+)(?:[\s.]+([A-Za-z0-9_\-]+))?\s*\]$")


def _read_blocks(text: str, problems: List[str]):
    """-> list of (block kind, class name or None, {key: (raw value, line)}, header line)."""
    blocks: list = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _BLOCK.match(line)
        if m:
            kind, name = m.group(1).lower(), m.group(2)
            if kind not in SCHEMA:
                problems.append(f"line {lineno}: unknown block [{kind}]")
                current = None
                continue
            if kind == "class" and not name:
                problems.append(f"line {lineno}: class block needs a name, e.g. [class i]")
                current = None
                continue
            current = (kind, name, {}, lineno)
            blocks.append(current)
            continue
        key, eq, value = line.partition("=")
        if not eq:
            problems.append(f"line {lineno}: expected key = value")
            continue
        if current is None:
            problems.append(f"line {lineno}: {key.strip()!r} is outside any block")
            continue
        key = key.strip().lower()
        if key in current[2]:
            problems.append(f"line {lineno}: duplicate key {key!r}")
            continue
        current[2][key] = (value.strip(), lineno)
    return blocks


def _build(blocks, problems: List[str]) -> Scenario:
    sc = Scenario()
    seen = set()
    for kind, name, items, header in blocks:
        tag = f"{kind} {name}" if name else kind
        if tag in seen:
            problems.append(f"line {header}: block [{tag}] appears twice")
            continue
        seen.add(tag)
        schema = SCHEMA[kind]
        values = {}
        for key, (raw, lineno) in items.items():
            where = f"line {lineno}: " if lineno else ""
            conv = schema.get(key)
            if conv is None:
                problems.append(f"{where}unknown key {kind}.{key}")
                continue
            try:
                values[key] = conv(raw)
            except (ValueError, TypeError, SpectrumError) as exc:
                problems.append(f"{where}{kind}.{key}: {exc}")
        if kind == "class":
            sc.classes.append(ClassSpec(name, **values))
        elif kind == "policy":
            qs = values.pop("queue_size", None)
            if qs is not None:
                values.setdefault("q1_max", qs)
                values.setdefault("q2_max", qs)
            sc.policy = replace(sc.policy, **values)
        else:
            setattr(sc, kind, replace(getattr(sc, kind), **values))
    return sc


def validate(sc: Scenario) -> List[str]:
    """All constraint violations of a fully built scenario."""
    p: List[str] = []
    sp, tr, po, si = sc.spectrum, sc.traffic, sc.policy, sc.sim
    if sp.channels < 1:
        p.append("spectrum.channels: must be >= 1")
    if sp.slots_per_channel is not None and sp.slots_per_channel < 1:
        p.append("spectrum.slots_per_channel: must be >= 1")
    for name in ("message_length", "channel_constant", "symbol_rate"):
        v = getattr(sp, name)
        if not (v > 0 and math.isfinite(v)):
            p.append(f"spectrum.{name}: must be > 0 and finite")
    try:
        validate_mode_table(sp.amc_modes)
    except SpectrumError as exc:
        p.append(f"spectrum.amc_modes: {exc}")
    for name in ("pu_off_to_on", "pu_on_to_off"):
        v = getattr(sp, name)
        if v is None:
            continue
        if len(v) == 1:
            v = v * sp.channels
            setattr(sp, name, v)
        if len(v) != sp.channels:
            p.append(f"spectrum.{name}: need 1 or {sp.channels} values, got {len(v)}")
        for x in v:
            if not 0.0 <= x <= 1.0:
                p.append(f"spectrum.{name}: {x} outside [0, 1]")
    if (sp.pu_off_to_on is None) != (sp.pu_on_to_off is None):
        p.append("spectrum: give both pu_off_to_on and pu_on_to_off, or neither")
    elif sp.pu_off_to_on is not None and len(sp.pu_off_to_on) == len(sp.pu_on_to_off):
        for i, (a, c) in enumerate(zip(sp.pu_off_to_on, sp.pu_on_to_off)):
            if a + c <= 0:
                p.append(f"spectrum: channel {i + 1} has pu_off_to_on + pu_on_to_off = 0 (frozen chain)")
    if not tr.pu_arrival_rate >= 0:
        p.append("traffic.pu_arrival_rate: must be >= 0")
    if not (tr.pu_service_rate > 0 and math.isfinite(tr.pu_service_rate)):
        p.append("traffic.pu_service_rate: must be > 0")
    if not tr.snr_rate >= 0:
        p.append("traffic.snr_rate: must be >= 0")
    try:
        check_snr_matrix(tr.snr_matrix)
    except SpectrumError as exc:
        p.append(f"traffic.snr_matrix: {exc}")
    if tr.snr_initial.lower() != "stationary":
        try:
            _snr_key(tr.snr_initial)
        except ValueError as exc:
            p.append(f"traffic.snr_initial: {exc}")
    if not sc.classes:
        p.append("missing block: at least one [class <name>] is required")
    total = sp.channels * (sp.slots_per_channel or 1)
    if sp.slots_per_channel is None and not p:
        total = sp.channels * sp.slots
    for cl in sc.classes:
        tag = f"class.{cl.name}"
        if not cl.arrival_rate >= 0:
            p.append(f"{tag}.arrival_rate: must be >= 0")
        if not (cl.service_rate > 0 and math.isfinite(cl.service_rate)):
            p.append(f"{tag}.service_rate: must be > 0")
        if cl.theta is None and cl.theta_max is None:
            p.append(f"{tag}: give theta or theta_max")
            continue
        if cl.queue is not None and cl.queue not in (1, 2):
            p.append(f"{tag}.queue: must be 1 or 2")
        if cl.deadline is not None and not cl.deadline > 0:
            p.append(f"{tag}.deadline: must be > 0")
        for snr in SNR_CLASSES:
            theta, tmin, tmax = cl.demand(snr)
            s = snr.value.lower()
            if theta < 1:
                p.append(f"{tag}.theta[{s}]: must be >= 1")
            if tmin < 1:
                p.append(f"{tag}.theta_min[{s}]: must be >= 1")
            if tmin > tmax:
                p.append(f"{tag}: theta_min[{s}]={tmin} > theta_max[{s}]={tmax}")
            if max(theta, tmax) > total:
                p.append(f"{tag}: demand {max(theta, tmax)} for {s} exceeds the {total} slots in the pool")
    if po.q1_max < 0 or po.q2_max < 0:
        p.append("policy: queue capacities must be >= 0")
    if not po.deadline > 0:
        p.append("policy.deadline: must be > 0 (use inf to disable)")
    if po.contiguous:
        p.append("policy.contiguous: adjacent-slot aggregation is not supported; leave it off")
    if not (si.horizon >= 0 and math.isfinite(si.horizon)):
        p.append("sim.horizon: must be a finite number >= 0")
    if not 0 <= si.warmup <= max(si.horizon, 0):
        p.append("sim.warmup: must lie in [0, horizon]")
    if si.replications < 1:
        p.append("sim.replications: must be >= 1")
    return p


def parse_scenario(text: str) -> Scenario:
    """Parse block text (or a JSON object with the same blocks) into a validated Scenario."""
    problems: List[str] = []
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError([f"line {exc.lineno}: invalid JSON: {exc.msg}"]) from None
        blocks = []
        for tag, body in doc.items():
            kind, _, name = tag.replace(".", " ").partition(" ")
            kind = kind.lower()
            if kind not in SCHEMA or not isinstance(body, dict):
                problems.append(f"unknown block {tag!r}")
                continue
            blocks.append((kind, name.strip() or None, {k.lower(): (v, None) for k, v in body.items()}, None))
    else:
        blocks = _read_blocks(text, problems)
    sc = _build(blocks, problems)
    if not problems:
        problems.extend(validate(sc))
    if problems:
        raise ScenarioError(problems)
    return sc


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def with_value(sc: Scenario, path: str, value) -> Scenario:
    """Copy of ``sc`` with one dotted field replaced, e.g. ``traffic.pu_arrival_rate``.

    ``policy.queue_size`` sets both queue capacities. Class fields are
    addressed as ``class.<name>.<field>``.
    """
    parts = path.lower().split(".")
    out = copy.deepcopy(sc)
    try:
        if parts[0] == "class":
            if len(parts) != 3:
                raise KeyError
            _, cname, key = parts
            conv = SCHEMA["class"][key]
            target = next(c for c in out.classes if c.name.lower() == cname)
            setattr(target, key, conv(value))
        else:
            block, key = parts
            conv = SCHEMA[block][key]
            v = conv(value)
            if block == "policy" and key == "queue_size":
                out.policy.q1_max = out.policy.q2_max = v
            else:
                setattr(getattr(out, block), key, v)
    except (KeyError, ValueError, StopIteration) as exc:
        raise ScenarioError([f"cannot set {path}={value!r}: no such field or bad value ({exc})"]) from None
    problems = validate(out)
    if problems:
        raise ScenarioError(problems)
    return out
