"""Exact steady-state solution for small single-class configurations.

The chain state is ``(PU-held channels, SU grants as a sorted tuple, queue
length)``. That is a sufficient statistic only when slot placement does not
matter, so the supported family is restricted to:

* one SU class whose demand does not depend on the SNR class,
* no SNR dynamics,
* queue deadlines disabled or exponential (``exp_deadline = true``),
* either no PU traffic, or one slot per channel (a PU then hits a uniformly
  chosen idle channel, each of which holds at most one SU slot).

Everything here is written against the scenario description directly and
shares no code with the simulator, so that the two can check each other.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .scenario import Scenario
from .spectrum import SNR_CLASSES

MAX_STATES = 100_000
DENSE_LIMIT = 2_000


class OracleUnsupported(ValueError):
    """The scenario is outside the family the chain represents exactly."""


class OracleError(RuntimeError):
    pass


State = Tuple[int, Tuple[int, ...], int]


@dataclass
class OracleConfig:
    channels: int
    slots: int
    elastic: bool
    theta_min: int
    theta_max: int
    queue_cap: int
    su_arrival: float
    su_service: float
    pu_arrival: float
    pu_service: float
    expiry_rate: float

    @property
    def total(self) -> int:
        return self.channels * self.slots


def restrict(sc: Scenario, policy=None) -> OracleConfig:
    """Check ``sc`` against the supported family and pull out the chain parameters."""
    from .policy import PolicyKind

    kind = PolicyKind(policy or sc.policy.kind)
    why = []
    if len(sc.classes) != 1:
        why.append("exactly one SU class is supported")
    if sc.traffic.snr_rate > 0:
        why.append("SNR dynamics (traffic.snr_rate > 0) are not supported")
    if sc.policy.contiguous:
        why.append("contiguous allocation is not supported")
    cl = sc.classes[0] if sc.classes else None
    demand = None
    if cl is not None:
        demands = {cl.demand(s) for s in SNR_CLASSES}
        if len(demands) != 1:
            why.append("class demand must be the same for every SNR class")
        demand = next(iter(demands))
        deadline = cl.deadline if cl.deadline is not None else sc.policy.deadline
    queue_cap = sc.policy.q1_max + sc.policy.q2_max if kind.queued else 0
    expiry = 0.0
    if cl is not None and queue_cap > 0 and not math.isinf(deadline):
        if not sc.policy.exp_deadline:
            why.append("deterministic queue deadlines make the process non-Markovian; "
                       "set policy.exp_deadline = true or deadline = inf")
        expiry = 1.0 / deadline
    slots = sc.spectrum.slots
    if sc.traffic.pu_arrival_rate > 0 and slots != 1:
        why.append("with PU traffic the oracle needs exactly one slot per channel")
    if why:
        raise OracleUnsupported("; ".join(why))
    theta, tmin, tmax = demand
    if not kind.elastic:
        tmin = tmax = theta
    return OracleConfig(sc.spectrum.channels, slots, kind.elastic, tmin, tmax, queue_cap,
                        cl.arrival_rate, cl.service_rate, sc.traffic.pu_arrival_rate,
                        sc.traffic.pu_service_rate, expiry)


# ------------------------------------------------------------ transitions

def _free(cfg: OracleConfig, n_pu: int, grants) -> int:
    return cfg.total - n_pu * cfg.slots - sum(grants)


def _donate(grants: List[int], needed: int, floor: int) -> List[int]:
    g = sorted(grants, reverse=True)
    for _ in range(needed):
        if not g or g[0] <= floor:
            raise OracleError("donation ran dry")
        g[0] -= 1
        g.sort(reverse=True)
    return g


def _after_release(cfg: OracleConfig, n_pu: int, grants: List[int], q: int):
    """Serve the queue while the head fits, then top up elastic grants."""
    while q > 0:
        f = _free(cfg, n_pu, grants)
        if f < cfg.theta_min:
            break
        grants.append(min(cfg.theta_max, f))
        q -= 1
    if cfg.elastic:
        f = _free(cfg, n_pu, grants)
        while f > 0:
            g = sorted(grants)
            if not g or g[0] >= cfg.theta_max:
                break
            g[0] += 1
            grants = g
            f -= 1
    return tuple(sorted(grants, reverse=True)), q


def _arrival(cfg: OracleConfig, s: State):
    """-> (next state, blocked?)"""
    n, g, q = s
    f = _free(cfg, n, g)
    if f >= cfg.theta_min:
        take = min(cfg.theta_max, f) if cfg.elastic else cfg.theta_min
        return (n, tuple(sorted(g + (take,), reverse=True)), q), False
    if cfg.elastic:
        spare = sum(x - cfg.theta_min for x in g if x > cfg.theta_min)
        if spare >= cfg.theta_min - f:
            g2 = _donate(list(g), cfg.theta_min - f, cfg.theta_min) + [cfg.theta_min]
            return (n, tuple(sorted(g2, reverse=True)), q), False
    if q < cfg.queue_cap:
        return (n, g, q + 1), False
    return s, True


def _pu_hits(cfg: OracleConfig, s: State):
    """Outcomes of one PU arrival: list of (probability, next state, SU terminated?)."""
    n, g, q = s
    idle = cfg.channels - n
    if idle == 0:
        return []
    f = _free(cfg, n, g)
    out = []
    if f > 0:
        out.append((f / idle, (n + 1, g, q), False))
    for v in sorted(set(g), reverse=True):
        p = g.count(v) * v / idle
        rest = list(g)
        rest.remove(v)
        kept = v - 1
        # one slot per channel: the SU loses exactly one slot
        take = min(1, f)
        kept += take
        terminated = False
        if kept >= cfg.theta_min and (cfg.elastic or kept == cfg.theta_max):
            grants = rest + [kept]
            q2 = q
        else:
            need = cfg.theta_min - kept
            spare = sum(x - cfg.theta_min for x in rest if x > cfg.theta_min)
            if cfg.elastic and spare >= need:
                grants = _donate(rest, need, cfg.theta_min) + [cfg.theta_min]
                q2 = q
            else:
                grants = rest
                if q < cfg.queue_cap:
                    q2 = q + 1
                else:
                    q2 = q
                    terminated = True
        nxt = _after_release(cfg, n + 1, list(grants), q2)
        out.append((p, (n + 1,) + nxt, terminated))
    return out


@dataclass
class StateSpace:
    states: List[State]
    index: Dict[State, int]
    blocked: np.ndarray
    completion_rate: np.ndarray
    queue_len: np.ndarray
    drop_rate: np.ndarray
    admit_rate: np.ndarray

    def __len__(self):
        return len(self.states)


@dataclass
class GeneratorMatrix:
    Q: sparse.csr_matrix
    space: StateSpace

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.Q.sum(axis=1)).ravel()


def _transitions(cfg: OracleConfig, s: State):
    """Yield (rate, next state) and collect per-state flow terms."""
    n, g, q = s
    moves = []
    drop = 0.0
    nxt, blocked = _arrival(cfg, s)
    if not blocked and cfg.su_arrival > 0:
        moves.append((cfg.su_arrival, nxt))
    for v in sorted(set(g), reverse=True):
        rest = list(g)
        rest.remove(v)
        moves.append((g.count(v) * v * cfg.su_service, (n,) + _after_release(cfg, n, rest, q)))
    if cfg.pu_arrival > 0:
        for p, t, terminated in _pu_hits(cfg, s):
            moves.append((cfg.pu_arrival * p, t))
            if terminated:
                drop += cfg.pu_arrival * p
    if n > 0:
        moves.append((n * cfg.pu_service, (n - 1,) + _after_release(cfg, n - 1, list(g), q)))
    if q > 0 and cfg.expiry_rate > 0:
        moves.append((q * cfg.expiry_rate, (n, g, q - 1)))
        drop += q * cfg.expiry_rate
    completion = sum(g) * cfg.su_service
    return moves, blocked, completion, drop


def build_generator(sc: Scenario, policy=None) -> GeneratorMatrix:
    """Enumerate the states reachable from the empty system and assemble Q."""
    cfg = restrict(sc, policy)
    start: State = (0, (), 0)
    index: Dict[State, int] = {start: 0}
    states = [start]
    rows, cols, vals = [], [], []
    blocked, completion, drops = [], [], []
    todo = deque([start])
    while todo:
        s = todo.popleft()
        i = index[s]
        moves, b, comp, drop = _transitions(cfg, s)
        blocked.append(b)
        completion.append(comp)
        drops.append(drop)
        for rate, t in moves:
            if rate <= 0 or t == s:
                continue
            j = index.get(t)
            if j is None:
                if len(states) >= MAX_STATES:
                    raise OracleUnsupported(f"state space exceeds {MAX_STATES} states")
                j = index[t] = len(states)
                states.append(t)
                todo.append(t)
            rows.append(i)
            cols.append(j)
            vals.append(rate)
    n = len(states)
    # BFS order == index order, so the per-state lists line up with ordinals
    Q = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    Q = Q - sparse.diags(np.asarray(Q.sum(axis=1)).ravel())
    blocked_arr = np.array(blocked, dtype=bool)
    space = StateSpace(states, index, blocked_arr, np.array(completion), np.array([s[2] for s in states], float),
                       np.array(drops), np.where(blocked_arr, 0.0, cfg.su_arrival))
    return GeneratorMatrix(Q.tocsr(), space)


def solve_steady_state(gen: GeneratorMatrix) -> np.ndarray:
    """Stationary distribution: pi Q = 0, sum(pi) = 1."""
    Q = gen.Q
    n = Q.shape[0]
    if n == 1:
        return np.ones(1)
    A = Q.T.tolil()
    A[n - 1, :] = np.ones(n)
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        if n <= DENSE_LIMIT:
            pi = np.linalg.solve(A.toarray(), b)
        else:
            pi = spsolve(A.tocsc(), b)
    except np.linalg.LinAlgError as exc:
        raise OracleError(f"singular generator: {exc}") from exc
    if not np.all(np.isfinite(pi)):
        raise OracleError("singular or reducible generator")
    if pi.min() < -1e-9:
        raise OracleError("negative stationary mass; chain is not irreducible")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    resid = np.abs(Q.T @ pi).max()
    if resid > 1e-10:
        raise OracleError(f"steady-state residual {resid:.3e} above 1e-10")
    return pi


@dataclass
class OracleMetrics:
    P_b: float
    P_f: float
    capacity: float
    mean_queue_len: float

    @property
    def P_a(self) -> float:
        return 1.0 - self.P_b


def oracle_metrics(pi: np.ndarray, space: StateSpace) -> OracleMetrics:
    """Blocking by PASTA; forced termination as drop flow over admission flow."""
    p_b = float(pi @ space.blocked)
    admit = float(pi @ space.admit_rate)
    drop = float(pi @ space.drop_rate)
    p_f = drop / admit if admit > 0 else math.nan
    return OracleMetrics(p_b, p_f, float(pi @ space.completion_rate), float(pi @ space.queue_len))


def solve(sc: Scenario, policy=None) -> OracleMetrics:
    gen = build_generator(sc, policy)
    return oracle_metrics(solve_steady_state(gen), gen.space)
