"""Packet-to-subflow assignment.

Baselines (round-robin, minRTT, redundant) hand packets to subflows that have
window space, keeping only a couple of packets queued per subflow the way
TCP small queues do.  The AR&P scheduler partitions subflows into a
non-redundant set N and a redundant set R (AR-Scheduling), then pre-assigns
every packet in a scheduling window to the subflow of N with the earliest
predicted arrival time (P-Scheduling).

Units inside the pure functions: rates in any consistent unit, RTTs in any
consistent unit; ``ar_objective`` is only ever compared across partitions
computed in the same units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import TYPE_CHECKING, Optional, Sequence

from .network import DATA, REDUNDANT

if TYPE_CHECKING:
    from .connection import Connection, Subflow

TSQ_PACKETS = 2
MIN_INFLIGHT_FOR_FAST_RETRANSMIT = 4


def ar_objective(x: Sequence[float], r: Sequence[float], members) -> float:
    """log(sum x) - log(sum x*r / sum x) over the subflows in ``members``."""
    members = list(members)
    if not members:
        raise ValueError("objective needs at least one non-redundant subflow")
    sx = sum(x[i] for i in members)
    sxr = sum(x[i] * r[i] for i in members)
    return math.log(sx) - math.log(sxr / sx)


def ar_decide(x: Sequence[float], r: Sequence[float],
              inflight: Optional[Sequence[int]] = None) -> tuple[list[int], list[int]]:
    """Greedy partition of subflows into (N, R).

    Subflows are visited by decreasing x/r.  The first always joins N; each
    later one joins N iff adding it raises the objective and it has at least
    four packets in flight (so a loss on it can still trigger fast
    retransmit).  Ties in x/r keep index order.
    """
    n = len(x)
    if n == 0:
        raise ValueError("no subflows")
    order = sorted(range(n), key=lambda i: -x[i] / r[i])
    N = [order[0]]
    R: list[int] = []
    sx = x[order[0]]
    sxr = x[order[0]] * r[order[0]]
    for j in order[1:]:
        # x_j / sum x  >  sum x_i (r_j - 2 r_i) / sum x_i r_i
        lhs = x[j] / sx
        rhs = (sx * r[j] - 2.0 * sxr) / sxr
        starved = inflight is not None and inflight[j] < MIN_INFLIGHT_FOR_FAST_RETRANSMIT
        if lhs <= rhs or starved:
            R.append(j)
        else:
            N.append(j)
            sx += x[j]
            sxr += x[j] * r[j]
    return N, R


def ar_optimum(x: Sequence[float], r: Sequence[float]) -> tuple[tuple[int, ...], float]:
    """Exhaustive maximiser of ``ar_objective`` over all non-empty subsets."""
    n = len(x)
    best, best_val = None, -math.inf
    for k in range(1, n + 1):
        for subset in combinations(range(n), k):
            v = ar_objective(x, r, subset)
            if v > best_val:
                best, best_val = subset, v
    return best, best_val


@dataclass
class ArrivalPrediction:
    subflow: int
    t0: float
    queue_wait: float
    half_rtt: float

    @property
    def arrival(self) -> float:
        return self.t0 + self.queue_wait + self.half_rtt


def predict_arrival(subflow: int, t0: float, pending_bits: float, rate: float,
                    rtt: float) -> ArrivalPrediction:
    """A_i(j) = t0 + (bits already queued on i) / x_i + r_i / 2."""
    return ArrivalPrediction(subflow, t0, pending_bits / rate, rtt / 2.0)


def p_schedule(sizes: Sequence[int], N: Sequence[int], x: Sequence[float],
               r: Sequence[float], pending: Sequence[float], t0: float = 0.0) -> list[int]:
    """Assign packets (sizes in bytes, in order) to subflows of ``N``.

    ``x`` in bits/s, ``r`` and ``t0`` in seconds, ``pending`` = bytes already
    queued per subflow.  Returns the chosen subflow per packet; ties go to
    the lowest index.
    """
    q = list(pending)
    out = []
    members = sorted(N)
    for s in sizes:
        best, best_a = -1, math.inf
        for i in members:
            a = t0 + q[i] * 8.0 / x[i] + r[i] / 2.0
            if a < best_a:
                best, best_a = i, a
        q[best] += s
        out.append(best)
    return out


def scheduling_window(N: Sequence[int], bw: Sequence[float], rtt: Sequence[float]) -> float:
    """max RTT over N times summed BW over N; bw in bits/s, rtt in s -> bytes."""
    if not N:
        return 0.0
    return max(rtt[i] for i in N) * sum(bw[i] for i in N) / 8.0


class Scheduler:
    name = "base"
    redundant_all = False

    def __init__(self):
        self.conn: Optional[Connection] = None

    def attach(self, conn: "Connection") -> None:
        self.conn = conn

    def start(self, now: int) -> None:
        pass

    def fill(self, now: int) -> None:
        raise NotImplementedError

    def refill_after_send(self) -> bool:
        return False

    def is_redundant(self, sub: "Subflow") -> bool:
        return False

    def redundant_pick(self, sub: "Subflow"):
        return None

    def on_subflow_rto(self, sub: "Subflow", now: int) -> None:
        pass

    def decision_log(self) -> list:
        return []


def _has_room(s: "Subflow") -> bool:
    return (s.active and len(s.queue) < TSQ_PACKETS
            and s.inflight + len(s.queue) < s.cc.cwnd)


class RoundRobin(Scheduler):
    name = "round-robin"

    def __init__(self):
        super().__init__()
        self._next = 0

    def fill(self, now: int) -> None:
        conn = self.conn
        subs = conn.subflows
        n = len(subs)
        while conn.has_data():
            for k in range(n):
                s = subs[(self._next + k) % n]
                if _has_room(s):
                    break
            else:
                return
            self._next = (s.index + 1) % n
            item = conn.take_next()
            if item is None:
                return
            s.enqueue(item)


class MinRtt(Scheduler):
    name = "min-rtt"

    def fill(self, now: int) -> None:
        conn = self.conn
        subs = conn.subflows
        while conn.has_data():
            best = None
            for s in subs:
                if _has_room(s) and (best is None or s.srtt < best.srtt):
                    best = s
            if best is None:
                return
            item = conn.take_next()
            if item is None:
                return
            best.enqueue(item)


class Redundant(Scheduler):
    """Every subflow carries every data sequence number.

    Each subflow walks the data sequence space with its own cursor; the first
    copy of a sequence number is ordinary data, later copies are redundant.
    """

    name = "redundant"
    redundant_all = True

    def attach(self, conn):
        super().attach(conn)
        self.cursor = [0] * len(conn.subflows)

    def is_redundant(self, sub) -> bool:
        return True

    def fill(self, now: int) -> None:
        conn = self.conn
        for s in conn.subflows:
            while _has_room(s):
                d = max(self.cursor[s.index], conn.data_una)
                if d >= conn.next_dsn:
                    item = conn.take_next()
                    if item is None:
                        break
                    d = item[0]
                    kind = DATA
                else:
                    kind = REDUNDANT
                self.cursor[s.index] = d + 1
                s.enqueue((d, conn.seg_size(d), kind))


class ArpScheduler(Scheduler):
    """Adaptively redundant + predictive packet scheduling.

    ``predictor="plan"`` asks each controller how long its pacing plan needs
    to release the bytes already assigned and what queueing delay they will
    meet, and partitions on the path's minimum RTT; ``"simple"`` divides by
    the current pacing rate, adds srtt/2 and partitions on srtt.
    ``telemetry="exact"`` feeds the nominal rate and base RTT instead.
    """

    name = "arp"
    PREDICTORS = ("plan", "simple")

    def __init__(self, telemetry: str = "measured", predictor: str = "plan"):
        super().__init__()
        if telemetry not in ("measured", "exact"):
            raise ValueError(f"unknown telemetry mode {telemetry!r}")
        if predictor not in self.PREDICTORS:
            raise ValueError(f"unknown predictor {predictor!r}")
        self.telemetry = telemetry
        self.predictor = predictor
        self.N: list[int] = []
        self.R: list[int] = []
        self.last_decision = -1
        self._timer = None
        self._rr = 0
        self.log: list[tuple] = []
        self.window_bytes = 0.0

    def attach(self, conn):
        super().attach(conn)
        self.N = list(range(len(conn.subflows)))
        self.R = []
        self._redundant = [False] * len(conn.subflows)
        self._cursor = [-1] * len(conn.subflows)

    def start(self, now: int) -> None:
        self._schedule_decision(now)

    def _rates(self):
        out = []
        for s in self.conn.subflows:
            if self.telemetry == "exact" and hasattr(s.cc, "nominal_rate"):
                out.append(s.cc.nominal_rate)
            else:
                out.append(s.cc.smooth_rate() if self.predictor == "plan" else s.cc.rate_estimate())
        return out

    def _rtts(self):
        if self.telemetry == "exact":
            return [s.base_rtt for s in self.conn.subflows]
        if self.predictor == "plan":
            # the plan models queueing separately; a queue the flow built
            # itself must not push its own path out of N
            return [s.min_rtt for s in self.conn.subflows]
        return [s.srtt for s in self.conn.subflows]

    def _schedule_decision(self, now: int) -> None:
        active = [s for s in self.conn.subflows if s.active]
        if not active:
            return
        period = min(s.srtt for s in active)
        self._timer = self.conn.sim.schedule(now + max(period, 1_000_000), self._decide_tick)

    def _decide_tick(self) -> None:
        now = self.conn.sim.now
        if self.conn.stopped:
            return
        self.decide(now)
        self._schedule_decision(now)
        self.conn.kick(now)

    def all_slow_start(self) -> bool:
        return all(s.cc.in_slow_start for s in self.conn.subflows if s.active)

    def decide(self, now: int) -> None:
        subs = self.conn.subflows
        idx = [s.index for s in subs if s.active]
        if not idx:
            return
        if self.all_slow_start():
            N, R = list(idx), []
        else:
            xs, rs = self._rates(), self._rtts()
            x = [max(xs[i], 1.0) for i in idx]
            r = [max(rs[i], 1) / 1e9 for i in idx]
            infl = [subs[i].inflight for i in idx]
            xm = [v / 1e6 for v in x]
            n_loc, r_loc = ar_decide(xm, r, infl)
            obj = ar_objective(xm, r, n_loc)
            N = sorted(idx[k] for k in n_loc)
            R = sorted(idx[k] for k in r_loc)
            self.log.append((now, tuple(N), tuple(R), obj))
        self.last_decision = now
        if N != self.N:
            demoted = [i for i in self.N if i not in N]
            for i in demoted:
                self.conn.requeue(subs[i].take_queue())
        self.N, self.R = N, R
        for s in subs:
            self._redundant[s.index] = s.index in R

    def is_redundant(self, sub) -> bool:
        return self._redundant[sub.index]

    def refill_after_send(self) -> bool:
        return True

    def on_subflow_rto(self, sub, now: int) -> None:
        pass

    def redundant_pick(self, sub) -> Optional[tuple]:
        return self.conn.redundant_pick(sub, self._cursor)

    def fill(self, now: int) -> None:
        conn = self.conn
        subs = conn.subflows
        if not conn.has_data():
            return
        N = [i for i in self.N if subs[i].active]
        if not N:
            return
        if self.all_slow_start():
            n = len(N)
            while conn.has_data():
                for k in range(n):
                    s = subs[N[(self._rr + k) % n]]
                    if _has_room(s):
                        break
                else:
                    return
                self._rr = (N.index(s.index) + 1) % n
                item = conn.take_next()
                if item is None:
                    return
                s.enqueue(item)
            return
        xs, rs = self._rates(), self._rtts()
        bws = [s.cc.bw if self.telemetry == "measured" else xs[s.index] for s in subs]
        window = max(rs[i] for i in N) / 1e9 * sum(bws[i] for i in N) / 8.0
        self.window_bytes = window
        queued = [s.queued_bytes for s in subs]
        pending = sum(queued[i] for i in N)
        t0 = now / 1e9
        planned = self.predictor == "plan" and self.telemetry == "measured"
        while pending < window and conn.has_data():
            item = conn.take_next()
            if item is None:
                break
            best, best_a = -1, math.inf
            for i in N:
                x = xs[i]
                if x <= 0:
                    continue
                if planned:
                    wait, qdelay = subs[i].cc.plan(queued[i], now)
                    a = t0 + wait + qdelay + subs[i].min_rtt / 2e9
                else:
                    a = t0 + queued[i] * 8.0 / x + rs[i] / 2e9
                if a < best_a:
                    best, best_a = i, a
            if best < 0:
                conn.requeue([item])
                break
            subs[best].enqueue(item)
            queued[best] += item[1]
            pending += item[1]

    def decision_log(self) -> list:
        return self.log


SCHEDULERS = {
    "round-robin": RoundRobin,
    "rr": RoundRobin,
    "min-rtt": MinRtt,
    "minrtt": MinRtt,
    "redundant": Redundant,
    "arp": ArpScheduler,
}


def make_scheduler(name: str, **params) -> Scheduler:
    try:
        cls = SCHEDULERS[name]
    except KeyError:
        raise ValueError(f"unknown scheduler {name!r}; choose from {sorted(set(SCHEDULERS))}") from None
    return cls(**params)
