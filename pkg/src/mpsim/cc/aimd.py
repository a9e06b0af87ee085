"""Loss-based window controllers: NewReno and the coupled LIA/OLIA/BALIA family.

All windows are in packets.  Increases are applied per delivered packet.
"""

from __future__ import annotations

from .base import CongestionControl, RateSample


class NewReno(CongestionControl):
    name = "newreno"

    def on_ack(self, rs: RateSample, now: int) -> None:
        if self.sub.in_recovery:
            return
        for _ in range(rs.acked):
            if self.cwnd < self.ssthresh:
                self.cwnd += 1.0
            else:
                self.cwnd += self.ca_increase()

    def ca_increase(self) -> float:
        return 1.0 / self.cwnd

    def on_congestion_event(self, now: int) -> None:
        self.ssthresh = max(self.cwnd / 2.0, 2.0)
        self.cwnd = self.ssthresh


class CoupledGroup:
    """Shares sibling state between the subflows of one connection."""

    def __init__(self):
        self.members: list = []

    def add(self, cc) -> None:
        self.members.append(cc)
        cc.group = self

    def active(self):
        return [m for m in self.members
                if m.sub is not None and m.sub.srtt > 0 and not m.sub.in_rto_recovery]


class Lia(NewReno):
    """Linked increases, RFC 6356."""

    name = "lia"

    def __init__(self):
        super().__init__()
        self.group: CoupledGroup | None = None

    def alpha(self) -> float:
        ms = self.group.active() if self.group else [self]
        if not ms:
            return 1.0
        total = sum(m.cwnd for m in ms)
        best = max(m.cwnd / (m.sub.srtt * m.sub.srtt) for m in ms)
        denom = sum(m.cwnd / m.sub.srtt for m in ms)
        return total * best / (denom * denom)

    def ca_increase(self) -> float:
        ms = self.group.active() if self.group else [self]
        total = sum(m.cwnd for m in ms) or self.cwnd
        return min(self.alpha() / total, 1.0 / self.cwnd)


class Olia(NewReno):
    """Opportunistic linked increases (Khalili et al.)."""

    name = "olia"

    def __init__(self):
        super().__init__()
        self.group: CoupledGroup | None = None
        self.l_prev = 0       # bytes delivered between the two most recent losses
        self.l_last = 0       # bytes delivered since the last loss

    def on_ack(self, rs: RateSample, now: int) -> None:
        self.l_last += rs.acked_bytes
        super().on_ack(rs, now)

    def on_congestion_event(self, now: int) -> None:
        self.l_prev, self.l_last = self.l_last, 0
        super().on_congestion_event(now)

    def _quality(self) -> float:
        r = self.sub.srtt / 1e9
        best = max(self.l_prev, self.l_last)
        return best * best / r

    def olia_alpha(self, ms) -> float:
        n = len(ms)
        max_w = max(m.cwnd for m in ms)
        best_q = max(m._quality() for m in ms)
        collected = [m for m in ms if m.cwnd >= max_w]
        best = [m for m in ms if m._quality() >= best_q]
        best_not_max = [m for m in best if m not in collected]
        if not best_not_max:
            return 0.0
        if self in best_not_max:
            return 1.0 / (n * len(best_not_max))
        if self in collected:
            return -1.0 / (n * len(collected))
        return 0.0

    def ca_increase(self) -> float:
        ms = self.group.active() if self.group else [self]
        if self not in ms:
            ms = ms + [self]
        r = self.sub.srtt / 1e9
        denom = sum(m.cwnd / (m.sub.srtt / 1e9) for m in ms)
        inc = (self.cwnd / (r * r)) / (denom * denom) + self.olia_alpha(ms) / self.cwnd
        return inc


class Balia(NewReno):
    """Balanced linked adaptation (Peng, Walid, Hwang, Low)."""

    name = "balia"

    def __init__(self):
        super().__init__()
        self.group: CoupledGroup | None = None

    def _rates(self):
        ms = self.group.active() if self.group else [self]
        if self not in ms:
            ms = ms + [self]
        return ms, [m.cwnd / (m.sub.srtt / 1e9) for m in ms]

    def _alpha(self) -> float:
        ms, xs = self._rates()
        x_self = self.cwnd / (self.sub.srtt / 1e9)
        return max(xs) / x_self

    def ca_increase(self) -> float:
        ms, xs = self._rates()
        tau = self.sub.srtt / 1e9
        x_self = self.cwnd / tau
        a = max(xs) / x_self
        total = sum(xs)
        return (x_self / tau) / (total * total) * ((1 + a) / 2) * ((4 + a) / 5)

    def on_congestion_event(self, now: int) -> None:
        a = self._alpha()
        self.cwnd = max(self.cwnd - (self.cwnd / 2.0) * min(a, 1.5), 2.0)
        self.ssthresh = self.cwnd
