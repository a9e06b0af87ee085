from __future__ import annotations

import math

from collections import deque
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:
    from ..connection import Subflow

INIT_CWND = 10
MIN_RTO = 200_000_000
MAX_RTO = 60_000_000_000


class WindowedMax:
    """Exact running maximum over samples tagged with a non-decreasing key.

    Samples older than ``window`` keys are evicted.  Monotone deque, O(1)
    amortized per update.
    """

    __slots__ = ("window", "_q")

    def __init__(self, window):
        self.window = window
        self._q: deque = deque()

    def update(self, key, value) -> float:
        q = self._q
        while q and q[-1][1] <= value:
            q.pop()
        q.append((key, value))
        limit = key - self.window
        while q[0][0] <= limit:
            q.popleft()
        return q[0][1]

    def expire(self, key) -> float:
        q = self._q
        limit = key - self.window
        while q and q[0][0] <= limit:
            q.popleft()
        return q[0][1] if q else 0.0

    def get(self) -> float:
        return self._q[0][1] if self._q else 0.0

    def reset(self) -> None:
        self._q.clear()


@dataclass
class SubflowTelemetry:
    bw: float           # bits/s, windowed max of delivery-rate samples
    pacing_rate: float  # bits/s
    srtt: int           # ns
    min_rtt: int        # ns
    inflight: int       # packets
    delivered: int      # bytes


class RateSample:
    """One delivery-rate sample, produced per ACK that delivers a packet."""

    __slots__ = ("delivered", "prior_delivered", "interval", "rtt", "app_limited",
                 "acked", "acked_bytes", "losses")

    def __init__(self):
        self.delivered = 0
        self.prior_delivered = 0
        self.interval = 0
        self.rtt = -1
        self.app_limited = False
        self.acked = 0
        self.acked_bytes = 0
        self.losses = 0

    @property
    def rate(self) -> float:
        if self.interval <= 0:
            return 0.0
        return self.delivered * 8e9 / self.interval


class CongestionControl:
    """Per-subflow congestion controller.

    ``cwnd`` is in packets.  Paced controllers also expose ``pacing_rate``
    (bits/s) and answer ``next_send_time``; window-only controllers send as
    soon as the window opens.
    """

    name = "base"
    paced = False
    loss_based = True

    def __init__(self):
        self.cwnd: float = INIT_CWND
        self.ssthresh: float = float("inf")
        self.pacing_rate: float = 0.0
        self.sub: Optional[Subflow] = None

    def attach(self, sub: "Subflow", now: int) -> None:
        self.sub = sub

    @property
    def bw(self) -> float:
        s = self.sub
        if s is None or s.srtt <= 0:
            return 0.0
        return self.cwnd * s.mss_wire * 8e9 / s.srtt

    @property
    def in_slow_start(self) -> bool:
        return self.cwnd < self.ssthresh

    def rate_estimate(self) -> float:
        """Sending-rate estimate for schedulers, bits/s."""
        return self.pacing_rate if self.paced else self.bw

    def drain_time(self, nbytes: float, now: int) -> float:
        """Seconds the controller's pacing plan needs to release ``nbytes``."""
        rate = self.rate_estimate()
        return nbytes * 8.0 / rate if rate > 0 else math.inf

    def plan(self, nbytes: float, now: int) -> tuple[float, float]:
        """(seconds to release ``nbytes``, queueing delay those bytes will meet)."""
        sub = self.sub
        return self.drain_time(nbytes, now), max(sub.srtt - sub.min_rtt, 0) / 1e9

    def smooth_rate(self) -> float:
        """Sending rate averaged over the controller's own short-term cycles."""
        return self.rate_estimate()

    def on_ack(self, rs: RateSample, now: int) -> None:
        raise NotImplementedError

    def on_congestion_event(self, now: int) -> None:
        """First loss of a recovery episode."""

    def on_rto(self, now: int) -> None:
        self.ssthresh = max(self.sub.inflight_at_rto / 2.0, 2.0)
        self.cwnd = 1.0

    def on_rto_recovered(self, now: int) -> None:
        """First ACK delivering new data after an RTO."""

    def next_send_time(self, size: int, now: int) -> int:
        return now

    def telemetry(self) -> SubflowTelemetry:
        s = self.sub
        return SubflowTelemetry(
            bw=self.bw,
            pacing_rate=self.rate_estimate(),
            srtt=s.srtt,
            min_rtt=s.min_rtt,
            inflight=s.inflight,
            delivered=s.delivered,
        )
