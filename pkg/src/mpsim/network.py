"""Links, packets and drop-tail bottleneck queues."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .engine import Simulator

MSS = 1448
HEADER = 52
WIRE_SIZE = MSS + HEADER
ACK_SIZE = 64

DATA = 0
ACK = 1
REDUNDANT = 2

KIND_NAMES = {DATA: "data", ACK: "ack", REDUNDANT: "redundant-data"}


class Packet:
    __slots__ = (
        "flow", "sub", "ssn", "dsn", "size", "kind", "sent_at", "txn",
        "route", "hop", "sink",
        "cum_ack", "echo_txn", "echo_sent", "data_ack", "ofo_len",
    )

    def __init__(self, flow, sub, ssn, dsn, size, kind, sent_at, txn=0):
        self.flow = flow
        self.sub = sub
        self.ssn = ssn
        self.dsn = dsn
        self.size = size
        self.kind = kind
        self.sent_at = sent_at
        self.txn = txn
        self.route = ()
        self.hop = 0
        self.sink = None
        self.cum_ack = -1
        self.echo_txn = -1
        self.echo_sent = -1
        self.data_ack = -1
        self.ofo_len = 0

    def __repr__(self):
        return (f"Packet({KIND_NAMES[self.kind]} flow={self.flow} sub={self.sub} "
                f"ssn={self.ssn} dsn={self.dsn} size={self.size})")


@dataclass(frozen=True)
class LinkParams:
    bandwidth: float                  # bits/s
    delay: int                        # one-way propagation, ns
    loss: float = 0.0                 # i.i.d. drop probability on enqueue
    queue: Optional[int] = None       # bytes; None -> one BDP of bandwidth * 2 * delay
    delay_jitter: float = 0.0         # relative, redrawn every jitter_epoch
    jitter_epoch: int = 100_000_000

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if not 0.0 <= self.loss <= 1.0:
            raise ValueError(f"loss must lie in [0, 1], got {self.loss}")
        if self.delay < 0:
            raise ValueError(f"delay must be non-negative, got {self.delay}")
        if self.queue is not None and self.queue < WIRE_SIZE:
            raise ValueError(f"queue must hold at least one {WIRE_SIZE} B packet")
        if not 0.0 <= self.delay_jitter < 1.0:
            raise ValueError(f"delay_jitter must lie in [0, 1), got {self.delay_jitter}")

    @property
    def queue_bytes(self) -> int:
        if self.queue is not None:
            return self.queue
        bdp = int(self.bandwidth * 2 * self.delay / 8e9)
        return max(bdp, 2 * WIRE_SIZE)


_RAMPABLE = ("bandwidth", "delay", "loss")


class Link:
    """Unidirectional link: drop-tail FIFO, serialization, propagation.

    Occupancy counts every accepted packet whose serialization has not
    finished, including the one currently on the wire.
    """

    def __init__(self, sim: Simulator, name: str, params: LinkParams):
        self.sim = sim
        self.name = name
        self.params = params
        self._apply(params)
        self._draw = sim.rng.stream(f"loss/{name}")
        self._jdraw = sim.rng.stream(f"jitter/{name}")
        self._busy_until = 0
        self._last_arrival = 0
        self._backlog: deque = deque()      # (depart_ns, size)
        self._backlog_bytes = 0
        self._ramps: dict[str, tuple[int, int, float, float]] = {}
        self._jitter_epoch_id = -1
        self._jitter_mult = 1.0
        self.offered = 0
        self.random_drops = 0
        self.congestion_drops = 0
        self.delivered = 0
        self.delivered_bytes = 0
        self.on_drop: Optional[Callable[[Packet, str], None]] = None

    def _apply(self, p: LinkParams) -> None:
        self.params = p
        self.bandwidth = float(p.bandwidth)
        self.delay = int(p.delay)
        self.loss = float(p.loss)
        self.capacity = p.queue_bytes
        self._ns_per_byte = 8e9 / self.bandwidth

    @property
    def in_transit(self) -> int:
        return self.offered - self.random_drops - self.congestion_drops - self.delivered

    def occupancy(self, now: int) -> int:
        q = self._backlog
        while q and q[0][0] <= now:
            self._backlog_bytes -= q.popleft()[1]
        return self._backlog_bytes

    def set_params(self, at: int, until: Optional[int] = None, **changes) -> None:
        """Change parameters at ``at``; with ``until`` the numeric fields ramp linearly."""
        if at < self.sim.now:
            raise ValueError("link parameter change scheduled in the past")
        if until is not None and until <= at:
            raise ValueError("ramp end must be after ramp start")
        bad = set(changes) - set(LinkParams.__dataclass_fields__)
        if bad:
            raise ValueError(f"unknown link parameter(s): {sorted(bad)}")
        if until is not None:
            bad = set(changes) - set(_RAMPABLE)
            if bad:
                raise ValueError(f"cannot ramp {sorted(bad)}")
        # validate the target eagerly
        replace(self.params, **changes)
        self.sim.schedule(at, self._change, at, until, changes)

    def _change(self, at, until, changes):
        if until is None:
            for k in changes:
                self._ramps.pop(k, None)
            self._apply(replace(self.params, **changes))
        else:
            for k, v in changes.items():
                self._ramps[k] = (at, until, float(getattr(self.params, k)), float(v))

    def _update_ramps(self, now: int) -> None:
        vals = {}
        for k, (t0, t1, v0, v1) in list(self._ramps.items()):
            if now >= t1:
                vals[k] = v1
                del self._ramps[k]
            else:
                vals[k] = v0 + (v1 - v0) * (now - t0) / (t1 - t0)
        if "delay" in vals:
            vals["delay"] = int(round(vals["delay"]))
        self._apply(replace(self.params, **vals))

    def value_at(self, name: str, now: int) -> float:
        """Effective value of a (possibly ramping) parameter at ``now``."""
        r = self._ramps.get(name)
        if r is None:
            return float(getattr(self.params, name))
        t0, t1, v0, v1 = r
        if now >= t1:
            return v1
        return v0 + (v1 - v0) * (now - t0) / (t1 - t0)

    def transmit(self, pkt: Packet, now: int) -> bool:
        if self._ramps:
            self._update_ramps(now)
        self.offered += 1
        loss = self.loss
        if loss > 0.0 and self._draw() < loss:
            self.random_drops += 1
            if self.on_drop is not None:
                self.on_drop(pkt, "random")
            return False
        size = pkt.size
        q = self._backlog
        while q and q[0][0] <= now:
            self._backlog_bytes -= q.popleft()[1]
        if self._backlog_bytes + size > self.capacity:
            self.congestion_drops += 1
            if self.on_drop is not None:
                self.on_drop(pkt, "congestion")
            return False
        start = self._busy_until if self._busy_until > now else now
        depart = start + int(size * self._ns_per_byte + 0.5)
        self._busy_until = depart
        q.append((depart, size))
        self._backlog_bytes += size
        delay = self.delay
        if self.params.delay_jitter:
            epoch = now // self.params.jitter_epoch
            if epoch != self._jitter_epoch_id:
                self._jitter_epoch_id = epoch
                eps = self.params.delay_jitter
                self._jitter_mult = 1.0 + eps * (2.0 * self._jdraw() - 1.0)
            delay = int(delay * self._jitter_mult)
        arrive = depart + delay
        if arrive < self._last_arrival:
            arrive = self._last_arrival
        self._last_arrival = arrive
        self.sim.schedule(arrive, self._deliver, pkt)
        return True

    def _deliver(self, pkt: Packet) -> None:
        self.delivered += 1
        self.delivered_bytes += pkt.size
        pkt.hop += 1
        if pkt.hop < len(pkt.route):
            pkt.route[pkt.hop].transmit(pkt, self.sim.now)
        else:
            pkt.sink(pkt)


def send_along(route, pkt: Packet, sink, now: int) -> bool:
    """Inject ``pkt`` at the first hop of ``route``; ``sink(pkt)`` runs on arrival."""
    pkt.route = route
    pkt.hop = 0
    pkt.sink = sink
    return route[0].transmit(pkt, now)


@dataclass
class Topology:
    """Named links plus the fixed routes each subflow uses."""

    sim: Simulator
    links: dict[str, Link] = field(default_factory=dict)

    def add_link(self, name: str, params: LinkParams, reverse: Optional[LinkParams] = None) -> Link:
        if name in self.links:
            raise ValueError(f"duplicate link {name!r}")
        link = Link(self.sim, name, params)
        self.links[name] = link
        if reverse is None:
            reverse = LinkParams(bandwidth=params.bandwidth, delay=params.delay)
        self.links[name + ".rev"] = Link(self.sim, name + ".rev", reverse)
        return link

    def route(self, names) -> tuple[tuple[Link, ...], tuple[Link, ...]]:
        if not names:
            raise ValueError("route must name at least one link")
        try:
            fwd = tuple(self.links[n] for n in names)
            rev = tuple(self.links[n + ".rev"] for n in reversed(names))
        except KeyError as e:
            raise ValueError(f"route references unknown link {e.args[0]!r}") from None
        return fwd, rev

    def base_rtt(self, fwd, rev) -> int:
        """Propagation plus serialization of one data packet and its ACK."""
        t = 0
        for link in fwd:
            t += link.delay + int(WIRE_SIZE * 8e9 / link.bandwidth)
        for link in rev:
            t += link.delay + int(ACK_SIZE * 8e9 / link.bandwidth)
        return t
