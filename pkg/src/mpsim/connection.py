"""Multipath connection: meta data-sequence space, subflows, receiver.

Every transmission carries a unique ``txn``.  The receiver echoes the txn
and send timestamp of the packet that triggered each ACK; because links are
FIFO, an echo for txn k tells the sender every earlier outstanding txn on
that subflow was lost.  Such holes are declared lost once three later
packets have been delivered, which is the duplicate-ACK threshold, and the
retransmission timer covers the rest.
"""

from __future__ import annotations

import heapq
from collections import deque
from typing import Optional

from .cc.base import MAX_RTO, MIN_RTO, RateSample
from .engine import Simulator
from .network import ACK, ACK_SIZE, DATA, HEADER, MSS, REDUNDANT, WIRE_SIZE, Packet, send_along

DUPTHRESH = 3
DEFAULT_SEND_BUFFER = 4 * 1024 * 1024


class TxRecord:
    __slots__ = ("txn", "ssn", "dsn", "size", "kind", "sent_at", "delivered",
                 "delivered_time", "first_sent_time", "app_limited", "mark")

    def __init__(self, txn, ssn, dsn, size, kind, sent_at, delivered,
                 delivered_time, first_sent_time, app_limited):
        self.txn = txn
        self.ssn = ssn
        self.dsn = dsn
        self.size = size
        self.kind = kind
        self.sent_at = sent_at
        self.delivered = delivered
        self.delivered_time = delivered_time
        self.first_sent_time = first_sent_time
        self.app_limited = app_limited
        self.mark = 0


class Subflow:
    """One TCP-like path of a connection: sequence space, loss recovery, pacing."""

    def __init__(self, conn: "Connection", index: int, fwd, rev, cc, base_rtt: int):
        self.conn = conn
        self.sim: Simulator = conn.sim
        self.index = index
        self.fwd = fwd
        self.rev = rev
        self.cc = cc
        self.base_rtt = base_rtt
        self.mss_wire = WIRE_SIZE
        self.active = False
        # a modelled handshake seeds the RTT estimators
        self.srtt = base_rtt
        self.rttvar = base_rtt // 2
        self.min_rtt = base_rtt
        self.last_rtt = base_rtt
        self.rto = max(MIN_RTO, self.srtt + 4 * self.rttvar)
        self.snd_nxt = 0
        self.snd_una = 0
        self.txn_next = 0
        self.outstanding: deque = deque()
        self.holes: deque = deque()
        self.retx: deque = deque()
        self.inflight = 0
        self.inflight_at_rto = 0
        self.delivered = 0
        self.delivered_pkts = 0
        self.delivered_time = 0
        self.first_sent_time = 0
        self.app_limited_until = 0
        self.in_recovery = False
        self.recovery_ssn = 0
        self.no_reduce_until = 0
        self.in_rto_recovery = False
        self.next_send = 0
        self.pacer_pending = False
        self.kick_pending = False
        self.in_send = False
        self.rto_deadline = 0
        self.rto_event = None
        self.queue: deque = deque()
        self.queued_bytes = 0
        self.rs = RateSample()
        self.sent_pkts = 0
        self.retransmits = 0
        self.lost_pkts = 0
        self.rtos = 0

    def __repr__(self):
        return f"Subflow({self.conn.name}#{self.index})"

    def start(self, now: int) -> None:
        self.active = True
        self.delivered_time = now
        self.first_sent_time = now
        self.cc.attach(self, now)

    def enqueue(self, item) -> None:
        was_empty = not self.queue
        self.queue.append(item)
        self.queued_bytes += item[1]
        if was_empty and not self.in_send and not self.pacer_pending and not self.kick_pending:
            self.kick_pending = True
            self.sim.schedule(self.sim.now, self._kick)

    def take_queue(self) -> list:
        items = list(self.queue)
        self.queue.clear()
        self.queued_bytes = 0
        return items

    def _kick(self) -> None:
        self.kick_pending = False
        self.try_send(self.sim.now)

    def _pace(self) -> None:
        self.pacer_pending = False
        self.try_send(self.sim.now)

    def try_send(self, now: int) -> None:
        if not self.active or self.in_send:
            return
        self.in_send = True
        try:
            self._send_loop(now)
        finally:
            self.in_send = False

    def _send_loop(self, now: int) -> None:
        cc = self.cc
        conn = self.conn
        q = self.queue
        paced = cc.paced
        while True:
            if self.inflight >= cc.cwnd:
                return
            if paced and now < self.next_send:
                if not self.pacer_pending:
                    self.pacer_pending = True
                    self.sim.schedule(self.next_send, self._pace)
                return
            if self.retx:
                rec = self.retx.popleft()
                if rec.ssn < self.snd_una:
                    continue
                size = rec.size
                self._transmit(rec.ssn, rec.dsn, size, rec.kind, now)
                self.retransmits += 1
                conn.stats.retransmit(self.index)
            else:
                if not q:
                    conn.fill(now)
                if q:
                    dsn, size, kind = q.popleft()
                    self.queued_bytes -= size
                    if dsn < conn.data_una:
                        continue
                    if conn.refill_on_send:
                        conn.fill(now)
                else:
                    item = conn.redundant_item(self)
                    if item is None:
                        self.app_limited_until = (self.delivered + self.inflight * self.mss_wire) or 1
                        return
                    dsn, size, kind = item
                ssn = self.snd_nxt
                self.snd_nxt = ssn + 1
                self._transmit(ssn, dsn, size, kind, now)
            if paced:
                self.next_send = cc.next_send_time(size, now)

    def _transmit(self, ssn, dsn, size, kind, now) -> None:
        idle = self.inflight == 0
        if idle:
            self.first_sent_time = now
            self.delivered_time = now
        txn = self.txn_next
        self.txn_next = txn + 1
        rec = TxRecord(txn, ssn, dsn, size, kind, now, self.delivered, self.delivered_time,
                       self.first_sent_time, self.app_limited_until != 0)
        self.outstanding.append(rec)
        self.inflight += 1
        self.sent_pkts += 1
        conn = self.conn
        conn.on_transmit(self, ssn, dsn, size, kind, now)
        if idle or self.rto_event is None:
            self._arm_rto(now)
        pkt = Packet(conn.flow_id, self.index, ssn, dsn, size, kind, now, txn)
        send_along(self.fwd, pkt, conn.receiver.on_data, now)

    def _arm_rto(self, now: int) -> None:
        deadline = now + self.rto
        self.rto_deadline = deadline
        ev = self.rto_event
        if ev is not None:
            if ev[0] <= deadline:
                return
            self.sim.cancel(ev)
        self.rto_event = self.sim.schedule(deadline, self._on_rto_timer)

    def _on_rto_timer(self) -> None:
        self.rto_event = None
        if not self.outstanding and not self.holes:
            return
        now = self.sim.now
        if now < self.rto_deadline:
            self.rto_event = self.sim.schedule(self.rto_deadline, self._on_rto_timer)
            return
        self._timeout(now)

    def _timeout(self, now: int) -> None:
        self.rtos += 1
        self.conn.stats.rto(self.index)
        self.inflight_at_rto = self.inflight
        lost = list(self.holes) + list(self.outstanding)
        self.holes.clear()
        self.outstanding.clear()
        self.lost_pkts += len(lost)
        pending = sorted(list(self.retx) + lost, key=lambda r: r.ssn)
        self.retx = deque(pending)
        self.inflight = 0
        self.in_rto_recovery = True
        self.in_recovery = False
        self.no_reduce_until = self.snd_nxt
        self.rto = min(self.rto * 2, MAX_RTO)
        self.cc.on_rto(now)
        self.conn.on_subflow_rto(self, pending, now)
        self.next_send = now
        self._arm_rto(now)
        self.try_send(now)

    def on_ack(self, ack: Packet) -> None:
        now = self.sim.now
        rtt = now - ack.echo_sent
        old = self.srtt
        self.rttvar = (3 * self.rttvar + abs(old - rtt)) // 4
        self.srtt = (7 * old + rtt) // 8
        self.last_rtt = rtt
        if rtt < self.min_rtt:
            self.min_rtt = rtt
        conn = self.conn
        conn.stats.rtt(now, rtt)

        out = self.outstanding
        echo = ack.echo_txn
        rec = None
        if out and out[0].txn <= echo:
            holes = self.holes
            dp = self.delivered_pkts
            while out and out[0].txn < echo:
                h = out.popleft()
                h.mark = dp
                holes.append(h)
            if out and out[0].txn == echo:
                rec = out.popleft()

        rs = self.rs
        if rec is not None:
            self.inflight -= 1
            self.delivered += rec.size
            self.delivered_pkts += 1
            self.delivered_time = now
            rs.prior_delivered = rec.delivered
            rs.delivered = self.delivered - rec.delivered
            send_el = rec.sent_at - rec.first_sent_time
            ack_el = now - rec.delivered_time
            self.first_sent_time = rec.sent_at
            interval = send_el if send_el > ack_el else ack_el
            rs.interval = interval if interval >= self.min_rtt else 0
            rs.app_limited = rec.app_limited
            rs.rtt = rtt
            rs.acked = 1
            rs.acked_bytes = rec.size
            if self.app_limited_until and self.delivered > self.app_limited_until:
                self.app_limited_until = 0
        else:
            rs.interval = 0
            rs.rtt = -1
            rs.acked = 0
            rs.acked_bytes = 0
            rs.app_limited = False

        lost_now = 0
        holes = self.holes
        if holes:
            dp = self.delivered_pkts
            while holes and dp - holes[0].mark >= DUPTHRESH:
                h = holes.popleft()
                self.inflight -= 1
                self.retx.append(h)
                lost_now += 1
        rs.losses = lost_now

        cum = ack.cum_ack
        if cum > self.snd_una:
            self.snd_una = cum
            if self.in_rto_recovery:
                self.in_rto_recovery = False
                self.cc.on_rto_recovered(now)
            self.rto = max(MIN_RTO, self.srtt + 4 * self.rttvar)
            if out or holes:
                self._arm_rto(now)
            if self.in_recovery and cum >= self.recovery_ssn:
                self.in_recovery = False
        if lost_now:
            self.lost_pkts += lost_now
            if not self.in_recovery and self.snd_una >= self.no_reduce_until:
                self.in_recovery = True
                self.recovery_ssn = self.snd_nxt
                self.cc.on_congestion_event(now)

        self.cc.on_ack(rs, now)
        conn.on_data_ack(ack.data_ack, now)
        self.try_send(now)


class Receiver:
    """Per-subflow cumulative ACKs plus the meta-level reassembly queue."""

    def __init__(self, conn: "Connection", rcv_buffer: Optional[int] = None):
        self.conn = conn
        self.next_dsn = 0
        self.ofo: dict[int, int] = {}
        self.ofo_max = 0
        self.rcv_buffer = rcv_buffer
        self._subs: list = []

    def add_subflow(self, rev, sink) -> None:
        self._subs.append([0, set(), rev, sink])

    def on_data(self, pkt: Packet) -> None:
        conn = self.conn
        now = conn.sim.now
        st = self._subs[pkt.sub]
        d = pkt.dsn
        ofo = self.ofo
        if (self.rcv_buffer is not None and d > self.next_dsn and d not in ofo
                and len(ofo) >= self.rcv_buffer):
            conn.stats.rcv_drop()
            return
        ssn = pkt.ssn
        if ssn == st[0]:
            nxt = ssn + 1
            ooo = st[1]
            while nxt in ooo:
                ooo.remove(nxt)
                nxt += 1
            st[0] = nxt
        elif ssn > st[0]:
            st[1].add(ssn)
        payload = pkt.size - HEADER
        stats = conn.stats
        if d == self.next_dsn:
            nxt = d + 1
            got = payload
            while nxt in ofo:
                got += ofo.pop(nxt)
                nxt += 1
            self.next_dsn = nxt
            stats.arrival(pkt.sub, now, payload, False)
            stats.deliver(now, got)
        elif d > self.next_dsn and d not in ofo:
            ofo[d] = payload
            if len(ofo) > self.ofo_max:
                self.ofo_max = len(ofo)
            stats.arrival(pkt.sub, now, payload, False)
        else:
            stats.arrival(pkt.sub, now, payload, True)
        n_ofo = len(ofo)
        stats.ofo(now, n_ofo)
        if conn.trace is not None:
            conn.trace.append((now, "rx", conn.flow_id, pkt.sub, ssn, d, pkt.kind, pkt.size))
        ack = Packet(pkt.flow, pkt.sub, ssn, d, ACK_SIZE, ACK, now, pkt.txn)
        ack.cum_ack = st[0]
        ack.echo_txn = pkt.txn
        ack.echo_sent = pkt.sent_at
        ack.data_ack = self.next_dsn
        ack.ofo_len = n_ofo
        send_along(st[2], ack, st[3], now)


class Connection:
    """Meta-level sender state shared by the subflows of one flow.

    ``dsn`` numbers segments.  With ``app_bytes=None`` the source is greedy
    and never runs dry; otherwise ``app_write`` feeds a send buffer capped at
    ``send_buffer`` bytes (unsent plus unacknowledged).
    """

    def __init__(self, sim: Simulator, flow_id: int, name: str, scheduler, stats,
                 trace: Optional[list] = None, greedy: bool = True,
                 send_buffer: int = DEFAULT_SEND_BUFFER, rcv_buffer: Optional[int] = None):
        self.sim = sim
        self.flow_id = flow_id
        self.name = name
        self.scheduler = scheduler
        self.stats = stats
        self.trace = trace
        self.subflows: list[Subflow] = []
        self.receiver = Receiver(self, rcv_buffer)
        self.next_dsn = 0
        self.data_una = 0
        self.high_sent = 0
        self.app_pending: Optional[int] = None if greedy else 0
        self.send_buffer = send_buffer
        self.unacked_bytes = 0
        self.stalls = 0
        self.stalled_bytes = 0
        self._sizes: dict[int, int] = {}
        self._head: list[int] = []
        self._head_set: set[int] = set()
        self.out_dsn: set[int] = set()
        self.stopped = False
        self.started = False
        self.refill_on_send = False

    def add_subflow(self, fwd, rev, cc, base_rtt: int) -> Subflow:
        s = Subflow(self, len(self.subflows), fwd, rev, cc, base_rtt)
        self.subflows.append(s)
        self.receiver.add_subflow(rev, s.on_ack)
        return s

    # lifecycle

    def start(self, now: int) -> None:
        self.started = True
        self.scheduler.attach(self)
        self.refill_on_send = self.scheduler.refill_after_send()
        for s in self.subflows:
            s.start(now)
        self.scheduler.start(now)
        self.kick(now)

    def stop(self, now: int) -> None:
        self.stopped = True

    def kick(self, now: int) -> None:
        for s in self.subflows:
            s.try_send(now)

    # application side

    def app_write(self, nbytes: int) -> int:
        """Queue up to ``nbytes``; returns how many were accepted."""
        if self.app_pending is None:
            raise ValueError("greedy connections take no application writes")
        if nbytes < 0:
            raise ValueError("write size must be non-negative")
        room = self.send_buffer - self.app_pending - self.unacked_bytes
        accepted = max(0, min(nbytes, room))
        if accepted < nbytes:
            self.stalls += 1
            self.stalled_bytes += nbytes - accepted
        self.app_pending += accepted
        if accepted and self.started:
            self.kick(self.sim.now)
        return accepted

    @property
    def buffered_bytes(self) -> int:
        pending = self.app_pending or 0
        return pending + self.unacked_bytes

    # segment supply for schedulers

    def seg_size(self, dsn: int) -> int:
        size = self._sizes.get(dsn)
        if size is not None:
            return size
        if dsn >= self.next_dsn and self.app_pending is not None:
            return min(MSS, self.app_pending) + HEADER
        return WIRE_SIZE

    def _source_ready(self) -> bool:
        if self.stopped:
            return False
        return self.app_pending is None or self.app_pending > 0

    def has_data(self) -> bool:
        head = self._head
        while head and head[0] < self.data_una:
            self._head_set.discard(heapq.heappop(head))
        return bool(head) or self._source_ready()

    def _alloc(self) -> int:
        d = self.next_dsn
        self.next_dsn = d + 1
        if self.app_pending is None:
            payload = MSS
        else:
            payload = min(MSS, self.app_pending)
            self.app_pending -= payload
            if payload != MSS:
                self._sizes[d] = payload + HEADER
        self.unacked_bytes += payload
        return d

    def take_next(self) -> Optional[tuple]:
        """Next segment for a non-redundant subflow: requeued ones first, then fresh data."""
        head = self._head
        while head:
            d = heapq.heappop(head)
            self._head_set.discard(d)
            if d >= self.data_una:
                return (d, self.seg_size(d), DATA)
        if not self._source_ready():
            return None
        d = self._alloc()
        return (d, self.seg_size(d), DATA)

    def peek_next(self) -> Optional[int]:
        head = self._head
        while head and head[0] < self.data_una:
            self._head_set.discard(heapq.heappop(head))
        if head:
            return head[0]
        if self._source_ready():
            return self.next_dsn
        return None

    def requeue(self, items) -> None:
        for item in items:
            d = item[0]
            if item[2] == DATA and d >= self.data_una and d not in self._head_set:
                self._head_set.add(d)
                heapq.heappush(self._head, d)

    def fill(self, now: int) -> None:
        self.scheduler.fill(now)

    def redundant_item(self, sub: Subflow) -> Optional[tuple]:
        if not self.scheduler.is_redundant(sub):
            return None
        return self.scheduler.redundant_pick(sub)

    def redundant_pick(self, sub: Subflow, cursors: list) -> Optional[tuple]:
        """Copy of the oldest outstanding dsn after this subflow's cursor, cycling.

        With nothing outstanding, the next unsent dsn is copied without
        consuming it.
        """
        lo, hi = self.data_una, self.high_sent
        out = self.out_dsn
        d = max(cursors[sub.index] + 1, lo)
        while d < hi and d not in out:
            d += 1
        if d >= hi:
            d = lo
            while d < hi and d not in out:
                d += 1
        if d < hi:
            cursors[sub.index] = d
            return (d, self.seg_size(d), REDUNDANT)
        nd = self.peek_next()
        if nd is None:
            return None
        return (nd, self.seg_size(nd), REDUNDANT)

    # feedback from subflows

    def on_transmit(self, sub: Subflow, ssn: int, dsn: int, size: int, kind: int, now: int) -> None:
        if kind == DATA:
            self.out_dsn.add(dsn)
            if dsn >= self.high_sent:
                self.high_sent = dsn + 1
        self.stats.send(sub.index, now, size, kind)
        if self.trace is not None:
            self.trace.append((now, "tx", self.flow_id, sub.index, ssn, dsn, kind, size))

    def on_data_ack(self, data_ack: int, now: int) -> None:
        una = self.data_una
        if data_ack <= una:
            return
        # a redundant copy may deliver a dsn no subflow has taken yet
        while self.next_dsn < data_ack:
            self._alloc()
        out = self.out_dsn
        sizes = self._sizes
        freed = 0
        for d in range(una, data_ack):
            out.discard(d)
            size = sizes.pop(d, None)
            freed += (size - HEADER) if size is not None else MSS
        self.unacked_bytes -= freed
        self.data_una = data_ack
        if self.high_sent < data_ack:
            self.high_sent = data_ack

    def on_subflow_rto(self, sub: Subflow, lost: list, now: int) -> None:
        """Reinject the timed-out subflow's unacknowledged data on the others."""
        self.scheduler.on_subflow_rto(sub, now)
        if self.scheduler.redundant_all:
            return
        if sum(1 for s in self.subflows if s.active) < 2:
            return
        self.requeue([(r.dsn, r.size, DATA) for r in lost if r.kind == DATA])
        self.requeue(sub.take_queue())
        for s in self.subflows:
            if s is not sub:
                s.try_send(now)
