"""BBRv1 and its coupled multipath variant.

The coupled variant keeps BBR's probing slots (1.25, 0.75) and replaces the
six cruising slots of the PROBE_BW cycle with a per-subflow gain

    alpha_i = (4 * beta_i - 1) / 3,
    beta_i  = BW_i * max_j BW_j / sum_j BW_j**2,

so the cycle-average gain is beta_i and the connection as a whole sends at
the best path's bandwidth.  When alpha_i <= 0 the cruising slots fall back
to four packets per RTT.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .base import INIT_CWND, CongestionControl, RateSample, WindowedMax

STARTUP = "STARTUP"
DRAIN = "DRAIN"
PROBE_BW = "PROBE_BW"
PROBE_RTT = "PROBE_RTT"

HIGH_GAIN = 2.0 / math.log(2.0)
DRAIN_GAIN = 1.0 / HIGH_GAIN
CWND_GAIN = 2.0
GAIN_CYCLE = (1.25, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
CYCLE_LEN = len(GAIN_CYCLE)
BW_WINDOW_ROUNDS = 10
MIN_RTT_WINDOW = 10_000_000_000
PROBE_RTT_TIME = 200_000_000
PROBE_RTT_CWND = 4
MIN_CWND = 4
FULL_BW_THRESH = 1.25
FULL_BW_ROUNDS = 3


def coupled_bbr_update(bws: Sequence[float]) -> tuple[list[Fraction], list[Fraction]]:
    """Exact per-subflow (beta, alpha) for a bandwidth vector.

    Arithmetic is rational so the fairness identities hold exactly; callers
    convert to float where a rate is needed.  An all-zero vector yields
    beta = 0 and alpha = -1/3 everywhere (every subflow in the fallback).
    """
    fr = [Fraction(b) if b > 0 else Fraction(0) for b in bws]
    total_sq = sum(b * b for b in fr)
    if total_sq == 0:
        zero = Fraction(0)
        return [zero] * len(fr), [Fraction(-1, 3)] * len(fr)
    best = max(fr)
    betas = [b * best / total_sq for b in fr]
    alphas = [(4 * b - 1) / 3 for b in betas]
    return betas, alphas


def average_gain_identity(alpha, beta=None) -> Fraction:
    """Cycle-average pacing gain (1.25 + 0.75 + 6 alpha) / 8.

    Evaluated exactly.  When ``beta`` is given the result is asserted equal to it.
    """
    a = Fraction(alpha)
    avg = (Fraction(5, 4) + Fraction(3, 4) + 6 * a) / 8
    if beta is not None:
        assert avg == Fraction(beta), f"cycle average {avg} != beta {beta}"
    return avg


class Bbr(CongestionControl):
    name = "bbr"
    paced = True
    loss_based = False

    def __init__(self, draw: Optional[Callable[[], float]] = None):
        super().__init__()
        self._draw = draw
        self.mode = STARTUP
        self.pacing_gain = HIGH_GAIN
        self.cwnd_gain = HIGH_GAIN
        self.bw_filter = WindowedMax(BW_WINDOW_ROUNDS)
        self._bw = 0.0
        self.min_rtt = 0
        self.min_rtt_stamp = 0
        self.round_count = 0
        self.next_round_delivered = 0
        self.full_bw = 0.0
        self.full_bw_cnt = 0
        self.full_bw_reached = False
        self.cycle_idx = 0
        self.cycle_stamp = 0
        self.slot_ns = 0
        self.probe_rtt_done = 0
        self.prior_cwnd = 0.0
        self.fallback = False

    def attach(self, sub, now: int) -> None:
        super().attach(sub, now)
        self.min_rtt = sub.srtt
        self.min_rtt_stamp = now
        self.cwnd = float(INIT_CWND)
        self.pacing_rate = HIGH_GAIN * INIT_CWND * sub.mss_wire * 8e9 / sub.srtt

    @property
    def bw(self) -> float:
        return self._bw

    @property
    def in_slow_start(self) -> bool:
        return self.mode == STARTUP

    def bdp_packets(self, gain: float) -> float:
        if self._bw <= 0 or self.min_rtt <= 0:
            return float(INIT_CWND)
        return gain * self._bw * self.min_rtt / (8e9 * self.sub.mss_wire)

    def on_ack(self, rs: RateSample, now: int) -> None:
        sub = self.sub
        round_start = False
        if rs.acked and rs.prior_delivered >= self.next_round_delivered:
            self.next_round_delivered = sub.delivered
            self.round_count += 1
            round_start = True

        if rs.interval > 0 and rs.acked:
            rate = rs.delivered * 8e9 / rs.interval
            if not rs.app_limited or rate >= self._bw:
                bw = self.bw_filter.update(self.round_count, rate)
            else:
                bw = self.bw_filter.expire(self.round_count)
        else:
            bw = self.bw_filter.expire(self.round_count)
        if bw != self._bw:
            self._bw = bw
            self.on_bw_change(now)

        if self.mode == PROBE_BW and now - self.cycle_stamp > self.slot_length():
            self.advance_cycle(now)

        if not self.full_bw_reached and round_start and not rs.app_limited:
            if self._bw >= self.full_bw * FULL_BW_THRESH:
                self.full_bw = self._bw
                self.full_bw_cnt = 0
            else:
                self.full_bw_cnt += 1
                if self.full_bw_cnt >= FULL_BW_ROUNDS:
                    self.full_bw_reached = True

        if self.mode == STARTUP and self.full_bw_reached:
            self.mode = DRAIN
            self.pacing_gain = DRAIN_GAIN
            self.cwnd_gain = HIGH_GAIN
        if self.mode == DRAIN and sub.inflight <= self.bdp_packets(1.0):
            self.enter_probe_bw(now)

        expired = now > self.min_rtt_stamp + MIN_RTT_WINDOW
        if rs.rtt >= 0 and (rs.rtt <= self.min_rtt or expired):
            self.min_rtt = rs.rtt
            self.min_rtt_stamp = now
        if expired and self.mode != PROBE_RTT:
            self.mode = PROBE_RTT
            self.pacing_gain = 1.0
            self.cwnd_gain = 1.0
            self.fallback = False
            self.prior_cwnd = max(self.prior_cwnd, self.cwnd)
            self.probe_rtt_done = 0
        if self.mode == PROBE_RTT:
            if self.probe_rtt_done == 0:
                if sub.inflight <= PROBE_RTT_CWND:
                    self.probe_rtt_done = now + max(PROBE_RTT_TIME, self.min_rtt)
            elif now >= self.probe_rtt_done:
                self.min_rtt_stamp = now
                self.cwnd = max(self.cwnd, self.prior_cwnd)
                self.prior_cwnd = 0.0
                if self.full_bw_reached:
                    self.enter_probe_bw(now)
                else:
                    self.mode = STARTUP
                    self.pacing_gain = HIGH_GAIN
                    self.cwnd_gain = HIGH_GAIN

        self.set_pacing_rate()
        self.set_cwnd(rs.acked)

    def on_bw_change(self, now: int) -> None:
        pass

    def slot_length(self) -> int:
        # one gain slot per smoothed RTT, latched when the cycle starts so the
        # pacing plan for the rest of the cycle is known in advance; with a
        # standing queue the minimum RTT is shorter than a round trip and
        # slots would end early
        return self.slot_ns or self.sub.srtt

    def smooth_rate(self) -> float:
        if self.mode != PROBE_BW or self._bw <= 0:
            return self.pacing_rate
        return sum(self.slot_rate(k) for k in range(CYCLE_LEN)) / CYCLE_LEN

    def slot_rate(self, idx: int) -> float:
        return GAIN_CYCLE[idx] * self._bw

    def drain_time(self, nbytes: float, now: int) -> float:
        return self.plan(nbytes, now)[0]

    def plan(self, nbytes: float, now: int) -> tuple[float, float]:
        """(seconds until ``nbytes`` more are released, queueing delay then).

        Walks the remaining gain slots instead of assuming the current rate
        holds.  The bottleneck queue starts at inflight beyond one BDP and
        grows or drains with the planned rate against the bandwidth estimate.
        """
        sub = self.sub
        bw = self._bw
        if self.mode != PROBE_BW or bw <= 0 or sub.srtt <= 0:
            return super().drain_time(nbytes, now), max(sub.srtt - self.min_rtt, 0) / 1e9
        q = max(sub.inflight * sub.mss_wire * 8.0 - bw * self.min_rtt / 1e9, 0.0)
        slot = self.slot_length() / 1e9
        left = max((self.cycle_stamp + self.slot_length() - now) / 1e9, 0.0)
        idx = self.cycle_idx
        bits = nbytes * 8.0
        t = 0.0
        for _ in range(4 * CYCLE_LEN):
            rate = self.slot_rate(idx)
            if rate > 0 and bits <= rate * left:
                dt = bits / rate
                q = max(q + (rate - bw) * dt, 0.0)
                return t + dt, q / bw
            bits -= rate * left
            t += left
            q = max(q + (rate - bw) * left, 0.0)
            left = slot
            idx = (idx + 1) % CYCLE_LEN
        return t + bits / max(self.smooth_rate(), 1.0), q / bw

    def enter_probe_bw(self, now: int) -> None:
        self.mode = PROBE_BW
        self.slot_ns = 0
        self.cwnd_gain = CWND_GAIN
        u = self._draw() if self._draw is not None else 0.0
        self.cycle_idx = CYCLE_LEN - 1 - int(u * (CYCLE_LEN - 1))
        self.advance_cycle(now)

    def advance_cycle(self, now: int) -> None:
        # slots sit on a fixed grid; the ACK that notices a boundary arrives
        # a little after it, and restarting from that ACK would let the
        # delay pile up over the cycle
        end = self.cycle_stamp + self.slot_length()
        self.cycle_idx = (self.cycle_idx + 1) % CYCLE_LEN
        self.cycle_stamp = end if self.slot_ns and now - end < self.slot_ns else now
        if self.cycle_idx == 0 or self.slot_ns == 0:
            self.slot_ns = self.sub.srtt
        self.pacing_gain = self.slot_gain(self.cycle_idx)

    def slot_gain(self, idx: int) -> float:
        return GAIN_CYCLE[idx]

    def set_pacing_rate(self) -> None:
        if self._bw <= 0:
            return
        rate = self.pacing_gain * self._bw
        if self.full_bw_reached or rate > self.pacing_rate:
            self.pacing_rate = rate

    def set_cwnd(self, acked: int) -> None:
        if self.sub.in_rto_recovery:
            return
        if self.mode == PROBE_RTT:
            self.cwnd = min(self.cwnd, PROBE_RTT_CWND)
            return
        target = max(math.ceil(self.bdp_packets(self.cwnd_gain)), MIN_CWND)
        if self.full_bw_reached:
            self.cwnd = min(self.cwnd + acked, target)
        elif self.cwnd < target or self.sub.delivered_pkts < INIT_CWND:
            self.cwnd += acked
        if self.cwnd < MIN_CWND:
            self.cwnd = MIN_CWND

    def on_congestion_event(self, now: int) -> None:
        pass

    def on_rto(self, now: int) -> None:
        self.prior_cwnd = max(self.prior_cwnd, self.cwnd)
        self.cwnd = 1.0

    def on_rto_recovered(self, now: int) -> None:
        self.cwnd = max(self.cwnd, self.prior_cwnd)
        self.prior_cwnd = 0.0

    def next_send_time(self, size: int, now: int) -> int:
        rate = self.pacing_rate
        if rate <= 0:
            return now
        return now + int(size * 8e9 / rate + 0.5)


class CoupledBbrGroup:
    """Holds the sibling controllers of one connection.

    Subflows in RTO recovery are left out of the coupling sums (their
    bandwidth estimate is stale); they get beta = 0 until an ACK returns.
    """

    def __init__(self):
        self.members: list[CoupledBbr] = []

    def add(self, cc: "CoupledBbr") -> None:
        self.members.append(cc)
        cc.group = self

    def bandwidths(self) -> list[float]:
        out = []
        for m in self.members:
            s = m.sub
            if s is None or s.in_rto_recovery:
                out.append(0.0)
            else:
                out.append(m.bw)
        return out

    def refresh(self) -> None:
        betas, alphas = coupled_bbr_update(self.bandwidths())
        for m, b, a in zip(self.members, betas, alphas):
            m.beta_exact = b
            m.alpha_exact = a


class CoupledBbr(Bbr):
    name = "coupled-bbr"

    def __init__(self, draw: Optional[Callable[[], float]] = None):
        super().__init__(draw)
        self.group: Optional[CoupledBbrGroup] = None
        self.beta_exact = Fraction(1)
        self.alpha_exact = Fraction(1)
        self.alpha = 1.0

    @property
    def beta(self) -> float:
        # recomputed on read; the value only feeds pacing at slot boundaries
        if self.group is not None:
            self.group.refresh()
        return float(self.beta_exact)

    def slot_gain(self, idx: int) -> float:
        if idx < 2:
            self.fallback = False
            return GAIN_CYCLE[idx]
        if self.group is not None:
            self.group.refresh()
        self.alpha = float(self.alpha_exact)
        self.fallback = self.alpha <= 0.0
        return self.alpha

    def slot_rate(self, idx: int) -> float:
        if idx < 2:
            return GAIN_CYCLE[idx] * self._bw
        alpha = float(self.alpha_exact)
        if alpha <= 0.0:
            srtt = self.sub.srtt
            return 4 * self.sub.mss_wire * 8e9 / srtt if srtt > 0 else 0.0
        return alpha * self._bw

    def set_pacing_rate(self) -> None:
        if self.mode == PROBE_BW and self.fallback:
            srtt = self.sub.srtt
            if srtt > 0:
                self.pacing_rate = 4 * self.sub.mss_wire * 8e9 / srtt
            return
        super().set_pacing_rate()

    def next_send_time(self, size: int, now: int) -> int:
        if self.mode == PROBE_BW and self.fallback:
            return now + self.sub.srtt // 4
        return super().next_send_time(size, now)
