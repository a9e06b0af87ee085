from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from mpsim import from_dict, run_scenario
from mpsim.cc import (Bbr, CoupledBbr, CoupledBbrGroup, CoupledGroup, FixedRate, Lia, NewReno,
                      RateSample, WindowedMax, average_gain_identity, coupled_bbr_update, make_controller,
                      make_group)
from mpsim.cc.bbr import PROBE_BW, PROBE_RTT, PROBE_RTT_CWND
from mpsim.engine import ms, us


class FakeSub:
    def __init__(self, srtt=ms(40)):
        self.srtt = srtt
        self.min_rtt = srtt
        self.mss_wire = 1500
        self.inflight = 0
        self.inflight_at_rto = 0
        self.delivered = 0
        self.delivered_pkts = 100
        self.in_recovery = False
        self.in_rto_recovery = False


def _probe_bw(cc, bw, srtt=ms(40)):
    cc.attach(FakeSub(srtt), 0)
    cc._bw = bw
    cc.full_bw_reached = True
    cc.mode = PROBE_BW
    return cc


def _rs(rtt=-1, delivered=0, interval=0, acked=1):
    rs = RateSample()
    rs.rtt = rtt
    rs.delivered = delivered
    rs.interval = interval
    rs.acked = acked
    rs.acked_bytes = acked * 1448
    return rs


class TestCoupledUpdate:
    def test_symmetric(self):
        betas, alphas = coupled_bbr_update([100, 100])
        assert betas == [Fraction(1, 2)] * 2
        assert alphas == [Fraction(1, 3)] * 2

    def test_two_to_one(self):
        betas, alphas = coupled_bbr_update([100, 50])
        assert betas == [Fraction(4, 5), Fraction(2, 5)]
        assert alphas == [Fraction(11, 15), Fraction(1, 5)]
        assert float(alphas[0]) == pytest.approx(0.7333333)
        assert sum(b * w for b, w in zip(betas, [100, 50])) == 100

    def test_weak_path_falls_back(self):
        betas, alphas = coupled_bbr_update([100, 20])
        assert betas[1] == Fraction(20 * 100, 10400)
        assert float(betas[1]) == pytest.approx(0.1923, abs=1e-4)
        assert betas[1] < Fraction(1, 4) and alphas[1] < 0

    def test_all_zero(self):
        betas, alphas = coupled_bbr_update([0, 0, 0])
        assert betas == [0, 0, 0]
        assert all(a <= 0 for a in alphas)

    @given(st.lists(st.floats(0.01, 1e4, allow_nan=False), min_size=1, max_size=4))
    def test_identities_hold_exactly(self, bws):
        betas, alphas = coupled_bbr_update(bws)
        exact = [Fraction(b) for b in bws]
        assert sum(b * w for b, w in zip(betas, exact)) == max(exact)
        for a, b in zip(alphas, betas):
            assert average_gain_identity(a) == b


class TestAverageGain:
    def test_examples(self):
        assert average_gain_identity(Fraction(1, 3)) == Fraction(1, 2)
        assert average_gain_identity(Fraction(11, 15)) == Fraction(4, 5)
        assert average_gain_identity(1) == 1

    def test_mismatch_is_reported(self):
        with pytest.raises(AssertionError):
            average_gain_identity(Fraction(1, 3), beta=Fraction(3, 4))


class TestPacing:
    def _pair(self, bws, srtts=(ms(40), ms(40))):
        group = CoupledBbrGroup()
        ccs = []
        for bw, srtt in zip(bws, srtts):
            cc = CoupledBbr()
            group.add(cc)
            ccs.append(_probe_bw(cc, bw, srtt))
        for cc in ccs:
            cc.cycle_idx = 1
            cc.advance_cycle(0)
            cc.set_pacing_rate()
        return ccs

    def test_coupled_interval(self):
        a, _ = self._pair([100e6, 50e6])
        assert a.alpha == pytest.approx(11 / 15)
        assert a.next_send_time(1500, 0) == pytest.approx(us(163.6), abs=50)

    def test_probe_slot_interval(self):
        cc = _probe_bw(Bbr(), 100e6)
        cc.cycle_idx = 7
        cc.advance_cycle(0)
        cc.set_pacing_rate()
        assert cc.cycle_idx == 0 and cc.pacing_gain == 1.25
        assert cc.next_send_time(1500, 0) == us(96)

    def test_fallback_is_four_packets_per_rtt(self):
        _, weak = self._pair([100e6, 20e6])
        assert weak.fallback
        assert weak.next_send_time(1500, 0) == ms(10)

    def test_slot_rates_average_to_beta(self):
        a, b = self._pair([100e6, 50e6])
        assert a.smooth_rate() == pytest.approx(0.8 * 100e6)
        assert b.smooth_rate() == pytest.approx(0.4 * 50e6)

    def test_loss_leaves_pacing_alone(self):
        a, _ = self._pair([100e6, 50e6])
        before = a.pacing_rate
        a.on_congestion_event(0)
        assert a.pacing_rate == before


class TestFilters:
    def test_min_rtt_takes_lower_sample(self):
        cc = Bbr()
        cc.attach(FakeSub(ms(25)), 0)
        assert cc.min_rtt == ms(25)
        cc.on_ack(_rs(rtt=ms(24)), ms(30))
        assert cc.min_rtt == ms(24)
        cc.on_ack(_rs(rtt=ms(26)), ms(40))
        assert cc.min_rtt == ms(24)

    def test_lower_rate_sample_keeps_bw(self):
        cc = Bbr()
        cc.attach(FakeSub(ms(25)), 0)
        cc.on_ack(_rs(delivered=15000, interval=ms(1)), ms(30))
        high = cc.bw
        assert high == pytest.approx(15000 * 8e9 / ms(1))
        cc.on_ack(_rs(delivered=1500, interval=ms(1)), ms(31))
        assert cc.bw == high

    def test_windowed_max_expires(self):
        f = WindowedMax(10)
        assert f.update(0, 5.0) == 5.0
        assert f.update(3, 2.0) == 5.0
        assert f.update(9, 1.0) == 5.0
        assert f.update(10, 1.0) == 2.0
        assert f.expire(14) == 1.0
        assert f.expire(100) == 0.0

    def test_probe_rtt_caps_inflight(self):
        cc = _probe_bw(Bbr(), 100e6)
        cc.cwnd = 80
        cc.mode = PROBE_RTT
        cc.set_cwnd(1)
        assert cc.cwnd == PROBE_RTT_CWND


class TestWindowControllers:
    def test_newreno_halves(self):
        cc = NewReno()
        cc.attach(FakeSub(), 0)
        cc.cwnd = 100
        cc.on_congestion_event(0)
        assert cc.cwnd == 50 and cc.ssthresh == 50

    def test_newreno_slow_start_and_avoidance(self):
        cc = NewReno()
        cc.attach(FakeSub(), 0)
        cc.on_ack(_rs(acked=5), 0)
        assert cc.cwnd == 15
        cc.ssthresh = 15
        # one window of ACKs adds about one packet
        for _ in range(15):
            cc.on_ack(_rs(acked=1), 0)
        assert cc.cwnd == pytest.approx(16, abs=0.05)

    def test_lia_single_subflow_is_newreno(self):
        group = CoupledGroup()
        lia = Lia()
        group.add(lia)
        lia.attach(FakeSub(), 0)
        lia.cwnd = lia.ssthresh = 20.0
        reno = NewReno()
        reno.attach(FakeSub(), 0)
        reno.cwnd = reno.ssthresh = 20.0
        assert lia.alpha() == pytest.approx(1.0)
        for _ in range(200):
            lia.on_ack(_rs(), 0)
            reno.on_ack(_rs(), 0)
        assert lia.cwnd == pytest.approx(reno.cwnd, rel=1e-12)

    def test_lia_is_no_more_aggressive_than_reno(self):
        group = CoupledGroup()
        subs = [Lia(), Lia()]
        for i, cc in enumerate(subs):
            group.add(cc)
            cc.attach(FakeSub(ms(20 + 30 * i)), 0)
            cc.cwnd = cc.ssthresh = 30.0
        for cc in subs:
            assert cc.ca_increase() <= 1.0 / cc.cwnd + 1e-15

    def test_lia_identical_subflows_share_evenly(self):
        link = {"bandwidth": "10Mbps", "delay": "10ms"}
        raw = {"duration": "30s", "warmup": "5s", "links": {"p1": dict(link), "p2": dict(link)},
               "flows": [{"name": "m", "type": "mptcp", "cc": "lia", "scheduler": "min-rtt",
                          "paths": [["p1"], ["p2"]]}]}
        run = run_scenario(from_dict(raw, seed=4))
        rec = run.recorder
        means = []
        for i in (0, 1):
            vals = rec.sub_series[f"m.sub{i}.cwnd"].values[50:]
            means.append(sum(vals) / len(vals))
        assert means[0] == pytest.approx(means[1], rel=0.10)


class TestFactory:
    def test_names_and_groups(self):
        assert isinstance(make_group("coupled-bbr"), CoupledBbrGroup)
        assert isinstance(make_group("olia"), CoupledGroup)
        assert make_group("bbr") is None
        with pytest.raises(ValueError, match="unknown congestion control"):
            make_controller("vegas")

    def test_fixed_rate_jitter_bounded(self):
        draws = iter([0.0, 0.999999, 0.5])
        cc = FixedRate(10e6, jitter=0.1, epoch=ms(100), draw=lambda: next(draws))
        cc.attach(FakeSub(), 0)
        for k in range(3):
            cc.next_send_time(1500, k * ms(100))
            assert 0.9 * 10e6 <= cc.pacing_rate <= 1.1 * 10e6
        with pytest.raises(ValueError):
            FixedRate(0)
