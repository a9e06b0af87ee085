import pytest
from hypothesis import given, settings, strategies as st

from mpsim.engine import Simulator, ms, seconds, us
from mpsim.network import DATA, Link, LinkParams, Packet, Topology, send_along


def _pkt(dsn=0, size=1500):
    return Packet(0, 0, dsn, dsn, size, DATA, 0)


def _link(sim, **kw):
    kw.setdefault("bandwidth", 100e6)
    kw.setdefault("delay", ms(25))
    return Link(sim, "l", LinkParams(**kw))


class Sink:
    def __init__(self, sim):
        self.sim = sim
        self.got = []

    def __call__(self, pkt):
        self.got.append((self.sim.now, pkt.dsn))


def test_serialization_plus_propagation():
    sim = Simulator()
    link = _link(sim)
    sink = Sink(sim)
    send_along((link,), _pkt(), sink, 0)
    sim.run_until(seconds(1))
    assert sink.got == [(us(120) + ms(25), 0)]


def test_loss_one_drops_everything():
    sim = Simulator()
    link = _link(sim, loss=1.0)
    sink = Sink(sim)
    for i in range(200):
        assert not send_along((link,), _pkt(i), sink, 0)
    sim.run_until(seconds(1))
    assert sink.got == [] and link.random_drops == 200


def test_small_queue_drops_third_packet():
    sim = Simulator()
    link = _link(sim, queue=3000)
    drops = []
    link.on_drop = lambda p, why: drops.append((p.dsn, why))
    sink = Sink(sim)
    results = [send_along((link,), _pkt(i), sink, 0) for i in range(3)]
    assert results == [True, True, False]
    assert drops == [(2, "congestion")]
    sim.run_until(seconds(1))
    assert [d for _, d in sink.got] == [0, 1]
    assert sink.got[1][0] - sink.got[0][0] == us(120)


def test_default_queue_is_one_bdp():
    p = LinkParams(bandwidth=100e6, delay=ms(25))
    assert p.queue_bytes == 625_000


def _feed(sim, link, sink, until, gap):
    i = 0
    t = 0
    while t < until:
        sim.schedule(t, lambda d=i: send_along((link,), _pkt(d), sink, sim.now))
        i += 1
        t += gap
    return i


def test_breakdown_stops_deliveries():
    sim = Simulator()
    link = _link(sim, bandwidth=10e6, delay=ms(10))
    link.set_params(seconds(15), loss=1.0)
    sink = Sink(sim)
    _feed(sim, link, sink, seconds(20), ms(5))
    sim.run_until(seconds(21))
    assert sink.got
    # anything arriving after 15 s was accepted before the change
    assert max(t for t, _ in sink.got) <= seconds(15) + ms(10) + ms(2)
    sent_after = sum(1 for t, _ in sink.got if t > seconds(15) + ms(20))
    assert sent_after == 0


def test_loss_ramp_interpolates_linearly():
    sim = Simulator()
    link = _link(sim, loss=0.0001)
    link.set_params(seconds(10), seconds(30), loss=0.01)
    sim.run_until(seconds(10))
    assert link.value_at("loss", seconds(20)) == pytest.approx(0.00505)
    sim.run_until(seconds(20))
    link.transmit(_pkt(), sim.now)
    assert link.loss == pytest.approx(0.00505)


def test_noop_schedule_matches_static_link():
    def run(noop):
        sim = Simulator(5)
        link = _link(sim, bandwidth=10e6, loss=0.05)
        if noop:
            link.set_params(seconds(1))
        sink = Sink(sim)
        _feed(sim, link, sink, seconds(2), us(900))
        sim.run_until(seconds(3))
        return sink.got

    assert run(False) == run(True)


def test_set_params_rejects_past_and_unknown():
    sim = Simulator()
    link = _link(sim)
    sim.run_until(seconds(1))
    with pytest.raises(ValueError):
        link.set_params(0, loss=0.1)
    with pytest.raises(ValueError):
        link.set_params(seconds(2), colour="red")
    with pytest.raises(ValueError):
        link.set_params(seconds(2), loss=1.5)


def test_link_params_validation():
    with pytest.raises(ValueError):
        LinkParams(bandwidth=0, delay=0)
    with pytest.raises(ValueError):
        LinkParams(bandwidth=1e6, delay=0, loss=1.5)
    with pytest.raises(ValueError):
        LinkParams(bandwidth=1e6, delay=0, queue=100)


def test_saturated_link_delivers_at_line_rate():
    sim = Simulator()
    link = _link(sim, bandwidth=20e6, delay=ms(5), queue=10 * 1500)
    sink = Sink(sim)
    # offer 1.5x the capacity
    _feed(sim, link, sink, seconds(5), us(400))
    sim.run_until(seconds(5))
    got = [t for t, _ in sink.got if seconds(1) <= t < seconds(5)]
    rate = len(got) * 1500 * 8 / 4.0
    assert rate == pytest.approx(20e6, rel=0.005)


def test_topology_reverse_links_and_base_rtt():
    sim = Simulator()
    topo = Topology(sim)
    topo.add_link("a", LinkParams(bandwidth=100e6, delay=ms(10)))
    topo.add_link("b", LinkParams(bandwidth=50e6, delay=ms(5)))
    fwd, rev = topo.route(["a", "b"])
    assert [l.name for l in rev] == ["b.rev", "a.rev"]
    assert topo.base_rtt(fwd, rev) > ms(30)
    with pytest.raises(ValueError):
        topo.route(["zzz"])
    with pytest.raises(ValueError):
        topo.add_link("a", LinkParams(bandwidth=1e6, delay=0))


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 300),
    loss=st.floats(0.0, 0.5),
    queue_pkts=st.integers(1, 40),
    gap_us=st.integers(10, 3000),
    seed=st.integers(0, 2**32),
)
def test_conservation_and_fifo(n, loss, queue_pkts, gap_us, seed):
    sim = Simulator(seed)
    link = _link(sim, bandwidth=10e6, delay=ms(3), loss=loss, queue=queue_pkts * 1500, delay_jitter=0.0)
    sink = Sink(sim)
    for i in range(n):
        sim.schedule(i * us(gap_us), lambda d=i: send_along((link,), _pkt(d), sink, sim.now))
    sim.run_until(seconds(60))
    assert link.offered == n
    assert link.delivered + link.random_drops + link.congestion_drops == n
    assert link.in_transit == 0
    dsns = [d for _, d in sink.got]
    assert dsns == sorted(dsns)
    times = [t for t, _ in sink.got]
    assert times == sorted(times)


@settings(max_examples=10, deadline=None)
@given(loss=st.floats(0.01, 0.9), seed=st.integers(0, 2**32))
def test_random_loss_fraction(loss, seed):
    sim = Simulator(seed)
    link = _link(sim, loss=loss, queue=10**9)
    n = 20_000
    for i in range(n):
        link.transmit(_pkt(i), 0)
    frac = link.random_drops / n
    # five standard deviations
    assert abs(frac - loss) <= 5 * (loss * (1 - loss) / n) ** 0.5


@settings(max_examples=20, deadline=None)
@given(jitter=st.floats(0.0, 0.5), seed=st.integers(0, 2**32))
def test_jitter_keeps_fifo(jitter, seed):
    sim = Simulator(seed)
    link = _link(sim, bandwidth=10e6, delay=ms(20), delay_jitter=jitter, jitter_epoch=ms(5), queue=10**7)
    sink = Sink(sim)
    for i in range(400):
        sim.schedule(i * us(700), lambda d=i: send_along((link,), _pkt(d), sink, sim.now))
    sim.run_until(seconds(5))
    assert [d for _, d in sink.got] == list(range(400))
