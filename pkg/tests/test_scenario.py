import json
import textwrap

import pytest
from hypothesis import given, strategies as st

from mpsim import ScenarioError, from_dict, loads
from mpsim.engine import ms, seconds
from mpsim.scenario import Run, parse_fraction, parse_queue, parse_rate, parse_time

BASE = textwrap.dedent("""\
    name: two-path
    duration: 5s
    links:
      p1:
        bandwidth: 20Mbps
        delay: 10ms
        loss: 0.1%
      p2:
        bandwidth: 10Mbps
        delay: 30ms
    flows:
      - name: m
        type: mptcp
        cc: coupled-bbr
        scheduler: arp
        paths: [p1, p2]
    """)


class TestUnits:
    def test_rates(self):
        assert parse_rate("100Mbps") == 100e6
        assert parse_rate("1.5 Gbps") == 1.5e9
        assert parse_rate(2e6) == 2e6
        with pytest.raises(ValueError):
            parse_rate("10 furlongs")

    def test_times(self):
        assert parse_time("25ms") == ms(25)
        assert parse_time("1.5") == seconds(1.5)
        assert parse_time("120us") == 120_000

    def test_fractions(self):
        assert parse_fraction("0.5%") == 0.005
        assert parse_fraction(0.01) == 0.01
        with pytest.raises(ValueError):
            parse_fraction("1 ppm")

    def test_queue(self):
        assert parse_queue("1BDP", 100e6, ms(25)) == 625_000
        assert parse_queue("10pkt", 1e6, 0) == 15_000
        assert parse_queue(None, 1e6, 0) is None


class TestLoad:
    def test_valid_file(self):
        scn = loads(BASE)
        assert scn.name == "two-path"
        assert [l.name for l in scn.links] == ["p1", "p2"]
        assert scn.links[0].params.loss == pytest.approx(0.001)
        assert scn.flows[0].paths == [["p1"], ["p2"]]
        assert scn.duration == seconds(5)

    def test_json_is_accepted(self):
        raw = json.dumps({"links": {"p": {"bandwidth": "1Mbps", "delay": "1ms"}},
                          "flows": [{"name": "f", "path": "p"}]})
        scn = loads(raw)
        assert scn.flows[0].cc == "bbr"

    def test_override_reaches_link(self):
        scn = loads(BASE, overrides=["links.p2.loss=1%"])
        assert scn.links[1].params.loss == pytest.approx(0.01)
        summary = Run(loads(BASE, overrides=["links.p2.loss=1%", "duration=3s"])).run()
        assert summary["links"]["p2"]["random_drops"] > 0

    def test_override_into_list(self):
        scn = loads(BASE, overrides=["flows.0.scheduler=round-robin"])
        assert scn.flows[0].scheduler == "round-robin"
        with pytest.raises(ScenarioError):
            loads(BASE, overrides=["flows.5.scheduler=arp"])
        with pytest.raises(ScenarioError):
            loads(BASE, overrides=["no-equals-sign"])

    def test_seed_argument_wins(self):
        assert loads(BASE, seed=9).seed == 9


class TestErrors:
    def test_bad_loss_names_field_and_line(self):
        with pytest.raises(ScenarioError) as e:
            loads(BASE.replace("loss: 0.1%", "loss: 1.5"))
        assert e.value.field == "links.p1.loss"
        assert e.value.line == 7
        assert "links.p1.loss" in str(e.value)

    def test_unknown_link_in_route(self):
        with pytest.raises(ScenarioError) as e:
            loads(BASE.replace("paths: [p1, p2]", "paths: [p1, p9]"))
        assert e.value.field.startswith("flows[0].paths")
        assert e.value.line == 16

    def test_unknown_field(self):
        with pytest.raises(ScenarioError, match="unknown field 'colour'"):
            loads(BASE + "colour: red\n")

    def test_malformed_yaml(self):
        with pytest.raises(ScenarioError) as e:
            loads("links: {p: [\n")
        assert e.value.line is not None

    @pytest.mark.parametrize("edit, field", [
        (("bandwidth: 20Mbps", "bandwidth: -5Mbps"), "links.p1.bandwidth"),
        (("delay: 10ms", "delay: soon"), "links.p1.delay"),
        (("cc: coupled-bbr", "cc: vegas"), "flows[0].cc"),
        (("scheduler: arp", "scheduler: lottery"), "flows[0].scheduler"),
        (("type: mptcp", "type: sctp"), "flows[0].type"),
        (("duration: 5s", "duration: 1s"), "duration"),
    ])
    def test_field_reported(self, edit, field):
        with pytest.raises(ScenarioError) as e:
            loads(BASE.replace(*edit))
        assert e.value.field == field
        assert e.value.line is not None

    def test_fixed_controller_needs_rate(self):
        with pytest.raises(ScenarioError, match="needs a rate"):
            loads(BASE.replace("cc: coupled-bbr", "cc: fixed"))

    def test_tcp_flow_has_one_route(self):
        with pytest.raises(ScenarioError, match="exactly one route"):
            loads(BASE.replace("type: mptcp", "type: tcp"))

    def test_event_validation(self):
        bad = BASE + "events:\n  - {at: 2s, link: p1, set: {loss: 2}}\n"
        with pytest.raises(ScenarioError) as e:
            loads(bad)
        assert e.value.field == "events[0].set.loss"
        ramp = BASE + "events:\n  - {at: 2s, until: 1s, link: p1, set: {loss: 0.5}}\n"
        with pytest.raises(ScenarioError, match="after its start"):
            loads(ramp)


@given(loss=st.one_of(st.floats(1.0001, 1e6), st.floats(-1e6, -1e-9)))
def test_out_of_range_loss_always_rejected(loss):
    raw = {"links": {"p": {"bandwidth": "1Mbps", "delay": "1ms", "loss": loss}},
           "flows": [{"name": "f", "path": "p"}]}
    with pytest.raises(ScenarioError) as e:
        from_dict(raw)
    assert e.value.field == "links.p.loss"


@given(key=st.text(alphabet="abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=12))
def test_unknown_link_keys_rejected(key):
    known = {"bandwidth", "delay", "loss", "queue", "jitter", "jitter_epoch", "reverse"}
    link = {"bandwidth": "1Mbps", "delay": "1ms", key: 1}
    raw = {"links": {"p": link}, "flows": [{"name": "f", "path": "p"}]}
    if key in known:
        return
    with pytest.raises(ScenarioError) as e:
        from_dict(raw)
    assert e.value.field == f"links.p.{key}"


@given(bw=st.floats(1e5, 1e9), delay_ms=st.integers(0, 500), loss=st.floats(0, 1))
def test_valid_links_accepted(bw, delay_ms, loss):
    raw = {"links": {"p": {"bandwidth": bw, "delay": f"{delay_ms}ms", "loss": loss}},
           "flows": [{"name": "f", "path": "p"}]}
    scn = from_dict(raw)
    assert scn.links[0].params.bandwidth == bw
    assert scn.links[0].params.loss == loss


def test_same_seed_same_summary():
    a = Run(loads(BASE, seed=3)).run()
    b = Run(loads(BASE, seed=3)).run()
    assert a == b
