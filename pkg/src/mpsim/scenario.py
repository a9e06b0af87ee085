"""Scenario files: parsing, validation, overrides, and building a runnable simulation.

A scenario is YAML (JSON is accepted as-is).  Quantities may carry units:
``100Mbps``, ``25ms``, ``1%``, ``64KB``, ``1.5BDP``.  Bare numbers mean
bits/s, seconds, a fraction, and bytes respectively.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from .cc import controller_names, make_controller, make_group
from .connection import Connection
from .engine import NS_PER_S, Simulator
from .metrics import Recorder, summarize
from .network import WIRE_SIZE, LinkParams, Topology
from .scheduler import SCHEDULERS, make_scheduler


class ScenarioError(ValueError):
    """Parse or validation failure; ``field`` is a dotted path, ``line`` 1-based or None."""

    def __init__(self, message: str, field: str = "", line: Optional[int] = None, source: str = "<scenario>"):
        self.field = field
        self.line = line
        self.source = source
        self.message = message
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {field + ': ' if field else ''}{message}")


# unit parsing

_NUM = r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
_RATE_UNITS = {"bps": 1.0, "kbps": 1e3, "mbps": 1e6, "gbps": 1e9}
_TIME_UNITS = {"ns": 1, "us": 1_000, "ms": 1_000_000, "s": NS_PER_S}
_SIZE_UNITS = {"b": 1, "kb": 1000, "mb": 1_000_000, "kib": 1024, "mib": 1024 * 1024, "pkt": WIRE_SIZE, "pkts": WIRE_SIZE}


def _split(value, what):
    if isinstance(value, bool):
        raise ValueError(f"expected a {what}, got a boolean")
    if isinstance(value, (int, float)):
        return float(value), ""
    if not isinstance(value, str):
        raise ValueError(f"expected a {what}, got {value!r}")
    m = re.fullmatch(_NUM + r"\s*([A-Za-z%/]*)", value.strip())
    if not m:
        raise ValueError(f"cannot read {value!r} as a {what}")
    return float(m.group(1)), m.group(2).lower()


def parse_rate(value) -> float:
    """bits/s"""
    num, unit = _split(value, "rate")
    if unit in ("", "bit/s"):
        return num
    unit = unit.replace("bit/s", "bps").replace("b/s", "bps")
    if unit not in _RATE_UNITS:
        raise ValueError(f"unknown rate unit in {value!r}")
    return num * _RATE_UNITS[unit]


def parse_time(value) -> int:
    """nanoseconds"""
    num, unit = _split(value, "time")
    if unit == "":
        return int(round(num * NS_PER_S))
    if unit not in _TIME_UNITS:
        raise ValueError(f"unknown time unit in {value!r}")
    return int(round(num * _TIME_UNITS[unit]))


def parse_fraction(value) -> float:
    num, unit = _split(value, "probability")
    if unit == "%":
        return num / 100.0
    if unit:
        raise ValueError(f"unknown unit in {value!r}")
    return num


def parse_queue(value, bandwidth: float, delay: int) -> Optional[int]:
    """bytes; ``xBDP`` is relative to bandwidth x round-trip propagation."""
    if value is None:
        return None
    num, unit = _split(value, "queue size")
    if unit == "bdp":
        return int(num * bandwidth * 2 * delay / 8e9)
    if unit == "":
        return int(num)
    if unit not in _SIZE_UNITS:
        raise ValueError(f"unknown size unit in {value!r}")
    return int(num * _SIZE_UNITS[unit])


# YAML with line numbers

def _compose(text: str, source: str):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ScenarioError(f"malformed file: {getattr(e, 'problem', e)}", line=line, source=source) from None
    if node is None:
        raise ScenarioError("empty scenario", source=source)
    lines: dict[str, int] = {}
    constructor = yaml.SafeLoader("")

    def walk(n, path):
        lines[path] = n.start_mark.line + 1
        if isinstance(n, yaml.MappingNode):
            out = {}
            for k, v in n.value:
                key = constructor.construct_object(k)
                sub = f"{path}.{key}" if path else str(key)
                lines[sub] = k.start_mark.line + 1
                out[key] = walk(v, sub)
            return out
        if isinstance(n, yaml.SequenceNode):
            return [walk(v, f"{path}[{i}]") for i, v in enumerate(n.value)]
        return constructor.construct_object(n)

    return walk(node, ""), lines


def apply_override(raw: dict, assignment: str) -> None:
    """``a.b.0.c=value``; the value is read as YAML (so ``1%`` stays a string)."""
    if "=" not in assignment:
        raise ScenarioError(f"override {assignment!r} must look like key=value", field="--set")
    key, _, text = assignment.partition("=")
    parts = key.strip().split(".")
    if not all(parts):
        raise ScenarioError(f"bad override key {key!r}", field="--set")
    value = yaml.safe_load(text) if text.strip() else None
    node = raw
    for i, p in enumerate(parts[:-1]):
        if isinstance(node, list):
            node = node[_index(p, node, key)]
        elif isinstance(node, dict):
            if p not in node:
                node[p] = {}
            node = node[p]
        else:
            raise ScenarioError(f"cannot descend into {'.'.join(parts[:i + 1])!r}", field=key)
    last = parts[-1]
    if isinstance(node, list):
        node[_index(last, node, key)] = value
    elif isinstance(node, dict):
        node[last] = value
    else:
        raise ScenarioError("override target is not a mapping or list", field=key)


def _index(p, node, key):
    try:
        i = int(p)
        node[i]
    except (ValueError, IndexError):
        raise ScenarioError(f"no list element {p!r}", field=key) from None
    return i


# validated model

@dataclass
class LinkSpec:
    name: str
    params: LinkParams
    reverse: Optional[LinkParams] = None


@dataclass
class FlowSpec:
    name: str
    type: str
    cc: str
    scheduler: str
    paths: list
    start: int = 0
    stop: Optional[int] = None
    cc_params: dict = field(default_factory=dict)
    subflow_cc_params: list = field(default_factory=list)
    scheduler_params: dict = field(default_factory=dict)
    rcv_buffer: Optional[int] = None


@dataclass
class EventSpec:
    link: str
    at: int
    until: Optional[int]
    changes: dict


@dataclass
class Scenario:
    name: str
    seed: int
    duration: int
    warmup: int
    bin: int
    links: list
    flows: list
    events: list
    bottlenecks: Optional[list] = None
    raw: dict = field(default_factory=dict)


_TOP_KEYS = {"name", "seed", "duration", "warmup", "bin", "links", "flows", "events", "bottlenecks", "description"}
_LINK_KEYS = {"bandwidth", "delay", "loss", "queue", "jitter", "jitter_epoch", "reverse"}
_FLOW_KEYS = {"name", "type", "cc", "scheduler", "paths", "path", "start", "stop", "cc_params",
              "subflow_cc_params", "scheduler_params", "rcv_buffer"}
_EVENT_KEYS = {"at", "until", "link", "set"}


class _Validator:
    def __init__(self, lines, source):
        self.lines = lines
        self.source = source

    def fail(self, path, msg):
        line = None
        p = path
        while p is not None:
            if p in self.lines:
                line = self.lines[p]
                break
            if not p:
                break
            p = p.rsplit(".", 1)[0] if "." in p else (p.rsplit("[", 1)[0] if "[" in p else "")
        raise ScenarioError(msg, field=path, line=line, source=self.source)

    def conv(self, path, fn, value, *args):
        try:
            return fn(value, *args)
        except (ValueError, TypeError) as e:
            self.fail(path, str(e))

    def keys(self, path, d, allowed):
        if not isinstance(d, dict):
            self.fail(path, "expected a mapping")
        extra = sorted(set(map(str, d)) - allowed)
        if extra:
            self.fail(f"{path}.{extra[0]}" if path else extra[0], f"unknown field {extra[0]!r}")


def _link_params(v: _Validator, path: str, d: dict, base: Optional[LinkParams] = None) -> LinkParams:
    v.keys(path, d, _LINK_KEYS if base is None else {"bandwidth", "delay", "loss", "queue"})
    if base is None:
        for req in ("bandwidth", "delay"):
            if req not in d:
                v.fail(f"{path}.{req}", "required field missing")
    bw = v.conv(f"{path}.bandwidth", parse_rate, d["bandwidth"]) if "bandwidth" in d else base.bandwidth
    if not bw > 0:
        v.fail(f"{path}.bandwidth", f"bandwidth must be positive, got {d.get('bandwidth')!r}")
    delay = v.conv(f"{path}.delay", parse_time, d["delay"]) if "delay" in d else base.delay
    if delay < 0:
        v.fail(f"{path}.delay", "delay must be non-negative")
    loss = v.conv(f"{path}.loss", parse_fraction, d.get("loss", 0.0))
    if not 0.0 <= loss <= 1.0:
        v.fail(f"{path}.loss", f"loss must lie in [0, 1], got {d.get('loss')!r}")
    queue = v.conv(f"{path}.queue", parse_queue, d.get("queue"), bw, delay)
    if queue is not None and queue < WIRE_SIZE:
        v.fail(f"{path}.queue", f"queue must hold at least one {WIRE_SIZE} B packet")
    jitter = v.conv(f"{path}.jitter", parse_fraction, d.get("jitter", 0.0))
    if not 0.0 <= jitter < 1.0:
        v.fail(f"{path}.jitter", "jitter must lie in [0, 1)")
    epoch = v.conv(f"{path}.jitter_epoch", parse_time, d.get("jitter_epoch", "100ms"))
    if epoch <= 0:
        v.fail(f"{path}.jitter_epoch", "jitter epoch must be positive")
    return LinkParams(bandwidth=bw, delay=delay, loss=loss, queue=queue, delay_jitter=jitter, jitter_epoch=epoch)


def _cc_params(v: _Validator, path: str, d) -> dict:
    if d is None:
        return {}
    if not isinstance(d, dict):
        v.fail(path, "expected a mapping")
    out = {}
    for k, val in d.items():
        if k == "rate":
            out[k] = v.conv(f"{path}.{k}", parse_rate, val)
            if out[k] <= 0:
                v.fail(f"{path}.{k}", "rate must be positive")
        elif k == "jitter":
            out[k] = v.conv(f"{path}.{k}", parse_fraction, val)
            if not 0.0 <= out[k] < 1.0:
                v.fail(f"{path}.{k}", "jitter must lie in [0, 1)")
        elif k == "epoch":
            out[k] = v.conv(f"{path}.{k}", parse_time, val)
        else:
            v.fail(f"{path}.{k}", f"unknown controller parameter {k!r}")
    return out


def validate(raw: Any, lines: Optional[dict] = None, source: str = "<scenario>") -> Scenario:
    v = _Validator(lines or {}, source)
    v.keys("", raw, _TOP_KEYS)
    seed = raw.get("seed", 1)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        v.fail("seed", f"seed must be a non-negative integer, got {seed!r}")
    duration = v.conv("duration", parse_time, raw.get("duration", "60s"))
    warmup = v.conv("warmup", parse_time, raw.get("warmup", "2s"))
    binw = v.conv("bin", parse_time, raw.get("bin", "100ms"))
    if binw <= 0:
        v.fail("bin", "bin width must be positive")
    if warmup < 0:
        v.fail("warmup", "warm-up must be non-negative")
    if not duration > warmup:
        v.fail("duration", "duration must exceed the warm-up")

    links_raw = raw.get("links")
    if not isinstance(links_raw, dict) or not links_raw:
        v.fail("links", "at least one link is required")
    links = []
    for name, d in links_raw.items():
        path = f"links.{name}"
        if not isinstance(name, str) or name.endswith(".rev") or "." in name:
            v.fail(path, f"bad link name {name!r}")
        params = _link_params(v, path, d)
        rev = None
        if d.get("reverse") is not None:
            rev = _link_params(v, f"{path}.reverse", d["reverse"],
                               LinkParams(bandwidth=params.bandwidth, delay=params.delay))
        links.append(LinkSpec(name, params, rev))
    names = {l.name for l in links}

    flows_raw = raw.get("flows")
    if not isinstance(flows_raw, list) or not flows_raw:
        v.fail("flows", "at least one flow is required")
    flows = []
    seen = set()
    for i, d in enumerate(flows_raw):
        path = f"flows[{i}]"
        v.keys(path, d, _FLOW_KEYS)
        name = str(d.get("name", f"flow{i}"))
        if name in seen:
            v.fail(f"{path}.name", f"duplicate flow name {name!r}")
        seen.add(name)
        ftype = d.get("type", "tcp")
        if ftype not in ("tcp", "mptcp"):
            v.fail(f"{path}.type", f"type must be tcp or mptcp, got {ftype!r}")
        cc = d.get("cc", "bbr" if ftype == "tcp" else "coupled-bbr")
        if cc not in controller_names():
            v.fail(f"{path}.cc", f"unknown congestion control {cc!r}")
        sched = d.get("scheduler", "min-rtt" if ftype == "tcp" else "arp")
        if sched not in SCHEDULERS:
            v.fail(f"{path}.scheduler", f"unknown scheduler {sched!r}")
        if "paths" in d and "path" in d:
            v.fail(f"{path}.path", "give either path or paths, not both")
        paths = d.get("paths", [d["path"]] if "path" in d else None)
        ppath = f"{path}.paths" if "paths" in d else f"{path}.path"
        if not isinstance(paths, list) or not paths:
            v.fail(ppath, "at least one route is required")
        if ftype == "tcp" and len(paths) != 1:
            v.fail(ppath, "a tcp flow has exactly one route")
        for j, route in enumerate(paths):
            rp = f"{ppath}[{j}]" if "paths" in d else ppath
            if isinstance(route, str):
                route = [route]
                paths[j] = route
            if not isinstance(route, list) or not route:
                v.fail(rp, "route must be a non-empty list of link names")
            for ln in route:
                if ln not in names:
                    v.fail(rp, f"route references unknown link {ln!r}")
        start = v.conv(f"{path}.start", parse_time, d.get("start", 0))
        stop = d.get("stop")
        stop = v.conv(f"{path}.stop", parse_time, stop) if stop is not None else None
        if start < 0:
            v.fail(f"{path}.start", "start must be non-negative")
        if stop is not None and stop <= start:
            v.fail(f"{path}.stop", "stop must come after start")
        ccp = _cc_params(v, f"{path}.cc_params", d.get("cc_params"))
        sub_raw = d.get("subflow_cc_params") or []
        if not isinstance(sub_raw, list) or (sub_raw and len(sub_raw) != len(paths)):
            v.fail(f"{path}.subflow_cc_params", "need one mapping per route")
        subp = [_cc_params(v, f"{path}.subflow_cc_params[{j}]", s) for j, s in enumerate(sub_raw)]
        if cc == "fixed" and "rate" not in ccp and not (subp and all("rate" in s for s in subp)):
            v.fail(f"{path}.cc_params", "the fixed controller needs a rate")
        if cc != "fixed" and (ccp or subp):
            v.fail(f"{path}.cc_params", f"{cc} takes no parameters")
        sp = d.get("scheduler_params") or {}
        if not isinstance(sp, dict):
            v.fail(f"{path}.scheduler_params", "expected a mapping")
        if sp and sched != "arp":
            v.fail(f"{path}.scheduler_params", f"{sched} takes no parameters")
        allowed = {"telemetry": ("measured", "exact"), "predictor": ("plan", "simple")}
        for k, val in sp.items():
            if val not in allowed.get(k, ()):
                v.fail(f"{path}.scheduler_params.{k}", f"bad scheduler parameter {k}={val!r}")
        rb = d.get("rcv_buffer")
        if rb is not None and (isinstance(rb, bool) or not isinstance(rb, int) or rb < 1):
            v.fail(f"{path}.rcv_buffer", "receive buffer must be a positive packet count")
        flows.append(FlowSpec(name, ftype, cc, sched, paths, start, stop, ccp, subp, dict(sp), rb))

    events = []
    for i, d in enumerate(raw.get("events") or []):
        path = f"events[{i}]"
        v.keys(path, d, _EVENT_KEYS)
        if d.get("link") not in names:
            v.fail(f"{path}.link", f"unknown link {d.get('link')!r}")
        if "at" not in d:
            v.fail(f"{path}.at", "required field missing")
        at = v.conv(f"{path}.at", parse_time, d["at"])
        until = v.conv(f"{path}.until", parse_time, d["until"]) if d.get("until") is not None else None
        if at < 0:
            v.fail(f"{path}.at", "event time must be non-negative")
        if until is not None and until <= at:
            v.fail(f"{path}.until", "ramp end must be after its start")
        ch = d.get("set")
        if not isinstance(ch, dict) or not ch:
            v.fail(f"{path}.set", "expected a non-empty mapping of link parameters")
        changes = {}
        for k, val in ch.items():
            kp = f"{path}.set.{k}"
            if k == "bandwidth":
                changes[k] = v.conv(kp, parse_rate, val)
                if changes[k] <= 0:
                    v.fail(kp, "bandwidth must be positive")
            elif k == "delay":
                changes[k] = v.conv(kp, parse_time, val)
                if changes[k] < 0:
                    v.fail(kp, "delay must be non-negative")
            elif k == "loss":
                changes[k] = v.conv(kp, parse_fraction, val)
                if not 0.0 <= changes[k] <= 1.0:
                    v.fail(kp, f"loss must lie in [0, 1], got {val!r}")
            else:
                v.fail(kp, f"link parameter {k!r} cannot be scheduled")
        events.append(EventSpec(d["link"], at, until, changes))

    bn = raw.get("bottlenecks")
    if bn is not None:
        if not isinstance(bn, list) or any(b not in names for b in bn):
            v.fail("bottlenecks", "must list defined link names")
    return Scenario(name=str(raw.get("name", "scenario")), seed=seed, duration=duration,
                    warmup=warmup, bin=binw, links=links, flows=flows, events=events,
                    bottlenecks=bn, raw=raw)


def load_raw(text: str, source: str = "<scenario>") -> tuple[dict, dict]:
    raw, lines = _compose(text, source)
    if not isinstance(raw, dict):
        raise ScenarioError("top level must be a mapping", line=1, source=source)
    return raw, lines


def load(path: str, overrides=(), seed: Optional[int] = None) -> Scenario:
    with open(path) as f:
        text = f.read()
    return loads(text, overrides, seed, source=path)


def loads(text: str, overrides=(), seed: Optional[int] = None, source: str = "<scenario>") -> Scenario:
    raw, lines = load_raw(text, source)
    return from_dict(raw, overrides, seed, lines, source)


def from_dict(raw: dict, overrides=(), seed: Optional[int] = None, lines=None,
              source: str = "<scenario>") -> Scenario:
    raw = copy.deepcopy(raw)
    for ov in overrides:
        apply_override(raw, ov)
    if seed is not None:
        raw["seed"] = seed
    return validate(raw, lines, source)


# building and running

class Run:
    """A built, not-yet-run simulation of one scenario."""

    def __init__(self, scn: Scenario, trace: bool = False):
        self.scenario = scn
        self.sim = sim = Simulator(scn.seed)
        self.topology = topo = Topology(sim)
        for ls in scn.links:
            topo.add_link(ls.name, ls.params, ls.reverse)
        for ev in scn.events:
            topo.links[ev.link].set_params(ev.at, ev.until, **ev.changes)
        self.recorder = rec = Recorder(sim, scn.bin, scn.warmup)
        self.trace: Optional[list] = [] if trace else None
        self.connections: dict[str, Connection] = {}
        bottlenecks = scn.bottlenecks
        if bottlenecks is None:
            seen = []
            for fs in scn.flows:
                for route in fs.paths:
                    low = min(topo.links[n].bandwidth for n in route)
                    for n in route:
                        if topo.links[n].bandwidth == low and n not in seen:
                            seen.append(n)
            order = [ls.name for ls in scn.links]
            bottlenecks = sorted(seen, key=order.index)
        rec.watch_links(topo.links, bottlenecks)
        for fid, fs in enumerate(scn.flows):
            self._add_flow(fid, fs)
        rec.connections = self.connections
        rec.start_sampling()

    def _add_flow(self, fid: int, fs: FlowSpec) -> None:
        sim, topo = self.sim, self.topology
        info = {"type": fs.type, "cc": fs.cc, "scheduler": fs.scheduler if fs.type == "mptcp" else None,
                "start": fs.start, "stop": fs.stop, "paths": [list(p) for p in fs.paths]}
        stats = self.recorder.new_flow(fs.name, len(fs.paths), info)
        sched = make_scheduler(fs.scheduler, **fs.scheduler_params)
        conn = Connection(sim, fid, fs.name, sched, stats, trace=self.trace, rcv_buffer=fs.rcv_buffer)
        group = make_group(fs.cc)
        for j, route in enumerate(fs.paths):
            fwd, rev = topo.route(route)
            params = dict(fs.cc_params)
            if fs.subflow_cc_params:
                params.update(fs.subflow_cc_params[j])
            draw = sim.rng.stream(f"cc/{fs.name}/{j}")
            cc = make_controller(fs.cc, draw=draw, group=group, **params)
            conn.add_subflow(fwd, rev, cc, topo.base_rtt(fwd, rev))
        sim.schedule(fs.start, conn.start, fs.start)
        if fs.stop is not None:
            sim.schedule(fs.stop, conn.stop, fs.stop)
        self.connections[fs.name] = conn

    def run(self) -> dict:
        scn = self.scenario
        self.sim.run_until(scn.duration)
        self.recorder.close(scn.duration)
        self.summary = summarize(self.recorder, scn.duration, scn.seed)
        self.summary["scenario"] = scn.name
        return self.summary


def run_scenario(scn: Scenario, trace: bool = False) -> Run:
    r = Run(scn, trace=trace)
    r.run()
    return r
