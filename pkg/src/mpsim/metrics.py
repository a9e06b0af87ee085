"""Run instrumentation: binned series, histograms, OFO statistics, summaries."""

from __future__ import annotations

import csv
import json
import math
import os
from collections import Counter
from typing import Optional

from .engine import NS_PER_MS, NS_PER_S
from .network import REDUNDANT

DEFAULT_BIN = 100 * NS_PER_MS
DEFAULT_WARMUP = 2 * NS_PER_S


class TimeSeries:
    """Contiguous fixed-width bins; ``add`` accumulates into the bin containing t."""

    __slots__ = ("name", "bin_ns", "values")

    def __init__(self, name: str, bin_ns: int = DEFAULT_BIN):
        if bin_ns <= 0:
            raise ValueError("bin width must be positive")
        self.name = name
        self.bin_ns = bin_ns
        self.values: list = []

    def add(self, t: int, v) -> None:
        i = t // self.bin_ns
        vals = self.values
        if i >= len(vals):
            vals.extend([0] * (i + 1 - len(vals)))
        vals[i] += v

    def set(self, t: int, v) -> None:
        i = t // self.bin_ns
        vals = self.values
        if i >= len(vals):
            vals.extend([0] * (i + 1 - len(vals)))
        vals[i] = v

    def pad_to(self, t_end: int) -> None:
        n = -(-t_end // self.bin_ns)
        if len(self.values) < n:
            self.values.extend([0] * (n - len(self.values)))
        elif len(self.values) > n:
            del self.values[n:]

    def total(self):
        return sum(self.values)

    def window_sum(self, t0: int, t1: int):
        return sum(self.values[t0 // self.bin_ns: t1 // self.bin_ns])

    def rows(self, scale: float = 1.0):
        w = self.bin_ns / NS_PER_S
        return [(round(i * w, 9), v * scale) for i, v in enumerate(self.values)]


class FlowStats:
    """Counters and series for one flow; the connection calls these hooks directly."""

    def __init__(self, name: str, n_subflows: int, bin_ns: int = DEFAULT_BIN,
                 warmup: int = DEFAULT_WARMUP):
        self.name = name
        self.bin_ns = bin_ns
        self.warmup = warmup
        self.n = n_subflows
        self.sent = [TimeSeries(f"{name}.sub{i}.sent", bin_ns) for i in range(n_subflows)]
        self.arrived_sub = [TimeSeries(f"{name}.sub{i}.arrived", bin_ns) for i in range(n_subflows)]
        self.arrived = TimeSeries(f"{name}.throughput", bin_ns)
        self.goodput = TimeSeries(f"{name}.goodput", bin_ns)
        self.ofo_peak = TimeSeries(f"{name}.ofo_max", bin_ns)
        self.sent_pkts = [0] * n_subflows
        self.redundant_pkts = [0] * n_subflows
        self.retransmits = [0] * n_subflows
        self.rtos = [0] * n_subflows
        self.duplicates = 0
        self.delivered_bytes = 0
        self.arrived_bytes = 0
        self.rcv_drops = 0
        self.rtt_hist: Counter = Counter()
        self.rtt_sum = 0
        self.rtt_n = 0
        # per-arrival OFO samples after warm-up
        self.ofo_sum = 0
        self.ofo_n = 0
        self.ofo_max = 0
        # time-weighted OFO after warm-up
        self._ofo_len = 0
        self._ofo_since = 0
        self.ofo_area = 0

    def send(self, sub: int, now: int, size: int, kind: int) -> None:
        self.sent[sub].add(now, size)
        self.sent_pkts[sub] += 1
        if kind == REDUNDANT:
            self.redundant_pkts[sub] += 1

    def retransmit(self, sub: int) -> None:
        self.retransmits[sub] += 1

    def rto(self, sub: int) -> None:
        self.rtos[sub] += 1

    def rtt(self, now: int, rtt: int) -> None:
        if now >= self.warmup:
            self.rtt_hist[rtt // NS_PER_MS] += 1
            self.rtt_sum += rtt
            self.rtt_n += 1

    def arrival(self, sub: int, now: int, payload: int, duplicate: bool) -> None:
        self.arrived.add(now, payload)
        self.arrived_sub[sub].add(now, payload)
        self.arrived_bytes += payload
        if duplicate:
            self.duplicates += 1

    def deliver(self, now: int, nbytes: int) -> None:
        self.goodput.add(now, nbytes)
        self.delivered_bytes += nbytes

    def ofo(self, now: int, length: int) -> None:
        if now >= self.warmup:
            self.ofo_sum += length
            self.ofo_n += 1
            if length > self.ofo_max:
                self.ofo_max = length
            start = self._ofo_since if self._ofo_since > self.warmup else self.warmup
            self.ofo_area += self._ofo_len * (now - start)
        i = now // self.bin_ns
        vals = self.ofo_peak.values
        if i >= len(vals):
            vals.extend([0] * (i + 1 - len(vals)))
        if length > vals[i]:
            vals[i] = length
        self._ofo_len = length
        self._ofo_since = now

    def rcv_drop(self) -> None:
        self.rcv_drops += 1

    def close(self, end: int) -> None:
        if end > self.warmup:
            start = self._ofo_since if self._ofo_since > self.warmup else self.warmup
            self.ofo_area += self._ofo_len * (end - start)
            self._ofo_since = end
        for ts in self.series():
            ts.pad_to(end)

    def series(self) -> list:
        return [self.arrived, self.goodput, self.ofo_peak, *self.sent, *self.arrived_sub]


def _mbps(nbytes: float, seconds: float) -> float:
    return nbytes * 8 / seconds / 1e6 if seconds > 0 else 0.0


def mean_rate_mbps(ts: TimeSeries, t0: int, t1: int) -> float:
    """Average rate in Mbps of a byte series over [t0, t1), bin-aligned."""
    t0 -= t0 % ts.bin_ns
    t1 -= t1 % ts.bin_ns
    return _mbps(ts.window_sum(t0, t1), (t1 - t0) / NS_PER_S)


def recovery_time(ts: TimeSeries, t_event: int, target_mbps: float,
                  span: int = NS_PER_S // 2) -> Optional[float]:
    """Seconds from ``t_event`` until the rate averaged over the next ``span`` reaches the target.

    None when it never does within the recorded series.
    """
    b = ts.bin_ns
    k = -(-t_event // b)
    need = max(span // b, 1)
    vals = ts.values
    target = target_mbps * 1e6 / 8 * need * b / NS_PER_S
    window = sum(vals[k:k + need])
    while k + need <= len(vals):
        if window >= target:
            return (k * b - t_event) / NS_PER_S
        window += (vals[k + need] if k + need < len(vals) else 0) - vals[k]
        k += 1
    return None


def rtt_percentile(hist: Counter, q: float) -> Optional[float]:
    n = sum(hist.values())
    if n == 0:
        return None
    target = q * n
    acc = 0
    for k in sorted(hist):
        acc += hist[k]
        if acc >= target:
            return float(k)
    return float(max(hist))


class Recorder:
    """Owns every FlowStats of a run plus periodic link/subflow samples."""

    def __init__(self, sim, bin_ns: int = DEFAULT_BIN, warmup: int = DEFAULT_WARMUP):
        self.sim = sim
        self.bin_ns = bin_ns
        self.warmup = warmup
        self.flows: dict[str, FlowStats] = {}
        self.flow_info: dict[str, dict] = {}
        self.connections: dict = {}
        self.links: dict = {}
        self.bottlenecks: list[str] = []
        self.link_delivered: dict[str, TimeSeries] = {}
        self.link_capacity: dict[str, TimeSeries] = {}
        self.sub_series: dict[str, TimeSeries] = {}
        self._last_delivered: dict[str, int] = {}

    def new_flow(self, name: str, n_subflows: int, info: dict) -> FlowStats:
        if name in self.flows:
            raise ValueError(f"duplicate flow name {name!r}")
        fs = FlowStats(name, n_subflows, self.bin_ns, self.warmup)
        self.flows[name] = fs
        self.flow_info[name] = dict(info)
        return fs

    def watch_links(self, links: dict, bottlenecks) -> None:
        self.links = links
        self.bottlenecks = list(bottlenecks)
        for name in self.bottlenecks:
            self.link_delivered[name] = TimeSeries(f"link.{name}.delivered", self.bin_ns)
            self.link_capacity[name] = TimeSeries(f"link.{name}.capacity", self.bin_ns)
            self._last_delivered[name] = 0

    def start_sampling(self) -> None:
        self.sim.schedule(0, self._sample)

    def _sample(self) -> None:
        now = self.sim.now
        prev = now - self.bin_ns
        if prev >= 0:
            for name in self.bottlenecks:
                link = self.links[name]
                d = link.delivered_bytes
                self.link_delivered[name].add(prev, d - self._last_delivered[name])
                self._last_delivered[name] = d
        for name in self.bottlenecks:
            link = self.links[name]
            self.link_capacity[name].add(now, link.value_at("bandwidth", now) * self.bin_ns / 8e9)
        for fname, conn in self.connections.items():
            for s in conn.subflows:
                key = f"{fname}.sub{s.index}"
                for field, val in (("cwnd", s.cc.cwnd), ("pacing_mbps", s.cc.rate_estimate() / 1e6),
                                   ("srtt_ms", s.srtt / 1e6)):
                    ts = self.sub_series.get(f"{key}.{field}")
                    if ts is None:
                        ts = self.sub_series[f"{key}.{field}"] = TimeSeries(f"{key}.{field}", self.bin_ns)
                    ts.set(now, val)
        self.sim.schedule(now + self.bin_ns, self._sample)

    def close(self, end: int) -> None:
        for fs in self.flows.values():
            fs.close(end)
        for ts in list(self.link_delivered.values()) + list(self.link_capacity.values()):
            ts.pad_to(end)
        for ts in self.sub_series.values():
            ts.pad_to(end)


def summarize(rec: Recorder, duration: int, seed: Optional[int] = None) -> dict:
    """Summary over [warm-up, duration) as a plain JSON-able dict."""
    warm = min(rec.warmup, duration)
    flows = {}
    for name, fs in rec.flows.items():
        info = rec.flow_info[name]
        t0 = max(warm, info.get("start", 0))
        t1 = min(duration, info.get("stop", duration) or duration)
        t0 -= t0 % rec.bin_ns
        t1 -= t1 % rec.bin_ns
        secs = max(t1 - t0, 0) / NS_PER_S
        subs = []
        conn = rec.connections.get(name)
        for i in range(fs.n):
            cc = conn.subflows[i].cc if conn is not None else None
            state = {}
            if cc is not None:
                state = {"bw_estimate_mbps": cc.bw / 1e6, "cwnd": float(cc.cwnd)}
                if hasattr(cc, "beta_exact"):
                    state["beta"] = float(cc.beta)
            subs.append({
                **state,
                "send_rate_mbps": _mbps(fs.sent[i].window_sum(t0, t1), secs),
                "throughput_mbps": _mbps(fs.arrived_sub[i].window_sum(t0, t1), secs),
                "sent_packets": fs.sent_pkts[i],
                "redundant_packets": fs.redundant_pkts[i],
                "retransmits": fs.retransmits[i],
                "timeouts": fs.rtos[i],
            })
        area_secs = max(duration - warm, 0)
        flows[name] = {
            **info,
            "throughput_mbps": _mbps(fs.arrived.window_sum(t0, t1), secs),
            "goodput_mbps": _mbps(fs.goodput.window_sum(t0, t1), secs),
            "delivered_bytes": fs.delivered_bytes,
            "arrived_bytes": fs.arrived_bytes,
            "duplicate_arrivals": fs.duplicates,
            "ofo_mean": fs.ofo_sum / fs.ofo_n if fs.ofo_n else 0.0,
            "ofo_time_mean": fs.ofo_area / area_secs if area_secs else 0.0,
            "ofo_max": fs.ofo_max,
            "rtt_mean_ms": fs.rtt_sum / fs.rtt_n / 1e6 if fs.rtt_n else None,
            "rtt_p50_ms": rtt_percentile(fs.rtt_hist, 0.5),
            "rtt_p95_ms": rtt_percentile(fs.rtt_hist, 0.95),
            "rtt_hist_ms": {str(k): v for k, v in sorted(fs.rtt_hist.items())},
            "receive_drops": fs.rcv_drops,
            "subflows": subs,
        }
    t0 = warm - warm % rec.bin_ns
    t1 = duration - duration % rec.bin_ns
    delivered = sum(rec.link_delivered[n].window_sum(t0, t1) for n in rec.bottlenecks)
    capacity = sum(rec.link_capacity[n].window_sum(t0, t1) for n in rec.bottlenecks)
    links = {}
    for name, link in sorted(rec.links.items()):
        links[name] = {
            "offered": link.offered,
            "delivered": link.delivered,
            "random_drops": link.random_drops,
            "congestion_drops": link.congestion_drops,
        }
    out = {
        "seed": seed,
        "duration_s": duration / NS_PER_S,
        "warmup_s": warm / NS_PER_S,
        "flows": flows,
        "utilization": delivered / capacity if capacity else 0.0,
        "bottlenecks": list(rec.bottlenecks),
        "links": links,
    }
    mp = [f for f in flows.values() if f.get("type") == "mptcp"]
    tcp = [f for f in flows.values() if f.get("type") == "tcp"]
    if mp and tcp:
        best = max(f["goodput_mbps"] for f in tcp)
        agg = sum(f["goodput_mbps"] for f in mp)
        out["fairness"] = agg / best if best > 0 else math.inf
    return out


def dumps_summary(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


def write_outputs(rec: Recorder, summary: dict, outdir: str) -> dict:
    """Write summary.json plus one CSV per series; returns the paths written."""
    os.makedirs(outdir, exist_ok=True)
    paths = {"summary": os.path.join(outdir, "summary.json")}
    with open(paths["summary"], "w") as f:
        f.write(dumps_summary(summary))
    mbps = 8 / (rec.bin_ns / NS_PER_S) / 1e6
    series = []
    for fs in rec.flows.values():
        series += [(fs.arrived, mbps), (fs.goodput, mbps), (fs.ofo_peak, 1.0)]
        series += [(ts, mbps) for ts in fs.sent]
    series += [(ts, mbps) for ts in rec.link_delivered.values()]
    series += [(ts, 1.0) for ts in rec.sub_series.values()]
    csv_paths = []
    for ts, scale in series:
        p = os.path.join(outdir, ts.name.replace("/", "_") + ".csv")
        with open(p, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t_start_s", "value"])
            for t, v in ts.rows(scale):
                w.writerow([t, repr(float(v))])
        csv_paths.append(p)
    paths["series"] = csv_paths
    return paths
