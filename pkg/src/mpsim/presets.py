"""Named experiment batches with pass/fail checks on their summaries."""

from __future__ import annotations

import copy
import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .cc.bbr import coupled_bbr_update
from .engine import NS_PER_S
from .metrics import dumps_summary, mean_rate_mbps, recovery_time, write_outputs
from .network import WIRE_SIZE
from .scenario import Run, apply_override, from_dict, parse_rate, parse_time


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


@dataclass
class PresetResult:
    name: str
    seed: int
    runs: dict
    checks: list
    table: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def report(self) -> str:
        out = [f"preset {self.name} (seed {self.seed}): {len(self.runs)} runs"]
        if self.table:
            cols = list(self.table[0])
            out.append("  " + "  ".join(f"{c:>14}" for c in cols))
            for row in self.table:
                out.append("  " + "  ".join(f"{_fmt(row[c]):>14}" for c in cols))
        out += ["  " + c.line() for c in self.checks]
        return "\n".join(out)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


class Preset:
    """A batch of scenarios, an optional per-run probe and a check function.

    ``build(seed)`` returns ``[(label, raw_scenario_dict), ...]``.  ``probe``
    runs inside the worker with the live :class:`Run` and returns extra JSON
    values stored under ``summary["probe"]``.  ``evaluate(summaries)`` returns
    ``(checks, table_rows)``.
    """

    def __init__(self, name: str, description: str, build: Callable, evaluate: Callable,
                 probe: Optional[Callable] = None, trace: bool = False):
        self.name = name
        self.description = description
        self.build = build
        self.evaluate = evaluate
        self.probe = probe
        self.trace = trace


PRESETS: dict[str, Preset] = {}


def register(name: str, description: str, build: Callable, evaluate: Callable,
             probe: Optional[Callable] = None, trace: bool = False) -> Preset:
    p = PRESETS[name] = Preset(name, description, build, evaluate, probe, trace)
    return p


def preset_names() -> list[str]:
    return sorted(PRESETS)


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(preset_names())}") from None


# ---------------------------------------------------------------- execution

def _execute(job) -> tuple[str, dict]:
    pname, label, raw, outdir = job
    p = PRESETS[pname]
    scn = from_dict(raw, source=f"{pname}/{label}")
    run = Run(scn, trace=p.trace)
    summary = run.run()
    summary["scenario"] = f"{pname}/{label}"
    if p.probe is not None:
        summary["probe"] = p.probe(run)
    if outdir:
        write_outputs(run.recorder, summary, os.path.join(outdir, label))
    return label, summary


def expand(name: str, seed: int = 1, overrides=()) -> list[tuple[str, dict]]:
    """The preset's scenarios with ``key=value`` overrides applied to each."""
    jobs = []
    for label, raw in get_preset(name).build(seed):
        raw = copy.deepcopy(raw)
        for ov in overrides:
            apply_override(raw, ov)
        jobs.append((label, raw))
    return jobs


def run_preset(name: str, seed: int = 1, overrides=(), jobs: int = 1,
               outdir: Optional[str] = None) -> PresetResult:
    p = get_preset(name)
    work = [(name, label, raw, outdir) for label, raw in expand(name, seed, overrides)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_execute, work))
    else:
        done = [_execute(w) for w in work]
    runs = dict(done)
    checks, table = p.evaluate(runs)
    result = PresetResult(name, seed, runs, checks, table)
    if outdir:
        with open(os.path.join(outdir, "checks.txt"), "w") as f:
            f.write(result.report() + "\n")
    return result


def summary_digest(summary: dict) -> str:
    return hashlib.sha256(dumps_summary(summary).encode()).hexdigest()


# ---------------------------------------------------------------- helpers

def _links(**specs) -> dict:
    return {k: dict(v) for k, v in specs.items()}


def _mptcp(name, cc, scheduler, paths, **extra) -> dict:
    d = {"name": name, "type": "mptcp", "cc": cc, "scheduler": scheduler, "paths": [[p] for p in paths]}
    d.update(extra)
    return d


def _tcp(name, cc, path) -> dict:
    return {"name": name, "type": "tcp", "cc": cc, "path": [path]}


def _background(cc: str) -> str:
    # single-path partner of each multipath controller
    return "bbr" if "bbr" in cc else "newreno"


def _ratio(a: float, b: float) -> float:
    return a / b if b else float("inf")


def _within(value: float, target: float, rel: float) -> bool:
    return abs(value - target) <= rel * abs(target)


def _decline(before: float, after: float) -> float:
    return 1.0 - _ratio(after, before)


# ---------------------------------------------------------------- presets

AIMD = ("lia", "olia", "balia")


def _table1_build(seed):
    out = []
    for cc in ("bbr",) + AIMD:
        out.append((cc, {
            "name": f"table1-{cc}", "seed": seed, "duration": "60s", "warmup": "5s",
            "links": _links(p1={"bandwidth": "60Mbps", "delay": "20ms", "loss": "0.01%"},
                            p2={"bandwidth": "60Mbps", "delay": "20ms", "loss": "0.1%"}),
            "flows": [_mptcp("mptcp", cc, "min-rtt", ["p1", "p2"]),
                      _tcp("tcp1", _background(cc), "p1"), _tcp("tcp2", _background(cc), "p2")],
        }))
    return out


def _table1_eval(runs):
    table = []
    for cc, s in runs.items():
        f = s["flows"]
        subs = f["mptcp"]["subflows"]
        table.append({"cc": cc, "mptcp": f["mptcp"]["throughput_mbps"],
                      "subflow1": subs[0]["throughput_mbps"], "subflow2": subs[1]["throughput_mbps"],
                      "tcp1": f["tcp1"]["throughput_mbps"], "tcp2": f["tcp2"]["throughput_mbps"],
                      "utilization": s["utilization"]})
    bbr = runs["bbr"]
    best_aimd = max(runs[c]["flows"]["mptcp"]["throughput_mbps"] for c in AIMD)
    top = bbr["flows"]["mptcp"]["throughput_mbps"]
    util = max(runs[c]["utilization"] for c in AIMD)
    checks = [
        Check("bbr multipath throughput above every AIMD controller", top > best_aimd,
              f"bbr {top:.1f} Mbps vs best AIMD {best_aimd:.1f} Mbps"),
        Check("bbr bandwidth utilization above every AIMD controller", bbr["utilization"] > util,
              f"{bbr['utilization']:.2f} vs {util:.2f}"),
    ]
    return checks, table


register("table1", "two lossy paths (0.01% / 0.1%) with a TCP flow on each; uncoupled BBR vs LIA/OLIA/BALIA",
         _table1_build, _table1_eval)


def fairness_scenario(seed: int, duration: str = "60s") -> dict:
    return {
        "name": "fairness-symmetric", "seed": seed, "duration": duration, "warmup": "10s",
        "links": _links(bn1={"bandwidth": "100Mbps", "delay": "25ms"},
                        bn2={"bandwidth": "100Mbps", "delay": "25ms"}),
        "flows": [_mptcp("mptcp", "coupled-bbr", "arp", ["bn1", "bn2"]),
                  _tcp("tcp1a", "bbr", "bn1"), _tcp("tcp1b", "bbr", "bn1"),
                  _tcp("tcp2a", "bbr", "bn2"), _tcp("tcp2b", "bbr", "bn2")],
    }


def _fair_build(seed):
    return [("coupled-bbr", fairness_scenario(seed))]


def _fair_eval(runs):
    s = runs["coupled-bbr"]
    flows = s["flows"]
    table = [{"flow": n, "goodput": f["goodput_mbps"]} for n, f in sorted(flows.items())]
    ratio = s["fairness"]
    return [Check("multipath goodput / best TCP-BBR goodput in [0.85, 1.15]", 0.85 <= ratio <= 1.15,
                  f"ratio {ratio:.3f}")], table


register("fairness-symmetric", "two 100 Mbps bottlenecks, two TCP-BBR flows on each, one Coupled BBR connection across both",
         _fair_build, _fair_eval)


LOSS_RATES = ("0%", "0.1%", "0.5%")


def loss_scenario(seed: int, cc: str, loss: str, duration: str = "60s", delay: str = "20ms") -> dict:
    links = {f"p{i}": {"bandwidth": "100Mbps", "delay": delay, "loss": loss} for i in (1, 2, 3)}
    flows = [_mptcp("mptcp", cc, "min-rtt", list(links))]
    flows += [_tcp(f"tcp{i}", _background(cc), f"p{i}") for i in (1, 2, 3)]
    return {"name": f"loss-{cc}-{loss}", "seed": seed, "duration": duration, "warmup": "5s",
            "links": links, "flows": flows}


def _loss_build(seed):
    return [(f"{cc}@{p}", loss_scenario(seed, cc, p)) for cc in ("coupled-bbr", "lia") for p in LOSS_RATES]


def _loss_eval(runs):
    table, checks = [], []
    for cc in ("coupled-bbr", "lia"):
        row = {"cc": cc}
        for p in LOSS_RATES:
            row[p] = runs[f"{cc}@{p}"]["flows"]["mptcp"]["throughput_mbps"]
        table.append(row)
    cb, li = table
    d_cb = _decline(cb["0%"], cb["0.5%"])
    d_li = _decline(li["0%"], li["0.5%"])
    checks.append(Check("Coupled BBR throughput declines < 10% from 0 to 0.5% loss", d_cb < 0.10,
                        f"{cb['0%']:.1f} -> {cb['0.5%']:.1f} Mbps ({100 * d_cb:.1f}%)"))
    checks.append(Check("LIA throughput declines > 50% from 0 to 0.5% loss", d_li > 0.50,
                        f"{li['0%']:.1f} -> {li['0.5%']:.1f} Mbps ({100 * d_li:.1f}%)"))
    return checks, table


register("loss-sweep", "three 100 Mbps/20 ms paths with one TCP flow each; random loss 0, 0.1%, 0.5%; Coupled BBR vs LIA",
         _loss_build, _loss_eval)


def delay_scenario(seed: int, cc: str, delay: str, duration: str = "30s") -> dict:
    scn = loss_scenario(seed, cc, "0.05%", duration, delay)
    scn["name"] = f"delay-{cc}-{delay}"
    return scn


DELAYS = ("2ms", "20ms", "50ms", "100ms")


def _delay_build(seed):
    return [(f"{cc}@{d}", delay_scenario(seed, cc, d)) for cc in ("coupled-bbr", "lia") for d in DELAYS]


def _delay_eval(runs):
    table = []
    for cc in ("coupled-bbr", "lia"):
        row = {"cc": cc}
        for d in DELAYS:
            row[d] = runs[f"{cc}@{d}"]["flows"]["mptcp"]["throughput_mbps"]
        table.append(row)
    cb, li = table
    checks = [
        Check("Coupled BBR keeps >= 80% of its short-delay throughput at 100 ms", cb["100ms"] >= 0.8 * cb["2ms"],
              f"{cb['2ms']:.1f} -> {cb['100ms']:.1f} Mbps"),
        Check("LIA loses > 50% of its short-delay throughput at 100 ms", li["100ms"] < 0.5 * li["2ms"],
              f"{li['2ms']:.1f} -> {li['100ms']:.1f} Mbps"),
    ]
    return checks, table


register("delay-sweep", "three 100 Mbps paths at 0.05% loss, one-way delay 2 to 100 ms; Coupled BBR vs LIA",
         _delay_build, _delay_eval)


def balance_scenario(seed: int, duration: str = "60s") -> dict:
    return {
        "name": "balance", "seed": seed, "duration": duration, "warmup": "5s",
        "links": _links(p1={"bandwidth": "100Mbps", "delay": "25ms"},
                        p2={"bandwidth": "50Mbps", "delay": "25ms"}),
        "flows": [_mptcp("mptcp", "coupled-bbr", "arp", ["p1", "p2"])],
    }


def _balance_build(seed):
    return [("coupled-bbr", balance_scenario(seed))]


def _balance_eval(runs):
    return balance_checks(runs["coupled-bbr"])


register("balance", "one Coupled BBR connection over 100 and 50 Mbps paths; traffic split against the analytic shares",
         _balance_build, _balance_eval)


def balance_checks(s: dict):
    subs = s["flows"]["mptcp"]["subflows"]
    betas, _ = coupled_bbr_update([100e6, 50e6])
    shares = [float(b) * bw for b, bw in zip(betas, (100.0, 50.0))]
    analytic = shares[0] / shares[1]
    rates = [x["send_rate_mbps"] for x in subs]
    measured = _ratio(rates[0], rates[1])
    beta_ratio = _ratio(subs[0]["beta"], subs[1]["beta"])
    table = [{"subflow": i + 1, "send_mbps": rates[i], "analytic_mbps": shares[i],
              "beta": subs[i]["beta"], "bw_mbps": subs[i]["bw_estimate_mbps"]} for i in range(2)]
    checks = [
        Check("analytic shares beta_i*BW_i are 80:20", shares == [80.0, 20.0], f"{shares[0]:.1f}:{shares[1]:.1f}"),
        Check("measured send-rate ratio matches beta_1*BW_1 : beta_2*BW_2 within 10%", _within(measured, analytic, 0.10),
              f"measured {measured:.3f} vs analytic {analytic:.3f}"),
        Check("measured beta_1 : beta_2 = 2.0 within 10%", _within(beta_ratio, 2.0, 0.10), f"{beta_ratio:.3f}"),
    ]
    return checks, table


def _goodput_probe(run: Run) -> dict:
    """Per-flow goodput series checkpoints for the dynamic presets."""
    out = {}
    scn = run.scenario
    t_event = min((e.at for e in scn.events), default=0)
    cap = max(run.topology.links[n].bandwidth for n in run.recorder.bottlenecks) / 1e6
    for name, fs in run.recorder.flows.items():
        g = fs.goodput
        out[name] = {
            "event_s": t_event / NS_PER_S,
            "surviving_capacity_mbps": cap,
            "pre_goodput_mbps": mean_rate_mbps(g, scn.warmup, t_event),
            "post_goodput_mbps": mean_rate_mbps(g, t_event, scn.duration),
            "recovery_s": recovery_time(g, t_event, 0.9 * cap),
        }
    return out


DYN_SCHEDULERS = ("arp", "round-robin", "redundant")


def breakdown_scenario(seed: int, scheduler: str, duration: str = "40s") -> dict:
    return {
        "name": f"breakdown-{scheduler}", "seed": seed, "duration": duration, "warmup": "3s", "bin": "10ms",
        "links": _links(p1={"bandwidth": "20Mbps", "delay": "20ms"}, p2={"bandwidth": "20Mbps", "delay": "20ms"}),
        "flows": [_mptcp("mptcp", "coupled-bbr", scheduler, ["p1", "p2"])],
        "events": [{"at": "15s", "link": "p1", "set": {"loss": 1.0}}],
    }


def _breakdown_build(seed):
    return [(s, breakdown_scenario(seed, s)) for s in DYN_SCHEDULERS]


def _breakdown_eval(runs):
    return breakdown_checks(runs)


register("dynamic-breakdown", "two 20 Mbps paths; path 1 drops every packet from 15 s; AR&P vs Round-Robin vs Redundant",
         _breakdown_build, _breakdown_eval, probe=_goodput_probe)


def breakdown_checks(runs):
    p = {k: v["probe"]["mptcp"] for k, v in runs.items()}
    table = [{"scheduler": k, "pre_mbps": v["pre_goodput_mbps"], "post_mbps": v["post_goodput_mbps"],
              "recovery_s": v["recovery_s"] if v["recovery_s"] is not None else "never"} for k, v in p.items()]
    arp, rr, red = p["arp"], p["round-robin"], p["redundant"]
    inf = float("inf")
    t_arp = arp["recovery_s"] if arp["recovery_s"] is not None else inf
    t_rr = rr["recovery_s"] if rr["recovery_s"] is not None else inf
    checks = [
        Check("AR&P regains 90% of the surviving path within 3 s", t_arp <= 3.0, f"{t_arp:.2f} s"),
        Check("AR&P recovers faster than Round-Robin", t_arp < t_rr, f"{t_arp:.2f} s vs {t_rr:.2f} s"),
        Check("Redundant pre-failure goodput below AR&P's", red["pre_goodput_mbps"] < arp["pre_goodput_mbps"],
              f"{red['pre_goodput_mbps']:.2f} vs {arp['pre_goodput_mbps']:.2f} Mbps"),
    ]
    return checks, table


def _degrade_build(seed):
    out = []
    for s in DYN_SCHEDULERS:
        scn = breakdown_scenario(seed, s)
        scn["name"] = f"degrade-{s}"
        scn["events"] = [{"at": "10s", "until": "30s", "link": "p1", "set": {"loss": 1.0}}]
        out.append((s, scn))
    return out


def _degrade_eval(runs):
    p = {k: v["probe"]["mptcp"] for k, v in runs.items()}
    table = [{"scheduler": k, "pre_mbps": v["pre_goodput_mbps"], "during_after_mbps": v["post_goodput_mbps"]}
             for k, v in p.items()]
    arp, rr, red = p["arp"], p["round-robin"], p["redundant"]
    checks = [
        Check("AR&P goodput during and after the degradation at least Round-Robin's",
              arp["post_goodput_mbps"] >= rr["post_goodput_mbps"],
              f"{arp['post_goodput_mbps']:.2f} vs {rr['post_goodput_mbps']:.2f} Mbps"),
        Check("Redundant goodput before the degradation below AR&P's", red["pre_goodput_mbps"] < arp["pre_goodput_mbps"],
              f"{red['pre_goodput_mbps']:.2f} vs {arp['pre_goodput_mbps']:.2f} Mbps"),
    ]
    return checks, table


register("dynamic-degrade", "two 20 Mbps paths; path 1 loss ramps from 0 to 100% between 10 s and 30 s",
         _degrade_build, _degrade_eval, probe=_goodput_probe)


OFO_RTTS = (50, 100, 150, 200, 250)
OFO_SCHEDULERS = ("arp", "min-rtt", "round-robin")


def ofo_scenario(seed: int, scheduler: str, rtt_ms: int, duration: str = "60s") -> dict:
    return {
        "name": f"ofo-{scheduler}-{rtt_ms}ms", "seed": seed, "duration": duration, "warmup": "5s",
        "links": _links(p1={"bandwidth": "20Mbps", "delay": "25ms"},
                        p2={"bandwidth": "20Mbps", "delay": f"{rtt_ms / 2}ms"}),
        "flows": [_mptcp("mptcp", "coupled-bbr", scheduler, ["p1", "p2"])],
    }


def _ofo_build(seed):
    return [(f"{s}@{r}", ofo_scenario(seed, s, r)) for r in OFO_RTTS for s in OFO_SCHEDULERS]


def _ofo_eval(runs):
    return ofo_checks(runs, OFO_RTTS)


register("ofo-asymmetry", "20 Mbps paths, RTT 50 ms vs 50..250 ms; mean out-of-order queue for AR&P, minRTT and Round-Robin",
         _ofo_build, _ofo_eval)


def ofo_checks(runs, rtts):
    table = []
    for r in rtts:
        row = {"rtt_ms": r}
        for s in OFO_SCHEDULERS:
            row[s] = runs[f"{s}@{r}"]["flows"]["mptcp"]["ofo_mean"]
        table.append(row)
    hi, lo = table[-1], table[0]
    base = min(hi["min-rtt"], hi["round-robin"])
    sym = [lo[s] for s in OFO_SCHEDULERS]
    spread = _ratio(max(sym), min(sym))
    checks = [
        Check(f"AR&P mean OFO at {hi['rtt_ms']} ms <= 50% of minRTT and Round-Robin", hi["arp"] <= 0.5 * base,
              f"{hi['arp']:.1f} vs {hi['min-rtt']:.1f} / {hi['round-robin']:.1f}"),
        Check(f"mean OFO at {lo['rtt_ms']} ms within x1.5 across schedulers", spread <= 1.5,
              " / ".join(f"{v:.2f}" for v in sym) + f" (spread x{spread:.2f})"),
    ]
    return checks, table


def fixed_rate_scenario(seed: int, scheduler: str, jitter: float = 0.0, duration: str = "30s") -> dict:
    pct = f"{100 * jitter:g}%"
    flow = _mptcp("mptcp", "fixed", scheduler, ["p1", "p2"], cc_params={"rate": "16Mbps", "jitter": pct})
    if scheduler == "arp":
        flow["scheduler_params"] = {"telemetry": "exact"}
    return {
        "name": f"fixed-{scheduler}-{pct}", "seed": seed, "duration": duration, "warmup": "2s",
        "links": _links(p1={"bandwidth": "20Mbps", "delay": "25ms", "jitter": pct},
                        p2={"bandwidth": "20Mbps", "delay": "75ms", "jitter": pct}),
        "flows": [flow],
    }


def _pstatic_build(seed):
    return [(s, fixed_rate_scenario(seed, s)) for s in ("arp", "min-rtt")]


def _pstatic_eval(runs):
    table = [{"scheduler": k, "ofo_max": v["flows"]["mptcp"]["ofo_max"], "ofo_mean": v["flows"]["mptcp"]["ofo_mean"]}
             for k, v in runs.items()]
    m = runs["arp"]["flows"]["mptcp"]["ofo_max"]
    return [Check("AR&P steady-state max OFO <= 2 packets", m <= 2, f"max {m}")], table


register("pscheduling-static", "fixed 16 Mbps per path on 50 ms vs 150 ms RTT, no jitter; AR&P with exact telemetry",
         _pstatic_build, _pstatic_eval)


def ofo_bound_packets(rates_bps, rtts_s, eps_rate: float, eps_rtt: float) -> float:
    """Half the aggregate rate times the largest RTT times the summed jitter, in packets."""
    return 0.5 * sum(rates_bps) * max(rtts_s) * (eps_rate + eps_rtt) / (WIRE_SIZE * 8)


def _jitter_build(seed):
    return [(s, fixed_rate_scenario(seed, s, 0.10)) for s in ("arp", "min-rtt")]


def _jitter_eval(runs):
    return jitter_checks(runs["arp"]), []


register("jitter-bound", "as pscheduling-static with +-10% rate and delay jitter; OFO against the prediction-error bound",
         _jitter_build, _jitter_eval)


def jitter_checks(s: dict):
    rate = parse_rate("16Mbps")
    rtts = [2 * parse_time("25ms") / NS_PER_S, 2 * parse_time("75ms") / NS_PER_S]
    bound = ofo_bound_packets([rate, rate], rtts, 0.10, 0.10)
    got = s["flows"]["mptcp"]["ofo_time_mean"]
    return [Check("AR&P time-average OFO <= 2 x prediction-error bound", got <= 2 * bound,
                  f"{got:.2f} vs 2 x {bound:.1f} packets")]


def _trace_probe(run: Run) -> dict:
    h = hashlib.sha256()
    for ev in run.trace:
        h.update(repr(ev).encode())
    return {"trace_sha256": h.hexdigest(), "trace_events": len(run.trace)}


def degeneracy_scenario(seed: int, multipath: bool, duration: str = "10s") -> dict:
    flow = (_mptcp("flow", "coupled-bbr", "arp", ["p1"]) if multipath else _tcp("flow", "bbr", "p1"))
    return {
        "name": "single-path", "seed": seed, "duration": duration, "warmup": "1s",
        "links": _links(p1={"bandwidth": "50Mbps", "delay": "20ms", "loss": "0.05%"}),
        "flows": [flow],
    }


def _degen_build(seed):
    return [("tcp-bbr", degeneracy_scenario(seed, False)), ("mptcp-coupled-bbr", degeneracy_scenario(seed, True))]


def _degen_eval(runs):
    a, b = runs["tcp-bbr"]["probe"], runs["mptcp-coupled-bbr"]["probe"]
    same = a["trace_sha256"] == b["trace_sha256"]
    return [Check("packet traces identical", same and a["trace_events"] > 0,
                  f"{a['trace_events']} vs {b['trace_events']} events")], []


register("single-degeneracy", "Coupled BBR with one subflow against single-path BBR on the same path and seed",
         _degen_build, _degen_eval, probe=_trace_probe, trace=True)


def three_path(seed: int, name: str, cc: str, scheduler: str, duration: str, loss: str = "0.01%") -> dict:
    links = {f"p{i}": {"bandwidth": "100Mbps", "delay": "20ms", "loss": loss} for i in (1, 2, 3)}
    flows = [_mptcp("mptcp", cc, scheduler, list(links))]
    flows += [_tcp(f"tcp{i}", _background(cc), f"p{i}") for i in (1, 2, 3)]
    return {"name": name, "seed": seed, "duration": duration, "warmup": "3s", "links": links, "flows": flows}


def _window_probe(run: Run) -> dict:
    fs = run.recorder.flows["mptcp"]
    s = NS_PER_S
    return {"early_mbps": mean_rate_mbps(fs.goodput, 3 * s, 10 * s),
            "late_mbps": mean_rate_mbps(fs.goodput, 30 * s, 40 * s)}


def _ramp_build(seed):
    out = []
    for cc in ("coupled-bbr", "lia"):
        scn = three_path(seed, f"loss-ramp-{cc}", cc, "min-rtt", "40s")
        scn["events"] = [{"at": "10s", "until": "30s", "link": f"p{i}", "set": {"loss": "1%"}} for i in (1, 2, 3)]
        out.append((cc, scn))
    return out


def _ramp_eval(runs):
    table = [{"cc": k, "before_mbps": v["probe"]["early_mbps"], "after_mbps": v["probe"]["late_mbps"]}
             for k, v in runs.items()]
    cb, li = runs["coupled-bbr"]["probe"], runs["lia"]["probe"]
    checks = [
        Check("Coupled BBR keeps >= 90% of its goodput at 1% loss", cb["late_mbps"] >= 0.9 * cb["early_mbps"],
              f"{cb['early_mbps']:.1f} -> {cb['late_mbps']:.1f} Mbps"),
        Check("LIA loses > 50% of its goodput at 1% loss", li["late_mbps"] < 0.5 * li["early_mbps"],
              f"{li['early_mbps']:.1f} -> {li['late_mbps']:.1f} Mbps"),
    ]
    return checks, table


register("sim-loss-ramp", "three 100 Mbps paths; loss ramps from 0.01% to 1% between 10 s and 30 s; Coupled BBR vs LIA",
         _ramp_build, _ramp_eval, probe=_window_probe)


ARP_VARIANTS = (("coupled-bbr", "arp"), ("coupled-bbr", "min-rtt"), ("lia", "min-rtt"))


def _arpdyn_build(seed):
    out = []
    for cc, sched in ARP_VARIANTS:
        scn = three_path(seed, f"arp-dynamic-{cc}-{sched}", cc, sched, "40s")
        change = {"bandwidth": "10Mbps", "delay": "100ms", "loss": "1%"}
        scn["events"] = [{"at": "10s", "until": "15s", "link": "p2", "set": dict(change)},
                         {"at": "20s", "until": "25s", "link": "p3", "set": dict(change)}]
        out.append((f"{cc}/{sched}", scn))
    return out


def _arpdyn_eval(runs):
    return variant_checks(runs)


register("sim-arp-dynamic", "three 100 Mbps paths; path 2 then path 3 degrade to 10 Mbps, 100 ms, 1% loss; schedulers compared",
         _arpdyn_build, _arpdyn_eval)


def variant_checks(runs):
    f = {k: v["flows"]["mptcp"] for k, v in runs.items()}
    table = [{"variant": k, "goodput": v["goodput_mbps"], "ofo_mean": v["ofo_mean"]} for k, v in f.items()]
    arp, mr, lia = f["coupled-bbr/arp"], f["coupled-bbr/min-rtt"], f["lia/min-rtt"]
    checks = [
        Check("Coupled BBR + minRTT goodput above LIA + minRTT", mr["goodput_mbps"] > lia["goodput_mbps"],
              f"{mr['goodput_mbps']:.1f} vs {lia['goodput_mbps']:.1f} Mbps"),
        Check("AR&P goodput within 10% of or above Coupled BBR + minRTT", arp["goodput_mbps"] >= 0.9 * mr["goodput_mbps"],
              f"{arp['goodput_mbps']:.1f} vs {mr['goodput_mbps']:.1f} Mbps"),
        Check("AR&P mean OFO below Coupled BBR + minRTT", arp["ofo_mean"] < mr["ofo_mean"],
              f"{arp['ofo_mean']:.1f} vs {mr['ofo_mean']:.1f}"),
    ]
    return checks, table


RANDOM_POINTS = 10


def random_points(seed: int, n: int = RANDOM_POINTS) -> list[dict]:
    """(bandwidth, delay, loss) triples per path, drawn uniformly over the study's ranges."""
    rng = np.random.default_rng(seed)
    pts = []
    for _ in range(n):
        pts.append({"bw": rng.uniform(10, 100, 3).round(1).tolist(),
                    "delay": rng.uniform(1, 100, 3).round(1).tolist(),
                    "loss": rng.uniform(0, 5, 3).round(3).tolist()})
    return pts


def _random_build(seed):
    out = []
    for k, pt in enumerate(random_points(seed)):
        for cc, sched in ARP_VARIANTS:
            links = {f"p{i + 1}": {"bandwidth": f"{pt['bw'][i]}Mbps", "delay": f"{pt['delay'][i]}ms",
                                   "loss": f"{pt['loss'][i]}%"} for i in range(3)}
            flows = [_mptcp("mptcp", cc, sched, list(links))]
            flows += [_tcp(f"tcp{i}", _background(cc), f"p{i}") for i in (1, 2, 3)]
            out.append((f"{k:02d}:{cc}/{sched}", {"name": f"random-{k:02d}-{cc}-{sched}", "seed": seed,
                                                   "duration": "20s", "warmup": "3s",
                                                   "links": links, "flows": flows}))
    return out


def _random_eval(runs):
    agg = {}
    for label, s in runs.items():
        variant = label.split(":", 1)[1]
        f = s["flows"]["mptcp"]
        a = agg.setdefault(variant, {"goodput": [], "ofo": []})
        a["goodput"].append(f["goodput_mbps"])
        a["ofo"].append(f["ofo_mean"])
    means = {k: {"goodput_mbps": float(np.mean(v["goodput"])), "ofo_mean": float(np.mean(v["ofo"]))}
             for k, v in agg.items()}
    return variant_checks({k: {"flows": {"mptcp": v}} for k, v in means.items()})



register("sim-random", f"{RANDOM_POINTS} random (bandwidth, delay, loss) settings of the three-path topology; schedulers compared",
         _random_build, _random_eval)