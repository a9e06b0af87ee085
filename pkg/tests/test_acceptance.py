"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (lines appear in the terminal
summary) or directly with ``python3 tests/test_acceptance.py``.  The
simulation-backed criteria take several minutes on one core.
"""

import math
import random
import sys
from fractions import Fraction
from itertools import combinations

import pytest

from mpsim.cc.bbr import coupled_bbr_update
from mpsim.presets import preset_names, run_preset, summary_digest
from mpsim.scheduler import ar_decide, ar_objective

LINES: list[str] = []
_cache: dict = {}


def _preset(name):
    if name not in _cache:
        _cache[name] = run_preset(name, seed=1)
    return _cache[name]


def report(tag, ok, detail):
    line = f"{tag} {'PASS' if ok else 'FAIL'}  {detail}"
    LINES.append(line)
    print(line)
    assert ok, line


def _ulps(a, b):
    return abs(a - b) / math.ulp(max(abs(a), abs(b), 1e-300))


# ------------------------------------------------------------------ oracles

def _brute_force(x, r):
    # objective written out directly from its definition, not the library helper
    best, best_val = None, -math.inf
    for k in range(1, len(x) + 1):
        for sub in combinations(range(len(x)), k):
            sx = sum(x[i] for i in sub)
            mean_r = sum(x[i] * r[i] for i in sub) / sx
            v = math.log(sx) - math.log(mean_r)
            if v > best_val + 1e-12:
                best, best_val = set(sub), v
    return best, best_val


def _goodput_ratio(s):
    flows = s["flows"]
    tcp = [f["goodput_mbps"] for n, f in flows.items() if n != "mptcp"]
    return flows["mptcp"]["goodput_mbps"] / max(tcp)


# ------------------------------------------------------------------ criteria

def test_c1_coupling_identities():
    rng = random.Random(2024)
    worst_sum, worst_gain, worst_ref = 0.0, 0.0, 0.0
    for _ in range(10_000):
        n = rng.choice((1, 2, 3, 4))
        bws = [rng.uniform(1e5, 1e10) for _ in range(n)]
        betas, alphas = coupled_bbr_update(bws)
        # independent float evaluation of the weights
        sq = sum(b * b for b in bws)
        ref = [b * max(bws) / sq for b in bws]
        worst_ref = max([worst_ref] + [_ulps(float(b), r) for b, r in zip(betas, ref)])
        total = float(sum(b * Fraction(bw) for b, bw in zip(betas, bws)))
        worst_sum = max(worst_sum, _ulps(total, max(bws)))
        for a, b in zip(alphas, betas):
            worst_gain = max(worst_gain, _ulps(float((2 + 6 * a) / 8), float(b)))
    report("C1", worst_sum <= 1 and worst_gain <= 1 and worst_ref <= 4,
           f"sum beta*BW = max BW within {worst_sum:g} ulp; (2+6a)/8 = beta within {worst_gain:g} ulp; "
           f"weights match a float recomputation within {worst_ref:g} ulp")


def test_c2_single_subflow_degeneracy():
    runs = _preset("single-degeneracy").runs
    a, b = runs["tcp-bbr"]["probe"], runs["mptcp-coupled-bbr"]["probe"]
    ok = a["trace_events"] > 0 and a["trace_sha256"] == b["trace_sha256"]
    report("C2", ok, f"trace digests {'match' if ok else 'differ'} over {a['trace_events']} events")


def test_c3_fairness():
    s = _preset("fairness-symmetric").runs["coupled-bbr"]
    ratio = _goodput_ratio(s)
    report("C3", 0.85 <= ratio <= 1.15, f"multipath / best TCP-BBR goodput = {ratio:.3f} (need 0.85..1.15)")


def test_c4_loss_tolerance():
    runs = _preset("loss-sweep").runs
    thr = {k: v["flows"]["mptcp"]["throughput_mbps"] for k, v in runs.items()}
    d_cb = 1 - thr["coupled-bbr@0.5%"] / thr["coupled-bbr@0%"]
    d_li = 1 - thr["lia@0.5%"] / thr["lia@0%"]
    report("C4", d_cb < 0.10 and d_li > 0.50,
           f"Coupled BBR decline {100 * d_cb:.1f}% (< 10%), LIA decline {100 * d_li:.1f}% (> 50%)")


def test_c5_congestion_balance():
    # 100 Mbps and 50 Mbps: beta = 100*100/12500 and 50*100/12500
    b1, b2 = 0.8, 0.4
    shares = (b1 * 100, b2 * 50)
    betas, _ = coupled_bbr_update([100e6, 50e6])
    analytic_ok = [float(b) for b in betas] == [b1, b2] and shares == (80.0, 20.0)
    subs = _preset("balance").runs["coupled-bbr"]["flows"]["mptcp"]["subflows"]
    send = subs[0]["send_rate_mbps"] / subs[1]["send_rate_mbps"]
    beta_ratio = subs[0]["beta"] / subs[1]["beta"]
    ok = (analytic_ok and abs(beta_ratio - 2.0) <= 0.2
          and abs(send - shares[0] / shares[1]) <= 0.1 * shares[0] / shares[1])
    report("C5", ok, f"beta ratio {beta_ratio:.3f} (2.0 +-10%); send ratio {send:.3f} vs analytic 80:20")


def test_c6_ar_optimality():
    xs = [0.5 + 0.5 * i for i in range(100)]
    rs = [0.005 + 0.005 * i for i in range(100)]
    grid_bad = 0
    for x2 in xs:
        for r2 in rs:
            x, r = [25.0, x2], [0.1, r2]
            N, _ = ar_decide(x, r)
            _, best = _brute_force(x, r)
            if ar_objective(x, r, N) < best - 1e-9 * abs(best):
                grid_bad += 1
    rng = random.Random(7)
    exact, close = 0, 0
    for _ in range(1000):
        x = [rng.uniform(1, 100) for _ in range(3)]
        r = [rng.uniform(0.005, 0.5) for _ in range(3)]
        N, _ = ar_decide(x, r)
        opt, best = _brute_force(x, r)
        got = ar_objective(x, r, N)
        if set(N) == opt or abs(got - best) <= 1e-12 * abs(best):
            exact += 1
        elif got >= best - 0.05 * abs(best):
            close += 1
    ok = grid_bad == 0 and exact >= 900 and exact + close == 1000
    report("C6", ok, f"2-subflow grid: {10_000 - grid_bad}/10000 optimal; "
                     f"3 subflows: {exact}/1000 optimal, {close} within 5%")


def test_c7_dynamic_recovery():
    runs = _preset("dynamic-breakdown").runs
    p = {k: v["probe"]["mptcp"] for k, v in runs.items()}
    inf = math.inf
    t_arp = p["arp"]["recovery_s"] if p["arp"]["recovery_s"] is not None else inf
    t_rr = p["round-robin"]["recovery_s"] if p["round-robin"]["recovery_s"] is not None else inf
    red, arp = p["redundant"]["pre_goodput_mbps"], p["arp"]["pre_goodput_mbps"]
    ok = t_arp <= 3.0 and t_arp < t_rr and red < arp
    report("C7", ok, f"AR&P recovers in {t_arp:.2f} s (<= 3 s) vs Round-Robin {t_rr:.2f} s; "
                     f"pre-failure Redundant {red:.2f} < AR&P {arp:.2f} Mbps")


def test_c8_ofo_reduction():
    runs = _preset("ofo-asymmetry").runs
    ofo = {k: v["flows"]["mptcp"]["ofo_mean"] for k, v in runs.items()}
    a, m, rr = ofo["arp@250"], ofo["min-rtt@250"], ofo["round-robin@250"]
    sym = [ofo[f"{s}@50"] for s in ("arp", "min-rtt", "round-robin")]
    spread = max(sym) / min(sym) if min(sym) > 0 else (1.0 if max(sym) == 0 else math.inf)
    ok = a <= 0.5 * m and a <= 0.5 * rr and spread <= 1.5
    report("C8", ok, f"250 ms: AR&P {a:.2f} vs minRTT {m:.2f} / RR {rr:.2f} (<= 50%); "
                     f"50 ms: {' / '.join(f'{v:.2f}' for v in sym)} (spread x{spread:.2f}, need <= 1.5)")


def test_c9_zero_jitter_in_order():
    s = _preset("pscheduling-static").runs["arp"]
    m = s["flows"]["mptcp"]["ofo_max"]
    report("C9", m <= 2, f"steady-state max OFO {m} packets (<= 2)")


def test_c10_jitter_bound():
    s = _preset("jitter-bound").runs["arp"]
    # 16 Mbps per path, RTTs 50 ms and 150 ms, eps = 0.1 on both rate and RTT
    bound = 0.5 * (2 * 16e6) * 0.150 * (0.1 + 0.1) / (1500 * 8)
    got = s["flows"]["mptcp"]["ofo_time_mean"]
    report("C10", got <= 2 * bound, f"time-average OFO {got:.2f} vs 2 x {bound:.1f} packets")


@pytest.mark.slow
def test_c11_determinism():
    differing = []
    for name in preset_names():
        first = _preset(name)
        again = run_preset(name, seed=1)
        for label, s in first.runs.items():
            if summary_digest(s) != summary_digest(again.runs[label]):
                differing.append(f"{name}/{label}")
    n = len(preset_names())
    report("C11", not differing, f"{n} presets rerun; differing summaries: {differing or 'none'}")


if __name__ == "__main__":
    failed = 0
    for name, fn in list(globals().items()):
        if name.startswith("test_c") and callable(fn):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
