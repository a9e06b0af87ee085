"""A short tour: the coupling weights, one scheduler decision, then three
small simulations comparing schedulers on asymmetric paths.

    python3 demos/walkthrough.py
"""

import os

from mpsim import load
from mpsim.cc.bbr import coupled_bbr_update
from mpsim.scenario import Run
from mpsim.scheduler import ar_decide, p_schedule

HERE = os.path.dirname(os.path.abspath(__file__))


def coupling():
    print("coupling weights for 100 and 50 Mbps paths")
    betas, alphas = coupled_bbr_update([100e6, 50e6])
    for i, (b, a) in enumerate(zip(betas, alphas)):
        print(f"  subflow {i}: beta {b} ({float(b):.3f})  unity-slot gain {float(a):.3f}")
    share = [float(b) * bw for b, bw in zip(betas, (100, 50))]
    print(f"  long-run rates {share[0]:.0f} + {share[1]:.0f} = {sum(share):.0f} Mbps, the best single path\n")


def scheduling():
    for long_rtt in (0.150, 0.100):
        N, R = ar_decide([10, 10], [0.050, long_rtt])
        print(f"AR partition, two 10 Mbps paths at 50 / {long_rtt * 1e3:.0f} ms: N={N} R={R}")
    x, r = [10e6, 10e6], [0.050, 0.100]
    order = p_schedule([1500] * 40, [0, 1], x, r, [0, 0])
    first_long = order.index(1)
    print(f"  P-Scheduling keeps the first {first_long} packets on the short path, "
          f"then interleaves: {''.join(map(str, order[:first_long + 8]))}...\n")


def simulate():
    path = os.path.join(HERE, "asymmetric.yaml")
    print(f"simulating {os.path.basename(path)} (20 s each)")
    for sched in ("arp", "min-rtt", "round-robin"):
        scn = load(path, seed=1, overrides=[f"flows.0.scheduler={sched}"])
        s = Run(scn).run()["flows"]["mptcp"]
        print(f"  {sched:<12} goodput {s['goodput_mbps']:6.2f} Mbps   mean OFO {s['ofo_mean']:6.2f}"
              f"   max OFO {s['ofo_max']}")


if __name__ == "__main__":
    coupling()
    scheduling()
    simulate()
