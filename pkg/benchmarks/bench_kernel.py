"""Compare the compiled and pure-Python tick kernels on identical workloads.

Usage: python benchmarks/bench_kernel.py [--ticks 20000] [--topo fattree]
"""

import argparse
import time

import numpy as np

from fluidcc import kernel
from fluidcc.simnet import Simulation
from fluidcc.topo import build_dumbbell, build_fattree
from fluidcc.transport import FlowSpec


def build(topo_name):
    if topo_name == "dumbbell":
        topo = build_dumbbell(4, 10e6)
        n = topo.n_hosts
        specs = [FlowSpec(i, i + n // 2, "udp") for i in range(n // 2)]
    else:
        topo = build_fattree(4, 10e6)
        n = topo.n_hosts
        specs = [FlowSpec(i, (i + n // 2) % n, "udp") for i in range(n // 2)]
    return topo, specs


def run_backend(name, fn, topo, specs, ticks):
    sim = Simulation(topo, specs)
    offers = sim._udp_offer_block(1)[0]
    offers_block = np.tile(offers, (ticks, 1))
    # Swap the kernel entry point for this measurement.
    saved = kernel.run_ticks
    kernel.run_ticks = fn
    try:
        t0 = time.perf_counter()
        sim._run_kernel(offers_block)
        elapsed = time.perf_counter() - t0
    finally:
        kernel.run_ticks = saved
    rate = ticks / elapsed
    print(f"{name:>8}: {elapsed:8.3f} s for {ticks} ticks "
          f"({rate:,.0f} ticks/s)")
    return elapsed


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--ticks", type=int, default=20000)
    ap.add_argument("--topo", choices=["dumbbell", "fattree"],
                    default="fattree")
    args = ap.parse_args()

    topo, specs = build(args.topo)
    backends = kernel.backends()
    print(f"topology={args.topo} ports={len(topo.all_ports())} "
          f"flows={len(specs)} available backends={sorted(backends)}")
    times = {}
    for name in sorted(backends):
        times[name] = run_backend(name, backends[name], topo, specs,
                                  args.ticks)
    if len(times) == 2:
        print(f"speedup: {times['python'] / times['cython']:.1f}x")


if __name__ == "__main__":
    main()
