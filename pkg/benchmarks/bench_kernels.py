"""Compiled vs pure-Python kernels on case-study sized inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from faultloc import _fallback
from faultloc.line_model import LineParameters, abcd_stack
from faultloc.simulator import LadderModel, SimScenario

try:
    from faultloc import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    p = LineParameters.case_study()
    s = 0.01 + 1j * np.linspace(0, 2 * np.pi * 2.5e5, 16384)
    up, dn = abcd_stack(p, s, 2.3e3), abcd_stack(p, s, 7.7e3)
    mask = np.array([1.0, 0.0, 0.0])
    Y = _fallback.admittance_from_abcd(up, dn, mask, 1e12)[0]
    U = rng.normal(size=(s.size, 4, 10)) + 1j * rng.normal(size=(s.size, 4, 10))
    A = np.ascontiguousarray(rng.normal(size=(16384, 6, 6)) * 0.5 + 0j)
    sc = SimScenario(params=p, segments=100, T=0.02, t_f=0.01)
    args = LadderModel(sc).kernel_args()
    return {
        "expm_batch (16k x 6x6)": lambda m: m.expm_batch(A),
        "admittance_from_abcd (16k bins)": lambda m: m.admittance_from_abcd(up, dn, mask, 1e12),
        "psi_apply (16k bins, 4 legs)": lambda m: m.psi_apply(Y, U, 3, 1, 3, 3),
        "ladder_run (100 segments, 20k steps)": lambda m: m.ladder_run(*args),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; only the fallback is timed")
    print(f"{'kernel':<40}{'python s':>12}{'compiled s':>12}{'speedup':>10}")
    for name, fn in cases().items():
        tp = best_of(lambda: fn(_fallback), a.repeat)
        if _kernels is None:
            print(f"{name:<40}{tp:>12.4f}{'-':>12}{'-':>10}")
            continue
        tc = best_of(lambda: fn(_kernels), a.repeat)
        print(f"{name:<40}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
