"""Compiled vs pure-Python cascade kernel.

    python benchmarks/bench_kernels.py [--repeat N] [--t-end T]

Reports per-call kernel time for several (r, p) and end-to-end time of the
Boeing closed loop over [0, t_end] with each kernel.
"""

import argparse
import sys
import time
import timeit

import numpy as np

from funnelctl._kernels import cascade_kernel_ext, cascade_kernel_py
from funnelctl.controller import FUNNEL_GUARD
from funnelctl.scenario import boeing737
from funnelctl.simulator import integrate


def kernel_case(r, p, seed=0):
    g = np.random.default_rng(seed)
    e0 = 0.05 * g.normal(size=(r, p))
    phi = np.abs(g.normal(size=(r, r)))
    phi[:, 0] += 0.5
    return e0, phi


def per_call(kernel, e0, phi, repeat):
    timer = timeit.Timer(lambda: kernel(e0, phi, FUNNEL_GUARD))
    n, _ = timer.autorange()
    return min(timer.repeat(repeat, n)) / n


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--t-end", type=float, default=2.0)
    args = ap.parse_args(argv)
    if cascade_kernel_ext is None:
        print("compiled kernel not built; only the Python kernel is available", file=sys.stderr)
        return 1

    print(f"{'r':>2} {'p':>2} {'python us':>10} {'compiled us':>12} {'speedup':>8}")
    for r, p in ((1, 1), (2, 2), (3, 2), (4, 3), (6, 3)):
        e0, phi = kernel_case(r, p)
        a = per_call(cascade_kernel_py, e0, phi, args.repeat)
        b = per_call(cascade_kernel_ext, e0, phi, args.repeat)
        print(f"{r:>2} {p:>2} {a * 1e6:>10.2f} {b * 1e6:>12.2f} {a / b:>8.1f}")

    sc = boeing737().with_sim(t_end=args.t_end)
    times = {}
    for name, kern in (("python", cascade_kernel_py), ("compiled", cascade_kernel_ext)):
        t0 = time.perf_counter()
        tr = integrate(sc, kernel=kern)
        times[name] = time.perf_counter() - t0
        times[name + "_x"] = tr.x
    # kernels agree to rounding; the adaptive step path then carries it along
    dev = np.abs(times["python_x"] - times["compiled_x"]).max() / np.abs(times["python_x"]).max()
    print(f"\nboeing737 closed loop over [0, {args.t_end:g}]: python {times['python']:.2f}s, "
          f"compiled {times['compiled']:.2f}s, speedup {times['python'] / times['compiled']:.2f}x, "
          f"max relative state deviation {dev:.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
