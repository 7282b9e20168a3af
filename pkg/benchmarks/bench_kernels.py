"""Compiled vs numpy kernels: scalar Lambert inverse, level solve, and a 1D table.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from mfghomog import kernels
from mfghomog.cell import tabulate_Heff
from mfghomog.oned import f_inverse
from mfghomog.potential import parse_potential
from mfghomog.torus import TorusGrid


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    z = np.linspace(-30, 30, 20001)
    v = 0.5 * np.cos(2 * np.pi * np.arange(512) / 512)
    V = parse_potential("0.25*cos(2*pi*x1) + 0.5*cos(2*pi*y1)", 1)
    out = np.empty(512)
    return {
        "f_inverse (20001 points)": lambda: f_inverse(1.3, z),
        "level solve (n=512, 200 currents)": lambda: [kernels.solve_level(j, v, 1 / 512, out) for j in np.linspace(0, 4, 200)],
        "1D table (16 x 49 cells, n=128)": lambda: tabulate_Heff(V, TorusGrid(1, 16), 3.0, 0.125, TorusGrid(1, 128)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = ["python"]
    try:
        kernels.use_backend("cython")
        backends.insert(0, "cython")
    except ImportError:
        print("compiled extension not built; timing the numpy fallback only")
    results = {}
    for b in backends:
        kernels.use_backend(b)
        for name, fn in cases().items():
            results[(name, b)] = _best(fn, args.repeat)
    print(f"{'case':40s} " + " ".join(f"{b:>10s}" for b in backends) + ("    speedup" if len(backends) > 1 else ""))
    for name in cases():
        row = [results[(name, b)] for b in backends]
        line = f"{name:40s} " + " ".join(f"{t * 1e3:8.2f}ms" for t in row)
        if len(row) > 1:
            line += f"  {row[1] / row[0]:8.1f}x"
        print(line)


if __name__ == "__main__":
    main()
