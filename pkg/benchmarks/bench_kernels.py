"""Compare the compiled and pure-Python kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times the grid velocity sum on dense 1D and 2D supports and the pairwise
particle velocity, checks that both backends agree, and prints one row per
(case, backend).  The package routes 1D grid sums to the fallback, whose
numpy convolution is faster there.
"""

import argparse
import time

import numpy as np

from aggupwind import grid as gm, kernels
from aggupwind.potential import abs_scaled, exp_pointy


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def grid_cases():
    rng = np.random.default_rng(0)
    for d, n in ((1, 4000), (2, 40), (2, 70)):
        g = gm.CartesianGrid.from_domain([(0.0, 1.0)] * d, [n] * d)
        w = rng.random(g.shape)
        w /= w.sum()
        tab = gm._tables(g, exp_pointy(5.0), "velocity")
        targets = np.arange(w.size, dtype=np.int64)
        yield f"grid d={d} n={n}", g, w, tab, targets


def run(repeat: int):
    impls = kernels.backends()
    print(f"{'case':<24}{'backend':<10}{'seconds':>12}{'speedup':>10}")
    for name, g, w, tab, targets in grid_cases():
        support = np.flatnonzero(w).astype(np.int64)
        results = {}
        for bname, mod in impls.items():
            if bname == "cython":
                rho = np.ascontiguousarray(w.reshape(g.shape[0], -1))
                t2 = np.ascontiguousarray(tab.reshape(tab.shape[0], tab.shape[1], -1))
                results[bname] = _best(lambda: mod.grid_convolve(rho, t2, support, targets), repeat)
            else:
                results[bname] = _best(lambda: mod.grid_convolve(w, tab, support, targets), repeat)
        _report(name, results)

    rng = np.random.default_rng(1)
    pos = np.ascontiguousarray(rng.random((3000, 2)))
    mass = np.full(len(pos), 1.0 / len(pos))
    p = abs_scaled(1.0)
    results = {b: _best(lambda m=m: m.pair_velocity(pos, pos, mass, p.code, p.param), repeat)
               for b, m in impls.items()}
    _report("pairs n=3000 d=2", results)


def _report(name, results):
    base = results["python"][0]
    outs = [r[1] for r in results.values()]
    gap = max(float(np.max(np.abs(o - outs[0]))) for o in outs)
    for bname, (sec, _) in results.items():
        print(f"{name:<24}{bname:<10}{sec:>12.4f}{base / sec:>9.1f}x")
    print(f"{'':<24}max backend difference {gap:.2e}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if "cython" not in kernels.backends():
        print("compiled extension not built; only the fallback is timed")
    run(args.repeat)


if __name__ == "__main__":
    main()
