"""Time the numba and numpy variants of the hot kernels side by side.

    python benchmarks/bench_kernels.py [--repeat 5] [--points 401] [--lp-size 120]

The numba timings exclude the first (compiling) call.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from rauc import kernels
from rauc.analysis import uniform_fan_tree
from rauc.milp.solve import solve_lp_dense


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_tree(points: int, repeat: int):
    tree = uniform_fan_tree(2, points, 100.0, base=1000.0)
    cost = np.random.default_rng(0).uniform(0, 10, tree.n_nodes)
    args = (tree.period_ptr, tree.parent, tree.cond_prob, cost, 0.4)
    kernels.nested_musd_jit(*args)
    t_jit, a = _best(lambda: kernels.nested_musd_jit(*args), repeat)
    t_np, b = _best(lambda: kernels.nested_musd_numpy(*args), repeat)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-9)
    return f"nested risk, {tree.n_nodes} nodes", t_jit, t_np


def _random_tableau(size: int, seed: int = 1):
    rng = np.random.default_rng(seed)
    m, n = size, 2 * size
    A = rng.uniform(0, 1, (m, n))
    b = rng.uniform(1, 2, m)
    c = -rng.uniform(0, 1, n)
    # slack basis: [A I | b] with objective row [c 0 | 0]
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = A
    tab[:m, n:n + m] = np.eye(m)
    tab[:m, -1] = b
    tab[m, :n] = c
    basis = np.arange(n, n + m, dtype=np.int64)
    return tab, basis, n + m


def bench_simplex(size: int, repeat: int):
    tab, basis, ncols = _random_tableau(size)
    kernels.simplex_jit(tab.copy(), basis.copy(), ncols, 10_000)

    def run(kernel):
        t, bs = tab.copy(), basis.copy()
        status, _ = kernel(t, bs, ncols, 10_000)
        return status, t[-1, -1]

    t_jit, a = _best(lambda: run(kernels.simplex_jit), repeat)
    t_np, b = _best(lambda: run(kernels.simplex_numpy), repeat)
    assert a[0] == b[0] == 0 and abs(a[1] - b[1]) <= 1e-8 * max(1.0, abs(a[1]))
    return f"tableau simplex, {size}x{2 * size}", t_jit, t_np


def bench_dense_lp(size: int, repeat: int):
    rng = np.random.default_rng(2)
    A = rng.uniform(0, 1, (size, size))
    rhs = rng.uniform(1, 2, size)
    c = -rng.uniform(0, 1, size)
    t, _ = _best(lambda: solve_lp_dense(c, A, ["<="] * size, rhs, np.zeros(size), np.full(size, np.inf)), repeat)
    return f"dense LP end to end ({kernels.__name__} default: {'numba' if kernels.nested_musd is kernels.nested_musd_jit else 'numpy'})", t


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--points", type=int, default=401, help="children per node in the two-stage fan")
    p.add_argument("--lp-size", type=int, default=120)
    args = p.parse_args(argv)

    print(f"{'kernel':44s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s}")
    for label, t_jit, t_np in (bench_tree(args.points, args.repeat), bench_simplex(args.lp_size, args.repeat)):
        print(f"{label:44s} {t_jit:10.4f} {t_np:10.4f} {t_np / t_jit:8.1f}")
    label, t = bench_dense_lp(args.lp_size // 2, args.repeat)
    print(f"{label:44s} {t:10.4f}")


if __name__ == "__main__":
    main()
