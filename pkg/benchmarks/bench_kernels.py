"""Compare the compiled and pure-Python CSR kernels.

Usage::

    python benchmarks/bench_kernels.py [--n 3000] [--degree 20] [--repeat 5]

Times sparse mat-vec, the threshold incomplete Cholesky factorization and
the triangular solves with its factor on the normalized Laplacian of a
random graph, and checks that both backends return the same numbers.
"""

import argparse
import time

import numpy as np

from powermean_ssl.graph import normalized_laplacian
from powermean_ssl.kernels import available_backends
from powermean_ssl.msbm import MsbmParams, sample_msbm


def _best_of(func, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = func()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run(n, degree, repeat, drop_tol):
    params = MsbmParams(2, n // 2, 1.5 * degree / n, 0.5 * degree / n)
    L = normalized_laplacian(sample_msbm(params, 0).layers[0], self_loops=True)
    A = L.add_diagonal(0.3)
    x = np.random.Generator(np.random.PCG64(1)).standard_normal(n)
    args = (A.row_ptr, A.col_idx, A.values)
    results = {}
    for name, mod in available_backends().items():
        t_mv, y = _best_of(lambda: mod.csr_matvec(*args, x), repeat)
        t_ic, fac = _best_of(lambda: mod.ict_factor(*args, drop_tol), repeat)
        ptr, col, val = fac[:3]
        t_sv, z = _best_of(lambda: mod.ic_solve(ptr, col, val, x), repeat)
        results[name] = {"matvec": t_mv, "ict": t_ic, "ic_solve": t_sv, "out": (y, val, z)}
    print(f"n={n}, nnz={A.nnz}, drop_tol={drop_tol}, best of {repeat}")
    print(f"{'backend':<8} {'matvec':>10} {'ict':>10} {'ic_solve':>10}")
    for name, r in results.items():
        print(f"{name:<8} {r['matvec'] * 1e3:>8.2f}ms {r['ict'] * 1e3:>8.2f}ms "
              f"{r['ic_solve'] * 1e3:>8.2f}ms")
    if "cython" in results:
        py, cy = results["python"], results["cython"]
        print("speedup " + " ".join(f"{k}={py[k] / cy[k]:.1f}x" for k in ("matvec", "ict",
                                                                            "ic_solve")))
        diff = max(np.max(np.abs(a - b)) for a, b in zip(py["out"], cy["out"]))
        print(f"max abs difference between backends: {diff:.1e}")
    else:
        print("compiled backend not built; only the pure-Python kernels were timed")
    return results


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=3000)
    parser.add_argument("--degree", type=float, default=20.0)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--drop-tol", type=float, default=1e-4)
    args = parser.parse_args(argv)
    run(args.n, args.degree, args.repeat, args.drop_tol)


if __name__ == "__main__":
    main()
