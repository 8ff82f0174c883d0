"""Compare the compiled and pure-Python kernel backends.

Run ``python3 benchmarks/bench_kernels.py [--repeat N]``. Reports the best
wall time per call for single BCD sweeps and for a complete ``fit``.
"""

import argparse
import timeit

import numpy as np

from sspca.groups import GridSpec, make_halfspace_groups
from sspca.kernels import available_backends
from sspca.solver import SolverConfig, fit

SIZES = [(50, 64, 5), (200, 256, 20), (500, 1024, 50)]


def bench_sweeps(kern, n, p, r, repeat):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((n, p))
    U0 = rng.standard_normal((n, r)) * 0.1
    V = rng.standard_normal((p, r))
    zeta = rng.uniform(0.1, 1.0, (p, r))
    XV, VtV = X @ V, V.T @ V
    XtU, UtU = X.T @ U0, U0.T @ U0

    def run_u():
        kern.sweep_u(U0.copy(), XV, VtV, 3, False, False)

    def run_v():
        kern.sweep_v(V.copy(), XtU, UtU, zeta, 0.1, 3, False)

    tu = min(timeit.repeat(run_u, number=1, repeat=repeat))
    tv = min(timeit.repeat(run_v, number=1, repeat=repeat))
    return tu, tv


def bench_fit(kern, repeat):
    grid = GridSpec((16, 16))
    gs = make_halfspace_groups(grid)
    X = np.random.default_rng(1).standard_normal((100, grid.p))
    cfg = SolverConfig(rank=10, lam=1e-5, max_iter=20, stop_tol=1e-12)
    return min(timeit.repeat(lambda: fit(X, gs, cfg=cfg, backend=kern), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = available_backends()
    names = sorted(backends)
    print(f"backends: {', '.join(names)}")
    print(f"{'case':<28}" + "".join(f"{n:>14}" for n in names) + ("      speedup" if len(names) == 2 else ""))
    rows = []
    for n, p, r in SIZES:
        res = {name: bench_sweeps(backends[name], n, p, r, args.repeat) for name in names}
        rows.append((f"sweep_u n={n} p={p} r={r}", {k: v[0] for k, v in res.items()}))
        rows.append((f"sweep_v n={n} p={p} r={r}", {k: v[1] for k, v in res.items()}))
    rows.append(("fit 100x256 r=10, 20 iters", {name: bench_fit(backends[name], max(1, args.repeat // 2)) for name in names}))
    for label, times in rows:
        line = f"{label:<28}" + "".join(f"{times[n] * 1e3:>12.3f}ms" for n in names)
        if len(names) == 2:
            line += f"{times['python'] / times['cython']:>12.1f}x"
        print(line)


if __name__ == "__main__":
    main()
