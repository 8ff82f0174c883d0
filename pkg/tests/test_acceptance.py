"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test records a one-line verdict that is printed in the terminal
summary, whether or not the assertion holds.
"""

import subprocess
import sys
import time

import numpy as np

from sspca.groups import GridSpec, make_halfspace_groups, make_singletons
from sspca.pipeline import (
    CVGrid,
    cross_validate,
    cross_validate_raw_knn,
    fill_ratio,
    generate_planted,
    lambda_coverage_score,
    support_mask,
)
from sspca.regularizer import Partition, eta_minimizer, lemma_objective, lp_norm, omega_alpha, shared_omega_alpha
from sspca.solver import FactorModel, SolverConfig, fit

GRID8 = GridSpec((8, 8))


def _lemma_values(y, Z, alpha):
    """Lemma objective for each row of the candidate matrix ``Z``."""
    beta = alpha / (2 - alpha)
    quad = 0.5 * np.sum(y * y / Z, axis=1)
    m = Z.max(axis=1, keepdims=True)
    return quad + 0.5 * m[:, 0] * np.sum((Z / m) ** beta, axis=1) ** (1 / beta)


def test_c1_lemma_oracle(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_gap, worst_beat = 0.0, -np.inf
    for i in range(200):
        p = int(rng.integers(1, 6))
        y = rng.standard_normal(p)
        for alpha in (0.5, 1.0, 1.5):
            z = eta_minimizer(y, alpha)
            val = lemma_objective(y, z, alpha)
            worst_gap = max(worst_gap, abs(val - lp_norm(y, alpha)))
            # 5000 log-normal perturbations of the optimum and 5000 uniform draws
            pert = z * np.exp(rng.normal(0, 0.5, size=(5000, p)))
            uni = rng.uniform(1e-3, 3 * z.max() + 1e-3, size=(5000, p))
            cands = np.vstack([pert, uni])
            worst_beat = max(worst_beat, float(val - _lemma_values(y, cands, alpha).min()))
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 1e-8 and worst_beat <= 1e-9 and elapsed < 5
    criterion(1, ok, f"lemma: max |value - norm| = {worst_gap:.2e}, best candidate gain = {worst_beat:.2e}, {elapsed:.2f}s")
    assert ok


def test_c2_l1_reduction(criterion):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        p = int(rng.integers(1, 30))
        y = rng.standard_normal(p) * rng.uniform(0.01, 100)
        worst = max(worst, abs(omega_alpha(y, make_singletons(p), 1.0) - np.abs(y).sum()))
    ok = worst <= 1e-12
    criterion(2, ok, f"l1 reduction: max abs error {worst:.2e} over 1000 vectors")
    assert ok


def test_c3_rank_one_svd(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        X = np.random.default_rng(seed).standard_normal((20, 15))
        s = np.linalg.svd(X, compute_uv=False)
        svd_err = np.sqrt(np.sum(s[1:] ** 2))
        res = fit(X, make_singletons(15), cfg=SolverConfig(rank=1, lam=0.0, seed=seed))
        err = np.linalg.norm(X - res.model.reconstruction())
        worst = max(worst, (err - svd_err) / svd_err)
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.01 and elapsed < 10
    criterion(3, ok, f"rank-1: worst relative excess over SVD {worst:.2e}, {elapsed:.2f}s")
    assert ok


def _descent_check(nonneg):
    gs = make_halfspace_groups(GRID8)
    worst_rise, max_iters, all_stopped, all_nonneg = -np.inf, 0, True, True
    for i, lam in enumerate(np.logspace(-6, -3, 10)):
        rng = np.random.default_rng(100 + i)
        X = rng.standard_normal((30, 64))
        if nonneg:
            X = np.abs(X)
        signs = []

        def cb(it, m):
            signs.append(bool(np.all(m.U >= 0) and np.all(m.V >= 0)))

        res = fit(X, gs, cfg=SolverConfig(rank=5, lam=float(lam), alpha=0.5, nonneg=nonneg, seed=i), callback=cb)
        f = np.array([r.objective for r in res.trace])
        rise = np.max((f[1:] - f[:-1]) / (1 + np.abs(f[:-1])))
        worst_rise = max(worst_rise, float(rise))
        max_iters = max(max_iters, len(f) - 1)
        all_stopped &= res.converged and len(f) - 1 <= 500
        all_nonneg &= all(signs) and len(signs) == len(f) - 1
    return worst_rise, max_iters, all_stopped, all_nonneg


def test_c4_descent(criterion):
    rise, iters, stopped, _ = _descent_check(nonneg=False)
    ok = rise <= 1e-6 and stopped
    criterion(4, ok, f"descent: worst normalized step change {rise:.2e}, stop rule fired on all 10 (max {iters} iterations)")
    assert ok


def test_c5_structured_recovery(criterion):
    t0 = time.perf_counter()
    gs = make_halfspace_groups(GRID8)
    fractions = []
    for seed in range(5):
        clean = generate_planted(GRID8, 4, 100, 0.0, seed)
        sd = 0.05 * float(np.sqrt(np.mean(clean.X**2)))
        data = generate_planted(GRID8, 4, 100, sd, seed)
        res = fit(data.X, gs, cfg=SolverConfig(rank=4, lam=1e-6, alpha=0.5, seed=seed))
        ratios = [fill_ratio(res.model.V[:, k], GRID8) for k in range(4)]
        fractions.append(float(np.mean([r >= 0.9 for r in ratios])))
    elapsed = time.perf_counter() - t0
    good = sum(f >= 0.8 for f in fractions)
    ok = good >= 4 and elapsed < 60
    criterion(5, ok, f"recovery: {good}/5 seeds with >=80% rectangular elements (fractions {fractions}), {elapsed:.2f}s")
    assert ok


def test_c6_shared_structure(criterion):
    gs = make_halfspace_groups(GRID8)
    part = Partition.blocks(6, 3)
    identical = []
    for seed in range(5):
        clean = generate_planted(GRID8, 6, 100, 0.0, seed, shared=3)
        sd = 0.05 * float(np.sqrt(np.mean(clean.X**2)))
        data = generate_planted(GRID8, 6, 100, sd, seed, shared=3)
        cfg = SolverConfig(rank=6, lam=3e-6, alpha=0.5, seed=seed, stop_tol=1e-8, max_iter=2000)
        S = support_mask(fit(data.X, gs, part, cfg).model.V)
        identical.append(all((S[:, list(c)] == S[:, [c[0]]]).all() for c in part.classes))
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        V = rng.standard_normal((64, 4))
        shared = shared_omega_alpha(V, gs, Partition.singletons(4), 0.5)
        direct = sum(omega_alpha(V[:, k], gs, 0.5) for k in range(4))
        worst = max(worst, abs(shared - direct))
    ok = all(identical) and worst <= 1e-12
    criterion(6, ok, f"shared: identical class supports on {sum(identical)}/5 fits, singleton-partition gap {worst:.2e}")
    assert ok


def test_c7_nmf(criterion):
    rise, iters, stopped, nonneg = _descent_check(nonneg=True)
    ok = nonneg and rise <= 1e-6 and stopped
    criterion(7, ok, f"nmf: nonnegative at every iteration={nonneg}, worst normalized step change {rise:.2e}, max {iters} iterations")
    assert ok


def test_c8_protocol(criterion, monkeypatch):
    import sspca.pipeline as pl

    real_fit = pl.fit
    seen = set()

    def counting_fit(X, gs, part, cfg):
        seen.add((cfg.lam, cfg.rank))
        V = np.zeros((X.shape[1], cfg.rank))
        return type("R", (), {"model": FactorModel(np.zeros((X.shape[0], cfg.rank)), V, part)})()

    monkeypatch.setattr(pl, "fit", counting_fit)
    monkeypatch.setattr(pl, "encode", lambda X, V, cfg: np.zeros((X.shape[0], V.shape[1])))
    planted = generate_planted(GridSpec((4, 4)), 3, 80, 0.05, seed=8)
    res = cross_validate(planted.data, make_singletons(16), CVGrid(), SolverConfig(rank=1))
    scored = {key for key in res.mean_scores}
    expected = {(k, e, r) for k in (1, 3, 5) for e in range(4, 19, 2) for r in range(10, 71, 10)}
    monkeypatch.setattr(pl, "fit", real_fit)
    base = cross_validate_raw_knn(planted.data)
    ok = (scored == expected and len(seen) == 56 and len(base.fold_scores) == 15
          and 0.0 <= base.best_score <= 1.0)
    criterion(8, ok, f"protocol: {len(scored)} grid points scored (expected 168), raw k-NN best k={base.best[0]} "
                     f"accuracy {base.best_score:.3f}")
    assert ok


def test_c9_coverage(criterion):
    disjoint = np.zeros((12, 3))
    for k in range(3):
        disjoint[4 * k: 4 * k + 4, k] = 1.0
    a = lambda_coverage_score(disjoint)
    b = lambda_coverage_score(np.ones((12, 3)))
    ok = a == 1.0 and b == 1 / 3
    criterion(9, ok, f"coverage: disjoint full = {a!r}, three identical full = {b!r}")
    assert ok


def _cli_run(tmp, tag):
    cmd = [sys.executable, "-m", "sspca", "fit", "--data", str(tmp / "X.csv"), "--grid-2d", "8x8", "--rank", "4",
           "--lambda", "1e-6", "--seed", "11", "--restarts", "2", "--no-timing", "--out", str(tmp / f"{tag}.model")]
    subprocess.run(cmd, check=True)
    return (tmp / f"{tag}.model").read_bytes(), (tmp / f"{tag}.model.trace.csv").read_bytes()


def test_c10_determinism(criterion, tmp_path):
    from sspca import formats

    formats.save_matrix(tmp_path / "X.csv", generate_planted(GRID8, 4, 40, 0.05, seed=10).X)
    a, b = _cli_run(tmp_path, "a"), _cli_run(tmp_path, "b")
    ok = a == b
    criterion(10, ok, f"determinism: model files identical={a[0] == b[0]}, traces identical={a[1] == b[1]} "
                      f"({len(a[0])} and {len(a[1])} bytes)")
    assert ok
