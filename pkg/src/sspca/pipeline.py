"""Experiment machinery: planted data, supports, k-NN, cross-validation.

Evaluation learns a dictionary on training rows, encodes held-out rows on
it and classifies them with k-NN. A support-coverage score picks ``lam``
when no labels are available.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .groups import GridSpec, GroupStructure
from .regularizer import Partition
from .solver import FactorModel, SolverConfig, encode, fit

log = logging.getLogger(__name__)

DEFAULT_K = (1, 3, 5)
DEFAULT_LOG2_LAMBDA = tuple(range(4, 19, 2))
DEFAULT_RANKS = (10, 20, 30, 40, 50, 60, 70)


@dataclass
class LabeledDataset:
    X: np.ndarray
    labels: np.ndarray
    grid: GridSpec | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.labels = np.asarray(self.labels)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D")
        if self.labels.shape != (self.X.shape[0],):
            raise ValueError(f"{self.labels.shape[0]} labels for {self.X.shape[0]} rows")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("X contains non-finite values")
        if self.grid is not None and self.grid.p != self.X.shape[1]:
            raise ValueError(f"grid has {self.grid.p} cells but X has {self.X.shape[1]} columns")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.X[idx], self.labels[idx], self.grid)


@dataclass
class PlantedData:
    data: LabeledDataset
    V_true: np.ndarray
    U_true: np.ndarray
    boxes: list = field(default_factory=list)  # per element: tuple of (start, stop) per axis

    @property
    def X(self) -> np.ndarray:
        return self.data.X


@dataclass(frozen=True)
class CVGrid:
    k_candidates: tuple = DEFAULT_K
    log2_lambda_candidates: tuple = DEFAULT_LOG2_LAMBDA
    rank_candidates: tuple = DEFAULT_RANKS

    def __post_init__(self):
        for name in ("k_candidates", "log2_lambda_candidates", "rank_candidates"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ValueError(f"{name} must be nonempty")
            object.__setattr__(self, name, vals)

    def points(self):
        """All ``(k, log2_lambda, r)`` triples in enumeration order."""
        return list(itertools.product(self.k_candidates, self.log2_lambda_candidates, self.rank_candidates))

    def __len__(self):
        return len(self.k_candidates) * len(self.log2_lambda_candidates) * len(self.rank_candidates)


def _box_shapes(dims, lo, hi):
    p = int(np.prod(dims))
    shapes = []
    for ext in itertools.product(*(range(1, d + 1) for d in dims)):
        frac = np.prod(ext) / p
        if lo <= frac <= hi:
            shapes.append(ext)
    return shapes


def generate_planted(
    grid: GridSpec,
    r: int,
    n: int,
    noise_sd: float = 0.0,
    seed: int | None = 0,
    *,
    support_fraction=(0.1, 0.4),
    shared: int = 1,
    nonneg: bool = False,
) -> PlantedData:
    """Data ``X = U* V*' + noise`` whose dictionary has box-shaped supports.

    Each support is an axis-aligned box covering between 10% and 40% of the
    grid. Support entries are ``+-uniform(0.5, 1.5)`` (positive when
    ``nonneg``); coefficient columns have unit l2 norm. With ``shared > 1``
    consecutive runs of ``shared`` elements reuse one box. The noise is drawn
    from its own stream, so changing ``noise_sd`` leaves ``U*`` and ``V*``
    unchanged. Labels are the index of each row's dominant coefficient.
    """
    if r < 1 or n < 1:
        raise ValueError("r and n must be positive")
    if noise_sd < 0:
        raise ValueError("noise_sd must be nonnegative")
    shapes = _box_shapes(grid.dims, *support_fraction)
    if not shapes:
        raise ValueError(f"no box on grid {grid.dims} covers {support_fraction} of the cells")
    ss = np.random.SeedSequence(seed)
    rng, noise_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    p = grid.p
    V = np.zeros((p, r))
    boxes = []
    coords = grid.coordinates()
    for k in range(r):
        if k % shared == 0:
            ext = shapes[rng.integers(len(shapes))]
            start = [int(rng.integers(d - e + 1)) for d, e in zip(grid.dims, ext)]
            box = tuple((s, s + e) for s, e in zip(start, ext))
        boxes.append(box)
        inside = np.ones(p, dtype=bool)
        for a, (s, e) in enumerate(box):
            inside &= (coords[:, a] >= s) & (coords[:, a] < e)
        vals = rng.uniform(0.5, 1.5, size=int(inside.sum()))
        if not nonneg:
            vals *= rng.choice((-1.0, 1.0), size=vals.size)
        V[inside, k] = vals
    U = rng.standard_normal((n, r))
    if nonneg:
        U = np.abs(U)
    U /= np.linalg.norm(U, axis=0)
    X = U @ V.T
    if noise_sd > 0:
        X = X + noise_sd * noise_rng.standard_normal(X.shape)
    labels = np.argmax(np.abs(U), axis=1)
    return PlantedData(LabeledDataset(X, labels, grid), V, U, boxes)


def support(v, rel_tol: float = 1e-3) -> np.ndarray:
    """Indices with ``|v_j| > rel_tol * max_j |v_j|`` (empty for ``v = 0``)."""
    if rel_tol < 0:
        raise ValueError("rel_tol must be nonnegative")
    a = np.abs(np.asarray(v, dtype=float))
    m = a.max(initial=0.0)
    if m == 0:
        return np.array([], dtype=np.intp)
    return np.flatnonzero(a > rel_tol * m)


def support_mask(V, rel_tol: float = 1e-3) -> np.ndarray:
    """Boolean (p, r) matrix of thresholded column supports."""
    A = np.abs(np.asarray(V, dtype=float))
    m = A.max(axis=0, keepdims=True)
    return (A > rel_tol * m) & (m > 0)


def fill_ratio(v, grid: GridSpec, rel_tol: float = 1e-3) -> float:
    """Support size over the volume of its bounding box; 0 for an empty support."""
    idx = support(v, rel_tol)
    if idx.size == 0:
        return 0.0
    c = grid.coordinates()[idx]
    vol = np.prod(c.max(axis=0) - c.min(axis=0) + 1)
    return float(idx.size / vol)


def lambda_coverage_score(V, rel_tol: float = 1e-3) -> float:
    """``|union of supports|^2 / (p * sum of support sizes)``; 0 if V is all zero."""
    S = support_mask(V, rel_tol)
    total = int(S.sum())
    if total == 0:
        return 0.0
    p = S.shape[0]
    union = int(S.any(axis=1).sum())
    return union * union / (p * total)


def select_lambda_by_coverage(X, gs, cfg: SolverConfig, log2_lambdas=DEFAULT_LOG2_LAMBDA, part=None,
                              rel_tol: float = 1e-3):
    """Fit once per ``lam = 2**e`` and keep the coverage maximizer (ties to smaller lam).

    Returns ``(best_lam, scores)`` with ``scores`` a list of ``(lam, score)``.
    """
    scores = []
    for e in log2_lambdas:
        lam = 2.0**e
        res = fit(X, gs, part, cfg.replace(lam=lam))
        scores.append((lam, lambda_coverage_score(res.model.V, rel_tol)))
    best = max(scores, key=lambda t: (t[1], -t[0]))
    return best[0], scores


def knn_classify(train_repr, train_labels, test_repr, k: int) -> np.ndarray:
    """Majority vote among the ``k`` nearest training rows (Euclidean).

    Vote ties go to the label whose tied neighbours have the smallest mean
    distance, then to the smallest label. Equidistant neighbours are taken
    in training order.
    """
    train = np.asarray(train_repr, dtype=float)
    test = np.asarray(test_repr, dtype=float)
    labels = np.asarray(train_labels)
    if train.shape[0] == 0:
        raise ValueError("empty training set")
    if not 1 <= k <= train.shape[0]:
        raise ValueError(f"k={k} must lie in 1..{train.shape[0]}")
    if train.ndim == 1:
        train = train[:, None]
    if test.ndim == 1:
        test = test[:, None]
    d2 = (
        np.sum(test * test, axis=1)[:, None]
        - 2.0 * test @ train.T
        + np.sum(train * train, axis=1)[None, :]
    )
    dist = np.sqrt(np.maximum(d2, 0.0))
    out = []
    for row in dist:
        nn = np.argsort(row, kind="stable")[:k]
        groups: dict = {}
        for i in nn:
            groups.setdefault(labels[i], []).append(row[i])
        out.append(min(groups, key=lambda lab: (-len(groups[lab]), float(np.mean(groups[lab])), lab)))
    return np.array(out, dtype=labels.dtype)


def accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    return float(np.mean(pred == truth)) if truth.size else 0.0


def stratified_folds(labels, n_folds: int = 5, seed: int | None = 0) -> list[np.ndarray]:
    """Validation index sets for ``n_folds`` folds, stratified by label.

    Falls back to a plain shuffled split (with a warning) when some class
    has fewer than ``n_folds`` members.
    """
    labels = np.asarray(labels)
    n = labels.size
    if n < n_folds:
        raise ValueError(f"need at least {n_folds} rows, got {n}")
    rng = np.random.default_rng(seed)
    counts = Counter(labels.tolist())
    folds = [[] for _ in range(n_folds)]
    if min(counts.values()) < n_folds:
        warnings.warn(f"a class has fewer than {n_folds} members; using unstratified folds", stacklevel=2)
        perm = rng.permutation(n)
        for i, j in enumerate(perm):
            folds[i % n_folds].append(int(j))
    else:
        offset = 0
        for lab in sorted(counts):
            idx = rng.permutation(np.flatnonzero(labels == lab))
            for i, j in enumerate(idx):
                folds[(offset + i) % n_folds].append(int(j))
            offset += idx.size
    return [np.sort(np.array(f, dtype=np.intp)) for f in folds]


@dataclass
class CVResult:
    best: tuple  # (k, lam, r)
    best_score: float
    fold_scores: list  # rows (k, log2_lambda, r, fold, accuracy)
    mean_scores: dict  # (k, log2_lambda, r) -> mean accuracy


def cross_validate(
    data: LabeledDataset,
    gs: GroupStructure,
    grid: CVGrid,
    cfg: SolverConfig,
    *,
    n_folds: int = 5,
    part_size: int = 1,
    seed: int | None = 0,
) -> CVResult:
    """Grid search over ``(lam, r)`` with inner k-NN scoring over ``k``.

    For each fold and ``(lam, r)`` the dictionary is learned on the training
    rows only; training and validation rows are then encoded on it and the
    validation rows classified. Ties in mean accuracy go to smaller
    ``lam``, then smaller ``r``, then smaller ``k``.
    """
    if data.n < n_folds:
        raise ValueError(f"need at least {n_folds} rows, got {data.n}")
    folds = stratified_folds(data.labels, n_folds, seed)
    everything = np.arange(data.n)
    rows = []
    for e, r in itertools.product(grid.log2_lambda_candidates, grid.rank_candidates):
        run_cfg = cfg.replace(lam=2.0**e, rank=int(r))
        part = Partition.blocks(int(r), part_size)
        for f, val in enumerate(folds):
            train = np.setdiff1d(everything, val)
            assert np.intersect1d(train, val).size == 0
            res = fit(data.X[train], gs, part, run_cfg)
            V = res.model.V
            tr_repr = encode(data.X[train], V, run_cfg)
            va_repr = encode(data.X[val], V, run_cfg)
            for k in grid.k_candidates:
                kk = min(int(k), train.size)
                pred = knn_classify(tr_repr, data.labels[train], va_repr, kk)
                rows.append((k, e, r, f, accuracy(pred, data.labels[val])))
            log.info("cv lam=2^%s r=%s fold %d done", e, r, f)
    return _summarize(rows, lambda e: 2.0**e)


def _summarize(rows, to_lambda) -> CVResult:
    sums: dict = {}
    for k, e, r, _, acc in rows:
        sums.setdefault((k, e, r), []).append(acc)
    means = {key: float(np.mean(v)) for key, v in sums.items()}
    best_key = min(means, key=lambda t: (-means[t], t[1], t[2], t[0]))
    k, e, r = best_key
    return CVResult((k, to_lambda(e), r), means[best_key], rows, means)


def cross_validate_raw_knn(data: LabeledDataset, k_candidates=DEFAULT_K, *, n_folds: int = 5,
                           seed: int | None = 0) -> CVResult:
    """Baseline: k-NN directly on the raw rows, same folds as :func:`cross_validate`."""
    folds = stratified_folds(data.labels, n_folds, seed)
    everything = np.arange(data.n)
    rows = []
    for f, val in enumerate(folds):
        train = np.setdiff1d(everything, val)
        for k in k_candidates:
            kk = min(int(k), train.size)
            pred = knn_classify(data.X[train], data.labels[train], data.X[val], kk)
            rows.append((k, None, None, f, accuracy(pred, data.labels[val])))
    return _summarize(rows, lambda e: None)


def explained_energy(model: FactorModel) -> np.ndarray:
    return np.sum(model.U**2, axis=0) * np.sum(model.V**2, axis=0)


def order_by_explained_variance(model: FactorModel, X=None) -> tuple[FactorModel, np.ndarray]:
    """Reorder elements by decreasing ``||U^k||^2 ||V^k||^2`` (stable).

    ``X`` is accepted for interface symmetry and unused by the energy proxy.
    Returns the permuted model and the order (new position -> old index).
    """
    order = np.argsort(-explained_energy(model), kind="stable")
    permuted = FactorModel(
        np.ascontiguousarray(model.U[:, order]),
        np.ascontiguousarray(model.V[:, order]),
        model.partition.permuted(order),
        dict(model.info),
    )
    return permuted, order


def match_elements(V_learned, V_true) -> list[tuple[int, int, float]]:
    """Greedy one-to-one matching by absolute cosine similarity."""
    A = np.asarray(V_learned, dtype=float)
    B = np.asarray(V_true, dtype=float)
    na = np.linalg.norm(A, axis=0)
    nb = np.linalg.norm(B, axis=0)
    C = np.abs(A.T @ B) / np.maximum(np.outer(na, nb), np.finfo(float).tiny)
    pairs = []
    used_a, used_b = set(), set()
    for flat in np.argsort(-C, axis=None, kind="stable"):
        i, j = np.unravel_index(flat, C.shape)
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((int(i), int(j), float(C[i, j])))
    return pairs


def recovery_report(V, grid: GridSpec, rel_tol: float = 1e-3) -> dict:
    ratios = [fill_ratio(V[:, k], grid, rel_tol) for k in range(V.shape[1])]
    sizes = [int(support(V[:, k], rel_tol).size) for k in range(V.shape[1])]
    return {"fill_ratios": ratios, "support_sizes": sizes}


def fraction_rectangular(V, grid: GridSpec, rel_tol: float = 1e-3, min_fill: float = 0.9) -> float:
    ratios = recovery_report(V, grid, rel_tol)["fill_ratios"]
    return float(np.mean([r >= min_fill for r in ratios]))


