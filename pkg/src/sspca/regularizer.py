"""The l_alpha/l_2 group quasi-norm and its variational (eta) form.

For ``alpha`` in (0, 2) and ``beta = alpha / (2 - alpha)``::

    ||y||_alpha = min_{z >= 0}  1/2 sum_j y_j^2 / z_j + 1/2 ||z||_beta

with minimizer ``z_j = |y_j|^(2-alpha) ||y||_alpha^(alpha-1)``. Applied to
the vector of group block norms this turns the penalty on the dictionary
into a diagonal quadratic with weights ``1 / zeta``, which is what makes
the dictionary update closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .groups import GroupStructure

EPS_REL = 1e-9
EPS_FLOOR = 1e-12


class Partition:
    """Partition of the dictionary element indices ``0..r-1`` into classes.

    Elements of one class share a single set of eta variables, hence a
    common support pattern.
    """

    def __init__(self, classes: Sequence[Sequence[int]], r: int | None = None):
        classes = tuple(tuple(sorted(int(k) for k in c)) for c in classes)
        flat = [k for c in classes for k in c]
        if r is None:
            r = len(flat)
        if any(len(c) == 0 for c in classes):
            raise ValueError("partition classes must be nonempty")
        if sorted(flat) != list(range(r)):
            raise ValueError(f"classes {classes} do not partition 0..{r - 1}")
        self.classes = classes
        self.r = r
        idx = np.empty(r, dtype=np.intp)
        for m, c in enumerate(classes):
            idx[list(c)] = m
        idx.setflags(write=False)
        self.class_index = idx

    @classmethod
    def singletons(cls, r: int) -> "Partition":
        return cls([(k,) for k in range(r)], r)

    @classmethod
    def blocks(cls, r: int, size: int) -> "Partition":
        """Consecutive classes of ``size`` elements (the last may be shorter)."""
        if size < 1:
            raise ValueError("class size must be positive")
        return cls([tuple(range(s, min(s + size, r))) for s in range(0, r, size)], r)

    @classmethod
    def parse(cls, text: str, r: int | None = None) -> "Partition":
        """Parse ``"1,2;3"`` (1-based, classes separated by ``;``)."""
        classes = [[int(k) - 1 for k in c.split(",") if k.strip()] for c in text.split(";") if c.strip()]
        return cls(classes, r)

    def format(self) -> str:
        return ";".join(",".join(str(k + 1) for k in c) for c in self.classes)

    @property
    def is_singleton(self) -> bool:
        return all(len(c) == 1 for c in self.classes)

    def __len__(self):
        return len(self.classes)

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return self.r == other.r and self.classes == other.classes

    def __repr__(self):
        return f"Partition({self.format()!r})"

    def permuted(self, order) -> "Partition":
        """Partition after reordering elements so that new element ``i`` is old ``order[i]``."""
        new_of_old = np.empty(self.r, dtype=np.intp)
        new_of_old[np.asarray(order)] = np.arange(self.r)
        classes = sorted((tuple(sorted(int(new_of_old[k]) for k in c)) for c in self.classes))
        return Partition(classes, self.r)


@dataclass(frozen=True)
class RegularizerParams:
    """``alpha`` in (0, 2). ``epsilon=None`` selects scale-relative smoothing."""

    alpha: float = 0.5
    epsilon: float | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")

    @property
    def beta(self) -> float:
        return self.alpha / (2.0 - self.alpha)

    def smoothing(self, eta_max: float) -> float:
        if self.epsilon is not None:
            return float(self.epsilon)
        return max(EPS_REL * float(eta_max), EPS_FLOOR)


@dataclass
class EtaState:
    """``eta`` has shape (n_groups, n_classes); ``zeta`` has shape (p, r)."""

    eta: np.ndarray
    zeta: np.ndarray
    epsilon: float = 0.0


def lp_norm(x, a: float) -> float:
    """``(sum |x_i|^a)^(1/a)`` for any ``a > 0``, computed scale-safely."""
    x = np.abs(np.asarray(x, dtype=float)).ravel()
    m = x.max(initial=0.0)
    if m == 0:
        return 0.0
    if a == 1:
        return float(x.sum())
    return float(m * np.sum((x / m) ** a) ** (1.0 / a))


def _check_vector(y, gs: GroupStructure) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != gs.p:
        raise ValueError(f"expected a vector of length {gs.p}, got shape {y.shape}")
    return y


def _check_matrix(V, gs: GroupStructure, part: Partition | None = None) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if V.ndim != 2 or V.shape[0] != gs.p:
        raise ValueError(f"expected a matrix with {gs.p} rows, got shape {V.shape}")
    if part is not None and part.r != V.shape[1]:
        raise ValueError(f"partition covers {part.r} elements but V has {V.shape[1]} columns")
    return V


def group_norms(y, gs: GroupStructure) -> np.ndarray:
    """Block norms ``||d^G o y||_2`` for every group."""
    y = _check_vector(y, gs)
    m = np.abs(y).max(initial=0.0)
    if m == 0:
        return np.zeros(len(gs))
    y = y / m
    return np.sqrt((gs.weight_matrix**2) @ (y * y)) * m


def omega_alpha(y, gs: GroupStructure, alpha: float) -> float:
    """``(sum_G ||d^G o y||_2^alpha)^(1/alpha)``; ``alpha=1`` is the convex norm."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return lp_norm(group_norms(y, gs), alpha)


def lemma_objective(y, z, alpha: float) -> float:
    """``1/2 sum y_j^2/z_j + 1/2 ||z||_beta`` with ``a/0 = inf`` (``0/0 = 0``)."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    beta = alpha / (2.0 - alpha)
    y2 = y * y
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(z > 0, y2 / np.where(z > 0, z, 1.0), np.where(y2 > 0, np.inf, 0.0))
    return 0.5 * float(q.sum()) + 0.5 * lp_norm(z, beta)


def eta_minimizer(y, alpha: float) -> np.ndarray:
    """Closed-form minimizer ``z_j = |y_j|^(2-alpha) ||y||_alpha^(alpha-1)``."""
    if not 0 < alpha < 2:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    y = np.abs(np.asarray(y, dtype=float))
    n = lp_norm(y, alpha)
    if n == 0:
        return np.zeros_like(y)
    return y ** (2.0 - alpha) * n ** (alpha - 1.0)


def block_norms(V, gs: GroupStructure, part: Partition) -> np.ndarray:
    """Norms of ``(V^k_i d^G_i)_{i in G, k in M}``, shape (n_groups, n_classes)."""
    V = _check_matrix(V, gs, part)
    # per-class rescaling keeps squares clear of under/overflow
    scale = np.array([np.abs(V[:, list(c)]).max(initial=0.0) for c in part.classes])
    safe = np.where(scale > 0, scale, 1.0)
    W = V / safe[part.class_index]
    D2 = gs.weight_matrix**2
    # column-wise matvecs round exactly like group_norms, so singleton classes agree bitwise
    sq = np.column_stack([D2 @ (W[:, k] * W[:, k]) for k in range(W.shape[1])]) if W.shape[1] else np.zeros((len(gs), 0))
    if part.is_singleton:
        out = sq[:, [c[0] for c in part.classes]]
    else:
        out = np.empty((sq.shape[0], len(part)))
        for m, c in enumerate(part.classes):
            out[:, m] = sq[:, list(c)].sum(axis=1)
    return np.sqrt(out) * scale


def zeta_from_eta(eta, gs: GroupStructure, part: Partition) -> np.ndarray:
    """``zeta_jk = (sum_{G ni j} (d^G_j)^2 / eta^G_class(k))^-1``, shape (p, r)."""
    eta = np.asarray(eta, dtype=float)
    D2t = gs.weight_matrix.T**2
    pos = eta > 0
    inv = np.divide(1.0, eta, out=np.zeros_like(eta), where=pos)
    s = D2t @ inv  # (p, n_classes)
    with np.errstate(divide="ignore"):
        zc = 1.0 / s
    if not pos.all():
        # a member of any group with eta = 0 gets zeta = 0 (a/0 = inf convention)
        zc[(D2t > 0) @ ~pos] = 0.0
    return np.ascontiguousarray(zc[:, part.class_index])


def update_eta(V, gs: GroupStructure, part: Partition, params: RegularizerParams) -> EtaState:
    """Closed-form eta for the current dictionary, smoothed by ``+ epsilon``."""
    B = block_norms(V, gs, part)
    alpha = params.alpha
    eta = np.zeros_like(B)
    for m in range(B.shape[1]):
        eta[:, m] = eta_minimizer(B[:, m], alpha)
    eps = params.smoothing(eta.max(initial=0.0))
    eta += eps
    return EtaState(eta=eta, zeta=zeta_from_eta(eta, gs, part), epsilon=eps)


def variational_penalty(V, etas: EtaState, part: Partition, params: RegularizerParams) -> float:
    """``sum_M [sum_{k in M} V^k' Diag(zeta^M)^-1 V^k + ||eta_M||_beta]``.

    Callers scale by ``lambda / 2``. Equals ``2 * shared_omega_alpha`` at
    the unsmoothed optimal eta.
    """
    V = np.asarray(V, dtype=float)
    zeta = etas.zeta
    V2 = V * V
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(zeta > 0, V2 / np.where(zeta > 0, zeta, 1.0), np.where(V2 > 0, np.inf, 0.0))
    beta = params.beta
    return float(q.sum()) + sum(lp_norm(etas.eta[:, m], beta) for m in range(len(part)))


def shared_omega_alpha(V, gs: GroupStructure, part: Partition | None, alpha: float) -> float:
    """``sum_M Omega^alpha`` of the class-wise l2-composed dictionary."""
    V = _check_matrix(V, gs, part)
    if part is None:
        part = Partition.singletons(V.shape[1])
    B = block_norms(V, gs, part)
    return float(sum(lp_norm(B[:, m], alpha) for m in range(B.shape[1])))
