"""Alternating minimization for structured sparse dictionary learning.

Solves::

    min_{U, V}  1/(2np) ||X - U V'||_F^2 + lam * sum_M Omega^alpha(V^M)
    s.t.        Omega_u(U^k) <= 1  for every k

by cycling a closed-form eta update, ``tu`` BCD sweeps over the columns of
``U`` (projected onto the unit ball of ``Omega_u``) and ``tv`` BCD sweeps
over the columns of ``V`` (diagonal ridge updates weighted by ``zeta``).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from . import kernels
from .groups import GroupStructure
from .regularizer import EtaState, Partition, RegularizerParams, shared_omega_alpha, update_eta

log = logging.getLogger(__name__)

COEFF_NORMS = ("l2", "l1")


class NumericalError(RuntimeError):
    """The objective became non-finite during a fit."""


@dataclass(frozen=True)
class SolverConfig:
    rank: int
    lam: float = 0.0
    alpha: float = 0.5
    epsilon: float | None = None
    tu: int = 3
    tv: int = 3
    stop_tol: float = 1e-3
    max_iter: int = 500
    nonneg: bool = False
    coeff_norm: str = "l2"
    seed: int | None = 0
    restarts: int = 1

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError(f"rank must be positive, got {self.rank}")
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if self.tu < 1 or self.tv < 1:
            raise ValueError("inner sweep counts tu, tv must be >= 1")
        if not self.stop_tol > 0:
            raise ValueError(f"stop_tol must be positive, got {self.stop_tol}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.coeff_norm not in COEFF_NORMS:
            raise ValueError(f"coeff_norm must be one of {COEFF_NORMS}, got {self.coeff_norm!r}")
        RegularizerParams(self.alpha, self.epsilon)

    @property
    def reg(self) -> RegularizerParams:
        return RegularizerParams(self.alpha, self.epsilon)

    def replace(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


@dataclass
class FactorModel:
    """Coefficients ``U`` (n, r), dictionary ``V`` (p, r) and the element partition."""

    U: np.ndarray
    V: np.ndarray
    partition: Partition
    info: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return self.V.shape[1]

    def reconstruction(self) -> np.ndarray:
        return self.U @ self.V.T


class TraceRow(NamedTuple):
    iteration: int
    objective: float
    loss: float
    penalty: float
    elapsed: float


@dataclass
class FitResult:
    model: FactorModel
    trace: list[TraceRow]
    converged: bool
    etas: EtaState | None = None
    restart_objectives: list[float] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.trace[-1].objective


def _as_data(X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"data must be a 2-D matrix, got shape {X.shape}")
    if X.size == 0:
        raise ValueError("data matrix is empty")
    if not np.all(np.isfinite(X)):
        raise ValueError("data matrix contains non-finite values")
    return X


def _check_model(X, model: FactorModel):
    n, p = X.shape
    if model.U.shape[0] != n or model.V.shape[0] != p or model.U.shape[1] != model.V.shape[1]:
        raise ValueError(
            f"dimension mismatch: X {X.shape}, U {model.U.shape}, V {model.V.shape}"
        )


def objective_terms(X, model: FactorModel, gs: GroupStructure, cfg: SolverConfig) -> tuple[float, float]:
    """Return ``(loss, lam * penalty)`` of the true (non-variational) objective."""
    X = np.asarray(X, dtype=float)
    _check_model(X, model)
    n, p = X.shape
    R = X - model.U @ model.V.T
    loss = float(np.sum(R * R)) / (2.0 * n * p)
    if cfg.lam == 0:
        return loss, 0.0
    pen = shared_omega_alpha(model.V, gs, model.partition, cfg.alpha)
    return loss, cfg.lam * pen


def objective(X, model: FactorModel, gs: GroupStructure, cfg: SolverConfig) -> float:
    loss, pen = objective_terms(X, model, gs, cfg)
    return loss + pen


def project_coeff_ball(w, norm_choice: str = "l2") -> np.ndarray:
    """Euclidean projection onto the unit ball of the l2 or l1 norm."""
    w = np.asarray(w, dtype=float)
    if norm_choice == "l2":
        return kernels.project_l2(w.copy())
    if norm_choice == "l1":
        return kernels.project_l1(w.copy())
    raise ValueError(f"unknown coefficient norm {norm_choice!r}")


def update_U(X, model: FactorModel, cfg: SolverConfig, backend=None) -> np.ndarray:
    """``tu`` BCD sweeps over the columns of U with V fixed; returns the new U."""
    X = np.asarray(X, dtype=float)
    _check_model(X, model)
    k = backend or kernels.backend
    U = np.array(model.U, dtype=np.float64, order="C", copy=True)
    V = np.asarray(model.V, dtype=np.float64)
    XV = np.ascontiguousarray(X @ V)
    VtV = np.ascontiguousarray(V.T @ V)
    skipped = k.sweep_u(U, XV, VtV, cfg.tu, cfg.coeff_norm == "l1", cfg.nonneg)
    if skipped:
        log.debug("U update: skipped %d column updates with zero dictionary element", skipped)
    return U


def update_V(X, model: FactorModel, etas: EtaState, cfg: SolverConfig, backend=None) -> np.ndarray:
    """``tv`` BCD sweeps over the columns of V with U and eta fixed; returns the new V."""
    X = np.asarray(X, dtype=float)
    _check_model(X, model)
    n, p = X.shape
    k = backend or kernels.backend
    V = np.array(model.V, dtype=np.float64, order="C", copy=True)
    U = np.asarray(model.U, dtype=np.float64)
    XtU = np.ascontiguousarray(X.T @ U)
    UtU = np.ascontiguousarray(U.T @ U)
    zeta = np.ascontiguousarray(etas.zeta, dtype=np.float64)
    dead = k.sweep_v(V, XtU, UtU, zeta, n * p * cfg.lam, cfg.tv, cfg.nonneg)
    if dead:
        log.debug("V update: %d dead-element updates (zero coefficients, lam=0)", dead)
    return V


def initialize(X, cfg: SolverConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Uniform(-1, 1) factors; U columns projected, V scaled to the data."""
    n, p = X.shape
    r = cfg.rank
    U = rng.uniform(-1.0, 1.0, size=(n, r))
    V = rng.uniform(-1.0, 1.0, size=(p, r))
    if cfg.nonneg:
        U, V = np.abs(U), np.abs(V)
    for k in range(r):
        U[:, k] = project_coeff_ball(U[:, k], cfg.coeff_norm)
    V *= np.linalg.norm(X) / (r * np.sqrt(n * p))
    return np.ascontiguousarray(U), np.ascontiguousarray(V)


def _fit_once(X, gs, part, cfg, U, V, callback, backend):
    model = FactorModel(U, V, part)
    t0 = time.perf_counter()
    loss, pen = objective_terms(X, model, gs, cfg)
    trace = [TraceRow(0, loss + pen, loss, pen, 0.0)]
    reg = cfg.reg
    etas = None
    converged = False
    for it in range(1, cfg.max_iter + 1):
        etas = update_eta(model.V, gs, part, reg)
        model.U = update_U(X, model, cfg, backend)
        model.V = update_V(X, model, etas, cfg, backend)
        loss, pen = objective_terms(X, model, gs, cfg)
        f = loss + pen
        if not np.isfinite(f):
            raise NumericalError(f"objective became non-finite at iteration {it} (loss={loss}, penalty={pen})")
        trace.append(TraceRow(it, f, loss, pen, time.perf_counter() - t0))
        if callback is not None:
            callback(it, model)
        prev = trace[-2].objective
        if prev == 0 or (prev - f) < cfg.stop_tol * abs(prev):
            converged = True
            break
    return FitResult(model, trace, converged, etas)


def fit(
    X,
    gs: GroupStructure,
    part: Partition | None = None,
    cfg: SolverConfig | None = None,
    *,
    init: tuple[np.ndarray, np.ndarray] | None = None,
    callback: Callable[[int, FactorModel], None] | None = None,
    backend=None,
) -> FitResult:
    """Learn ``(U, V)`` for data ``X`` (n, p).

    Parameters
    ----------
    X : array_like, shape (n, p)
    gs : GroupStructure
        Must cover all ``p`` variables.
    part : Partition, optional
        Classes of elements sharing a support; singletons by default.
    cfg : SolverConfig
    init : (U0, V0), optional
        Starting point; overrides random initialization (and restarts).
    callback : callable, optional
        Called as ``callback(iteration, model)`` after each outer iteration.

    Returns
    -------
    FitResult
        The best model over ``cfg.restarts`` random starts (lowest final
        objective) and its per-iteration objective trace.
    """
    if cfg is None:
        raise ValueError("a SolverConfig is required")
    X = _as_data(X)
    n, p = X.shape
    gs.check()
    if gs.p != p:
        raise ValueError(f"group structure has p={gs.p} but data has {p} columns")
    part = part if part is not None else Partition.singletons(cfg.rank)
    if part.r != cfg.rank:
        raise ValueError(f"partition covers {part.r} elements, rank is {cfg.rank}")

    if init is not None:
        U0 = np.array(init[0], dtype=np.float64, order="C", copy=True)
        V0 = np.array(init[1], dtype=np.float64, order="C", copy=True)
        if U0.shape != (n, cfg.rank) or V0.shape != (p, cfg.rank):
            raise ValueError(f"init shapes {U0.shape}, {V0.shape} do not match ({n}, {cfg.rank}), ({p}, {cfg.rank})")
        starts = [(U0, V0)]
    else:
        seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
        starts = [initialize(X, cfg, np.random.default_rng(s)) for s in seeds]

    best = None
    finals = []
    for i, (U0, V0) in enumerate(starts):
        res = _fit_once(X, gs, part, cfg, U0, V0, callback, backend)
        finals.append(res.objective)
        log.info("restart %d: objective %.6g after %d iterations", i, res.objective, len(res.trace) - 1)
        if best is None or res.objective < best.objective:
            best = res
    best.restart_objectives = finals
    best.model.info.update(alpha=cfg.alpha, lam=cfg.lam, coeff_norm=cfg.coeff_norm, nonneg=cfg.nonneg)
    return best


def encode(X_new, V, cfg: SolverConfig, *, tol: float | None = None, max_iter: int | None = None,
           backend=None) -> np.ndarray:
    """Coefficients of ``X_new`` (m, p) on the fixed dictionary ``V`` (p, r).

    Repeats blocks of ``cfg.tu`` sweeps from ``U = 0`` until the relative
    change of U falls below ``tol`` (default ``cfg.stop_tol``).
    """
    X_new = np.ascontiguousarray(X_new, dtype=np.float64)
    if X_new.ndim == 1:
        X_new = X_new[None, :]
    V = np.ascontiguousarray(V, dtype=np.float64)
    if X_new.shape[1] != V.shape[0]:
        raise ValueError(f"data has {X_new.shape[1]} columns, dictionary has {V.shape[0]} rows")
    tol = cfg.stop_tol if tol is None else tol
    max_iter = cfg.max_iter if max_iter is None else max_iter
    k = backend or kernels.backend
    m, r = X_new.shape[0], V.shape[1]
    U = np.zeros((m, r))
    XV = np.ascontiguousarray(X_new @ V)
    VtV = np.ascontiguousarray(V.T @ V)
    l1 = cfg.coeff_norm == "l1"
    for _ in range(max_iter):
        prev = U.copy()
        k.sweep_u(U, XV, VtV, cfg.tu, l1, cfg.nonneg)
        scale = np.linalg.norm(U)
        if scale == 0 or np.linalg.norm(U - prev) <= tol * scale:
            break
    return U
