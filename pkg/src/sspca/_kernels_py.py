"""Pure-Python/numpy block coordinate sweeps.

Reference implementation of the kernels in ``_kernels.pyx``; used when the
compiled module is unavailable or ``SSPCA_PURE_PYTHON`` is set.
"""

import numpy as np


def project_l2(w):
    nrm = np.sqrt(np.dot(w, w))
    if nrm > 1.0:
        return w / nrm
    return w


def project_l1(w):
    # sort-based projection onto the unit l1 ball
    a = np.abs(w)
    if a.sum() <= 1.0:
        return w
    mu = np.sort(a)[::-1]
    css = np.cumsum(mu)
    ks = np.arange(1, a.size + 1)
    rho = np.flatnonzero(mu - (css - 1.0) / ks > 0)[-1]
    theta = (css[rho] - 1.0) / (rho + 1)
    return np.sign(w) * np.maximum(a - theta, 0.0)


def sweep_u(U, XV, VtV, n_sweeps, l1, nonneg):
    """In-place BCD sweeps over the columns of ``U``; returns skipped updates."""
    project = project_l1 if l1 else project_l2
    r = U.shape[1]
    skipped = 0
    for _ in range(n_sweeps):
        for k in range(r):
            d = VtV[k, k]
            if d <= 0.0:
                skipped += 1
                continue
            w = U[:, k] + (XV[:, k] - U @ VtV[:, k]) / d
            if nonneg:
                w = np.maximum(w, 0.0)
            U[:, k] = project(w)
    return skipped


def sweep_v(V, XtU, UtU, zeta, nplam, n_sweeps, nonneg):
    """In-place BCD sweeps over the columns of ``V``; returns dead-element updates."""
    r = V.shape[1]
    dead = 0
    for _ in range(n_sweeps):
        for k in range(r):
            c = UtU[k, k]
            if c <= 0.0 and nplam <= 0.0:
                V[:, k] = 0.0
                dead += 1
                continue
            g = XtU[:, k] - V @ UtU[:, k] + c * V[:, k]
            if nplam <= 0.0:
                v = g / c
            else:
                z = zeta[:, k]
                v = z * g / (c * z + nplam)
            if nonneg:
                v = np.maximum(v, 0.0)
            V[:, k] = v
    return dead
