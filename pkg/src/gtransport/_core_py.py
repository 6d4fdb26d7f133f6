"""Pure-NumPy estimation kernels.

Reference implementation of the backend interface; the compiled module in
``_core`` mirrors these routines exactly.  Both operate on C-contiguous
float64 arrays and never mutate their inputs.

The kernels implement one bootstrap replicate of the transport estimator:
form the weighted normal equations on the source design, solve them by
Cholesky after Jacobi equilibration, and contract the exposure-interaction
coefficients against weighted target means of the covariate expansion.
Failure (a numerically singular resample) is reported via a flag rather than
an exception so callers can redraw.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

NAME = "pure"

#: Minimum acceptable Cholesky pivot of the equilibrated (unit-diagonal)
#: normal matrix.  A pivot below this means a column is collinear with its
#: predecessors to machine precision (residual variance share < 1e-14), i.e.
#: the resample has numerically lost rank even if the factorization happened
#: to run to completion.
RANK_TOL_PIVOT = 1e-7


def weighted_gram(x: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Normal-equation pieces ``(X' diag(w) X, X' (w * y))``.

    Rows with zero weight are dropped before the products, so resamples that
    omit most rows cost proportionally less.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if y.shape[0] != x.shape[0] or w.shape[0] != x.shape[0]:
        raise ValueError("x, y and w must have matching row counts")
    mask = w > 0
    sqrt_w = np.sqrt(w[mask])
    scaled = x[mask] * sqrt_w[:, None]
    return scaled.T @ scaled, scaled.T @ (sqrt_w * y[mask])


def solve_spd(a: np.ndarray, b: np.ndarray):
    """Solve ``a @ beta = b`` for symmetric positive definite `a`.

    Equilibrates by the diagonal (so wildly different column scales do not
    masquerade as rank loss), then attempts a Cholesky solve.  Returns
    ``(beta, ok)``; ``ok`` is False when the diagonal is not strictly
    positive, the factorization fails, or any pivot falls below
    :data:`RANK_TOL_PIVOT`; `beta` is zeros in that case.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    p = a.shape[0]
    if a.shape != (p, p) or b.shape[0] != p:
        raise ValueError("a must be square and match b")
    diag = np.diagonal(a)
    if p == 0 or not np.all(diag > 0) or not np.all(np.isfinite(diag)):
        return np.zeros(p), False
    inv_scale = 1.0 / np.sqrt(diag)
    scaled = a * inv_scale[:, None] * inv_scale[None, :]
    try:
        factor = cho_factor(scaled, lower=False, check_finite=False)
        if np.diagonal(factor[0]).min() < RANK_TOL_PIVOT:
            return np.zeros(p), False
        u = cho_solve(factor, b * inv_scale, check_finite=False)
    except LinAlgError:
        return np.zeros(p), False
    if not np.all(np.isfinite(u)):
        return np.zeros(p), False
    return u * inv_scale, True


def weighted_column_means(c: np.ndarray, w: np.ndarray):
    """Per-column means of `c` under row weights `w`; ``(means, ok)``."""
    c = np.asarray(c, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if w.shape[0] != c.shape[0]:
        raise ValueError("c and w must have matching row counts")
    total = float(w.sum())
    if total <= 0:
        return np.zeros(c.shape[1]), False
    return (w @ c) / total, True


def replicate_phi(x: np.ndarray, y: np.ndarray, w_src: np.ndarray,
                  c_tgt: np.ndarray, w_tgt: np.ndarray, zcol: np.ndarray):
    """One weighted transport estimate ``(phi, ok)``.

    `x` is the retained source design, `c_tgt` the target covariate
    expansion, and ``zcol[k]`` the index within the retained design of the
    exposure-interaction column matching expansion term ``k`` (-1 when that
    column was dropped at the point fit).  `w_src` and `w_tgt` are resample
    counts per row.
    """
    a, b = weighted_gram(x, y, w_src)
    beta, ok = solve_spd(a, b)
    if not ok:
        return 0.0, False
    means, ok = weighted_column_means(c_tgt, w_tgt)
    if not ok:
        return 0.0, False
    zcol = np.asarray(zcol, dtype=np.int64)
    if zcol.shape[0] != means.shape[0]:
        raise ValueError("zcol must have one entry per expansion column")
    keep = zcol >= 0
    return float(means[keep] @ beta[zcol[keep]]), True
