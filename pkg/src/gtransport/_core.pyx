# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled estimation kernels.

Drop-in replacement for the pure-NumPy reference module: same function
names, signatures, and semantics, with the row compaction done in C and the
dense algebra handed straight to BLAS/LAPACK (``dsyrk``/``dgemv``/``dposv``).
C-contiguous buffers are passed to the Fortran routines untransposed: a
C-order (m, p) array reads, in column-major terms, as the (p, m) transpose,
which is exactly the operand these products need.
"""

import numpy as np

from libc.math cimport isfinite, sqrt
from libc.stdint cimport int64_t
from scipy.linalg.cython_blas cimport dgemv, dsyrk
from scipy.linalg.cython_lapack cimport dposv

NAME = "compiled"

# Minimum acceptable Cholesky pivot of the equilibrated normal matrix;
# see the reference module for the rationale.
RANK_TOL_PIVOT = 1e-7


def weighted_gram(x, y, w):
    """Normal-equation pieces ``(X' diag(w) X, X' (w * y))``."""
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], p = xv.shape[1]
    if yv.shape[0] != n or wv.shape[0] != n:
        raise ValueError("x, y and w must have matching row counts")

    a_arr = np.zeros((p, p))
    b_arr = np.zeros(p)
    if n == 0 or p == 0:
        return a_arr, b_arr

    scaled_arr = np.empty((n, p))
    scaled_y_arr = np.empty(n)
    cdef double[:, ::1] scaled = scaled_arr
    cdef double[::1] scaled_y = scaled_y_arr
    cdef double[:, ::1] av = a_arr
    cdef double[::1] bv = b_arr
    cdef Py_ssize_t i, j, count = 0
    cdef double wi, sw
    for i in range(n):
        wi = wv[i]
        if wi > 0:
            sw = sqrt(wi)
            for j in range(p):
                scaled[count, j] = xv[i, j] * sw
            scaled_y[count] = yv[i] * sw
            count += 1
    if count == 0:
        return a_arr, b_arr

    cdef int pi = <int> p, ki = <int> count, inc = 1
    cdef double one = 1.0, zero = 0.0
    # Column-major view of `scaled` is the (p, count) matrix X'; dsyrk then
    # produces X' X, landing in the upper triangle of the C-order result.
    dsyrk("L", "N", &pi, &ki, &one, &scaled[0, 0], &pi, &zero, &av[0, 0], &pi)
    for i in range(p):
        for j in range(i):
            av[i, j] = av[j, i]
    dgemv("N", &pi, &ki, &one, &scaled[0, 0], &pi, &scaled_y[0], &inc,
          &zero, &bv[0], &inc)
    return a_arr, b_arr


def solve_spd(a, b):
    """Equilibrated Cholesky solve; ``(beta, ok)`` with zeros on failure."""
    cdef const double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t p = av.shape[0]
    if av.shape[1] != p or bv.shape[0] != p:
        raise ValueError("a must be square and match b")
    beta_arr = np.zeros(p)
    if p == 0:
        return beta_arr, False
    cdef double[::1] beta = beta_arr

    inv_scale_arr = np.empty(p)
    cdef double[::1] inv_scale = inv_scale_arr
    cdef Py_ssize_t i, j
    cdef double d
    for i in range(p):
        d = av[i, i]
        if not (d > 0.0 and isfinite(d)):
            return beta_arr, False
        inv_scale[i] = 1.0 / sqrt(d)

    work_arr = np.empty((p, p))
    rhs_arr = np.empty(p)
    cdef double[:, ::1] work = work_arr
    cdef double[::1] rhs = rhs_arr
    for i in range(p):
        for j in range(p):
            work[i, j] = av[i, j] * inv_scale[i] * inv_scale[j]
        rhs[i] = bv[i] * inv_scale[i]

    cdef int pi = <int> p, nrhs = 1, info = 0
    # The scaled matrix is symmetric with both triangles filled, so the
    # row/column-major distinction is immaterial to dposv.
    dposv("U", &pi, &nrhs, &work[0, 0], &pi, &rhs[0], &pi, &info)
    if info != 0:
        return beta_arr, False
    for i in range(p):
        if work[i, i] < RANK_TOL_PIVOT:
            return beta_arr, False
    for i in range(p):
        if not isfinite(rhs[i]):
            return beta_arr, False
    for i in range(p):
        beta[i] = rhs[i] * inv_scale[i]
    return beta_arr, True


def weighted_column_means(c, w):
    """Per-column means of `c` under row weights `w`; ``(means, ok)``."""
    cdef const double[:, ::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = cv.shape[0], q = cv.shape[1]
    if wv.shape[0] != n:
        raise ValueError("c and w must have matching row counts")
    means_arr = np.zeros(q)
    cdef double[::1] means = means_arr
    cdef Py_ssize_t i
    cdef double total = 0.0
    for i in range(n):
        total += wv[i]
    if total <= 0.0:
        return means_arr, False
    if q == 0:
        return means_arr, True

    cdef int qi = <int> q, ni = <int> n, inc = 1
    cdef double zero = 0.0
    cdef double inv_total = 1.0 / total
    dgemv("N", &qi, &ni, &inv_total, &cv[0, 0], &qi, &wv[0], &inc,
          &zero, &means[0], &inc)
    return means_arr, True


def replicate_phi(x, y, w_src, c_tgt, w_tgt, zcol):
    """One weighted transport estimate ``(phi, ok)``; see the reference
    module for the full contract."""
    a, b = weighted_gram(x, y, w_src)
    beta, ok = solve_spd(a, b)
    if not ok:
        return 0.0, False
    means, ok = weighted_column_means(c_tgt, w_tgt)
    if not ok:
        return 0.0, False

    cdef const double[::1] mv = means
    cdef const double[::1] betav = beta
    cdef const int64_t[::1] zv = np.ascontiguousarray(zcol, dtype=np.int64)
    if zv.shape[0] != mv.shape[0]:
        raise ValueError("zcol must have one entry per expansion column")
    cdef Py_ssize_t k
    cdef int64_t j
    cdef double phi = 0.0
    for k in range(zv.shape[0]):
        j = zv[k]
        if j >= 0:
            if j >= betav.shape[0]:
                raise IndexError("zcol index out of range")
            phi += mv[k] * betav[j]
    return phi, True
