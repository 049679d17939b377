"""Lawson-Hanson non-negative least squares, compiled with numba.

Used by the polytope projection through the least-distance-programming
reduction; problems there are tiny (tens of columns) but solved once per
episode, so interpreter overhead dominates anything written in numpy.
"""
import numba
import numpy as np


@numba.njit(cache=True)
def _ls_passive(A, b, passive):
    idx = np.flatnonzero(passive)
    sub = np.empty((A.shape[0], idx.size))
    for j in range(idx.size):
        sub[:, j] = A[:, idx[j]]
    z = np.linalg.lstsq(sub, b)[0]
    return idx, z


@numba.njit(cache=True)
def nnls(A, b, max_iter=0):
    """Solve ``min ||A x - b||_2`` subject to ``x >= 0``.

    Returns ``(x, status)`` with status 0 on convergence and 1 when the
    iteration cap is hit.
    """
    m, n = A.shape
    if max_iter <= 0:
        max_iter = 3 * n + 30
    x = np.zeros(n)
    passive = np.zeros(n, dtype=np.bool_)
    blocked = np.zeros(n, dtype=np.bool_)
    tol = 10.0 * max(m, n) * 2.220446049250313e-16 * np.abs(A).sum(axis=0).max()
    w = A.T @ b
    it = 0
    while True:
        j, best = -1, tol
        for k in range(n):
            if not passive[k] and not blocked[k] and w[k] > best:
                best = w[k]
                j = k
        if j < 0:
            return x, 0
        passive[j] = True
        idx, z = _ls_passive(A, b, passive)
        # a column that cannot enter with a positive weight is numerically
        # dependent on the passive set; skip it until x moves
        pos = np.searchsorted(idx, j)
        if z[pos] <= tol:
            passive[j] = False
            blocked[j] = True
            continue
        while True:
            it += 1
            if it > max_iter:
                return x, 1
            if z.min() > 0.0:
                x[:] = 0.0
                for k in range(idx.size):
                    x[idx[k]] = z[k]
                break
            alpha = np.inf
            for k in range(idx.size):
                if z[k] <= 0.0:
                    xk = x[idx[k]]
                    step = xk / (xk - z[k])
                    if step < alpha:
                        alpha = step
            for k in range(idx.size):
                i = idx[k]
                x[i] += alpha * (z[k] - x[i])
                if x[i] <= tol:
                    x[i] = 0.0
                    passive[i] = False
            if not passive.any():
                break
            idx, z = _ls_passive(A, b, passive)
        blocked[:] = False
        w = A.T @ (b - A @ x)
