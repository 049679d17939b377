"""Dense two-phase revised simplex with Bland's rule.

Small problems only (hundreds of rows at most).  Bland's rule makes the
pivot sequence, and hence the returned vertex, fully deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded_guard"


@dataclass
class SimplexResult:
    status: str
    x: np.ndarray | None
    value: float
    iterations: int


def _iterate(A, b, c, basis, allowed, tol, max_iter):
    """Primal simplex on ``max c x, A x = b, x >= 0`` from a feasible basis.

    ``basis`` is updated in place.  Returns (status, iterations).
    """
    m, n = A.shape
    it = 0
    while it < max_iter:
        it += 1
        B = A[:, basis]
        y = np.linalg.solve(B.T, c[basis])
        reduced = c - A.T @ y
        reduced[basis] = 0.0
        reduced[~allowed] = 0.0
        entering = np.flatnonzero(reduced > tol)
        if entering.size == 0:
            return OPTIMAL, it
        j = int(entering[0])
        d = np.linalg.solve(B, A[:, j])
        xb = np.linalg.solve(B, b)
        rows = np.flatnonzero(d > tol)
        if rows.size == 0:
            return UNBOUNDED, it
        ratios = xb[rows] / d[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol * max(1.0, abs(best))]
        # Bland: among tied rows leave the variable with the smallest index
        leave = ties[np.argmin(np.asarray(basis)[ties])]
        basis[leave] = j
    raise RuntimeError(f"simplex did not terminate in {max_iter} iterations")


def linprog_max(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, *, tol: float = 1e-10,
                max_iter: int = 50_000) -> SimplexResult:
    """Maximize ``c x`` s.t. ``A_eq x = b_eq``, ``A_ub x <= b_ub``, ``x >= 0``."""
    c = np.asarray(c, dtype=float)
    n = c.size
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    k_ub = A_ub.shape[0]
    # standard form: original vars, slacks for <= rows
    A = np.block([[A_eq, np.zeros((A_eq.shape[0], k_ub))], [A_ub, np.eye(k_ub)]])
    b = np.concatenate([b_eq, b_ub])
    cs = np.concatenate([c, np.zeros(k_ub)])
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0
    m, ns = A.shape
    if m == 0:
        # only x >= 0: bounded iff c <= 0
        if np.any(c > tol):
            return SimplexResult(UNBOUNDED, None, np.inf, 0)
        return SimplexResult(OPTIMAL, np.zeros(n), 0.0, 0)

    # phase I: artificials on every row
    Aa = np.hstack([A, np.eye(m)])
    basis = list(range(ns, ns + m))
    phase1 = np.concatenate([np.zeros(ns), -np.ones(m)])
    allowed = np.ones(ns + m, dtype=bool)
    status, it1 = _iterate(Aa, b, phase1, basis, allowed, tol, max_iter)
    xb = np.linalg.solve(Aa[:, basis], b)
    infeas = sum(xb[i] for i, j in enumerate(basis) if j >= ns)
    if infeas > 1e-8 * max(1.0, np.abs(b).max()):
        return SimplexResult(INFEASIBLE, None, -np.inf, it1)

    # drive zero-level artificials out; an artificial that cannot leave marks
    # its own constraint row as redundant
    dropped = []
    for i in range(m):
        if basis[i] < ns:
            continue
        Binv_row = np.linalg.solve(Aa[:, basis].T, np.eye(m)[i])
        coeffs = Binv_row @ A
        cand = [j for j in np.flatnonzero(np.abs(coeffs) > 1e-9) if j not in basis]
        if cand:
            basis[i] = int(cand[0])
        else:
            dropped.append(i)
    rows = np.setdiff1d(np.arange(m), [basis[i] - ns for i in dropped])
    A2, b2 = A[rows], b[rows]
    basis2 = [j for i, j in enumerate(basis) if i not in dropped]
    allowed = np.ones(ns, dtype=bool)
    status, it2 = _iterate(A2, b2, cs, basis2, allowed, tol, max_iter)
    if status != OPTIMAL:
        return SimplexResult(status, None, np.inf, it1 + it2)
    x = np.zeros(ns)
    x[basis2] = np.linalg.solve(A2[:, basis2], b2)
    x = np.maximum(x, 0.0)
    return SimplexResult(OPTIMAL, x[:n], float(c @ x[:n]), it1 + it2)
