"""Brute-force reference solvers used only by the tests.

Constraint systems are rebuilt here from the dense kernel with plain loops,
and the solvers enumerate active sets / vertices instead of iterating, so
agreement with the library is a genuine cross-check.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def occupancy_system(layer_sizes, kernel, n_actions, p_bar=None, eps=None):
    """``(A, b, G, h, triples)`` for occupancy vectors in the library's order.

    With ``p_bar``/``eps`` (dicts keyed by ``(x, a)``) the kernel equalities
    are replaced by L1-ball sign constraints around ``p_bar``.
    """
    start = [0]
    for s in layer_sizes:
        start.append(start[-1] + s)
    triples = []
    for k in range(len(layer_sizes) - 1):
        for x in range(start[k], start[k + 1]):
            for a in range(n_actions):
                for y in range(start[k + 1], start[k + 2]):
                    triples.append((x, a, y, k))
    n = len(triples)
    A, b = [], []
    for k in range(len(layer_sizes) - 1):
        A.append([1.0 if t[3] == k else 0.0 for t in triples])
        b.append(1.0)
    for x in range(start[1], start[-2]):
        A.append([(t[0] == x) - (t[2] == x) for t in triples])
        b.append(0.0)
    G = [[-1.0 if j == i else 0.0 for j in range(n)] for i in range(n)]
    h = [0.0] * n
    pairs = sorted({(t[0], t[1]) for t in triples})
    for (x, a) in pairs:
        idx = [j for j, t in enumerate(triples) if t[0] == x and t[1] == a]
        ys = [triples[j][2] for j in idx]
        if p_bar is None:
            for j, y in zip(idx, ys):
                row = [0.0] * n
                for jj in idx:
                    row[jj] -= kernel[x, a, y]
                row[j] += 1.0
                A.append(row)
                b.append(0.0)
        else:
            for signs in itertools.product((1, -1), repeat=len(idx)):
                row = [0.0] * n
                for s, j, y in zip(signs, idx, ys):
                    row[j] += s
                    for jj in idx:
                        row[jj] -= s * p_bar[(x, a)][y]
                for jj in idx:
                    row[jj] -= eps[(x, a)]
                G.append(row)
                h.append(0.0)
    return np.array(A, float), np.array(b), np.array(G, float), np.array(h), triples


def _null_space(A, b):
    U, s, Vt = np.linalg.svd(A)
    rank = int(np.sum(s > 1e-10 * s[0]))
    Z = Vt[rank:].T
    qp = np.linalg.lstsq(A, b, rcond=None)[0]
    return Z, qp


def _subsets(m, k):
    return np.array(list(itertools.combinations(range(m), k)), dtype=int).reshape(-1, k)


def active_set_projection(q0, A, b, G, h, feas_tol=1e-9):
    """Exact Euclidean projection by enumerating active inequality sets.

    Every candidate solves the equality-constrained problem with a subset of
    inequalities held tight; the projection is the feasible candidate of
    least distance.  Returns ``(q, squared_distance)``.
    """
    Z, qp = _null_space(A, b)
    d = Z.shape[1]
    y0 = Z.T @ (q0 - qp)
    B_all = G @ Z
    c_all = h - G @ qp
    best_val, best_q = math.inf, None
    for k in range(0, d + 1):
        if k == 0:
            ys = y0[None]
        else:
            S = _subsets(len(h), k)
            B = B_all[S]                      # (n, k, d)
            c = c_all[S]                      # (n, k)
            BBt = B @ B.transpose(0, 2, 1)
            ok = np.abs(np.linalg.det(BBt)) > 1e-10
            B, c, BBt = B[ok], c[ok], BBt[ok]
            if not len(B):
                continue
            resid = np.einsum("nkd,d->nk", B, y0) - c
            lam = np.linalg.solve(BBt, resid[..., None])[..., 0]
            ys = y0[None] - np.einsum("nkd,nk->nd", B, lam)
        viol = (ys @ B_all.T - c_all[None]).max(axis=1)
        feas = viol <= feas_tol
        if feas.any():
            vals = ((ys[feas] - y0) ** 2).sum(axis=1)
            j = int(np.argmin(vals))
            if vals[j] < best_val:
                best_val = vals[j]
                best_q = qp + Z @ ys[feas][j]
    if best_q is None:
        raise ValueError("empty feasible set")
    return best_q, float(((best_q - q0) ** 2).sum())


def vertex_lp(c, A, b, G, h, feas_tol=1e-9):
    """Maximize ``c.q`` by enumerating all vertices of ``{A q = b, G q <= h}``."""
    Z, qp = _null_space(A, b)
    d = Z.shape[1]
    B_all = G @ Z
    c_all = h - G @ qp
    if d == 0:
        return float(c @ qp), qp
    S = _subsets(len(h), d)
    B = B_all[S]
    rhs = c_all[S]
    ok = np.abs(np.linalg.det(B)) > 1e-10
    ys = np.linalg.solve(B[ok], rhs[ok][..., None])[..., 0]
    viol = (ys @ B_all.T - c_all[None]).max(axis=1)
    ys = ys[viol <= feas_tol]
    if not len(ys):
        return -math.inf, None
    vals = ys @ (Z.T @ c) + c @ qp
    j = int(np.argmax(vals))
    return float(vals[j]), qp + Z @ ys[j]


def forward_enumeration(kernel, pi, layer_sizes):
    """Occupancy over triples by enumerating every trajectory (tiny MDPs)."""
    start = [0]
    for s in layer_sizes:
        start.append(start[-1] + s)
    L = len(layer_sizes) - 1
    n_actions = pi.shape[1]
    occ = {}

    def walk(x, k, prob):
        if k == L:
            return
        for a in range(n_actions):
            for y in range(start[k + 1], start[k + 2]):
                p = prob * pi[x, a] * kernel[x, a, y]
                if p > 0:
                    occ[(x, a, y)] = occ.get((x, a, y), 0.0) + p
                    walk(y, k + 1, p)

    walk(0, 0, 1.0)
    return occ


def original_chain_marginals(P, pi, start, horizon):
    """``Pr[x_k = x]`` in an unlayered MDP with a stationary policy."""
    S = P.shape[0]
    mu = np.zeros(S)
    mu[start] = 1.0
    out = [mu.copy()]
    for _ in range(horizon - 1):
        mu = np.einsum("x,xa,xay->y", mu, pi, P)
        out.append(mu.copy())
    return out
