"""Occupancy polytopes: the exact set under a known kernel and the
confidence-ball relaxation around an empirical kernel.

Both are stored as ``A_eq q = b_eq`` and ``G q <= h`` over the triple
vector.  The L1 ball ``sum_y |q(x,a,y) - P(y|x,a) q(x,a)| <= eps q(x,a)`` is
written as its sign-vector facets, one row per ``sigma in {-1,+1}^width``;
the next layers are small, so this stays cheap and needs no auxiliary
variables.  Balls that cannot bind (``eps >= 1 + sum P``) are dropped.

Projection reduces to a least-distance program on the null space of the
equalities, solved through NNLS.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import simplex
from ._nnls import nnls
from .cmdp import LoopFreeCmdp

EPS_MAX = 2.0
MAX_FACET_WIDTH = 12


class InfeasibleError(ValueError):
    """The polytope (or LP feasible set) is empty."""


class ProjectionError(RuntimeError):
    def __init__(self, msg: str, residual: float):
        super().__init__(f"{msg} (residual {residual:.3g})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class OccupancyPolytope:
    cmdp: LoopFreeCmdp
    mode: str
    A_eq: np.ndarray
    b_eq: np.ndarray
    G: np.ndarray
    h: np.ndarray
    p_bar: np.ndarray | None = None
    epsilon: np.ndarray | None = None
    epsilon_raw: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.A_eq.shape[1]

    @cached_property
    def _reduced(self):
        """Null-space basis ``Z``, minimum-norm particular solution, ``G Z``."""
        A = self.A_eq
        U, s, Vt = np.linalg.svd(A, full_matrices=True)
        rank = int(np.sum(s > 1e-10 * max(1.0, s[0])))
        Z = Vt[rank:].T
        q_part = Vt[:rank].T @ ((U[:, :rank].T @ self.b_eq) / s[:rank])
        if np.abs(A @ q_part - self.b_eq).max() > 1e-9:
            raise InfeasibleError("equality constraints are inconsistent")
        return Z, q_part, self.G @ Z, self.h - self.G @ q_part

    def residual(self, q: np.ndarray) -> float:
        """Largest equality or inequality violation of ``q``."""
        eq = np.abs(self.A_eq @ q - self.b_eq).max()
        ineq = max(0.0, (self.G @ q - self.h).max())
        return float(max(eq, ineq))

    def contains(self, q: np.ndarray, tol: float = 1e-9) -> bool:
        return self.residual(np.asarray(q, dtype=float)) <= tol

    def to_triples(self, v) -> np.ndarray:
        """Accept a pair-space or triple-space vector; return triple space."""
        v = np.asarray(v, dtype=float)
        if v.shape == (self.cmdp.n_triples,):
            return v
        if v.shape == (self.cmdp.n_pairs,):
            return self.cmdp.broadcast(v)
        raise ValueError(f"vector of length {v.shape} matches neither pairs nor triples")


def _flow_rows(cmdp: LoopFreeCmdp):
    n = cmdp.n_triples
    rows, rhs = [], []
    for sl in cmdp.triple_slices:
        r = np.zeros(n)
        r[sl] = 1.0
        rows.append(r)
        rhs.append(1.0)
    for x in range(cmdp.layer_start[1], cmdp.terminal):
        r = np.zeros(n)
        r[cmdp.triple_state == x] += 1.0
        r[cmdp.triple_next == x] -= 1.0
        rows.append(r)
        rhs.append(0.0)
    return rows, rhs


def _sign_patterns(width: int) -> np.ndarray:
    return np.array(list(itertools.product((1.0, -1.0), repeat=width)))


def build_polytope(cmdp: LoopFreeCmdp, mode: str = "exact", *, p_bar=None,
                   epsilon=None) -> OccupancyPolytope:
    """Constraint system of the exact set or of a confidence set.

    ``exact`` uses the true kernel of ``cmdp``.  ``confidence`` takes an
    empirical kernel ``p_bar`` (triple vector, default zero) and per-pair
    radii ``epsilon`` (default ``EPS_MAX``); radii are clamped to ``EPS_MAX``.
    """
    n = cmdp.n_triples
    rows, rhs = _flow_rows(cmdp)
    G_rows = [-np.eye(n)]
    h_parts = [np.zeros(n)]
    if mode == "exact":
        if p_bar is not None or epsilon is not None:
            raise ValueError("exact mode takes its kernel from the CMDP")
        P = cmdp.transitions
        for sl in cmdp.pair_triples:
            for j in range(sl.start, sl.stop):
                r = np.zeros(n)
                r[sl] = -P[j]
                r[j] += 1.0
                rows.append(r)
                rhs.append(0.0)
        return OccupancyPolytope(cmdp, mode, np.array(rows), np.array(rhs),
                                 G_rows[0], h_parts[0])
    if mode != "confidence":
        raise ValueError(f"unknown polytope mode {mode!r}")

    p_bar = np.zeros(n) if p_bar is None else np.asarray(p_bar, dtype=float)
    if p_bar.shape != (n,):
        raise ValueError(f"p_bar must have shape ({n},)")
    raw = np.full(cmdp.n_pairs, EPS_MAX) if epsilon is None else np.asarray(epsilon, dtype=float)
    if raw.shape != (cmdp.n_pairs,):
        raise ValueError(f"epsilon must have shape ({cmdp.n_pairs},)")
    if np.any(raw < 0):
        raise ValueError("confidence radii must be nonnegative")
    eps = np.minimum(raw, EPS_MAX)
    patterns = {}
    for pair, sl in enumerate(cmdp.pair_triples):
        pb = p_bar[sl]
        if eps[pair] >= 1.0 + pb.sum():
            continue
        width = sl.stop - sl.start
        if width > MAX_FACET_WIDTH:
            raise ValueError(f"next layer of width {width} is too wide for facet encoding")
        if width not in patterns:
            patterns[width] = _sign_patterns(width)
        S = patterns[width]
        block = np.zeros((S.shape[0], n))
        # sigma . (q_y - pb_y Q) - eps Q  with  Q = sum_y q_y
        block[:, sl] = S - (S @ pb)[:, None] - eps[pair]
        G_rows.append(block)
        h_parts.append(np.zeros(S.shape[0]))
    return OccupancyPolytope(cmdp, mode, np.array(rows), np.array(rhs),
                             np.vstack(G_rows), np.concatenate(h_parts),
                             p_bar=p_bar, epsilon=eps, epsilon_raw=raw)


@dataclass
class Projection:
    q: np.ndarray
    residual: float
    kkt: float
    multipliers: np.ndarray


def project(q0, poly: OccupancyPolytope, tol: float = 1e-7, *, full_output: bool = False):
    """Euclidean projection of ``q0`` onto ``poly``.

    Raises :class:`InfeasibleError` on an empty polytope and
    :class:`ProjectionError` if the certificate is worse than ``tol``.
    """
    q0 = np.asarray(q0, dtype=float)
    Z, q_part, GZ, h_red = poly._reduced
    y0 = Z.T @ q0
    # min ||w||  s.t.  GZ w <= h_red - GZ y0   (LDP with E = -GZ)
    f = GZ @ y0 - h_red
    d = Z.shape[1]
    M = np.empty((d + 1, GZ.shape[0]))
    M[:d] = -GZ.T
    M[d] = f
    e = np.zeros(d + 1)
    e[d] = 1.0
    u, status = nnls(M, e)
    r = M @ u - e
    if status != 0:
        raise ProjectionError("NNLS iteration cap reached", float(np.linalg.norm(r)))
    if abs(r[d]) < 1e-12:
        raise InfeasibleError("projection onto an empty polytope")
    w = -r[:d] / r[d]
    q = q_part + Z @ (y0 + w)
    mu = u / (-r[d])
    slack = poly.h - poly.G @ q
    res = max(float(np.abs(poly.A_eq @ q - poly.b_eq).max()), max(0.0, float(-slack.min())))
    kkt = max(res, float(np.abs(Z.T @ (q - q0) + GZ.T @ mu).max(initial=0.0)),
              float(np.abs(mu * slack).max()))
    if kkt > tol:
        raise ProjectionError("projection certificate above tolerance", kkt)
    if full_output:
        return Projection(q, res, kkt, mu)
    return q


@dataclass
class LpSolution:
    optimum: float
    argmax: np.ndarray | None
    status: str


def _extra_rows(poly, extra_ineq):
    if extra_ineq is None:
        return np.zeros((0, poly.dim)), np.zeros(0)
    if isinstance(extra_ineq, tuple) and len(extra_ineq) == 2 and np.ndim(extra_ineq[0]) == 2:
        coefs, rhs = extra_ineq
        coefs = np.asarray(coefs, dtype=float)
        return (np.stack([poly.to_triples(c) for c in coefs]) if len(coefs) else
                np.zeros((0, poly.dim))), np.asarray(rhs, dtype=float).ravel()
    rows = [poly.to_triples(c) for c, _ in extra_ineq]
    rhs = [float(b) for _, b in extra_ineq]
    return np.array(rows).reshape(-1, poly.dim), np.array(rhs)


def _ub_rows(poly):
    # nonnegativity is implicit in the simplex; keep only the facet rows
    n = poly.dim
    return poly.G[n:], poly.h[n:]


def lp_maximize(objective, poly: OccupancyPolytope, extra_ineq=None) -> LpSolution:
    """``max c.q`` over ``poly`` intersected with ``extra_ineq``.

    ``extra_ineq`` is either ``(C, d)`` meaning ``C q <= d`` or a list of
    ``(coef, rhs)`` pairs; coefficients may be pair-space or triple-space.
    """
    c = poly.to_triples(objective)
    Gx, hx = _extra_rows(poly, extra_ineq)
    Gf, hf = _ub_rows(poly)
    res = simplex.linprog_max(c, poly.A_eq, poly.b_eq, np.vstack([Gf, Gx]),
                              np.concatenate([hf, hx]))
    if res.status != simplex.OPTIMAL:
        return LpSolution(-np.inf if res.status == simplex.INFEASIBLE else np.inf,
                          None, res.status)
    return LpSolution(res.value, res.x, res.status)


def max_margin(constraint_rows, poly: OccupancyPolytope) -> LpSolution:
    """``max_q min_i -(g_i . q)``: the largest uniform slack over ``poly``.

    ``constraint_rows`` has one row per constraint (pair or triple space).
    Returns the margin as ``optimum`` and the maximizer as ``argmax``.
    """
    rows = np.atleast_2d(np.asarray(constraint_rows, dtype=float))
    rows = np.unique(np.stack([poly.to_triples(g) for g in rows]), axis=0)
    L = poly.cmdp.horizon
    bound = L * max(1.0, np.abs(rows).max())
    n = poly.dim
    # shifted margin s' = s + bound >= 0 as an extra variable
    c = np.zeros(n + 1)
    c[n] = 1.0
    A_eq = np.hstack([poly.A_eq, np.zeros((poly.A_eq.shape[0], 1))])
    Gf, hf = _ub_rows(poly)
    A_ub = np.vstack([np.hstack([Gf, np.zeros((Gf.shape[0], 1))]),
                      np.hstack([rows, np.ones((rows.shape[0], 1))])])
    b_ub = np.concatenate([hf, np.full(rows.shape[0], bound)])
    res = simplex.linprog_max(c, A_eq, poly.b_eq, A_ub, b_ub)
    if res.status != simplex.OPTIMAL:
        return LpSolution(-np.inf, None, res.status)
    return LpSolution(res.value - bound, res.x[:n], res.status)
