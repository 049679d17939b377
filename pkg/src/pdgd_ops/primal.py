"""Projected online gradient descent over the estimated occupancy polytope.

The learner keeps an occupancy iterate, a running sup of loss magnitudes
and the confidence counters.  Each update counts the last trajectory,
rebuilds the feasible set when the epoch changes, takes a gradient step of
size ``1 / (lbar C sqrt(T))`` and projects back.
"""
from __future__ import annotations

import math

import numpy as np

from .cmdp import LoopFreeCmdp, Trajectory
from .confidence import ConfidenceState
from .polytope import OccupancyPolytope, build_polytope, project


def uniform_occupancy(cmdp: LoopFreeCmdp) -> np.ndarray:
    """Each layer's mass spread evenly over its triples."""
    q = np.empty(cmdp.n_triples)
    for sl in cmdp.triple_slices:
        q[sl] = 1.0 / (sl.stop - sl.start)
    return q


class PrimalState:
    def __init__(self, cmdp: LoopFreeCmdp, T: int, delta: float, *, C: float | None = None,
                 known_kernel: bool = False, tol: float = 1e-7):
        self.cmdp = cmdp
        self.T = int(T)
        self.C = 5.0 * cmdp.n_states * cmdp.n_actions / cmdp.horizon if C is None else float(C)
        self.tol = tol
        self.confidence = ConfidenceState(cmdp, T, delta)
        self.known_kernel = known_kernel
        self._exact = build_polytope(cmdp, "exact") if known_kernel else None
        self.q = uniform_occupancy(cmdp)
        self.loss_sup = 0.0
        self.last_residual = 0.0
        if known_kernel:
            # the uniform triple vector ignores the kernel; start on the true set
            self.q = project(self.q, self._exact, tol)

    @property
    def epoch(self) -> int:
        return self.confidence.epoch

    def polytope(self) -> OccupancyPolytope:
        return self._exact if self.known_kernel else self.confidence.polytope()

    def step_size(self) -> float:
        lbar = self.loss_sup if self.loss_sup > 0 else 1.0
        return 1.0 / (lbar * self.C * math.sqrt(self.T))

    def update(self, loss: np.ndarray, traj: Trajectory | None = None) -> np.ndarray:
        """One learner step on a pair-space loss; returns the new iterate."""
        loss = np.asarray(loss, dtype=float)
        if loss.shape != (self.cmdp.n_pairs,) or not np.all(np.isfinite(loss)):
            raise ValueError("loss must be a finite pair-space vector")
        changed = traj is not None and self.confidence.record(traj)
        poly = self.polytope()
        if changed and not poly.contains(self.q, self.tol):
            self.q = project(self.q, poly, self.tol)
        self.loss_sup = max(self.loss_sup, float(np.abs(loss).max()))
        eta = self.step_size()
        out = project(self.q - eta * self.cmdp.broadcast(loss), poly, self.tol, full_output=True)
        self.q = out.q
        self.last_residual = out.residual
        return self.q


def init(cmdp: LoopFreeCmdp, delta: float, T: int, **kw) -> PrimalState:
    return PrimalState(cmdp, T, delta, **kw)


def step_size(state: PrimalState) -> float:
    return state.step_size()


def update(state: PrimalState, loss: np.ndarray, traj: Trajectory | None = None) -> PrimalState:
    state.update(loss, traj)
    return state


def interval_regret(losses: np.ndarray, iterates: np.ndarray, comparator: np.ndarray,
                    t1: int, t2: int) -> float:
    """``sum_{t=t1}^{t2} loss_t . (q_t - q)`` with 1-based inclusive indices.

    ``losses`` and ``iterates`` are ``(T, n)`` arrays in the same space
    (pairs or triples) as ``comparator``.
    """
    if not 1 <= t1 <= t2 <= len(losses):
        raise ValueError("need 1 <= t1 <= t2 <= T")
    sl = slice(t1 - 1, t2)
    return float(np.einsum("ij,ij->", losses[sl], iterates[sl] - comparator[None, :]))
