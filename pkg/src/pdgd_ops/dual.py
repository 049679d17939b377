"""Projected online gradient ascent for the Lagrange multipliers on the box
``[0, T**0.25]^m``."""
from __future__ import annotations

import math

import numpy as np


def default_eta(m: int, T: int, delta: float, n_states: int, n_actions: int,
                K: float | None = None) -> float:
    """``1 / (K sqrt(T ln(T^2/delta)))`` with ``K = 100 m |X| |A|`` by default."""
    if K is None:
        K = 100.0 * m * n_states * n_actions
    return 1.0 / (K * math.sqrt(T * math.log(T * T / delta)))


class DualState:
    def __init__(self, m: int, T: int, delta: float, n_states: int, n_actions: int, *,
                 eta: float | None = None, K: float | None = None):
        if m < 1 or T < 2 or not 0 < delta < 1:
            raise ValueError("need m >= 1, T >= 2 and delta in (0, 1)")
        self.m, self.T, self.delta = m, T, delta
        self.eta = default_eta(m, T, delta, n_states, n_actions, K) if eta is None else float(eta)
        self.cap = T ** 0.25
        self.lam = np.zeros(m)

    def update(self, violation: np.ndarray) -> np.ndarray:
        v = np.asarray(violation, dtype=float)
        self.lam = np.clip(self.lam + self.eta * v, 0.0, self.cap)
        return self.lam


def init(m: int, T: int, delta: float, n_states: int, n_actions: int, **kw) -> DualState:
    return DualState(m, T, delta, n_states, n_actions, **kw)


def update(ds: DualState, violation: np.ndarray) -> DualState:
    ds.update(violation)
    return ds


def dual_regret(lams: np.ndarray, violations: np.ndarray, comparator, t1: int, t2: int) -> float:
    """``sum_{t=t1}^{t2} (lam - lam_t) . v_t`` with 1-based inclusive indices."""
    if not 1 <= t1 <= t2 <= len(lams):
        raise ValueError("need 1 <= t1 <= t2 <= T")
    sl = slice(t1 - 1, t2)
    lam = np.asarray(comparator, dtype=float)
    return float(np.einsum("ij,ij->", lam[None, :] - lams[sl], violations[sl]))
