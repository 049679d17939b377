"""Visit counters, epoch doubling and L1 confidence radii for the kernel."""
from __future__ import annotations

import json
import math

import numpy as np

from .cmdp import LoopFreeCmdp, Trajectory
from .polytope import EPS_MAX, OccupancyPolytope, build_polytope


class ConfidenceState:
    """Live counters plus the snapshot taken at the start of the epoch.

    ``n`` and ``m`` are live pair and triple counts; ``n_start`` and
    ``m_start`` are copies frozen when the current epoch began.  Radii and
    the empirical kernel only read the snapshots.
    """

    def __init__(self, cmdp: LoopFreeCmdp, T: int, delta: float):
        if T < 1:
            raise ValueError("T must be positive")
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        self.cmdp = cmdp
        self.T = int(T)
        self.delta = float(delta)
        self.epoch = 1
        self.n = np.zeros(cmdp.n_pairs, dtype=np.int64)
        self.m = np.zeros(cmdp.n_triples, dtype=np.int64)
        self.n_start = self.n.copy()
        self.m_start = self.m.copy()
        self._poly: OccupancyPolytope | None = None
        self._covers: tuple | None = None
        # |X_{k(x)+1}| for every pair
        nxt = cmdp.layer_of[np.arange(cmdp.terminal)] + 1
        self._next_width = np.repeat(np.asarray(cmdp.layer_sizes)[nxt], cmdp.n_actions)
        self._log_term = math.log(self.T * cmdp.n_states * cmdp.n_actions / self.delta)

    def record(self, traj: Trajectory) -> bool:
        """Count one episode; return True when the doubling trigger fires."""
        cm = self.cmdp
        fired = False
        for k, (x, a) in enumerate(traj.steps):
            y = traj.states[k + 1]
            if cm.layer_of[x] != k or cm.layer_of[y] != k + 1:
                raise ValueError(f"trajectory step {k} is not layer-consistent")
            pair = x * cm.n_actions + a
            self.n[pair] += 1
            self.m[cm.triple_index(x, a, y)] += 1
            if self.n[pair] >= max(1, 2 * self.n_start[pair]):
                fired = True
        if fired:
            self.epoch += 1
            self.n_start = self.n.copy()
            self.m_start = self.m.copy()
            self._poly = None
        return fired

    def epsilon_raw(self) -> np.ndarray:
        return np.sqrt(2.0 * self._next_width * self._log_term / np.maximum(1, self.n_start))

    def epsilon(self) -> np.ndarray:
        """Per-pair radii from the epoch-start counts, clamped to 2."""
        return np.minimum(self.epsilon_raw(), EPS_MAX)

    def empirical_kernel(self) -> np.ndarray:
        """Triple vector ``M_i(y|x,a) / max(1, N_i(x,a))``."""
        return self.m_start / np.maximum(1, self.n_start)[self.cmdp.triple_pair]

    def polytope(self) -> OccupancyPolytope:
        """Confidence polytope of the current epoch (cached until it ends)."""
        if self._poly is None:
            self._poly = build_polytope(self.cmdp, "confidence", p_bar=self.empirical_kernel(),
                                        epsilon=self.epsilon_raw())
        return self._poly

    def contains_kernel(self, P: np.ndarray) -> bool:
        """Is the kernel ``P`` (triple vector) inside the current ball set?

        The answer is cached per epoch for the most recent ``P``.
        """
        if self._covers is not None and self._covers[0] == self.epoch and self._covers[1] is P:
            return self._covers[2]
        cm = self.cmdp
        dev = np.bincount(cm.triple_pair, weights=np.abs(P - self.empirical_kernel()),
                          minlength=cm.n_pairs)
        ok = bool(np.all(dev <= self.epsilon() + 1e-12))
        self._covers = (self.epoch, P, ok)
        return ok

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {"T": self.T, "delta": self.delta, "epoch": self.epoch,
                "n": self.n.tolist(), "m": self.m.tolist(),
                "n_start": self.n_start.tolist(), "m_start": self.m_start.tolist()}

    @classmethod
    def from_dict(cls, cmdp: LoopFreeCmdp, doc: dict) -> "ConfidenceState":
        cs = cls(cmdp, doc["T"], doc["delta"])
        cs.epoch = int(doc["epoch"])
        for name in ("n", "m", "n_start", "m_start"):
            arr = np.asarray(doc[name], dtype=np.int64)
            if arr.shape != getattr(cs, name).shape:
                raise ValueError(f"counter {name!r} has the wrong shape")
            setattr(cs, name, arr)
        return cs

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, cmdp: LoopFreeCmdp, path) -> "ConfidenceState":
        with open(path) as fh:
            return cls.from_dict(cmdp, json.load(fh))


def record_trajectory(cs: ConfidenceState, traj: Trajectory) -> tuple[ConfidenceState, bool]:
    return cs, cs.record(traj)


def epsilon(cs: ConfidenceState, x: int, a: int) -> float:
    return float(cs.epsilon()[x * cs.cmdp.n_actions + a])


def empirical_kernel(cs: ConfidenceState, x: int, a: int) -> np.ndarray:
    return cs.empirical_kernel()[cs.cmdp.pair_triples[x * cs.cmdp.n_actions + a]]
