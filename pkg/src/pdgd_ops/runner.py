"""The primal-dual episode loop and its trace.

Each episode plays the policy induced by the primal iterate, samples a
trajectory from the true kernel, reveals the reward vector and constraint
matrix, and feeds the Lagrangian loss ``G lambda - r`` to the primal player
and the violation ``G^T q_hat`` to the dual player.
"""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .cmdp import LoopFreeCmdp, Trajectory, _forward, induce_policy, sample_trajectory
from .dual import DualState
from .primal import PrimalState
from .scenario import EnvironmentSpec, OracleReport, draw_episode, solve_offline


class RunError(RuntimeError):
    def __init__(self, t: int, cause: Exception):
        super().__init__(f"episode {t}: {type(cause).__name__}: {cause}")
        self.t = t


@dataclass
class RunConfig:
    T: int
    delta: float = 0.1
    seed: int = 0
    tol: float = 1e-7
    C: float | None = None
    eta: float | None = None
    K: float | None = None
    known_kernel: bool = False
    csv_path: str | None = None
    summary_path: str | None = None

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("T must be at least 2")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


@dataclass
class EpisodeRecord:
    t: int
    trajectory: Trajectory
    reward: np.ndarray
    constraints: np.ndarray
    q_hat: np.ndarray
    q: np.ndarray
    lam: np.ndarray
    loss: np.ndarray
    epoch: int
    proj_residual: float


@dataclass
class RunTrace:
    """Column storage for a finished run; row ``t - 1`` is episode ``t``."""

    cmdp: LoopFreeCmdp
    config: RunConfig
    rewards: np.ndarray          # (T, n_pairs) revealed r_t
    constraints: np.ndarray      # (T, n_pairs, m) revealed G_t
    q_hat: np.ndarray            # (T, n_triples) learner iterate played at t
    q: np.ndarray                # (T, n_pairs) true occupancy of the played policy
    lam: np.ndarray              # (T, m)
    loss: np.ndarray             # (T, n_pairs)
    epoch: np.ndarray            # (T,)
    proj_residual: np.ndarray    # (T,)
    reward_realized: np.ndarray  # (T,) reward collected along the trajectory
    states: np.ndarray           # (T, L + 1)
    actions: np.ndarray          # (T, L)
    eta_primal: np.ndarray       # (T,)
    eta_dual: float
    kernel_covered: np.ndarray   # (T,) true kernel inside the confidence set
    wall_time: float = 0.0
    summary: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.epoch)

    @property
    def expected_reward(self) -> np.ndarray:
        """``r_t . q_t`` per episode."""
        return np.einsum("tp,tp->t", self.rewards, self.q)

    @property
    def violations(self) -> np.ndarray:
        """``G_t^T q_t`` per episode, shape ``(T, m)``."""
        return np.einsum("tpi,tp->ti", self.constraints, self.q)

    @property
    def dual_feedback(self) -> np.ndarray:
        """``G_t^T q_hat_t`` as seen by the dual player."""
        qh = np.stack([self.cmdp.marginal(row) for row in self.q_hat])
        return np.einsum("tpi,tp->ti", self.constraints, qh)

    def q_hat_pairs(self) -> np.ndarray:
        idx = self.cmdp.triple_pair
        out = np.zeros((self.T, self.cmdp.n_pairs))
        np.add.at(out.T, idx, self.q_hat.T)
        return out

    def record(self, t: int) -> EpisodeRecord:
        i = t - 1
        traj = Trajectory(tuple(int(x) for x in self.states[i]), tuple(int(a) for a in self.actions[i]))
        return EpisodeRecord(t, traj, self.rewards[i], self.constraints[i], self.q_hat[i],
                             self.q[i], self.lam[i], self.loss[i], int(self.epoch[i]),
                             float(self.proj_residual[i]))

    # -- output ------------------------------------------------------------

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        m = self.lam.shape[1]
        w.writerow(["t", "reward_realized", "expected_reward"]
                   + [f"violation_{i}" for i in range(m)]
                   + ["lambda_l1", "epoch", "proj_residual"])
        er, viol = self.expected_reward, self.violations
        l1 = self.lam.sum(axis=1)
        for i in range(self.T):
            w.writerow([i + 1, repr(float(self.reward_realized[i])), repr(float(er[i]))]
                       + [repr(float(v)) for v in viol[i]]
                       + [repr(float(l1[i])), int(self.epoch[i]), repr(float(self.proj_residual[i]))])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary, fh, indent=2, sort_keys=True)


def build_loss(r: np.ndarray, G: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Lagrangian loss ``G lambda - r`` on pairs."""
    r, G, lam = np.asarray(r, dtype=float), np.asarray(G, dtype=float), np.asarray(lam, dtype=float)
    if G.ndim == 1:
        G = G[:, None]
    if G.shape != (r.shape[0], lam.shape[0]):
        raise ValueError(f"shape mismatch: r {r.shape}, G {G.shape}, lambda {lam.shape}")
    return G @ lam - r


def run(cmdp: LoopFreeCmdp, env: EnvironmentSpec, cfg: RunConfig,
        oracle: OracleReport | None = None) -> RunTrace:
    """Play ``cfg.T`` episodes; deterministic given ``cfg.seed``."""
    T, m = cfg.T, env.m
    env_rng, traj_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(2))
    primal = PrimalState(cmdp, T, cfg.delta, C=cfg.C, known_kernel=cfg.known_kernel, tol=cfg.tol)
    dual = DualState(m, T, cfg.delta, cmdp.n_states, cmdp.n_actions, eta=cfg.eta, K=cfg.K)
    n, nt, L = cmdp.n_pairs, cmdp.n_triples, cmdp.horizon
    rewards = np.empty((T, n))
    constraints = np.empty((T, n, m))
    q_hat = np.empty((T, nt))
    q = np.empty((T, n))
    lam = np.empty((T, m))
    loss = np.empty((T, n))
    epoch = np.empty(T, dtype=np.int64)
    resid = np.empty(T)
    realized = np.empty(T)
    states = np.empty((T, L + 1), dtype=np.int64)
    actions = np.empty((T, L), dtype=np.int64)
    eta_p = np.empty(T)
    covered = np.empty(T, dtype=bool)
    P = cmdp.transitions
    pair_idx, nA = cmdp.triple_pair, cmdp.n_actions
    start = time.perf_counter()
    t = 0
    try:
        for t in range(1, T + 1):
            i = t - 1
            qh = primal.q
            q_hat[i] = qh
            lam[i] = dual.lam
            epoch[i] = primal.epoch
            covered[i] = primal.known_kernel or primal.confidence.contains_kernel(P)
            pi = induce_policy(cmdp, qh, validate=False)
            q[i] = np.bincount(pair_idx, weights=_forward(cmdp, pi.ravel()), minlength=n)
            traj = sample_trajectory(cmdp, pi, traj_rng)
            r_t, G_t = draw_episode(env, t, env_rng)
            rewards[i], constraints[i] = r_t, G_t
            states[i], actions[i] = traj.states, traj.actions
            realized[i] = r_t[np.asarray(traj.states[:-1]) * nA + np.asarray(traj.actions)].sum()
            ell = G_t @ dual.lam - r_t
            loss[i] = ell
            v = G_t.T @ np.bincount(pair_idx, weights=qh, minlength=n)
            primal.update(ell, traj)
            eta_p[i] = primal.step_size()
            resid[i] = primal.last_residual
            dual.update(v)
    except Exception as exc:
        raise RunError(t, exc) from exc
    trace = RunTrace(cmdp, cfg, rewards, constraints, q_hat, q, lam, loss, epoch, resid, realized,
                     states, actions, eta_p, dual.eta, covered)
    trace.wall_time = time.perf_counter() - start
    if oracle is None:
        oracle = solve_offline(env, cmdp, T)
    trace.summary = summarize(trace, env, oracle)
    if cfg.csv_path:
        trace.write_csv(cfg.csv_path)
    if cfg.summary_path:
        trace.write_summary(cfg.summary_path)
    return trace


def summarize(trace: RunTrace, env: EnvironmentSpec, oracle: OracleReport) -> dict:
    from .metrics import regret, violation
    return {
        "R_T": regret(trace, env, oracle),
        "V_T": violation(trace),
        "zeta": oracle.zeta,
        "rho": oracle.rho,
        "OPT": oracle.OPT,
        "config": asdict(trace.config),
        "wall_time": trace.wall_time,
    }
