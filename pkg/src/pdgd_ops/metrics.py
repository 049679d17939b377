"""Regret, violation and concentration diagnostics computed from a trace."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .runner import RunTrace
from .scenario import EnvironmentSpec, OracleReport


def mean_rewards(trace: RunTrace, env: EnvironmentSpec) -> np.ndarray:
    """Per-episode reward table entering the regret: the mean for stochastic
    rewards, the revealed table for adversarial ones."""
    if env.reward_regime == "stochastic":
        return np.broadcast_to(env.rewards.average(trace.T), trace.rewards.shape)
    return trace.rewards


def regret(trace: RunTrace, env: EnvironmentSpec, oracle: OracleReport) -> float:
    gained = np.einsum("tp,tp->", mean_rewards(trace, env), trace.q)
    return float(trace.T * oracle.OPT - gained)


def violation(trace: RunTrace) -> float:
    """``max_i sum_t [G_t^T q_t]_i`` (signed)."""
    return float(trace.violations.sum(axis=0).max())


def positive_violation(trace: RunTrace) -> float:
    """``max_i sum_t max(0, [G_t^T q_t]_i)``: no cancellation across episodes."""
    return float(np.maximum(trace.violations, 0.0).sum(axis=0).max())


def dyadic_windows(T: int) -> np.ndarray:
    """Inclusive 1-based windows ``[j 2^s + 1, (j + 1) 2^s]`` inside ``1..T``
    for every scale, plus ``[1, T]``."""
    out = [(1, T)]
    s = 1
    while s <= T:
        starts = np.arange(0, T - s + 1, s)
        out.extend((int(a) + 1, int(a) + s) for a in starts)
        s *= 2
    return np.unique(np.array(out), axis=0)


def window_sums(values: np.ndarray, windows: np.ndarray) -> np.ndarray:
    csum = np.concatenate([[0.0], np.cumsum(values)])
    return csum[windows[:, 1]] - csum[windows[:, 0] - 1]


def window_max(values: np.ndarray, windows: np.ndarray) -> np.ndarray:
    """Running max of ``values`` over each window (sparse-table lookup)."""
    T = len(values)
    table = [np.asarray(values, dtype=float)]
    k = 1
    while 2 * k <= T:
        prev = table[-1]
        table.append(np.maximum(prev[:-k], prev[k:]))
        k *= 2
    lo, hi = windows[:, 0] - 1, windows[:, 1]
    length = hi - lo
    level = np.floor(np.log2(length)).astype(int)
    out = np.empty(len(windows))
    for j in range(len(windows)):
        tab = table[level[j]]
        out[j] = max(tab[lo[j]], tab[hi[j] - (1 << level[j])])
    return out


def max_interval_regret(losses: np.ndarray, iterates: np.ndarray, comparator: np.ndarray,
                        windows: np.ndarray | None = None) -> float:
    """Largest ``sum_{t in W} loss_t . (q_t - q)`` over the window grid."""
    per = np.einsum("tp,tp->t", losses, iterates - comparator[None, :])
    if windows is None:
        windows = dyadic_windows(len(per))
    return float(window_sums(per, windows).max())


def azuma_reward_bound(L: int, T: int, delta: float) -> float:
    return L / math.sqrt(2.0) * math.sqrt(T * math.log(2.0 / delta))


def azuma_constraint_bound(L: int, T: int, delta: float, length) -> np.ndarray:
    return 2.0 * L * np.sqrt(2.0 * np.asarray(length) * math.log(T * T / delta))


def occupancy_bound(L: int, T: int, delta: float, n_states: int, n_actions: int) -> float:
    return (4 * L * n_states * math.sqrt(2 * T * math.log(1 / delta))
            + 6 * L * n_states * math.sqrt(2 * T * n_actions * math.log(T * n_states * n_actions / delta)))


@dataclass
class MetricsSummary:
    T: int
    R_T: float
    R_T_realized: float
    V_T: float
    V_T_plus: float
    V_T_clipped: float
    cumulative_reward: float
    max_lambda_l1: float
    lambda_cap: float
    max_interval_regret: float
    dual_regret_zero: float
    azuma_r: float | None
    azuma_r_bound: float
    azuma_r_ok: bool | None
    azuma_G_ratio: float | None
    azuma_G_ok: bool | None
    occupancy_bound: float
    coverage_ok: bool
    epochs: int
    max_proj_residual: float

    def to_dict(self) -> dict:
        return asdict(self)


def compute_metrics(trace: RunTrace, env: EnvironmentSpec, oracle: OracleReport) -> MetricsSummary:
    cm, T, delta = trace.cmdp, trace.T, trace.config.delta
    L = cm.horizon
    if trace.rewards.shape[1] != cm.n_pairs or trace.constraints.shape[2] != env.m:
        raise ValueError("trace and environment disagree on shapes")
    if oracle.q_star is not None and oracle.q_star.shape != (cm.n_triples,):
        raise ValueError("oracle comparator has the wrong dimension")
    windows = dyadic_windows(T)
    cum = float(trace.expected_reward.sum())
    lam_l1 = trace.lam.sum(axis=1)
    q_hat = trace.q_hat_pairs()

    R_T = regret(trace, env, oracle) if oracle.q_star is not None else math.nan
    interval = math.nan
    if oracle.q_star is not None:
        interval = max_interval_regret(trace.loss, q_hat, cm.marginal(oracle.q_star), windows)

    azuma_r = azuma_r_ok = None
    e_r = azuma_reward_bound(L, T, delta)
    if env.reward_regime == "stochastic" and oracle.q_star is not None:
        dev = (trace.rewards - env.rewards.average(T)) @ cm.marginal(oracle.q_star)
        azuma_r = float(abs(dev.sum()))
        azuma_r_ok = azuma_r <= e_r

    azuma_g = azuma_g_ok = None
    if env.constraint_regime == "stochastic":
        G_bar = env.constraints.average(T)
        dev = np.einsum("tpi,tp,ti->t", trace.constraints - G_bar[None], trace.q, trace.lam)
        lhs = np.abs(window_sums(dev, windows))
        scale = window_max(lam_l1, windows)
        rhs = scale * azuma_constraint_bound(L, T, delta, windows[:, 1] - windows[:, 0] + 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
        azuma_g = float(ratio.max())
        azuma_g_ok = azuma_g <= 1.0

    v_dual = np.einsum("tpi,tp->ti", trace.constraints, q_hat)
    return MetricsSummary(
        T=T,
        R_T=R_T,
        R_T_realized=float(T * oracle.OPT - cum),
        V_T=violation(trace),
        V_T_plus=positive_violation(trace),
        V_T_clipped=max(0.0, violation(trace)),
        cumulative_reward=cum,
        max_lambda_l1=float(lam_l1.max()),
        lambda_cap=T ** 0.25,
        max_interval_regret=interval,
        dual_regret_zero=float(-(trace.lam * v_dual).sum()),
        azuma_r=azuma_r,
        azuma_r_bound=e_r,
        azuma_r_ok=azuma_r_ok,
        azuma_G_ratio=azuma_g,
        azuma_G_ok=azuma_g_ok,
        occupancy_bound=occupancy_bound(L, T, delta, cm.n_states, cm.n_actions),
        coverage_ok=bool(trace.kernel_covered.all()),
        epochs=int(trace.epoch[-1]),
        max_proj_residual=float(trace.proj_residual.max()),
    )


@dataclass
class GrowthFit:
    slope: float
    intercept: float
    residual: float


def fit_growth(checkpoints) -> GrowthFit:
    """Least-squares line through ``(log T_j, log max(1, value_j))``."""
    pts = [(float(t), float(v)) for t, v in checkpoints]
    if len(pts) < 3:
        raise ValueError("need at least three checkpoints")
    x = np.log([t for t, _ in pts])
    y = np.log(np.maximum([v for _, v in pts], 1.0))
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.linalg.norm(A @ coef - y))
    return GrowthFit(float(coef[0]), float(coef[1]), resid)
