"""Reward/constraint generators and the offline oracles.

A source produces one table per episode: rewards are pair vectors in
``[0, 1]`` and constraints are ``(n_pairs, m)`` matrices in ``[-1, 1]``.
Stochastic sources draw i.i.d. around a mean table; adversarial sources
follow a fixed schedule or a scripted rule of ``t`` (1-based).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cmdp import LoopFreeCmdp
from .polytope import build_polytope, lp_maximize, max_margin


class ScheduleExhausted(IndexError):
    pass


class Source:
    """One component (rewards or constraints) of an environment."""

    regime = "stochastic"

    def __init__(self, shape: tuple[int, ...], lo: float, hi: float):
        self.shape, self.lo, self.hi = shape, lo, hi

    def draw(self, t: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def expected(self, t: int) -> np.ndarray:
        """Mean table at episode ``t`` (the table itself for schedules)."""
        raise NotImplementedError

    def average(self, T: int) -> np.ndarray:
        """``E[.]`` for stochastic sources, time average over ``1..T`` otherwise."""
        raise NotImplementedError

    def tables(self, T: int) -> np.ndarray:
        """Distinct tables an adversarial schedule takes up to ``T``."""
        raise NotImplementedError


def _check_range(arr, lo, hi, what):
    if np.any(arr < lo - 1e-12) or np.any(arr > hi + 1e-12):
        raise ValueError(f"{what} must lie in [{lo}, {hi}]")
    return arr


class Stochastic(Source):
    """Per-entry families around a mean table.

    ``bernoulli``: rewards in {0, 1} with the given mean.
    ``beta``: rewards ~ Beta(k mu, k (1 - mu)) with concentration ``k``.
    ``sign``: constraints ``mu +/- s`` with equal probability (shifted and
    scaled Bernoulli), ``s = min(spread, 1 - |mu|)``.
    ``uniform``: constraints ~ U[mu - s, mu + s] with the same ``s``.
    ``fixed``: the point mass at the mean.
    """

    def __init__(self, mean, family: str, lo: float, hi: float, *, spread: float = 1.0,
                 concentration: float = 4.0):
        mean = np.asarray(mean, dtype=float)
        super().__init__(mean.shape, lo, hi)
        self.mean = _check_range(mean, lo, hi, "mean table")
        self.family = family
        allowed = {"fixed", "bernoulli", "beta"} if lo == 0 else {"fixed", "sign", "uniform"}
        if family not in allowed:
            raise ValueError(f"family {family!r} not available here; choose from {sorted(allowed)}")
        self.half = np.minimum(spread, 1.0 - np.abs(mean))
        self.concentration = concentration

    def draw(self, t, rng):
        mu = self.mean
        if self.family == "fixed":
            return mu.copy()
        if self.family == "bernoulli":
            return (rng.random(self.shape) < mu).astype(float)
        if self.family == "beta":
            k = self.concentration
            a = np.maximum(k * mu, 1e-9)
            b = np.maximum(k * (1.0 - mu), 1e-9)
            return rng.beta(a, b)
        if self.family == "sign":
            return mu + self.half * np.where(rng.random(self.shape) < 0.5, -1.0, 1.0)
        return mu + self.half * rng.uniform(-1.0, 1.0, self.shape)

    def expected(self, t):
        return self.mean

    def average(self, T):
        return self.mean

    def tables(self, T):
        return self.mean[None]


class Adversarial(Source):
    regime = "adversarial"

    def average(self, T):
        return np.mean([self.expected(t) for t in range(1, T + 1)], axis=0)

    def tables(self, T):
        return np.unique(np.stack([self.expected(t) for t in range(1, T + 1)]), axis=0)

    def draw(self, t, rng):
        return self.expected(t).copy()


class Schedule(Adversarial):
    def __init__(self, values, lo, hi):
        values = np.asarray(values, dtype=float)
        super().__init__(values.shape[1:], lo, hi)
        self.values = _check_range(values, lo, hi, "schedule")

    def expected(self, t):
        if not 1 <= t <= len(self.values):
            raise ScheduleExhausted(f"schedule has {len(self.values)} entries, asked for t={t}")
        return self.values[t - 1]

    def average(self, T):
        if T > len(self.values):
            raise ScheduleExhausted(f"schedule has {len(self.values)} entries, need {T}")
        return self.values[:T].mean(axis=0)

    def tables(self, T):
        if T > len(self.values):
            raise ScheduleExhausted(f"schedule has {len(self.values)} entries, need {T}")
        return np.unique(self.values[:T], axis=0)


class SignAlternating(Adversarial):
    """``base + (-1)^t amplitude``."""

    def __init__(self, base, amplitude, lo, hi):
        base, amplitude = np.asarray(base, dtype=float), np.asarray(amplitude, dtype=float)
        super().__init__(base.shape, lo, hi)
        self.base, self.amplitude = base, amplitude
        _check_range(base + amplitude, lo, hi, "alternating table")
        _check_range(base - amplitude, lo, hi, "alternating table")

    def expected(self, t):
        return self.base + self.amplitude if t % 2 == 0 else self.base - self.amplitude

    def average(self, T):
        return self.base + self.amplitude * ((T // 2) - (T - T // 2)) / T

    def tables(self, T):
        return np.unique(np.stack([self.expected(t) for t in range(1, min(T, 2) + 1)]), axis=0)


class PhaseSwitch(Adversarial):
    """One table before ``switch * T`` and another afterwards."""

    def __init__(self, first, second, T: int, lo, hi, switch: float = 0.5):
        first, second = np.asarray(first, dtype=float), np.asarray(second, dtype=float)
        super().__init__(first.shape, lo, hi)
        self.first = _check_range(first, lo, hi, "phase table")
        self.second = _check_range(second, lo, hi, "phase table")
        self.t_switch = int(math.floor(switch * T))

    def expected(self, t):
        return self.first if t <= self.t_switch else self.second

    def average(self, T):
        n1 = min(T, self.t_switch)
        return (n1 * self.first + (T - n1) * self.second) / T

    def tables(self, T):
        if T <= self.t_switch:
            return self.first[None]
        return np.unique(np.stack([self.first, self.second]), axis=0)


@dataclass
class EnvironmentSpec:
    rewards: Source
    constraints: Source
    m: int
    seed: int | None = None
    doc: dict = field(default_factory=dict)

    @property
    def reward_regime(self) -> str:
        return self.rewards.regime

    @property
    def constraint_regime(self) -> str:
        return self.constraints.regime


def draw_episode(spec: EnvironmentSpec, t: int, rng: np.random.Generator):
    """Reward vector and constraint matrix for episode ``t``."""
    return spec.rewards.draw(t, rng), spec.constraints.draw(t, rng)


# -- construction from JSON-style documents ---------------------------------------

def _table(value, cmdp: LoopFreeCmdp, kind: str, m: int):
    """Reward tables are ``(n_states-1, A)``, constraint tables ``(m, n_states-1, A)``
    or flat pair vectors/matrices; scalars broadcast."""
    arr = np.asarray(value, dtype=float)
    n, A = cmdp.terminal, cmdp.n_actions
    if kind == "rewards":
        if arr.ndim == 0:
            return np.full(cmdp.n_pairs, float(arr))
        return arr.reshape(n * A)
    if arr.ndim == 0:
        return np.full((cmdp.n_pairs, m), float(arr))
    if arr.shape == (m, n, A):
        return arr.reshape(m, n * A).T.copy()
    return arr.reshape(n * A, m)


def _source(doc: dict, cmdp: LoopFreeCmdp, kind: str, m: int, T: int | None) -> Source:
    lo, hi = (0.0, 1.0) if kind == "rewards" else (-1.0, 1.0)
    nominal = cmdp.rewards if kind == "rewards" else cmdp.constraints
    regime = doc.get("regime", "stochastic")
    if regime == "stochastic":
        mean = doc.get("mean")
        if mean is None:
            if nominal is None:
                raise ValueError(f"no mean {kind} given and the CMDP carries none")
            mean = nominal
        else:
            mean = _table(mean, cmdp, kind, m)
        default = "bernoulli" if kind == "rewards" else "uniform"
        return Stochastic(mean, doc.get("family", default), lo, hi,
                          spread=doc.get("spread", 1.0),
                          concentration=doc.get("concentration", 4.0))
    if regime != "adversarial":
        raise ValueError(f"unknown regime {regime!r}")
    script = doc.get("script", "schedule")
    if script == "schedule":
        vals = np.asarray(doc["values"], dtype=float)
        return Schedule(vals, lo, hi)
    if script == "fixed":
        return Schedule(_table(doc["value"], cmdp, kind, m)[None].repeat(T or 1, axis=0), lo, hi)
    if script == "sign_alternating":
        base = _table(doc.get("base", 0.0), cmdp, kind, m)
        amp = _table(doc["amplitude"], cmdp, kind, m)
        return SignAlternating(base, amp, lo, hi)
    if script == "phase_switch":
        if T is None:
            raise ValueError("phase_switch needs the episode budget T")
        return PhaseSwitch(_table(doc["first"], cmdp, kind, m), _table(doc["second"], cmdp, kind, m),
                           T, lo, hi, doc.get("switch", 0.5))
    raise ValueError(f"unknown adversarial script {script!r}")


def environment_from_dict(doc: dict, cmdp: LoopFreeCmdp, T: int | None = None) -> EnvironmentSpec:
    """Build an environment from ``{"rewards": {...}, "constraints": {...}}``.

    A top-level ``schedule_csv`` path supplies both components as adversarial
    schedules; a component given as ``{"regime": "adversarial", "script":
    "schedule"}`` without ``values`` then reads from it.
    """
    m = int(doc.get("m", cmdp.constraints.shape[1] if cmdp.constraints is not None else 1))
    rdoc = dict(doc.get("rewards", {}))
    gdoc = dict(doc.get("constraints", {}))
    if doc.get("schedule_csv"):
        G, r = load_schedule_csv(doc["schedule_csv"], cmdp.n_pairs, m)
        rdoc.setdefault("regime", "adversarial")
        gdoc.setdefault("regime", "adversarial")
        if rdoc["regime"] == "adversarial" and "values" not in rdoc:
            rdoc["values"] = r
        if gdoc["regime"] == "adversarial" and "values" not in gdoc:
            gdoc["values"] = G
    return EnvironmentSpec(_source(rdoc, cmdp, "rewards", m, T),
                           _source(gdoc, cmdp, "constraints", m, T), m, doc.get("seed"), doc)


def load_environment(path, cmdp: LoopFreeCmdp, T: int | None = None) -> EnvironmentSpec:
    with open(path) as fh:
        return environment_from_dict(json.load(fh), cmdp, T)


def save_schedule_csv(path, G: np.ndarray, r: np.ndarray) -> None:
    """One row per episode: ``t``, then ``G_t`` row-major, then ``r_t``."""
    G, r = np.asarray(G, dtype=float), np.asarray(r, dtype=float)
    T, n, m = G.shape
    header = ["t"] + [f"g_{p}_{i}" for p in range(n) for i in range(m)] + [f"r_{p}" for p in range(n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t in range(T):
            w.writerow([t + 1] + [repr(float(v)) for v in G[t].ravel()] + [repr(float(v)) for v in r[t]])


def load_schedule_csv(path, n_pairs: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 1 + n_pairs * m + n_pairs:
        raise ValueError(f"schedule CSV has {data.shape[1]} columns, expected {1 + n_pairs * (m + 1)}")
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    G = data[:, 1:1 + n_pairs * m].reshape(-1, n_pairs, m)
    r = data[:, 1 + n_pairs * m:]
    return G, r


# -- offline oracles ----------------------------------------------------------------

@dataclass
class OracleReport:
    OPT: float
    q_star: np.ndarray | None
    opt_status: str
    rho: float
    q_circ: np.ndarray | None
    slater_holds: bool
    condition2_holds: bool
    condition2_threshold: float
    zeta: float | None
    q_tilde: np.ndarray | None = None
    q_tilde_safe: bool | None = None
    r_bar: np.ndarray | None = None
    G_bar: np.ndarray | None = None

    def to_dict(self) -> dict:
        def arr(v):
            return None if v is None else np.asarray(v).tolist()
        return {"OPT": self.OPT, "opt_status": self.opt_status, "rho": self.rho,
                "slater_holds": self.slater_holds, "condition2_holds": self.condition2_holds,
                "condition2_threshold": self.condition2_threshold, "zeta": self.zeta,
                "q_tilde_safe": self.q_tilde_safe, "q_star": arr(self.q_star),
                "q_circ": arr(self.q_circ), "q_tilde": arr(self.q_tilde)}


def condition2_threshold(T: int, L: int, m: int) -> float:
    return T ** (-1 / 8) * L * math.sqrt(20 * m)


def solve_offline(spec: EnvironmentSpec, cmdp: LoopFreeCmdp, T: int,
                  slater_tol: float = 1e-9) -> OracleReport:
    """Optimal safe value, feasibility margin and the derived comparators."""
    poly = build_polytope(cmdp, "exact")
    L, m = cmdp.horizon, spec.m
    r_bar = spec.rewards.average(T)
    G_bar = spec.constraints.average(T)
    lp = lp_maximize(r_bar, poly, (G_bar.T, np.zeros(m)))
    if spec.constraint_regime == "stochastic":
        rows = G_bar.T
    else:
        rows = np.concatenate([g.T for g in spec.constraints.tables(T)])
    mm = max_margin(rows, poly)
    rho = mm.optimum if mm.status == "optimal" else -math.inf
    slater = rho > slater_tol
    thr = condition2_threshold(T, L, m)
    zeta = 20.0 * m * L * L / rho ** 2 if slater else None
    q_tilde = safe = None
    if spec.constraint_regime == "adversarial" and slater and lp.argmax is not None:
        q_tilde = rho / (1 + rho) * lp.argmax + 1 / (1 + rho) * mm.argmax
        pair = cmdp.marginal(q_tilde)
        worst = max(float((g.T @ pair).max()) for g in spec.constraints.tables(T))
        safe = worst <= 1e-9
    return OracleReport(lp.optimum, lp.argmax, lp.status, rho, mm.argmax, slater, rho >= thr,
                        thr, zeta, q_tilde, safe, r_bar, G_bar)
