"""Layered (loop-free) CMDPs, occupancy measures and policies.

States are integers ordered by layer: layer 0 holds state 0 and the last
layer holds the terminal state ``n_states - 1``.  Occupancy measures are
flat vectors over the valid triples ``(x, a, x')`` with ``x`` in layer ``k``
and ``x'`` in layer ``k + 1``, enumerated layer by layer, then by ``x``,
``a`` and ``x'``.  Per-pair quantities (rewards, constraints, losses,
policies) live on the non-terminal states: arrays of shape
``(n_pairs,)`` with ``pair = x * n_actions + a``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

TOL = 1e-9
# States whose mass falls below this are treated as unreachable.
ZERO_MASS = 1e-12


class OccupancyError(ValueError):
    """Raised when a vector is not a valid occupancy measure."""


@dataclass(frozen=True, eq=False)
class LoopFreeCmdp:
    """Layered episodic MDP with an (optional) nominal reward/constraint table.

    ``transitions[j]`` is ``P(x'|x, a)`` for triple ``j``.  ``rewards`` has
    shape ``(n_pairs,)`` and ``constraints`` shape ``(n_pairs, m)``; both are
    only carried along for serialization and fixtures.
    """

    layer_sizes: tuple[int, ...]
    n_actions: int
    transitions: np.ndarray
    state_names: tuple[str, ...] | None = None
    action_names: tuple[str, ...] | None = None
    rewards: np.ndarray | None = None
    constraints: np.ndarray | None = None

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("need at least two layers (horizon >= 1)")
        if sizes[0] != 1 or sizes[-1] != 1:
            raise ValueError("first and last layers must be singletons")
        if min(sizes) < 1 or self.n_actions < 1:
            raise ValueError("empty layer or action set")
        p = np.asarray(self.transitions, dtype=float)
        if p.shape != (self.n_triples,):
            raise ValueError(f"transitions must have shape ({self.n_triples},), got {p.shape}")
        if np.any(p < -TOL) or np.any(p > 1 + TOL):
            raise ValueError("transition probabilities must lie in [0, 1]")
        sums = np.bincount(self.triple_pair, weights=p, minlength=self.n_pairs)
        bad = np.flatnonzero(np.abs(sums - 1.0) > TOL)
        if bad.size:
            x, a = divmod(int(bad[0]), self.n_actions)
            raise ValueError(f"P(.|x={x}, a={a}) sums to {sums[bad[0]]:.12g}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "transitions", p)
        for name in ("rewards", "constraints"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=float)
                if name == "constraints" and arr.ndim == 1:
                    arr = arr[:, None]
                if arr.shape[0] != self.n_pairs:
                    raise ValueError(f"{name} must have {self.n_pairs} rows")
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        if self.state_names is not None and len(self.state_names) != self.n_states:
            raise ValueError("state_names length mismatch")
        if self.action_names is not None and len(self.action_names) != self.n_actions:
            raise ValueError("action_names length mismatch")

    # -- sizes -------------------------------------------------------------

    @property
    def horizon(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def n_states(self) -> int:
        return sum(self.layer_sizes)

    @property
    def n_pairs(self) -> int:
        return (self.n_states - 1) * self.n_actions

    @property
    def n_triples(self) -> int:
        s = self.layer_sizes
        return sum(s[k] * self.n_actions * s[k + 1] for k in range(self.horizon))

    @property
    def terminal(self) -> int:
        return self.n_states - 1

    @cached_property
    def layer_start(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.layer_sizes)])

    @cached_property
    def layer_of(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.layer_sizes)), self.layer_sizes)

    def layer(self, k: int) -> np.ndarray:
        return np.arange(self.layer_start[k], self.layer_start[k + 1])

    # -- triple bookkeeping -------------------------------------------------

    @cached_property
    def triple_slices(self) -> tuple[slice, ...]:
        """Slice of the triple vector belonging to each layer transition k -> k+1."""
        out, start = [], 0
        s = self.layer_sizes
        for k in range(self.horizon):
            n = s[k] * self.n_actions * s[k + 1]
            out.append(slice(start, start + n))
            start += n
        return tuple(out)

    @cached_property
    def _triples(self) -> np.ndarray:
        rows = []
        for k in range(self.horizon):
            xs, nxt = self.layer(k), self.layer(k + 1)
            X, A, Y = np.meshgrid(xs, np.arange(self.n_actions), nxt, indexing="ij")
            rows.append(np.stack([X.ravel(), A.ravel(), Y.ravel()], axis=1))
        return np.concatenate(rows)

    @property
    def triple_state(self) -> np.ndarray:
        return self._triples[:, 0]

    @property
    def triple_action(self) -> np.ndarray:
        return self._triples[:, 1]

    @property
    def triple_next(self) -> np.ndarray:
        return self._triples[:, 2]

    @cached_property
    def triple_pair(self) -> np.ndarray:
        return self._triples[:, 0] * self.n_actions + self._triples[:, 1]

    @cached_property
    def pair_triples(self) -> tuple[slice, ...]:
        """Contiguous triple range of each (x, a) pair."""
        out = []
        for x in range(self.n_states - 1):
            width = self.layer_sizes[self.layer_of[x] + 1]
            for a in range(self.n_actions):
                start = self.triple_index(x, a, self.layer_start[self.layer_of[x] + 1])
                out.append(slice(start, start + width))
        return tuple(out)

    def triple_index(self, x: int, a: int, y: int) -> int:
        k = int(self.layer_of[x])
        if self.layer_of[y] != k + 1:
            raise ValueError(f"({x}, {a}, {y}) is not a valid layered triple")
        s = self.layer_sizes
        base = self.triple_slices[k].start
        i, j = x - self.layer_start[k], y - self.layer_start[k + 1]
        return int(base + (i * self.n_actions + a) * s[k + 1] + j)

    @cached_property
    def _next_cdf(self) -> tuple[np.ndarray, ...]:
        return tuple(np.cumsum(self.transitions[s]) for s in self.pair_triples)

    def kernel(self, x: int, a: int) -> np.ndarray:
        """P(.|x, a) over the next layer."""
        return self.transitions[self.pair_triples[x * self.n_actions + a]]

    def dense_kernel(self) -> np.ndarray:
        P = np.zeros((self.n_states, self.n_actions, self.n_states))
        P[self.triple_state, self.triple_action, self.triple_next] = self.transitions
        return P

    def marginal(self, q: np.ndarray) -> np.ndarray:
        """q(x, a) from q(x, a, x'), flat over pairs."""
        return np.bincount(self.triple_pair, weights=q, minlength=self.n_pairs)

    def broadcast(self, v: np.ndarray) -> np.ndarray:
        """Lift a pair-space vector onto the triples (same value on every x')."""
        return np.asarray(v, dtype=float)[self.triple_pair]

    @classmethod
    def from_dense(cls, layer_sizes: Sequence[int], kernel: np.ndarray, **kw) -> "LoopFreeCmdp":
        """Build from a dense ``(n_states, n_actions, n_states)`` kernel."""
        sizes = tuple(layer_sizes)
        n = sum(sizes)
        kernel = np.asarray(kernel, dtype=float)
        if kernel.shape[0] != n or kernel.shape[2] != n:
            raise ValueError("dense kernel shape does not match layer sizes")
        layer_of = np.repeat(np.arange(len(sizes)), sizes)
        for x in range(n - 1):
            off = np.flatnonzero(layer_of != layer_of[x] + 1)
            if np.any(np.abs(kernel[x][:, off]) > TOL):
                raise ValueError(f"state {x} has transitions outside the next layer")
        tri = _triples_of(sizes, kernel.shape[1])
        return cls(sizes, kernel.shape[1], kernel[tri[:, 0], tri[:, 1], tri[:, 2]], **kw)


def _triples_of(sizes, n_actions):
    start = np.concatenate([[0], np.cumsum(sizes)])
    rows = []
    for k in range(len(sizes) - 1):
        X, A, Y = np.meshgrid(np.arange(start[k], start[k + 1]), np.arange(n_actions),
                              np.arange(start[k + 1], start[k + 2]), indexing="ij")
        rows.append(np.stack([X.ravel(), A.ravel(), Y.ravel()], axis=1))
    return np.concatenate(rows)


@dataclass(frozen=True)
class Trajectory:
    """Visited states ``x_0..x_L`` and actions ``a_0..a_{L-1}``."""

    states: tuple[int, ...]
    actions: tuple[int, ...]

    def __post_init__(self):
        if len(self.states) != len(self.actions) + 1:
            raise ValueError("a trajectory has one more state than actions")

    @property
    def steps(self):
        return list(zip(self.states[:-1], self.actions))


# -- occupancy <-> policy -----------------------------------------------------

def validate_occupancy(cmdp: LoopFreeCmdp, q: np.ndarray, tol: float = TOL) -> None:
    """Check the layer-normalization and flow-conservation conditions.

    Raises :class:`OccupancyError` naming the first condition that fails.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (cmdp.n_triples,):
        raise OccupancyError(f"expected {cmdp.n_triples} triples, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise OccupancyError("non-finite entries")
    if q.min() < -tol:
        j = int(np.argmin(q))
        raise OccupancyError(f"negative entry q[{j}] = {q[j]:.3g}")
    for k, sl in enumerate(cmdp.triple_slices):
        total = q[sl].sum()
        if abs(total - 1.0) > tol:
            raise OccupancyError(f"layer {k} normalization: mass {total:.12g} != 1")
    outflow = np.bincount(cmdp.triple_state, weights=q, minlength=cmdp.n_states)
    inflow = np.bincount(cmdp.triple_next, weights=q, minlength=cmdp.n_states)
    for x in range(cmdp.layer_start[1], cmdp.terminal):
        if abs(outflow[x] - inflow[x]) > tol:
            raise OccupancyError(
                f"flow conservation at state {x}: in {inflow[x]:.12g} != out {outflow[x]:.12g}")


def induce_policy(cmdp: LoopFreeCmdp, q: np.ndarray, *, validate: bool = True,
                  tol: float = 1e-6) -> np.ndarray:
    """Policy ``pi(a|x) = q(x, a) / q(x)``; uniform at states with no mass.

    Returns an array of shape ``(n_states - 1, n_actions)``.
    """
    q = np.asarray(q, dtype=float)
    if validate:
        validate_occupancy(cmdp, q, tol)
    q_sa = cmdp.marginal(np.maximum(q, 0.0)).reshape(-1, cmdp.n_actions)
    q_x = q_sa.sum(axis=1, keepdims=True)
    pi = np.full_like(q_sa, 1.0 / cmdp.n_actions)
    reach = q_x[:, 0] > ZERO_MASS
    pi[reach] = q_sa[reach] / q_x[reach]
    return pi


def validate_policy(cmdp: LoopFreeCmdp, pi: np.ndarray) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (cmdp.n_states - 1, cmdp.n_actions):
        raise ValueError(f"policy must have shape {(cmdp.n_states - 1, cmdp.n_actions)}")
    if np.any(pi < -TOL) or np.any(np.abs(pi.sum(axis=1) - 1.0) > TOL):
        raise ValueError("policy rows must be probability distributions")
    return pi


def induce_occupancy(cmdp: LoopFreeCmdp, pi: np.ndarray) -> np.ndarray:
    """Exact forward computation of q^{P, pi}."""
    pi = validate_policy(cmdp, pi)
    return _forward(cmdp, pi.ravel())


def _forward(cmdp, pi_flat):
    q = np.empty(cmdp.n_triples)
    mu = np.zeros(cmdp.n_states)
    mu[0] = 1.0
    st, pr, nx, P = cmdp.triple_state, cmdp.triple_pair, cmdp.triple_next, cmdp.transitions
    for sl in cmdp.triple_slices:
        q[sl] = mu[st[sl]] * pi_flat[pr[sl]] * P[sl]
        np.add.at(mu, nx[sl], q[sl])
    return q


def sample_trajectory(cmdp: LoopFreeCmdp, pi: np.ndarray,
                      rng: int | np.random.Generator) -> Trajectory:
    """Draw one episode from the chain induced by ``(P, pi)``."""
    rng = np.random.default_rng(rng)
    u = rng.random(2 * cmdp.horizon)
    cdf_pi = np.cumsum(pi, axis=1)
    x, states, actions = 0, [0], []
    for k in range(cmdp.horizon):
        a = min(int(np.searchsorted(cdf_pi[x], u[2 * k], side="right")), cmdp.n_actions - 1)
        cdf = cmdp._next_cdf[x * cmdp.n_actions + a]
        j = min(int(np.searchsorted(cdf, u[2 * k + 1], side="right")), len(cdf) - 1)
        x = int(cmdp.layer_start[k + 1] + j)
        states.append(x)
        actions.append(a)
    return Trajectory(tuple(states), tuple(actions))


# -- casting arbitrary finite-horizon MDPs -------------------------------------

def cast_loop_free(transitions: np.ndarray | LoopFreeCmdp, horizon: int | None = None,
                   start: int = 0, *, prune: bool = True,
                   state_names: Sequence[str] | None = None,
                   action_names: Sequence[str] | None = None) -> tuple[LoopFreeCmdp, list]:
    """Unroll an ``(S, A, S)`` kernel over ``horizon`` steps.

    State ``(x, k)`` becomes a state of layer ``k``; the last layer is one sink.
    With ``prune`` only structurally reachable copies are kept.  Returns the
    layered CMDP and, for every layered state, its ``(x, k)`` origin (``None``
    for the sink).  A :class:`LoopFreeCmdp` input is returned unchanged.
    """
    if isinstance(transitions, LoopFreeCmdp):
        cm = transitions
        return cm, [(x, int(cm.layer_of[x])) for x in range(cm.terminal)] + [None]
    if horizon is None or horizon < 1:
        raise ValueError("horizon must be >= 1")
    P = np.asarray(transitions, dtype=float)
    S, A, S2 = P.shape
    if S != S2:
        raise ValueError("kernel must be (S, A, S)")
    if np.any(np.abs(P.sum(axis=2) - 1.0) > TOL):
        raise ValueError("kernel rows must sum to 1")
    layers = [[start]]
    for _ in range(1, horizon):
        if prune:
            reach = np.flatnonzero(P[layers[-1]].sum(axis=(0, 1)) > 0)
        else:
            reach = np.arange(S)
        layers.append([int(s) for s in reach])
    sizes = [len(l) for l in layers] + [1]
    origin = [(x, k) for k, l in enumerate(layers) for x in l] + [None]
    n = len(origin)
    dense = np.zeros((n, A, n))
    idx = {o: i for i, o in enumerate(origin[:-1])}
    for i, (x, k) in enumerate(origin[:-1]):
        if k == horizon - 1:
            dense[i, :, n - 1] = 1.0
        else:
            for y in layers[k + 1]:
                dense[i, :, idx[(y, k + 1)]] = P[x, :, y]
    names = None
    if state_names is not None:
        names = tuple(f"{state_names[o[0]]}@{o[1]}" for o in origin[:-1]) + ("sink",)
    cm = LoopFreeCmdp.from_dense(sizes, dense, state_names=names,
                                 action_names=None if action_names is None else tuple(action_names))
    return cm, origin


def lift_pair_values(values: np.ndarray, origin: list, n_actions: int) -> np.ndarray:
    """Copy per-(x, a) values of the original MDP onto every layered copy."""
    values = np.asarray(values, dtype=float)
    rows = [values[o[0]] for o in origin[:-1]]
    out = np.stack(rows)
    return out.reshape(len(rows) * n_actions, *values.shape[2:])


# -- JSON ----------------------------------------------------------------------

def cmdp_to_dict(cmdp: LoopFreeCmdp) -> dict:
    """JSON-ready document: named layers, nested transition maps, dense arrays."""
    snames = cmdp.state_names or tuple(f"s{i}" for i in range(cmdp.n_states))
    anames = cmdp.action_names or tuple(f"a{i}" for i in range(cmdp.n_actions))
    layers = [[snames[x] for x in cmdp.layer(k)] for k in range(len(cmdp.layer_sizes))]
    trans: dict = {}
    for x in range(cmdp.terminal):
        nxt = cmdp.layer(cmdp.layer_of[x] + 1)
        trans[snames[x]] = {
            anames[a]: {snames[y]: float(p) for y, p in zip(nxt, cmdp.kernel(x, a)) if p > 0}
            for a in range(cmdp.n_actions)
        }
    doc = {"layers": layers, "actions": list(anames), "transitions": trans}
    if cmdp.rewards is not None:
        doc["rewards"] = cmdp.rewards.reshape(-1, cmdp.n_actions).tolist()
    if cmdp.constraints is not None:
        m = cmdp.constraints.shape[1]
        doc["constraints"] = cmdp.constraints.T.reshape(m, -1, cmdp.n_actions).tolist()
    return doc


def cmdp_from_dict(doc: dict) -> LoopFreeCmdp:
    layers = doc["layers"]
    actions = list(doc["actions"])
    names = [s for layer in layers for s in layer]
    if len(set(names)) != len(names):
        raise ValueError("state names must be unique")
    index = {s: i for i, s in enumerate(names)}
    aindex = {a: i for i, a in enumerate(actions)}
    n, nA = len(names), len(actions)
    dense = np.zeros((n, nA, n))
    for s, amap in doc["transitions"].items():
        for a, nxt in amap.items():
            for y, p in nxt.items():
                dense[index[s], aindex[a], index[y]] = float(p)
    rewards = constraints = None
    if doc.get("rewards") is not None:
        rewards = np.asarray(doc["rewards"], dtype=float).reshape(-1)
    if doc.get("constraints") is not None:
        g = np.asarray(doc["constraints"], dtype=float)
        constraints = g.reshape(g.shape[0], -1).T
    return LoopFreeCmdp.from_dense([len(l) for l in layers], dense, state_names=tuple(names),
                                   action_names=tuple(actions), rewards=rewards,
                                   constraints=constraints)


def save_cmdp(cmdp: LoopFreeCmdp, path) -> None:
    with open(path, "w") as fh:
        json.dump(cmdp_to_dict(cmdp), fh, indent=2)


def load_cmdp(path) -> LoopFreeCmdp:
    with open(path) as fh:
        return cmdp_from_dict(json.load(fh))


# -- fixtures ------------------------------------------------------------------

def t1() -> LoopFreeCmdp:
    """Two-layer toy: x0 -a-> u, x0 -b-> v, then both to xL.

    One constraint; reward 1 on (x0, a); constraint +1 on (x0, a), -1 on (x0, b).
    """
    dense = np.zeros((4, 2, 4))
    dense[0, 0, 1] = 1.0
    dense[0, 1, 2] = 1.0
    dense[1:3, :, 3] = 1.0
    r = np.zeros(6)
    r[0] = 1.0
    g = np.zeros((6, 1))
    g[0, 0], g[1, 0] = 1.0, -1.0
    return LoopFreeCmdp.from_dense((1, 2, 1), dense, state_names=("x0", "u", "v", "xL"),
                                   action_names=("a", "b"), rewards=r, constraints=g)


def random_cmdp(layer_sizes: Sequence[int], n_actions: int, rng, *, m: int = 1,
                sparsity: float = 0.0) -> LoopFreeCmdp:
    """Random layered kernel with uniform rewards and constraints."""
    rng = np.random.default_rng(rng)
    sizes = tuple(layer_sizes)
    tri = _triples_of(sizes, n_actions)
    w = rng.random(len(tri))
    if sparsity:
        w *= rng.random(len(tri)) >= sparsity
    pair = tri[:, 0] * n_actions + tri[:, 1]
    n_pairs = (sum(sizes) - 1) * n_actions
    tot = np.bincount(pair, weights=w, minlength=n_pairs)
    empty = tot[pair] == 0
    w[empty] = 1.0
    tot = np.bincount(pair, weights=w, minlength=n_pairs)
    p = w / tot[pair]
    return LoopFreeCmdp(sizes, n_actions, p, rewards=rng.random(n_pairs),
                        constraints=rng.uniform(-1, 1, size=(n_pairs, m)))
