import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdgd_ops.metrics import (azuma_reward_bound, compute_metrics, dyadic_windows, fit_growth,
                              positive_violation, regret, violation, window_max, window_sums)
from pdgd_ops.runner import RunConfig, RunTrace, run
from pdgd_ops.scenario import environment_from_dict, solve_offline

FIXED = {"rewards": {"family": "fixed"}, "constraints": {"family": "fixed"}}


def synthetic_trace(cm, q_pairs, G, r, lam=None):
    T = len(q_pairs)
    m = G.shape[2]
    lam = np.zeros((T, m)) if lam is None else lam
    return RunTrace(cm, RunConfig(T=max(T, 2)), r, G, np.zeros((T, cm.n_triples)), q_pairs, lam,
                    np.zeros_like(r), np.ones(T, int), np.zeros(T), np.zeros(T),
                    np.zeros((T, cm.horizon + 1), int), np.zeros((T, cm.horizon), int),
                    np.zeros(T), 0.0, np.ones(T, bool))


def test_regret_zero_at_optimum(cm):
    env = environment_from_dict(FIXED, cm)
    orc = solve_offline(env, cm, 10)
    q = np.tile(cm.marginal(orc.q_star), (10, 1))
    tr = synthetic_trace(cm, q, np.tile(cm.constraints, (10, 1, 1)), np.tile(cm.rewards, (10, 1)))
    assert regret(tr, env, orc) == pytest.approx(0.0, abs=1e-9)


def test_violation_constants(cm):
    q = np.tile(cm.marginal(np.full(cm.n_triples, 0.25)), (10, 1))
    G = np.zeros((10, cm.n_pairs, 1))
    G[:, :, 0] = -0.1 / 2  # every layer contributes -0.05
    tr = synthetic_trace(cm, q, G, np.zeros((10, cm.n_pairs)))
    assert violation(tr) == pytest.approx(-1.0)
    assert positive_violation(tr) == 0.0


def test_violation_permutation_invariant(cm, rng):
    q = rng.random((20, cm.n_pairs))
    G = rng.uniform(-1, 1, (20, cm.n_pairs, 3))
    r = np.zeros((20, cm.n_pairs))
    a = synthetic_trace(cm, q, G, r)
    b = synthetic_trace(cm, q, G[:, :, [2, 0, 1]], r)
    assert violation(a) == pytest.approx(violation(b))
    assert positive_violation(a) == pytest.approx(positive_violation(b))


def test_azuma_reward_value():
    assert azuma_reward_bound(2, 100, 0.1) == pytest.approx(24.48, abs=0.01)


def test_dyadic_windows():
    w = dyadic_windows(10)
    assert [1, 10] in w.tolist() and [1, 8] in w.tolist() and [9, 10] in w.tolist()
    assert np.all(w[:, 0] >= 1) and np.all(w[:, 1] <= 10) and np.all(w[:, 0] <= w[:, 1])
    lengths = set((w[:, 1] - w[:, 0] + 1).tolist())
    assert lengths == {1, 2, 4, 8, 10}


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), T=st.integers(1, 70))
def test_window_reductions(seed, T):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=T)
    w = dyadic_windows(T)
    assert np.allclose(window_sums(v, w), [v[a - 1:b].sum() for a, b in w])
    assert np.allclose(window_max(v, w), [v[a - 1:b].max() for a, b in w])


@pytest.mark.parametrize("power", [0.0, 0.5, 0.75])
def test_fit_growth_power_laws(power):
    Ts = [2000, 8000, 32000]
    fit = fit_growth([(T, 3.0 * T ** power if power else 5.0) for T in Ts])
    assert fit.slope == pytest.approx(power, abs=1e-9)
    scaled = fit_growth([(T, 7.0 * 3.0 * T ** power if power else 35.0) for T in Ts])
    assert scaled.slope == pytest.approx(fit.slope, abs=1e-9)


def test_fit_growth_needs_three_points():
    with pytest.raises(ValueError):
        fit_growth([(1, 1), (2, 2)])


def test_metrics_match_summary(cm):
    doc = {"rewards": {"family": "beta", "mean": [[0.9, 0.1], [0.4, 0.6], [0.5, 0.5]]},
           "constraints": {"family": "uniform", "mean": [[[0.5, -0.5], [0, 0], [0, 0]]], "spread": 0.3}}
    env = environment_from_dict(doc, cm)
    orc = solve_offline(env, cm, 256)
    tr = run(cm, env, RunConfig(T=256, seed=2), orc)
    ms = compute_metrics(tr, env, orc)
    assert ms.R_T == tr.summary["R_T"]
    assert ms.V_T == tr.summary["V_T"]
    assert ms.V_T_clipped == max(0.0, ms.V_T) and ms.V_T_plus >= ms.V_T_clipped
    assert ms.cumulative_reward == pytest.approx(tr.expected_reward.sum())
    assert ms.azuma_r is not None and ms.azuma_G_ratio is not None
    assert ms.max_lambda_l1 <= ms.lambda_cap
    assert ms.epochs == tr.epoch[-1]
    d = ms.to_dict()
    assert set(d) >= {"R_T", "V_T", "V_T_plus", "max_interval_regret"}
