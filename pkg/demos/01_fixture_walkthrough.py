# %% [markdown]
# Two-layer fixture: occupancy polytope, LP oracle and projection
#
# The fixture has one start state, two middle states ``u`` and ``v`` and a
# terminal state.  Action ``a`` leads to ``u`` and action ``b`` to ``v``.
# Only ``(x0, a)`` pays a reward, and it also costs +1 on the single
# constraint; ``(x0, b)`` costs -1.

# %%
import numpy as np

from pdgd_ops import build_polytope, induce_occupancy, induce_policy, lp_maximize, project, t1
from pdgd_ops.scenario import environment_from_dict, solve_offline

cm = t1()
print("layers", cm.layer_sizes, "triples", cm.n_triples)

# %% [markdown]
# An occupancy vector lives on (state, action, next state) triples.  Any
# policy induces one through the kernel, and the policy can be read back.

# %%
pi = np.array([[0.3, 0.7], [0.5, 0.5], [1.0, 0.0]])
q = induce_occupancy(cm, pi)
print("q =", np.round(q, 3))
print("policy at x0 recovered:", induce_policy(cm, q)[0])

poly = build_polytope(cm)
print("inside the exact polytope:", poly.contains(q))

# %% [markdown]
# Projection pulls an arbitrary vector back onto the polytope.

# %%
noisy = q + np.random.default_rng(0).normal(scale=0.3, size=q.shape)
out = project(noisy, poly, full_output=True)
print("projected:", np.round(out.q, 3), "certificate", f"{out.kkt:.1e}")

# %% [markdown]
# Constrained optimum: half the mass on each first action.

# %%
env = environment_from_dict({"rewards": {"family": "fixed"}, "constraints": {"family": "fixed"}}, cm)
rep = solve_offline(env, cm, T=256)
print(f"OPT={rep.OPT:.3f} rho={rep.rho:.3f} zeta={rep.zeta:.1f}")
print("unconstrained optimum:", lp_maximize(cm.rewards, poly).optimum)
print(f"margin condition threshold at T=256: {rep.condition2_threshold:.2f} -> holds {rep.condition2_holds}")
