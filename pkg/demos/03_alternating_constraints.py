# %% [markdown]
# Sign-alternating constraints on the two-layer fixture
#
# In even episodes action ``a`` costs +1, in odd episodes -1, while action
# ``b`` always costs -1.  On average the constraint is slack, so the dual
# player sees nonpositive feedback and the multiplier stays near zero.  The
# signed violation is negative, yet half of the episodes violate.

# %%
import os

import numpy as np

from pdgd_ops.experiment import build_cmdp, load_config, run_config
from pdgd_ops.metrics import compute_metrics
from pdgd_ops.runner import run
from pdgd_ops.scenario import environment_from_dict, solve_offline

here = os.path.dirname(os.path.abspath(__file__))
cfg_dir = os.path.join(here, os.pardir, "configs")
cfg = load_config(os.path.join(cfg_dir, "adversarial_alternating.json"))
cm = build_cmdp(cfg["cmdp"], cfg_dir)
T = 2000
env = environment_from_dict(cfg["environment"], cm, T)
oracle = solve_offline(env, cm, T)
print(f"adversarial rho={oracle.rho:.2f}, OPT={oracle.OPT:.2f}, mixed comparator safe: {oracle.q_tilde_safe}")

# %%
for K in (None, 1.0):
    trace = run(cm, env, run_config(cfg, T, seed=0, algo_overrides={"K": K}), oracle)
    ms = compute_metrics(trace, env, oracle)
    share = ms.cumulative_reward / (oracle.rho / (1 + oracle.rho) * T * oracle.OPT)
    print(f"K={K}: reward share {share:.2f}, V_T={ms.V_T:.1f}, V_T+={ms.V_T_plus:.1f}, "
          f"max|lambda|={ms.max_lambda_l1:.4f}")

# %% [markdown]
# Probability of action ``a`` at x0 over the run (every 400 episodes).

# %%
print(np.round(trace.q[::400, 0], 3))
