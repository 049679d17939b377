"""Config-driven experiment grid: horizons x seeds, metrics, criteria.

A config is a JSON document with four sections::

    {"cmdp": {"fixture": "t1"} | {"path": "..."} | {"random": {...}} | <cmdp document>,
     "environment": {"rewards": {...}, "constraints": {...}},
     "algorithm": {"delta": 0.1, "tol": 1e-7, "K": null, "eta": null, "C": null},
     "experiment": {"T": [2000, 8000, 32000], "seeds": 5, "workers": 1,
                    "criteria": [...]}}

Each criterion is ``{"name", "kind", "required", ...}`` with ``kind`` one of
``slope``, ``fraction_at_most``, ``fraction_true``, ``oracle_flag``,
``reward_fraction`` and ``all_at_most``; see :func:`evaluate_criterion`.
"""
from __future__ import annotations

import json
import os
import traceback
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .cmdp import LoopFreeCmdp, cmdp_from_dict, load_cmdp, random_cmdp, t1
from .metrics import compute_metrics, fit_growth
from .runner import RunConfig, run
from .scenario import environment_from_dict, solve_offline


def load_config(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def build_cmdp(doc: dict, base_dir: str | None = None) -> LoopFreeCmdp:
    if "fixture" in doc:
        if doc["fixture"] != "t1":
            raise ValueError(f"unknown fixture {doc['fixture']!r}")
        return t1()
    if "path" in doc:
        path = doc["path"]
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return load_cmdp(path)
    if "random" in doc:
        r = doc["random"]
        return random_cmdp(r["layers"], r["actions"], r.get("seed", 0), m=r.get("m", 1),
                           sparsity=r.get("sparsity", 0.0))
    return cmdp_from_dict(doc)


def run_config(cfg: dict, T: int, seed: int, algo_overrides: dict | None = None,
               csv_path: str | None = None) -> RunConfig:
    algo = dict(cfg.get("algorithm", {}))
    algo.update(algo_overrides or {})
    return RunConfig(T=T, seed=seed, delta=algo.get("delta", 0.1), tol=algo.get("tol", 1e-7),
                     C=algo.get("C"), eta=algo.get("eta"), K=algo.get("K"),
                     known_kernel=algo.get("known_kernel", False), csv_path=csv_path)


def _one_run(args):
    cfg, T, seed, out_dir, base_dir, overrides = args
    rec = {"T": T, "seed": seed}
    try:
        cmdp = build_cmdp(cfg["cmdp"], base_dir)
        env = environment_from_dict(cfg.get("environment", {}), cmdp, T)
        oracle = solve_offline(env, cmdp, T)
        csv_path = None
        if out_dir and cfg.get("experiment", {}).get("write_csv", True):
            csv_path = os.path.join(out_dir, f"run_T{T}_seed{seed}.csv")
        rc = run_config(cfg, T, seed, overrides, csv_path)
        trace = run(cmdp, env, rc, oracle)
        if out_dir:
            trace.write_summary(os.path.join(out_dir, f"run_T{T}_seed{seed}.json"))
        rec.update(compute_metrics(trace, env, oracle).to_dict())
        rec.update(rho=oracle.rho, OPT=oracle.OPT, zeta=oracle.zeta,
                   condition2_holds=oracle.condition2_holds, wall_time=trace.wall_time,
                   q_tilde_safe=oracle.q_tilde_safe)
    except Exception as exc:  # recorded, the grid continues
        rec["error"] = f"{type(exc).__name__}: {exc}"
        rec["traceback"] = traceback.format_exc()
    return rec


def _seeds(spec) -> list[int]:
    if isinstance(spec, int):
        return list(range(spec))
    return [int(s) for s in spec]


def _bound(value, run: dict) -> float:
    if isinstance(value, str):
        if value == "zeta":
            return np.inf if run.get("zeta") is None else run["zeta"]
        if value == "cap":
            return run["lambda_cap"]
        raise ValueError(f"unknown symbolic bound {value!r}")
    return float(value)


def evaluate_criterion(crit: dict, runs: list[dict]) -> dict:
    """Measured value and verdict of one criterion over successful runs.

    ``slope``: median of ``metric`` per horizon, fitted log-log slope <= ``max_slope``.
    ``fraction_at_most``: at the largest horizon, share of runs with
    ``metric <= bound`` is >= ``min_fraction`` (``bound`` may be "zeta" or "cap").
    ``all_at_most``: every run at every horizon has ``metric <= bound``.
    ``fraction_true``: share of runs whose boolean ``metric`` holds >= ``min_fraction``.
    ``oracle_flag``: the oracle ``flag`` holds on every run.
    ``reward_fraction``: median cumulative reward at the largest horizon is at least
    ``factor * rho / (1 + rho) * T * OPT``.
    """
    ok_runs = [r for r in runs if "error" not in r]
    out = {"name": crit["name"], "required": bool(crit.get("required", True))}
    kind = crit["kind"]
    failed = len(runs) - len(ok_runs)
    if not ok_runs:
        out.update({"target": crit.get("target", kind), "measured": None, "pass": False,
                    "note": f"{failed} runs failed"})
        return out
    Ts = sorted({r["T"] for r in ok_runs})
    top = [r for r in ok_runs if r["T"] == Ts[-1]]
    if kind == "slope":
        pts = [(T, float(np.median([r[crit["metric"]] for r in ok_runs if r["T"] == T]))) for T in Ts]
        target = f"slope({crit['metric']}) <= {crit['max_slope']}"
        if len(pts) < 3:
            out.update({"target": crit.get("target", target), "measured": {"medians": pts},
                        "pass": False, "note": "slope needs at least three horizons"})
            return out
        fit = fit_growth(pts)
        measured = {"slope": fit.slope, "medians": pts}
        passed = fit.slope <= crit["max_slope"]
    elif kind == "fraction_at_most":
        hits = [r[crit["metric"]] <= _bound(crit["bound"], r) for r in top]
        frac = float(np.mean(hits))
        measured = {"fraction": frac, "n": len(hits)}
        passed = frac >= crit["min_fraction"]
        target = f"P[{crit['metric']} <= {crit['bound']}] >= {crit['min_fraction']}"
    elif kind == "all_at_most":
        worst = max(r[crit["metric"]] - _bound(crit["bound"], r) for r in ok_runs)
        measured = {"worst_excess": float(worst)}
        passed = worst <= crit.get("slack", 0.0)
        target = f"{crit['metric']} <= {crit['bound']} on every run"
    elif kind == "fraction_true":
        vals = [bool(r[crit["metric"]]) for r in ok_runs if r[crit["metric"]] is not None]
        frac = float(np.mean(vals)) if vals else 0.0
        measured = {"fraction": frac, "n": len(vals)}
        passed = bool(vals) and frac >= crit["min_fraction"]
        target = f"P[{crit['metric']}] >= {crit['min_fraction']}"
    elif kind == "oracle_flag":
        vals = [bool(r[crit["flag"]]) for r in ok_runs]
        measured = {"holds": all(vals)}
        passed = all(vals)
        target = f"{crit['flag']} holds"
    elif kind == "reward_fraction":
        r0 = top[0]
        goal = crit["factor"] * r0["rho"] / (1 + r0["rho"]) * Ts[-1] * r0["OPT"]
        med = float(np.median([r["cumulative_reward"] for r in top]))
        measured = {"median_cumulative_reward": med, "goal": goal}
        passed = med >= goal
        target = f"median cumulative reward >= {crit['factor']} rho/(1+rho) T OPT"
    else:
        raise ValueError(f"unknown criterion kind {kind!r}")
    out.update({"target": crit.get("target", target), "measured": measured, "pass": bool(passed)})
    if failed:
        out["note"] = f"{failed} runs failed"
        out["pass"] = False
    return out


def run_matrix(cfg: dict, seeds=None, out_dir: str | None = None, *, workers: int | None = None,
               base_dir: str | None = None, algo_overrides: dict | None = None) -> dict:
    """Run every (T, seed) cell, then score the configured criteria."""
    exp = cfg.get("experiment", {})
    Ts = exp.get("T", [2000, 8000, 32000])
    Ts = [Ts] if isinstance(Ts, int) else list(Ts)
    seed_list = _seeds(seeds if seeds is not None else exp.get("seeds", 1))
    workers = workers or exp.get("workers", 1)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    jobs = [(cfg, T, s, out_dir, base_dir, algo_overrides) for T in Ts for s in seed_list]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_one_run, jobs))
    else:
        runs = [_one_run(j) for j in jobs]
    criteria = [evaluate_criterion(c, runs) for c in exp.get("criteria", [])]
    report = {"criteria": criteria, "runs": runs}
    if out_dir:
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(report, fh, indent=2, default=_jsonable)
    return report


def report_failed(report: dict) -> bool:
    return any(c["required"] and not c["pass"] for c in report["criteria"])


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
