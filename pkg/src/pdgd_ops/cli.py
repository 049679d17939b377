"""Command-line entry point: ``simulate``, ``oracle``, ``matrix``, ``validate``."""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .experiment import (_jsonable, build_cmdp, load_config, report_failed, run_config,
                         run_matrix)
from .metrics import compute_metrics
from .runner import run
from .scenario import environment_from_dict, solve_offline


def _horizon(cfg: dict, override: int | None) -> int:
    if override:
        return override
    T = cfg.get("experiment", {}).get("T", 2000)
    return max(T) if isinstance(T, list) else int(T)


def _apply_flags(cfg: dict, args) -> dict:
    cfg = json.loads(json.dumps(cfg))
    algo = cfg.setdefault("algorithm", {})
    if args.tol is not None:
        algo["tol"] = args.tol
    if args.delta is not None:
        algo["delta"] = args.delta
    return cfg


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2, default=_jsonable)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    print(text)


def cmd_simulate(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    base = os.path.dirname(os.path.abspath(args.config))
    cmdp = build_cmdp(cfg["cmdp"], base)
    T = _horizon(cfg, args.T)
    env = environment_from_dict(cfg.get("environment", {}), cmdp, T)
    oracle = solve_offline(env, cmdp, T)
    csv_path = summary_path = None
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        csv_path = os.path.join(args.out, "run.csv")
        summary_path = os.path.join(args.out, "summary.json")
    rc = run_config(cfg, T, args.seed, csv_path=csv_path)
    rc.summary_path = summary_path
    trace = run(cmdp, env, rc, oracle)
    out = dict(trace.summary)
    out["metrics"] = compute_metrics(trace, env, oracle).to_dict()
    _dump(out)
    return 0


def cmd_oracle(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    cmdp = build_cmdp(cfg["cmdp"], os.path.dirname(os.path.abspath(args.config)))
    T = _horizon(cfg, args.T)
    env = environment_from_dict(cfg.get("environment", {}), cmdp, T)
    rep = solve_offline(env, cmdp, T).to_dict()
    rep["T"] = T
    path = None
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "oracle.json")
    _dump(rep, path)
    return 0 if rep["opt_status"] == "optimal" else 1


def cmd_matrix(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    seeds = None
    if args.seeds is not None:
        seeds = args.seeds
    elif args.seed is not None:
        seeds = [args.seed]
    report = run_matrix(cfg, seeds, args.out, workers=args.workers,
                        base_dir=os.path.dirname(os.path.abspath(args.config)))
    for c in report["criteria"]:
        flag = "PASS" if c["pass"] else "FAIL"
        req = "" if c["required"] else " (informational)"
        print(f"[{flag}] {c['name']}{req}: {c['target']} | measured {json.dumps(c['measured'], default=_jsonable)}")
    errors = [r for r in report["runs"] if "error" in r]
    for r in errors:
        print(f"run T={r['T']} seed={r['seed']} failed: {r['error']}", file=sys.stderr)
    return 1 if report_failed(report) else 0


def cmd_validate(args) -> int:
    """Self-checks on the two-layer fixture."""
    from .cmdp import induce_occupancy, induce_policy, t1
    from .polytope import build_polytope, lp_maximize, project

    cm = t1()
    env = environment_from_dict({"rewards": {"family": "fixed"},
                                 "constraints": {"family": "fixed"}}, cm)
    rep = solve_offline(env, cm, 256)
    poly = build_polytope(cm, "exact")
    pi = np.array([[0.3, 0.7], [0.5, 0.5], [1.0, 0.0]])
    q = induce_occupancy(cm, pi)
    checks = {
        "OPT = 0.5": abs(rep.OPT - 0.5) <= 1e-7,
        "rho = 1": abs(rep.rho - 1.0) <= 1e-7,
        "zeta = 80": rep.zeta is not None and abs(rep.zeta - 80.0) <= 1e-9,
        "margin condition fails at T=256": not rep.condition2_holds,
        "unconstrained optimum = 1": abs(lp_maximize(cm.rewards, poly).optimum - 1.0) <= 1e-7,
        "occupancy feasible": poly.contains(q, 1e-9),
        "projection idempotent": np.abs(project(q, poly, args.tol or 1e-7) - q).max() <= 1e-7,
        "policy round trip": np.abs(induce_policy(cm, q)[0] - pi[0]).max() <= 1e-9,
    }
    for name, ok in checks.items():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    return 0 if all(checks.values()) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pdgd-ops", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="experiment JSON")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--tol", type=float, default=None, help="projection tolerance")
        sp.add_argument("--delta", type=float, default=None, help="confidence parameter")

    sp = sub.add_parser("simulate", help="one run")
    common(sp)
    sp.add_argument("--T", type=int, default=None, help="episodes (default: largest in config)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("oracle", help="offline optimum and feasibility margin")
    common(sp)
    sp.add_argument("--T", type=int, default=None)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("matrix", help="experiment grid with criteria")
    common(sp)
    sp.add_argument("--seeds", type=int, default=None, help="number of seeds (overrides config)")
    sp.add_argument("--workers", type=int, default=None)
    sp.set_defaults(func=cmd_matrix)

    sp = sub.add_parser("validate", help="fixture self-checks")
    common(sp, config=False)
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "simulate" and args.seed is None:
        args.seed = 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
