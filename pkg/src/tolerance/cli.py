"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 infeasible model, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path
from typing import Any

import numpy as np

from .belief import FilterDegeneracyError
from .config import ConfigError, ExperimentConfig, derive_seed
from .model import ModelError, check_thm1_assumptions
from .recovery import (ConvergenceError, RecoveryObjective, dp_oracle, evaluate_candidates,
                       optimize, verify_threshold_structure)
from .reliability import (SingularSystemError, build_no_recovery_system_chain, mttf,
                          no_recovery_failure_curve, reliability_curve)
from .replication import (InfeasibleError, StationaryError, UnboundedError,
                          check_thm2_assumptions, estimate_fS, extract_strategy, solve_cmdp,
                          stationary_availability, synthetic_cmdp, verify_threshold_mixture)
from .replication.cmdp import build_lp
from .sim import (RESULT_COLUMNS, SystemConfig, baseline, compare, metrics_from_trace, run_system,
                  tolerance_policies)

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4


class _Output:
    def __init__(self, root: Path, fmt: str) -> None:
        self.root = root
        self.fmt = fmt
        self.written: list[Path] = []

    def text(self, name: str, content: str) -> None:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content)
        self.written.append(path)

    def json(self, name: str, obj: Any) -> None:
        self.text(name, json.dumps(obj, indent=2) + "\n")

    def table(self, stem: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
        """Write a table as ``stem.csv`` or ``stem.json`` depending on the chosen format."""
        if self.fmt == "json":
            self.json(f"{stem}.json", [dict(zip(header, map(_plain, r))) for r in rows])
            return
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in map(_plain, r)])
        self.text(f"{stem}.csv", buf.getvalue())


def _plain(v: Any) -> Any:
    if isinstance(v, np.generic):
        return v.item()
    return v


def _dr_label(delta_r: int | None) -> str:
    return "inf" if delta_r is None else str(delta_r)


# --- commands -------------------------------------------------------------

def cmd_solve_recovery(cfg: ExperimentConfig, out: _Output, threads: int) -> int:
    obs = cfg.require_obs()
    rec = cfg.recovery
    root = derive_seed(cfg.seed, "solve-recovery")
    assumptions = check_thm1_assumptions(cfg.node, obs)
    out.json("assumptions.json", assumptions.to_dict())

    dp = dp_oracle(cfg.node, obs, rec.delta_r, rec.grid_size)
    structure = verify_threshold_structure(dp.policy, dp.grid, rec.delta_r)
    out.table("oracle_thresholds", ("step", "threshold"),
              [(k + 1, float(a)) for k, a in enumerate(dp.thresholds)])
    oracle = dp.strategy()

    obj = RecoveryObjective(cfg.node, obs, rec.horizon, rec.episodes, root, threads)
    eval_obj = obj.with_episodes(rec.eval_episodes)
    eval_seed = derive_seed(root, "evaluation")
    J_dp, se_dp = evaluate_candidates(np.array([oracle.thetas]), rec.delta_r, eval_obj,
                                      seed=eval_seed)
    out.json("oracle.json", {
        "delta_r": _dr_label(rec.delta_r), "grid_size": rec.grid_size,
        "gain": dp.gain, "sweeps": dp.sweeps,
        "strategy": oracle.to_dict(), "J": float(J_dp[0]), "J_stderr": float(se_dp[0]),
        "all_threshold": structure.all_threshold,
        "falsified_rows": list(structure.falsified),
        "monotone_violations": list(structure.monotone_violations),
    })
    print(f"oracle: thresholds from {dp.thresholds.min():.3f} to {dp.thresholds.max():.3f}, "
          f"J={J_dp[0]:.4f}")

    for method in rec.methods:
        strategy, res = optimize(method, obj, rec.delta_r, rec.budget,
                                 seed=derive_seed(root, method), index_rule=rec.index_rule)
        J, se = evaluate_candidates(np.array([strategy.thetas]), rec.delta_r, eval_obj,
                                    seed=eval_seed, index_rule=rec.index_rule)
        name = method.lower()
        out.table(f"convergence_{name}", ("iteration", "best_J", "mean_J", "stderr"),
                  [(r.iteration, r.best_J, r.mean_J, r.stderr) for r in res.history])
        out.json(f"strategy_{name}.json", {
            "method": method, "strategy": strategy.to_dict(),
            "J": float(J[0]), "J_stderr": float(se[0]),
            "oracle_J": float(J_dp[0]), "eval_episodes": rec.eval_episodes,
        })
        print(f"{method}: J={J[0]:.4f} (oracle {J_dp[0]:.4f})")
    return EXIT_OK


def cmd_solve_replication(cfg: ExperimentConfig, out: _Output, threads: int) -> int:
    rep = cfg.replication
    root = derive_seed(cfg.seed, "solve-replication")
    if rep.source == "synthetic":
        cmdp = synthetic_cmdp(rep.s_max, derive_seed(root, "synthetic"), rep.f, rep.epsilon_A,
                              rep.synthetic_smoothing)
        source: dict[str, Any] = {"source": "synthetic", "s_max": rep.s_max}
    else:
        obs = cfg.require_obs()
        node_strategy = dp_oracle(cfg.node, obs, rep.delta_r, rep.grid_size).strategy()
        cmdp = estimate_fS(cfg.node, obs, node_strategy, rep.s_max, rep.samples,
                           derive_seed(root, "estimate_fS"), rep.smoothing, rep.f, rep.epsilon_A,
                           threads=threads)
        source = {"source": "estimate", "node_strategy": node_strategy.to_dict()}
        out.json("cmdp.json", cmdp.to_dict())
    if rep.dump_lp:
        out.text("lp.txt", build_lp(cmdp).to_text())
    assumptions = check_thm2_assumptions(cmdp, d_axis=rep.d_axis)
    out.json("assumptions.json", assumptions.to_dict())

    start = time.perf_counter()
    try:
        rho, sol = solve_cmdp(cmdp)
    except InfeasibleError as e:
        out.json("report.json", {**source, "f": cmdp.f, "epsilon_A": cmdp.epsilon_A,
                                 "feasible": False, "reason": str(e)})
        print(f"infeasible: availability bound {cmdp.epsilon_A} cannot be met ({e})",
              file=sys.stderr)
        return EXIT_INFEASIBLE
    wall = time.perf_counter() - start
    strategy = extract_strategy(rho, cmdp.f)
    visited = rho.rho.sum(axis=1) > 1e-12
    structure = verify_threshold_mixture(strategy, visited)
    availability = stationary_availability(strategy, cmdp)
    out.json("strategy.json", strategy.to_dict())
    out.table("occupancy", ("s", "rho_keep", "rho_add", "pi_add"),
              [(s, float(r[0]), float(r[1]), float(p))
               for s, (r, p) in enumerate(zip(rho.rho, strategy.add_prob))])
    out.json("report.json", {
        **source, "f": cmdp.f, "epsilon_A": cmdp.epsilon_A, "feasible": True,
        "objective": sol.objective, "duality_gap": sol.duality_gap, "pivots": sol.iterations,
        "balance_residual": rho.balance_residual(cmdp),
        "availability": availability, "availability_ok": availability >= cmdp.epsilon_A - 1e-6,
        "structure": structure.to_dict(),
    })
    print(f"objective={sol.objective:.6f} availability={availability:.6f} "
          f"threshold_mixture={structure.is_mixture} solve_wall_time={wall:.3f}s")
    return EXIT_OK


def _system_config(cfg: ExperimentConfig) -> SystemConfig:
    sim = cfg.sim
    return SystemConfig(sim.N1, sim.k, None, sim.T, cfg.node, cfg.require_obs(), sim.s_max)


def _strategy_sets(cfg: ExperimentConfig, command: str, delta_r: int | None
                   ) -> tuple[dict[str, tuple[Any, Any]], dict[str, Any]]:
    sys_cfg = _system_config(cfg)
    sim = cfg.sim
    sets: dict[str, tuple[Any, Any]] = {}
    info: dict[str, Any] = {}
    for name in sim.strategies:
        if name == "TOLERANCE":
            node, system, info = tolerance_policies(
                sys_cfg, delta_r, sim.epsilon_A, sim.f_cmdp, sim.samples, sim.grid_size,
                seed=derive_seed(cfg.seed, command, "tolerance", _dr_label(delta_r)))
            sets[name] = (node, system)
        else:
            sets[name] = baseline(name, sys_cfg.obs, delta_r)
    return sets, info


def _episode_seeds(cfg: ExperimentConfig, command: str) -> list[int]:
    return [derive_seed(cfg.seed, command, "sim", s) for s in cfg.sim.seeds]


def cmd_simulate(cfg: ExperimentConfig, out: _Output, threads: int) -> int:
    sys_cfg = _system_config(cfg)
    seeds = _episode_seeds(cfg, "simulate")
    rows = []
    for delta_r in cfg.sim.delta_r:
        sets, info = _strategy_sets(cfg, "simulate", delta_r)
        if info:
            out.json(f"tolerance_dr{_dr_label(delta_r)}.json", info)
        for name, (node, system) in sets.items():
            for label, seed in zip(cfg.sim.seeds, seeds):
                trace = run_system(replace(sys_cfg, seed=seed), node, system)
                if cfg.sim.write_traces:
                    out.text(f"traces/{name.lower()}_dr{_dr_label(delta_r)}_seed{label}.csv",
                             trace.to_csv())
                m = metrics_from_trace(trace)
                rows.append((_dr_label(delta_r), name, label, m.T_A, m.T_R, m.F_R))
    out.table("metrics", ("delta_r", "strategy", "seed", "T_A", "T_R", "F_R"), rows)
    print(f"simulated {len(rows)} episodes")
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig, out: _Output, threads: int) -> int:
    if len(cfg.sim.strategies) < 2:
        raise ConfigError("compare needs at least two strategies")
    sys_cfg = _system_config(cfg)
    seeds = _episode_seeds(cfg, "compare")
    for delta_r in cfg.sim.delta_r:
        sets, info = _strategy_sets(cfg, "compare", delta_r)
        if info:
            out.json(f"tolerance_dr{_dr_label(delta_r)}.json", info)
        rows = compare(sys_cfg, sets, seeds, threads)
        out.table(f"results_dr{_dr_label(delta_r)}", RESULT_COLUMNS,
                  [(r.strategy, r.metric, r.mean, r.ci95_lo, r.ci95_hi, r.seeds) for r in rows])
        for r in rows:
            print(f"delta_r={_dr_label(delta_r)} {r.strategy} {r.metric}={r.mean:.4f}")
    return EXIT_OK


def cmd_reliability(cfg: ExperimentConfig, out: _Output, threads: int) -> int:
    rel = cfg.reliability
    p_C1 = cfg.node.p_C1
    rows = []
    for p_A in rel.p_A_grid:
        q = (1.0 - p_A) * (1.0 - p_C1)
        for N in rel.N_grid:
            rows.append((p_A, N, rel.f, q, mttf(build_no_recovery_system_chain(N, q, rel.f))))
    out.table("mttf", ("p_A", "N", "f", "q", "mttf"), rows)

    t = np.arange(1, rel.horizon + 1)
    fail = [no_recovery_failure_curve(p_A, p_C1, rel.horizon) for p_A in rel.p_A_grid]
    out.table("failure_curves", ("t",) + tuple(f"p_A={p}" for p in rel.p_A_grid),
              [(int(k),) + tuple(float(c[i]) for c in fail) for i, k in enumerate(t)])

    q = (1.0 - cfg.node.p_A) * (1.0 - p_C1)
    curves = [reliability_curve(build_no_recovery_system_chain(N, q, rel.f), rel.horizon)
              for N in rel.N_grid]
    out.table("reliability_curves", ("t",) + tuple(f"N={N}" for N in rel.N_grid),
              [(int(k),) + tuple(float(c[i]) for c in curves) for i, k in enumerate(t)])
    for p_A, N, _, _, m in rows:
        print(f"p_A={p_A} N={N} MTTF={m:.4f}")
    return EXIT_OK


COMMANDS = {
    "solve-recovery": cmd_solve_recovery,
    "solve-replication": cmd_solve_replication,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "reliability": cmd_reliability,
}


# --- entry point ----------------------------------------------------------

def _threads(value: int | None) -> int:
    if value is None:
        env = os.environ.get("TOLERANCE_THREADS")
        if env is None or env == "":
            return 1
        try:
            value = int(env)
        except ValueError as e:
            raise ConfigError(f"TOLERANCE_THREADS must be an integer, got {env!r}") from e
    if value < 1:
        raise ConfigError("thread count must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tolerance",
                                     description="Recovery and replication control experiments.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="experiment JSON file")
    parser.add_argument("--out", help="output directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, help="top-level seed (overrides seed)")
    parser.add_argument("--threads", type=int,
                        help="worker threads (default $TOLERANCE_THREADS or 1)")
    parser.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="format of tabular outputs")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be >= 0")
            cfg = replace(cfg, seed=args.seed)
        threads = _threads(args.threads)
        out = _Output(Path(args.out or cfg.output_dir), args.format)
        return COMMANDS[args.command](cfg, out, threads)
    except InfeasibleError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, ModelError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, SingularSystemError, StationaryError, FilterDegeneracyError,
            UnboundedError, np.linalg.LinAlgError, ArithmeticError, RuntimeError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
