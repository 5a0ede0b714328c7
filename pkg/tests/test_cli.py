from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from tolerance.cli import main

FAST_RECOVERY = {"budget": 2, "horizon": 20, "episodes": 5, "eval_episodes": 20,
                 "grid_size": 101}
FAST_SIM = {"T": 60, "seeds": [0, 1], "samples": 200, "grid_size": 101}


def _run(tmp_path: Path, command: str, config: dict, *extra: str, out: str = "out") -> int:
    path = tmp_path / f"{out}.json"
    path.write_text(json.dumps(config))
    return main([command, "--config", str(path), "--out", str(tmp_path / out), *extra])


def _rows(path: Path) -> list[dict[str, str]]:
    with path.open() as fh:
        return list(csv.DictReader(fh))


def _snapshot(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


# --- reliability --------------------------------------------------------------

def test_reliability_outputs(tmp_path):
    assert _run(tmp_path, "reliability", {}) == 0
    rows = _rows(tmp_path / "out" / "mttf.csv")
    for p_A in ("0.1", "0.05", "0.025", "0.01"):
        values = [float(r["mttf"]) for r in rows if r["p_A"] == p_A]
        assert len(values) == 8 and np.all(np.diff(values) > 0)
    curves = _rows(tmp_path / "out" / "failure_curves.csv")
    assert len(curves) == 100
    assert float(curves[9]["p_A=0.1"]) == pytest.approx(1 - (0.9 * (1 - 1e-5)) ** 10, abs=1e-12)
    assert (tmp_path / "out" / "reliability_curves.csv").exists()


def test_empty_node_grid_is_a_config_error(tmp_path, capsys):
    assert _run(tmp_path, "reliability", {"reliability": {"N_grid": []}}) == 2
    assert "N_grid" in capsys.readouterr().err


def test_json_table_format(tmp_path):
    assert _run(tmp_path, "reliability", {"reliability": {"N_grid": [3, 4]}}, "--format",
                "json") == 0
    rows = json.loads((tmp_path / "out" / "mttf.json").read_text())
    assert {"p_A", "N", "f", "q", "mttf"} <= set(rows[0])


def test_unreadable_config_is_a_config_error(tmp_path):
    assert main(["reliability", "--config", str(tmp_path / "none.json")]) == 2


# --- recovery -------------------------------------------------------------------

def test_solve_recovery_all_methods(tmp_path):
    assert _run(tmp_path, "solve-recovery", {"obs": {}, "recovery": {**FAST_RECOVERY,
                                                                     "method": "ALL"}}) == 0
    out = tmp_path / "out"
    for m in ("cem", "de", "spsa"):
        assert _rows(out / f"convergence_{m}.csv")[0].keys() == {"iteration", "best_J", "mean_J",
                                                                 "stderr"}
        strategy = json.loads((out / f"strategy_{m}.json").read_text())["strategy"]
        assert len(strategy["thetas"]) == 1
    assert json.loads((out / "assumptions.json").read_text())["checks"]["B"]
    assert json.loads((out / "oracle.json").read_text())["all_threshold"]
    assert len(_rows(out / "oracle_thresholds.csv")) == 1


def test_missing_obs_block_exits_two(tmp_path, capsys):
    assert _run(tmp_path, "solve-recovery", {"recovery": FAST_RECOVERY}) == 2
    assert "obs" in capsys.readouterr().err


# --- replication ----------------------------------------------------------------

def test_synthetic_replication_reports_structure(tmp_path):
    cfg = {"replication": {"source": "synthetic", "s_max": 20, "epsilon_A": None, "f": None,
                           "dump_lp": True}}
    assert _run(tmp_path, "solve-replication", cfg) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["feasible"] and report["availability_ok"]
    assert {"is_mixture", "beta1", "beta2", "kappa"} <= set(report["structure"])
    assert (tmp_path / "out" / "lp.txt").read_text().startswith("VARS 42 EQ 22 GE 1")


def test_unreachable_availability_exits_three(tmp_path):
    cfg = {"obs": {}, "replication": {"s_max": 6, "epsilon_A": 1.0, "samples": 1000,
                                      "grid_size": 101}}
    assert _run(tmp_path, "solve-replication", cfg) == 3
    assert not json.loads((tmp_path / "out" / "report.json").read_text())["feasible"]


@pytest.mark.xfail(strict=True, raises=AssertionError,
                   reason="floored healthy-mass transitions cannot reach 0.9 availability "
                          "with f=2 at the default node model")
def test_default_replication_block_is_feasible(tmp_path):
    assert _run(tmp_path, "solve-replication", {"obs": {}, "replication": {"grid_size": 101}}) == 0


# --- simulation ---------------------------------------------------------------

def test_compare_manifest_and_degenerate_periodic(tmp_path):
    cfg = {"obs": {}, "sim": {**FAST_SIM, "delta_r": [15, "inf"]}}
    assert _run(tmp_path, "compare", cfg) == 0
    out = tmp_path / "out"
    for label in ("15", "inf"):
        rows = _rows(out / f"results_dr{label}.csv")
        assert [r["strategy"] for r in rows[::3]] == ["TOLERANCE", "NO_RECOVERY", "PERIODIC",
                                                       "PERIODIC_ADAPTIVE"]
        assert [r["metric"] for r in rows[:3]] == ["T_A", "T_R", "F_R"]
    inf = {(r["strategy"], r["metric"]): r for r in _rows(out / "results_drinf.csv")}
    for metric in ("T_A", "T_R", "F_R"):
        a, b = inf["PERIODIC", metric], inf["NO_RECOVERY", metric]
        assert (a["mean"], a["ci95_lo"], a["ci95_hi"]) == (b["mean"], b["ci95_lo"], b["ci95_hi"])


def test_compare_is_byte_identical_across_runs_and_threads(tmp_path, monkeypatch):
    cfg = {"obs": {}, "sim": {**FAST_SIM, "strategies": ["TOLERANCE", "PERIODIC"]}}
    assert _run(tmp_path, "compare", cfg, out="a") == 0
    assert _run(tmp_path, "compare", cfg, out="b") == 0
    monkeypatch.setenv("TOLERANCE_THREADS", "3")
    assert _run(tmp_path, "compare", cfg, out="c") == 0
    a, b, c = (_snapshot(tmp_path / d) for d in "abc")
    assert a == b == c and a


def test_seed_flag_changes_outputs(tmp_path):
    cfg = {"obs": {}, "sim": {**FAST_SIM, "strategies": ["NO_RECOVERY", "PERIODIC"]}}
    assert _run(tmp_path, "compare", cfg, out="a") == 0
    assert _run(tmp_path, "compare", cfg, "--seed", "9", out="b") == 0
    assert _snapshot(tmp_path / "a") != _snapshot(tmp_path / "b")


def test_simulate_writes_traces(tmp_path):
    cfg = {"obs": {}, "sim": {**FAST_SIM, "strategies": ["NO_RECOVERY", "PERIODIC_ADAPTIVE"]}}
    assert _run(tmp_path, "simulate", cfg) == 0
    traces = sorted(p.name for p in (tmp_path / "out" / "traces").iterdir())
    assert traces == ["no_recovery_dr15_seed0.csv", "no_recovery_dr15_seed1.csv",
                      "periodic_adaptive_dr15_seed0.csv", "periodic_adaptive_dr15_seed1.csv"]
    header = (tmp_path / "out" / "traces" / traces[0]).read_text().splitlines()[0]
    assert header == ("t,node_id,state,obs,belief,node_action,granted,system_action,N_t,"
                      "healthy,available")
    assert len(_rows(tmp_path / "out" / "metrics.csv")) == 4


def test_invalid_thread_variable_is_a_config_error(tmp_path, monkeypatch):
    monkeypatch.setenv("TOLERANCE_THREADS", "many")
    assert _run(tmp_path, "reliability", {}) == 2


def test_compare_needs_two_strategies(tmp_path):
    assert _run(tmp_path, "compare", {"obs": {}, "sim": {**FAST_SIM,
                                                         "strategies": ["PERIODIC"]}}) == 2
