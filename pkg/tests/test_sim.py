from __future__ import annotations

import numpy as np
import pytest

from tolerance.config import ConfigError
from tolerance.model import NodeParams, NodeState, ObservationModel
from tolerance.recovery import ThresholdStrategy
from tolerance.sim import (RESULT_COLUMNS, AlertTriggeredAdd, SystemConfig, Trace, baseline,
                           compare, derive_f, metrics_from_trace, results_csv, run_system,
                           student_t_ci)

SAFE = NodeParams(p_A=0.0, p_C1=0.0, p_C2=0.0)


def _trace(states: list[int], granted: list[int], horizon: int | None = None) -> Trace:
    T = len(states)
    cols = {
        "t": np.arange(1, T + 1), "node_id": np.zeros(T, dtype=int),
        "state": np.array(states), "obs": np.zeros(T, dtype=int), "belief": np.zeros(T),
        "node_action": np.array(granted), "granted": np.array(granted),
        "system_action": np.zeros(T, dtype=int), "N_t": np.ones(T, dtype=int),
        "healthy": np.ones(T, dtype=int), "available": np.ones(T, dtype=int),
    }
    return Trace(cols, horizon or T, np.zeros(T, dtype=int), np.zeros(T, dtype=int))


def test_derive_f_examples():
    assert derive_f(4, 1) == 1
    assert derive_f(3, 1) == 0
    for f in range(5):
        for k in (1, 2, 3):
            assert derive_f(2 * f + 1 + k, k) == f
    with pytest.raises(ConfigError):
        derive_f(2, 2)


def test_config_rejects_too_few_nodes():
    with pytest.raises(ConfigError):
        SystemConfig(N1=3, k=1, f=1)
    with pytest.raises(ConfigError):
        SystemConfig(k=0)
    with pytest.raises(ConfigError):
        SystemConfig(horizon=0)
    SystemConfig(N1=4, k=1, f=1)


# --- metrics --------------------------------------------------------------------

def test_hand_trace_time_to_recovery():
    states = [0, 0, 1, 1, 1, 0, 0, 0, 0, 0]
    granted = [0, 0, 0, 0, 1, 0, 0, 0, 0, 0]
    m = metrics_from_trace(_trace(states, granted))
    assert m.T_R == 2
    assert m.F_R == pytest.approx(0.1)


def test_unrecovered_compromise_counts_to_horizon():
    m = metrics_from_trace(_trace([1] * 1000, [0] * 1000))
    assert m.T_R == 999


def test_clean_trace_has_ideal_metrics():
    m = metrics_from_trace(_trace([0] * 10, [0] * 10))
    assert (m.T_A, m.T_R, m.F_R) == (1.0, 0.0, 0.0)


def test_fixed_threshold_recomputes_availability():
    m = metrics_from_trace(_trace([0, 1, 1, 0], [0] * 4), f=0)
    assert m.T_A == 0.5


def test_empty_trace_rejected():
    with pytest.raises(ValueError):
        metrics_from_trace(_trace([], []))


# --- simulator ------------------------------------------------------------------

def test_no_failures_give_ideal_metrics():
    cfg = SystemConfig(N1=3, horizon=200, params=SAFE)
    for node, system in (baseline("NO_RECOVERY"), baseline("PERIODIC", delta_r=5)):
        m = metrics_from_trace(run_system(cfg, node, system))
        assert (m.T_A, m.T_R) == (1.0, 0.0)
    m = metrics_from_trace(run_system(cfg, ThresholdStrategy((0.5,)), baseline("NO_RECOVERY")[1]))
    assert (m.T_A, m.T_R, m.F_R) == (1.0, 0.0, 0.0)


def test_periodic_schedule():
    cfg = SystemConfig(N1=5, k=4, horizon=20, params=SAFE)
    tr = run_system(cfg, *baseline("PERIODIC", delta_r=5))

    def steps(node: int, key: str) -> list[int]:
        return tr["t"][(tr["node_id"] == node) & (tr[key] == 1)].tolist()

    for node in range(4):
        assert steps(node, "granted") == steps(node, "node_action") == [5, 10, 15, 20]
    # k < N1 always, so the highest id waits one step at each deadline
    assert steps(4, "granted") == [6, 11, 16]
    assert steps(4, "node_action") == [5, 6, 10, 11, 15, 16, 20]


def test_parallel_cap_grants_one_of_three_requests():
    cfg = SystemConfig(N1=3, k=1, horizon=7, params=SAFE)
    tr = run_system(cfg, *baseline("PERIODIC", delta_r=5))

    def at(t: int, key: str) -> np.ndarray:
        return tr[key][tr["t"] == t]

    assert at(5, "node_action").sum() == 3
    assert at(5, "granted").sum() == 1
    # denied deadline requests stay pending and are served one per step
    assert at(6, "granted").sum() == 1 and at(7, "granted").sum() == 1


def test_cap_never_exceeded_on_random_traces():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        k = int(rng.integers(1, 3))
        cfg = SystemConfig(N1=int(rng.integers(2 + k, 8)), k=k, horizon=30,
                           params=NodeParams(p_A=0.3, p_C1=0.01, p_C2=0.05),
                           seed=int(rng.integers(2**31)))
        tr = run_system(cfg, ThresholdStrategy((float(rng.uniform(0, 0.6)),)),
                        baseline("NO_RECOVERY")[1])
        per_step = np.bincount(tr["t"] - 1, weights=tr["granted"], minlength=30)
        assert per_step.max() <= k


def test_adaptive_trigger_from_healthy_mean():
    row = np.zeros(11)
    row[2], row[3] = 0.9, 0.1
    obs = ObservationModel(np.vstack([row, np.full(11, 1 / 11)]))
    _, system = baseline("PERIODIC_ADAPTIVE", obs, 5)
    assert isinstance(system, AlertTriggeredAdd)
    assert system.trigger == pytest.approx(4.2)
    assert not system.add(3, np.array([4, 1]), 0.0)
    assert system.add(3, np.array([5, 1]), 0.0)


def test_baseline_validation():
    with pytest.raises(ConfigError):
        baseline("RANDOM")
    with pytest.raises(ConfigError):
        baseline("PERIODIC", delta_r=0)
    with pytest.raises(ConfigError):
        baseline("PERIODIC_ADAPTIVE", None, 5)


def test_seed_determinism_is_bitwise():
    cfg = SystemConfig(N1=4, horizon=300, seed=7)
    a = run_system(cfg, ThresholdStrategy((0.3, 0.4), 3), baseline("PERIODIC_ADAPTIVE",
                                                                   cfg.obs, 3)[1])
    b = run_system(cfg, ThresholdStrategy((0.3, 0.4), 3), baseline("PERIODIC_ADAPTIVE",
                                                                   cfg.obs, 3)[1])
    assert a.to_csv() == b.to_csv()


def test_node_count_is_conserved():
    cfg = SystemConfig(N1=5, horizon=500, params=NodeParams(p_C1=0.01, p_C2=0.05), seed=3)
    tr = run_system(cfg, *baseline("PERIODIC_ADAPTIVE", cfg.obs, 10))
    n = tr.per_step("N_t")
    np.testing.assert_array_equal(n[1:], n[:-1] - tr.evicted[:-1] + tr.added[:-1])
    assert tr.added.sum() > 0 and tr.evicted.sum() > 0
    for t in range(1, 501):
        sel = tr["t"] == t
        assert len(np.unique(tr["node_id"][sel])) == sel.sum() == n[t - 1]


def test_availability_indicator_matches_states():
    cfg = SystemConfig(N1=4, horizon=400, params=NodeParams(p_C1=0.01, p_C2=0.02), seed=1)
    tr = run_system(cfg, *baseline("NO_RECOVERY"))
    bad = np.bincount(tr["t"] - 1, weights=(tr["state"] != NodeState.HEALTHY), minlength=400)
    f = (tr.per_step("N_t") - 1 - cfg.k) // 2
    np.testing.assert_array_equal(tr.per_step("available"), (bad <= f).astype(int))


def test_no_recovery_never_recovers():
    tr = run_system(SystemConfig(seed=2), *baseline("NO_RECOVERY"))
    assert metrics_from_trace(tr).F_R == 0.0


def test_unbounded_periodic_equals_no_recovery():
    cfg = SystemConfig(horizon=500)
    for seed in range(5):
        a = metrics_from_trace(run_system(cfg.with_seed(seed), *baseline("PERIODIC")))
        b = metrics_from_trace(run_system(cfg.with_seed(seed), *baseline("NO_RECOVERY")))
        assert a == b


def test_higher_attack_rate_never_raises_availability():
    def mean_TA(p_A: float) -> float:
        cfg = SystemConfig(params=NodeParams(p_A=p_A))
        return float(np.mean([metrics_from_trace(run_system(cfg.with_seed(s),
                                                            *baseline("NO_RECOVERY"))).T_A
                              for s in range(20)]))
    assert mean_TA(0.1) <= mean_TA(0.01)


# --- comparison -----------------------------------------------------------------

def test_compare_table_schema_and_determinism():
    cfg = SystemConfig(horizon=100)
    sets = {"NO_RECOVERY": baseline("NO_RECOVERY"), "PERIODIC": baseline("PERIODIC", delta_r=5)}
    rows = compare(cfg, sets, [0, 1, 2])
    text = results_csv(rows)
    lines = text.splitlines()
    assert tuple(lines[0].split(",")) == RESULT_COLUMNS
    assert len(lines) == 1 + 2 * 3
    assert all(r.ci95_lo <= r.mean <= r.ci95_hi and r.seeds == 3 for r in rows)
    assert results_csv(compare(cfg, sets, [0, 1, 2], threads=3)) == text


def test_identical_strategies_give_identical_rows():
    cfg = SystemConfig(horizon=100)
    rows = compare(cfg, {"a": baseline("NO_RECOVERY"), "b": baseline("NO_RECOVERY")}, [0, 1])
    for x, y in zip(rows[:3], rows[3:]):
        assert (x.mean, x.ci95_lo, x.ci95_hi) == (y.mean, y.ci95_lo, y.ci95_hi)


def test_compare_needs_two_sets():
    with pytest.raises(ConfigError):
        compare(SystemConfig(), {"a": baseline("NO_RECOVERY")}, [0])


def test_student_t_interval():
    m, lo, hi = student_t_ci([1.0, 2.0, 3.0])
    # t(0.975, 2) = 4.302653 and the standard error is 1/sqrt(3)
    assert m == 2.0
    assert hi - m == pytest.approx(4.302653 / np.sqrt(3), rel=1e-6)
    assert student_t_ci([5.0]) == (5.0, 5.0, 5.0)
