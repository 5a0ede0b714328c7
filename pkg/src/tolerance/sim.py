"""Discrete-time simulation of a replicated system with node and system controllers.

Each step t runs in this order:

1. Nodes that crashed in the previous transition are reported crashed at t
   and evicted afterwards.
2. Live nodes older than one step draw an alert count and update their belief.
3. Nodes request recovery; at most ``k`` requests are granted, highest belief
   first with ties broken by lowest node id. A denied periodic (deadline)
   request stays pending until granted.
4. The system controller sees floor(sum of 1 - belief) and may add a node.
5. Live nodes transition under their granted action, then the added node
   joins healthy with belief ``p_A``.

Randomness comes from one generator per episode, consumed in node-id order.
"""
from __future__ import annotations

import csv
import io
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np
from scipy import stats

from .belief import belief_update
from .config import ConfigError
from .model import NodeParams, NodeState, ObservationModel, betabin_observation_model
from .recovery.strategy import ThresholdStrategy
from .replication.cmdp import ReplicationStrategy


def derive_f(N: int, k: int) -> int:
    """Largest number of compromised or crashed nodes tolerated by N nodes with k recovering."""
    if N < 1 + k:
        raise ConfigError(f"need N >= 1 + k, got N={N}, k={k}")
    return (N - 1 - k) // 2


@dataclass(frozen=True)
class SystemConfig:
    """``f=None`` derives the tolerance threshold from the current node count each step."""

    N1: int = 3
    k: int = 1
    f: int | None = None
    horizon: int = 1000
    params: NodeParams = field(default_factory=NodeParams)
    obs: ObservationModel = field(default_factory=betabin_observation_model)
    s_max: int = 13
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.N1 > self.s_max:
            raise ConfigError("N1 must not exceed s_max")
        if self.f is None:
            derive_f(self.N1, self.k)
        elif self.f < 0 or self.N1 < 2 * self.f + 1 + self.k:
            raise ConfigError(f"N1={self.N1} is below 2f+1+k={2 * self.f + 1 + self.k}")

    def with_seed(self, seed: int) -> SystemConfig:
        return SystemConfig(self.N1, self.k, self.f, self.horizon, self.params, self.obs,
                            self.s_max, seed)

    def f_at(self, n: int) -> int:
        if self.f is not None:
            return self.f
        return (n - 1 - self.k) // 2


# --- strategies -----------------------------------------------------------

class NodePolicy(Protocol):
    name: str

    def wants_recovery(self, b: np.ndarray, age: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(requests, deadline) masks for nodes with beliefs ``b`` at local steps ``age``."""


class SystemPolicy(Protocol):
    name: str

    def add(self, s: int, obs: np.ndarray, u: float) -> bool: ...


@dataclass(frozen=True)
class ThresholdNodePolicy:
    strategy: ThresholdStrategy
    name: str = "threshold"

    def wants_recovery(self, b: np.ndarray, age: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        st = self.strategy
        th = np.asarray(st.thetas)
        if st.delta_r is None:
            return b >= th[0], np.zeros(b.shape, dtype=bool)
        deadline = age % st.delta_r == 0
        if st.index_rule == "max":
            k = np.full(age.shape, st.d - 1)
        else:
            k = np.minimum(np.where(deadline, 1, age % st.delta_r), st.d) - 1
        return deadline | (b >= th[k]), deadline


@dataclass(frozen=True)
class PeriodicNodePolicy:
    delta_r: int | None
    name: str = "periodic"

    def wants_recovery(self, b: np.ndarray, age: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.delta_r is None:
            none = np.zeros(b.shape, dtype=bool)
            return none, none
        deadline = age % self.delta_r == 0
        return deadline, deadline


@dataclass(frozen=True)
class NeverAdd:
    name: str = "never"

    def add(self, s: int, obs: np.ndarray, u: float) -> bool:
        return False


@dataclass(frozen=True)
class AlertTriggeredAdd:
    """Add a node when any alert count reaches ``trigger``."""

    trigger: float
    name: str = "adaptive"

    def add(self, s: int, obs: np.ndarray, u: float) -> bool:
        return bool(np.any(obs >= self.trigger))


@dataclass(frozen=True)
class RandomizedAdd:
    strategy: ReplicationStrategy
    name: str = "cmdp"

    def add(self, s: int, obs: np.ndarray, u: float) -> bool:
        p = self.strategy.add_prob
        return bool(u < p[min(s, len(p) - 1)])


def baseline(kind: str, obs: ObservationModel | None = None,
             delta_r: int | None = None) -> tuple[NodePolicy, SystemPolicy]:
    """NO_RECOVERY, PERIODIC or PERIODIC_ADAPTIVE node/system policy pair."""
    key = kind.upper()
    if delta_r is not None and delta_r < 1:
        raise ConfigError("delta_r must be >= 1")
    if key == "NO_RECOVERY":
        return PeriodicNodePolicy(None, "no_recovery"), NeverAdd()
    if key == "PERIODIC":
        return PeriodicNodePolicy(delta_r), NeverAdd()
    if key == "PERIODIC_ADAPTIVE":
        if obs is None:
            raise ConfigError("PERIODIC_ADAPTIVE needs the observation model")
        return PeriodicNodePolicy(delta_r), AlertTriggeredAdd(2.0 * obs.mean(NodeState.HEALTHY))
    raise ConfigError(f"unknown baseline {kind!r}")


# --- traces and metrics ---------------------------------------------------

TRACE_COLUMNS = ("t", "node_id", "state", "obs", "belief", "node_action", "granted",
                 "system_action", "N_t", "healthy", "available")


@dataclass(frozen=True, eq=False)
class Trace:
    """One row per (step, node present at the start of the step)."""

    columns: dict[str, np.ndarray]
    horizon: int
    evicted: np.ndarray
    added: np.ndarray

    def __len__(self) -> int:
        return len(self.columns["t"])

    def __getitem__(self, key: str) -> np.ndarray:
        return self.columns[key]

    def per_step(self, key: str) -> np.ndarray:
        """Value of a step-level column for t = 1..horizon."""
        out = np.zeros(self.horizon, dtype=self.columns[key].dtype)
        out[self.columns["t"] - 1] = self.columns[key]
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        cols = [self.columns[c] for c in TRACE_COLUMNS]
        for row in zip(*cols):
            w.writerow([repr(float(v)) if isinstance(v, np.floating) else int(v) for v in row])
        return buf.getvalue()


@dataclass(frozen=True)
class Metrics:
    T_A: float
    T_R: float
    F_R: float

    def as_dict(self) -> dict[str, float]:
        return {"T_A": self.T_A, "T_R": self.T_R, "F_R": self.F_R}


def metrics_from_trace(trace: Trace, f: int | None = None) -> Metrics:
    """Availability, mean time-to-recovery and recovery frequency.

    With ``f`` given, availability is recomputed against that fixed threshold;
    otherwise the trace's own indicator is used. A compromise episode runs
    from the first compromised step until a granted recovery; episodes never
    closed count ``horizon - start``.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    t, node, state, granted = trace["t"], trace["node_id"], trace["state"], trace["granted"]
    T = trace.horizon
    if f is None:
        T_A = float(trace.per_step("available").mean())
    else:
        bad = np.bincount(t - 1, weights=(state != NodeState.HEALTHY).astype(float), minlength=T)
        T_A = float(np.mean(bad <= f))
    live = state != NodeState.CRASHED
    F_R = float(granted[live].sum() / max(live.sum(), 1))
    durations: list[int] = []
    order = np.lexsort((t, node))
    start: int | None = None
    prev_node = None
    for i in order:
        if node[i] != prev_node:
            if start is not None:
                durations.append(T - start)
            start, prev_node = None, node[i]
        if state[i] == NodeState.COMPROMISED and start is None:
            start = int(t[i])
        if start is not None and granted[i]:
            durations.append(int(t[i]) - start)
            start = None
    if start is not None:
        durations.append(T - start)
    T_R = float(np.mean(durations)) if durations else 0.0
    return Metrics(T_A, T_R, F_R)


# --- simulation -----------------------------------------------------------

def run_system(config: SystemConfig, node_policy: NodePolicy | ThresholdStrategy,
               system_policy: SystemPolicy | ReplicationStrategy) -> Trace:
    if isinstance(node_policy, ThresholdStrategy):
        node_policy = ThresholdNodePolicy(node_policy)
    if isinstance(system_policy, ReplicationStrategy):
        system_policy = RandomizedAdd(system_policy)
    p, Z = config.params, config.obs
    cdf = Z.cdf
    rng = np.random.default_rng(config.seed)
    N1 = config.N1
    ids = np.arange(N1)
    s = np.zeros(N1, dtype=np.int8)
    b = np.full(N1, p.p_A)
    age = np.ones(N1, dtype=np.int64)
    last_a = np.zeros(N1, dtype=np.int8)
    pending = np.zeros(N1, dtype=bool)
    crashed = np.zeros(N1, dtype=bool)
    next_id = N1
    rows: dict[str, list[np.ndarray]] = {c: [] for c in TRACE_COLUMNS}
    evicted = np.zeros(config.horizon, dtype=np.int64)
    added = np.zeros(config.horizon, dtype=np.int64)

    for t in range(1, config.horizon + 1):
        n = len(ids)
        live = ~crashed
        o = np.full(n, -1)
        observe = live & (age >= 2)
        if np.any(observe):
            u_o = rng.random(int(observe.sum()))
            o_obs = (cdf[s[observe]] <= u_o[:, None]).sum(axis=1)
            o[observe] = o_obs
            b[observe] = belief_update(b[observe], last_a[observe], o_obs, p, Z)

        req, deadline = node_policy.wants_recovery(b, age)
        pending |= deadline & live
        req = (req | pending) & live
        granted = np.zeros(n, dtype=bool)
        cand = np.flatnonzero(req)
        if cand.size:
            order = cand[np.lexsort((ids[cand], -b[cand]))]
            granted[order[:config.k]] = True
        pending &= ~granted

        healthy = int(np.clip(np.floor(np.sum(1.0 - b[live]) + 1e-9), 0, config.s_max))
        u_sys = rng.random()
        n_live = int(live.sum())
        a_sys = bool(system_policy.add(healthy, o[live], u_sys)) and n_live < config.s_max
        f_t = config.f_at(n)
        n_bad = int(np.sum(crashed | (s == NodeState.COMPROMISED)))
        available = n_bad <= f_t

        state_col = np.where(crashed, int(NodeState.CRASHED), s)
        rows["t"].append(np.full(n, t))
        rows["node_id"].append(ids.copy())
        rows["state"].append(state_col)
        rows["obs"].append(o)
        rows["belief"].append(b.copy())
        rows["node_action"].append(req.astype(np.int8))
        rows["granted"].append(granted.astype(np.int8))
        rows["system_action"].append(np.full(n, int(a_sys)))
        rows["N_t"].append(np.full(n, n))
        rows["healthy"].append(np.full(n, healthy))
        rows["available"].append(np.full(n, int(available)))

        # evict nodes that were reported crashed this step
        evicted[t - 1] = int(crashed.sum())
        keep = ~crashed
        ids, s, b, age = ids[keep], s[keep], b[keep], age[keep]
        granted, pending = granted[keep], pending[keep]

        u = rng.random((len(ids), 2))
        crash_p = np.where(s == NodeState.COMPROMISED, p.p_C2, p.p_C1)
        crashed = u[:, 0] < crash_p
        p_to_c = np.where((s == NodeState.HEALTHY) | granted, p.p_A, 1.0 - p.p_U)
        s = (u[:, 1] < p_to_c).astype(np.int8)
        last_a = granted.astype(np.int8)
        age = age + 1
        if a_sys:
            ids = np.append(ids, next_id)
            next_id += 1
            s = np.append(s, np.int8(NodeState.HEALTHY))
            b = np.append(b, p.p_A)
            age = np.append(age, 1)
            last_a = np.append(last_a, np.int8(0))
            pending = np.append(pending, False)
            crashed = np.append(crashed, False)
            added[t - 1] = 1

    columns = {c: np.concatenate(v) if v else np.zeros(0) for c, v in rows.items()}
    return Trace(columns, config.horizon, evicted, added)


# --- comparison -----------------------------------------------------------

METRICS = ("T_A", "T_R", "F_R")
RESULT_COLUMNS = ("strategy", "metric", "mean", "ci95_lo", "ci95_hi", "seeds")


@dataclass(frozen=True)
class ResultRow:
    strategy: str
    metric: str
    mean: float
    ci95_lo: float
    ci95_hi: float
    seeds: int


def student_t_ci(values: Sequence[float], level: float = 0.95) -> tuple[float, float, float]:
    x = np.asarray(values, dtype=float)
    m = float(x.mean())
    if len(x) < 2:
        return m, m, m
    half = float(stats.t.ppf(0.5 + level / 2, len(x) - 1) * x.std(ddof=1) / np.sqrt(len(x)))
    return m, m - half, m + half


def compare(config: SystemConfig, strategy_sets: dict[str, tuple[Any, Any]],
            seeds: Sequence[int], threads: int = 1) -> list[ResultRow]:
    """Mean and Student-t 95% interval of each metric across seeds for every strategy set."""
    if len(strategy_sets) < 2:
        raise ConfigError("compare needs at least two strategy sets")

    def one(args: tuple[str, int]) -> Metrics:
        name, seed = args
        node, system = strategy_sets[name]
        return metrics_from_trace(run_system(config.with_seed(seed), node, system))

    jobs = [(name, seed) for name in strategy_sets for seed in seeds]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    out: list[ResultRow] = []
    for i, name in enumerate(strategy_sets):
        ms = results[i * len(seeds):(i + 1) * len(seeds)]
        for metric in METRICS:
            m, lo, hi = student_t_ci([getattr(x, metric) for x in ms])
            out.append(ResultRow(name, metric, m, lo, hi, len(seeds)))
    return out


def results_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow([r.strategy, r.metric, repr(r.mean), repr(r.ci95_lo), repr(r.ci95_hi), r.seeds])
    return buf.getvalue()


def tolerance_policies(config: SystemConfig, delta_r: int | None = None, epsilon_A: float = 0.9,
                       f: int | None = None, samples: int = 1000, grid_size: int = 201,
                       seed: int = 0) -> tuple[NodePolicy, SystemPolicy, dict[str, Any]]:
    """Grid-optimal node thresholds paired with the occupancy-LP replication strategy.

    When the availability bound cannot be met under the estimated transitions,
    the system policy falls back to adding a node whenever below ``s_max``.
    """
    from .recovery.dp import dp_oracle
    from .replication.cmdp import estimate_fS, extract_strategy, solve_cmdp
    from .replication.simplex import InfeasibleError

    dp = dp_oracle(config.params, config.obs, delta_r, grid_size)
    node = dp.strategy()
    f_cmdp = min((config.N1 - 1) // 2, 2) if f is None else f
    cmdp = estimate_fS(config.params, config.obs, node, config.s_max, samples, seed,
                       f=f_cmdp, epsilon_A=epsilon_A)
    info: dict[str, Any] = {"thresholds": list(node.thetas), "f": f_cmdp, "epsilon_A": epsilon_A}
    try:
        rho, sol = solve_cmdp(cmdp)
        system = extract_strategy(rho, f_cmdp)
        info.update(feasible=True, objective=sol.objective)
    except InfeasibleError:
        add = (np.arange(config.s_max + 1) < config.s_max).astype(float)
        system = ReplicationStrategy(np.stack([1 - add, add], axis=1))
        info.update(feasible=False)
    return ThresholdNodePolicy(node), RandomizedAdd(system), info
