"""Replication-factor control as a constrained MDP over the number of healthy nodes."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any

import numpy as np

from ..model import AssumptionReport, NodeParams, ObservationModel
from ..nodes import step_nodes
from ..recovery.strategy import ThresholdStrategy
from .simplex import LinearProgram, LPSolution, solve_lp


class StationaryError(ArithmeticError):
    """The policy-induced chain has no unique stationary distribution."""


def _check_rows(P: np.ndarray, name: str, atol: float = 1e-10) -> None:
    if np.any(P < 0):
        raise ValueError(f"{name} has negative entries")
    if np.any(np.abs(P.sum(axis=-1) - 1.0) > atol):
        raise ValueError(f"every row of {name} must sum to 1")


@dataclass(frozen=True, eq=False)
class SystemCmdp:
    """``fS[s, a, s']`` = P(s' | s, a) over states 0..s_max and actions {0 keep, 1 add}."""

    s_max: int
    f: int
    epsilon_A: float
    fS: np.ndarray

    def __post_init__(self) -> None:
        fS = np.array(self.fS, dtype=float)
        if fS.shape != (self.s_max + 1, 2, self.s_max + 1):
            expected = (self.s_max + 1, 2, self.s_max + 1)
            raise ValueError(f"fS must have shape {expected}, got {fS.shape}")
        _check_rows(fS, "fS")
        if not 0.0 <= self.epsilon_A <= 1.0:
            raise ValueError("epsilon_A must lie in [0, 1]")
        if not 0 <= self.f <= self.s_max:
            raise ValueError("f must lie in [0, s_max]")
        fS.setflags(write=False)
        object.__setattr__(self, "fS", fS)

    @property
    def n_states(self) -> int:
        return self.s_max + 1

    def to_dict(self) -> dict[str, Any]:
        return {"s_max": self.s_max, "f": self.f, "epsilon_A": self.epsilon_A,
                "fS": self.fS.tolist()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SystemCmdp:
        return cls(int(d["s_max"]), int(d["f"]), float(d["epsilon_A"]), np.asarray(d["fS"]))


@dataclass(frozen=True, eq=False)
class ReplicationStrategy:
    """``pi[s, a]`` = probability of action a in state s."""

    pi: np.ndarray

    def __post_init__(self) -> None:
        pi = np.array(self.pi, dtype=float)
        if pi.ndim != 2 or pi.shape[1] != 2:
            raise ValueError("pi must have shape (n_states, 2)")
        _check_rows(pi, "pi")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    @property
    def add_prob(self) -> np.ndarray:
        return self.pi[:, 1]

    def to_dict(self) -> dict[str, Any]:
        return {"pi": self.pi.tolist()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ReplicationStrategy:
        return cls(np.asarray(d["pi"]))


@dataclass(frozen=True, eq=False)
class OccupancyMeasure:
    rho: np.ndarray
    objective: float
    duality_gap: float = 0.0

    def __post_init__(self) -> None:
        rho = np.array(self.rho, dtype=float)
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    def balance_residual(self, cmdp: SystemCmdp) -> float:
        inflow = np.einsum("sa,sat->t", self.rho, cmdp.fS)
        return float(np.abs(self.rho.sum(axis=1) - inflow).max())


# --- transition estimation ------------------------------------------------

def stationary_node_pool(params: NodeParams, obs: ObservationModel, strategy: ThresholdStrategy,
                         size: int, burn_in: int, rng: np.random.Generator):
    """Approximate draws of (state, belief, local step) from the long-run node process.

    Crashed nodes are replaced by fresh ones, mirroring node restarts.
    """
    s = np.zeros(size, dtype=np.int8)
    b = np.full(size, params.p_A)
    t = np.ones(size, dtype=np.int64)
    for _ in range(burn_in):
        a = _strategy_actions(strategy, b, t)
        s, crashed, _, b = step_nodes(s, b, a, rng.random((size, 3)), params, obs)
        t += 1
        s[crashed], b[crashed], t[crashed] = 0, params.p_A, 1
    return s, b, t


def _strategy_actions(strategy: ThresholdStrategy, b: np.ndarray, t: np.ndarray) -> np.ndarray:
    th = np.asarray(strategy.thetas)
    if strategy.delta_r is None:
        return b >= th[0]
    forced = t % strategy.delta_r == 0
    if strategy.index_rule == "max":
        k = np.full(t.shape, strategy.d - 1)
    else:
        k = np.minimum(np.where(forced, 1, t % strategy.delta_r), strategy.d) - 1
    return forced | (b >= th[k])


def estimate_fS(params: NodeParams, obs: ObservationModel, strategy: ThresholdStrategy,
                s_max: int, samples: int = 1000, seed: int = 0, smoothing: float = 1.0,
                f: int = 0, epsilon_A: float = 0.0, burn_in: int = 200, pool_size: int = 20_000,
                threads: int = 1) -> SystemCmdp:
    """Monte Carlo estimate of the healthy-node count transition.

    From state s, s nodes drawn from the long-run node process take one step;
    the next state is floor(sum of (1 - belief) over surviving nodes) plus the
    action, clipped to [0, s_max]. ``smoothing`` is added to every cell
    before normalization.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    ss = np.random.SeedSequence(seed)
    pool_ss, *state_ss = ss.spawn(s_max + 2)
    ps, pb, pt = stationary_node_pool(params, obs, strategy, pool_size, burn_in,
                                      np.random.default_rng(pool_ss))

    def row_counts(s: int) -> np.ndarray:
        rng = np.random.default_rng(state_ss[s])
        counts = np.zeros((2, s_max + 1))
        if s == 0:
            for a in (0, 1):
                counts[a, min(a, s_max)] = samples
            return counts
        idx = rng.integers(pool_size, size=(samples, s))
        a_node = _strategy_actions(strategy, pb[idx], pt[idx])
        s_next, crashed, _, b_next = step_nodes(ps[idx], pb[idx], a_node,
                                                rng.random((samples, s, 3)), params, obs)
        healthy = np.where(crashed, 0.0, 1.0 - b_next).sum(axis=1)
        base = np.floor(healthy + 1e-9).astype(int)
        for a in (0, 1):
            counts[a] = np.bincount(np.clip(base + a, 0, s_max), minlength=s_max + 1)
        return counts

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(row_counts, range(s_max + 1)))
    else:
        rows = [row_counts(s) for s in range(s_max + 1)]
    counts = np.stack(rows) + smoothing
    fS = counts / counts.sum(axis=2, keepdims=True)
    return SystemCmdp(s_max, f, epsilon_A, fS)


def synthetic_cmdp(s_max: int, seed: int = 0, f: int | None = None,
                   epsilon_A: float | None = None, smoothing: float = 1e-3) -> SystemCmdp:
    """Random local-drift instance: the count moves by -2..+1 plus the action, then is
    mixed with the uniform distribution at weight ``smoothing``.

    ``f`` defaults to s_max // 3 and ``epsilon_A`` to half the availability of
    always adding, which keeps the LP feasible.
    """
    if s_max < 1:
        raise ValueError("s_max must be >= 1")
    n = s_max + 1
    rng = np.random.default_rng(seed)
    drift = rng.dirichlet(np.full(4, 3.0))
    fS = np.zeros((n, 2, n))
    s = np.arange(n)
    for a in (0, 1):
        for k, p in enumerate(drift):
            np.add.at(fS[:, a, :], (s, np.clip(s + a + k - 2, 0, s_max)), p)
    fS = (1.0 - smoothing) * fS + smoothing / n
    f = s_max // 3 if f is None else f
    if epsilon_A is None:
        always = ReplicationStrategy(np.tile([0.0, 1.0], (n, 1)))
        epsilon_A = 0.5 * stationary_availability(always, SystemCmdp(s_max, f, 0.0, fS))
    return SystemCmdp(s_max, f, epsilon_A, fS)


# --- structural assumptions -----------------------------------------------

def _tails(fS: np.ndarray) -> np.ndarray:
    """tails[..., s] = sum over s' >= s."""
    return np.flip(np.cumsum(np.flip(fS, axis=-1), axis=-1), axis=-1)


def check_thm2_assumptions(cmdp: SystemCmdp, tol: float = 1e-12,
                           d_axis: str = "tail") -> AssumptionReport:
    """Positivity (B), monotone dominance in the state (C) and tail-sum supermodularity (D).

    D requires the add-minus-keep tail-sum gain to be non-decreasing in the
    tail index (``d_axis="tail"``) or in the current state (``d_axis="state"``).
    """
    if d_axis not in ("tail", "state"):
        raise ValueError("d_axis must be 'tail' or 'state'")
    fS = cmdp.fS
    tails = _tails(fS)
    b_ok = bool(np.all(fS > 0))
    dom = tails[1:] - tails[:-1]
    c_ok = bool(np.all(dom >= -tol))
    g = tails[:, 1, :] - tails[:, 0, :]
    dg = np.diff(g, axis=1 if d_axis == "tail" else 0)
    d_ok = bool(np.all(dg >= -tol))
    details: dict[str, Any] = {}
    if not c_ok:
        s_hat, a, s = np.argwhere(dom < -tol)[0]
        details["C_violation"] = {"s_hat": int(s_hat), "a": int(a), "s": int(s)}
    if not d_ok:
        s_hat, s = np.argwhere(dg < -tol)[0]
        if d_axis == "tail":
            details["D_violation"] = {"s_hat": int(s_hat), "s": int(s) + 1}
        else:
            details["D_violation"] = {"s_hat": int(s_hat) + 1, "s": int(s)}
    if not b_ok:
        details["B_zero_entries"] = int(np.sum(fS <= 0))
    return AssumptionReport({"B": b_ok, "C": c_ok, "D": d_ok}, details)


# --- linear program --------------------------------------------------------

def build_lp(cmdp: SystemCmdp) -> LinearProgram:
    """Occupancy-measure LP; variable index is 2*s + a."""
    n = cmdp.n_states
    c = np.repeat(np.arange(n, dtype=float), 2)
    balance = np.zeros((n, 2 * n))
    for s in range(n):
        balance[s, 2 * s:2 * s + 2] += 1.0
    # inflow into state t from every (s, a)
    balance -= cmdp.fS.reshape(2 * n, n).T
    A_eq = np.vstack([np.ones((1, 2 * n)), balance])
    b_eq = np.concatenate([[1.0], np.zeros(n)])
    avail = np.repeat((np.arange(n) >= cmdp.f + 1).astype(float), 2)[None, :]
    names = tuple(f"rho[{s},{a}]" for s in range(n) for a in (0, 1))
    return LinearProgram(c, A_eq, b_eq, avail, np.array([cmdp.epsilon_A]), names)


def solve_cmdp(cmdp: SystemCmdp, tol: float = 1e-9) -> tuple[OccupancyMeasure, LPSolution]:
    sol = solve_lp(build_lp(cmdp), tol=tol)
    rho = sol.x.reshape(cmdp.n_states, 2)
    return OccupancyMeasure(rho, sol.objective, sol.duality_gap), sol


def extract_strategy(rho: OccupancyMeasure | np.ndarray, f: int,
                     atol: float = 1e-12) -> ReplicationStrategy:
    """Row-normalized occupancy; unvisited states add a node iff s <= f."""
    r = rho.rho if isinstance(rho, OccupancyMeasure) else np.asarray(rho, dtype=float)
    mass = r.sum(axis=1)
    pi = np.zeros_like(r)
    visited = mass > atol
    pi[visited] = r[visited] / mass[visited, None]
    s = np.arange(len(r))
    default_add = s <= f
    pi[~visited, 1] = default_add[~visited]
    pi[~visited, 0] = ~default_add[~visited]
    return ReplicationStrategy(pi)


# --- structure and evaluation ---------------------------------------------

@dataclass(frozen=True)
class MixtureReport:
    is_mixture: bool
    beta1: int | None
    beta2: int | None
    kappa: float | None
    falsified: tuple[int, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"is_mixture": self.is_mixture, "beta1": self.beta1, "beta2": self.beta2,
                "kappa": self.kappa, "falsified": list(self.falsified)}


def verify_threshold_mixture(strategy: ReplicationStrategy, visited: np.ndarray | None = None,
                             tol: float = 1e-9) -> MixtureReport:
    """Check add-probabilities form a randomized mix of two add-below-threshold rules.

    Only states flagged in ``visited`` are inspected (all by default). The
    add probability must be non-increasing and take values in {1, q, 0} with
    0 < q < 1 on a single contiguous block.
    """
    p = strategy.add_prob.copy()
    states = np.arange(len(p)) if visited is None else np.flatnonzero(visited)
    p = p[states]
    p = np.where(p < tol, 0.0, np.where(p > 1 - tol, 1.0, p))
    falsified = [int(states[i]) for i in range(1, len(p)) if p[i] > p[i - 1] + tol]
    mixed = np.flatnonzero((p > 0) & (p < 1))
    if mixed.size:
        q = p[mixed]
        if np.ptp(q) > tol:
            falsified += [int(states[i]) for i in mixed[1:]]
        elif np.any(np.diff(mixed) != 1):
            falsified += [int(states[i]) for i in mixed[1:][np.diff(mixed) != 1]]
    if falsified:
        return MixtureReport(False, None, None, None, tuple(sorted(set(falsified))))
    ones = np.flatnonzero(p == 1.0)
    pos = np.flatnonzero(p > 0)
    beta1 = int(states[ones[-1]]) if ones.size else -1
    beta2 = int(states[pos[-1]]) if pos.size else -1
    kappa = float(p[mixed[0]]) if mixed.size else 1.0
    return MixtureReport(True, beta1, beta2, kappa, ())


def induced_chain(strategy: ReplicationStrategy, cmdp: SystemCmdp) -> np.ndarray:
    return np.einsum("sa,sat->st", strategy.pi, cmdp.fS)


def stationary_distribution(P: np.ndarray, cond_limit: float = 1e12) -> np.ndarray:
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    if np.linalg.cond(A) > cond_limit:
        raise StationaryError("stationary system is singular; the chain is not irreducible")
    return np.linalg.solve(A, rhs)


def stationary_availability(strategy: ReplicationStrategy, cmdp: SystemCmdp) -> float:
    mu = stationary_distribution(induced_chain(strategy, cmdp))
    return float(mu[cmdp.f + 1:].sum())
