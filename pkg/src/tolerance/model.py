"""Node-level stochastic model: states, actions, dynamics, alerts and cost."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any

import numpy as np
from scipy.special import betaln, gammaln


class ModelError(ValueError):
    """Invalid model parameters or inputs."""


class NodeState(IntEnum):
    HEALTHY = 0
    COMPROMISED = 1
    CRASHED = 2


class NodeAction(IntEnum):
    WAIT = 0
    RECOVER = 1


@dataclass(frozen=True)
class NodeParams:
    """Per-step probabilities of a node and the cost weight of compromise.

    ``p_A`` is the compromise probability, ``p_C1``/``p_C2`` the crash
    probabilities in the healthy/compromised state and ``p_U`` the
    probability that a software update cleans a compromised node.
    """

    p_A: float = 0.1
    p_C1: float = 1e-5
    p_C2: float = 1e-3
    p_U: float = 0.02
    eta: float = 2.0

    def __post_init__(self) -> None:
        for name in ("p_A", "p_C1", "p_C2", "p_U"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ModelError(f"{name} must lie in [0, 1], got {v}")
        if self.eta < 1.0:
            raise ModelError(f"eta must be >= 1, got {self.eta}")

    def to_dict(self) -> dict[str, float]:
        return {"p_A": self.p_A, "p_C1": self.p_C1, "p_C2": self.p_C2,
                "p_U": self.p_U, "eta": self.eta}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> NodeParams:
        defaults = cls()
        return cls(
            p_A=float(d.get("p_A", defaults.p_A)),
            p_C1=float(d.get("p_C1", defaults.p_C1)),
            p_C2=float(d.get("p_C2", defaults.p_C2)),
            p_U=float(d.get("p_U", defaults.p_U)),
            eta=float(d.get("eta", defaults.eta)),
        )


@dataclass(frozen=True, eq=False)
class ObservationModel:
    """Alert distribution Z(o|s); row 0 is the healthy state, row 1 compromised."""

    Z: np.ndarray
    source: dict[str, Any] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        Z = np.array(self.Z, dtype=float)
        if Z.ndim != 2 or Z.shape[0] != 2 or Z.shape[1] < 1:
            raise ModelError(f"Z must have shape (2, n_obs), got {Z.shape}")
        if np.any(Z < 0):
            raise ModelError("Z has negative entries")
        if np.any(np.abs(Z.sum(axis=1) - 1.0) > 1e-12):
            raise ModelError("rows of Z must sum to 1")
        Z.setflags(write=False)
        object.__setattr__(self, "Z", Z)

    @property
    def n_obs(self) -> int:
        return self.Z.shape[1]

    @property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.Z, axis=1)
        c[:, -1] = 1.0
        return c

    def mean(self, state: NodeState = NodeState.HEALTHY) -> float:
        return float(np.dot(np.arange(self.n_obs), self.Z[int(state)]))

    def to_dict(self) -> dict[str, Any]:
        if self.source is not None:
            return dict(self.source)
        return {"matrix": self.Z.tolist()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ObservationModel:
        if "matrix" in d:
            return cls(np.asarray(d["matrix"], dtype=float))
        missing = [k for k in ("n", "alpha_h", "beta_h", "alpha_c", "beta_c") if k not in d]
        if missing:
            raise ModelError(f"observation block missing keys: {', '.join(missing)}")
        return betabin_observation_model(int(d["n"]), float(d["alpha_h"]), float(d["beta_h"]),
                                         float(d["alpha_c"]), float(d["beta_c"]))


def betabin_pmf(n: int, alpha: float, beta: float) -> np.ndarray:
    """Beta-Binomial PMF on {0..n}, evaluated in log space."""
    if n < 1:
        raise ModelError(f"n must be >= 1, got {n}")
    if alpha <= 0 or beta <= 0:
        raise ModelError(f"shape parameters must be positive, got ({alpha}, {beta})")
    k = np.arange(n + 1)
    log_binom = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    logp = log_binom + betaln(k + alpha, n - k + beta) - betaln(alpha, beta)
    p = np.exp(logp)
    return p / p.sum()


def betabin_observation_model(n: int = 10, alpha_h: float = 0.7, beta_h: float = 3.0,
                              alpha_c: float = 1.0, beta_c: float = 0.7) -> ObservationModel:
    Z = np.vstack([betabin_pmf(n, alpha_h, beta_h), betabin_pmf(n, alpha_c, beta_c)])
    source = {"n": n, "alpha_h": alpha_h, "beta_h": beta_h, "alpha_c": alpha_c, "beta_c": beta_c}
    return ObservationModel(Z, source=source)


def node_transition_row(params: NodeParams, s: NodeState, a: NodeAction) -> np.ndarray:
    """Next-state distribution over (healthy, compromised, crashed)."""
    pA, pC1, pC2, pU = params.p_A, params.p_C1, params.p_C2, params.p_U
    s, a = NodeState(s), NodeAction(a)
    if s == NodeState.CRASHED:
        return np.array([0.0, 0.0, 1.0])
    if s == NodeState.HEALTHY:
        # recovering a healthy node does not change its dynamics
        return np.array([(1 - pA) * (1 - pC1), (1 - pC1) * pA, pC1])
    if a == NodeAction.RECOVER:
        return np.array([(1 - pA) * (1 - pC2), (1 - pC2) * pA, pC2])
    return np.array([(1 - pC2) * pU, (1 - pC2) * (1 - pU), pC2])


def transition_matrix(params: NodeParams, a: NodeAction) -> np.ndarray:
    """3x3 transition matrix for a fixed action."""
    return np.vstack([node_transition_row(params, s, a) for s in NodeState])


def survival_matrix(params: NodeParams, a: NodeAction | int) -> np.ndarray:
    """2x2 block of the transition matrix restricted to (healthy, compromised)."""
    return transition_matrix(params, NodeAction(a))[:2, :2]


def node_cost(s: NodeState, a: NodeAction, eta: float) -> float:
    s, a = NodeState(s), NodeAction(a)
    if s == NodeState.CRASHED:
        raise ModelError("crashed nodes carry no cost")
    return eta * s - a * eta * s + a


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ModelError(f"support mismatch: {p.shape} vs {q.shape}")
    mask = p > 0
    if np.any(q[mask] <= 0):
        raise ModelError("q must be positive wherever p is positive")
    return float(max(np.sum(p[mask] * np.log(p[mask] / q[mask])), 0.0))


@dataclass(frozen=True)
class AssumptionReport:
    checks: dict[str, bool]
    details: dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, key: str) -> bool:
        return self.checks[key]

    @property
    def all_hold(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict[str, Any]:
        return {"checks": dict(self.checks), "details": self.details}


def check_thm1_assumptions(params: NodeParams, obs: ObservationModel) -> AssumptionReport:
    """Sufficient conditions under which an optimal recovery strategy is a belief threshold."""
    pA, pC1, pC2, pU = params.p_A, params.p_C1, params.p_C2, params.p_U
    a_ok = all(0.0 < p < 1.0 for p in (pA, pC1, pC2, pU))
    b_ok = pA + pU <= 1.0
    denom = pA * (pC1 - 1) + pC1 * (pU - 1)
    c_lhs = pC1 * (pU - 1) / denom if denom != 0 else math.inf
    c_ok = bool(c_lhs <= pC2)
    Z = obs.Z
    d_ok = bool(np.all(Z > 0))
    # 2x2 minors Z(o|H)Z(o'|C) - Z(o'|H)Z(o|C) for o < o'
    M = np.outer(Z[0], Z[1])
    minors = M - M.T
    iu = np.triu_indices(Z.shape[1], k=1)
    worst = float(minors[iu].min()) if iu[0].size else 0.0
    e_ok = worst >= -1e-15
    return AssumptionReport(
        checks={"A": a_ok, "B": b_ok, "C": c_ok, "D": d_ok, "E": e_ok},
        details={"C_lhs": c_lhs, "min_tp2_minor": worst},
    )
