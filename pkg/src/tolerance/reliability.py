"""Mean time to failure and reliability curves of finite Markov chains without recovery."""
from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.stats import binom


class SingularSystemError(ArithmeticError):
    """The hitting-time system is numerically singular."""


@dataclass(frozen=True, eq=False)
class ReliabilityChain:
    """Chain over states 0..N whose failure set is {0..f}; starts in ``s1``."""

    P: np.ndarray
    f: int
    s1: int

    def __post_init__(self) -> None:
        P = np.array(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("P must be square")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("P must be row-stochastic")
        if not 0 <= self.f < P.shape[0] - 1:
            raise ValueError("failure set {0..f} must be non-empty and a strict subset")
        if not 0 <= self.s1 < P.shape[0]:
            raise ValueError("s1 out of range")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    @property
    def failed(self) -> np.ndarray:
        return np.arange(self.P.shape[0]) <= self.f

    def absorbing(self) -> np.ndarray:
        Pt = self.P.copy()
        Pt[self.failed] = np.eye(len(Pt))[self.failed]
        return Pt

    def to_dict(self) -> dict[str, Any]:
        return {"P": self.P.tolist(), "f": self.f, "s1": self.s1}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ReliabilityChain:
        return cls(np.asarray(d["P"], dtype=float), int(d["f"]), int(d["s1"]))


def _reachable(adj: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """States reachable from any of ``starts`` along edges of the boolean ``adj``."""
    seen = np.zeros(len(adj), dtype=bool)
    seen[starts] = True
    queue = deque(np.flatnonzero(seen))
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u] & ~seen):
            seen[v] = True
            queue.append(v)
    return seen


def mttf(chain: ReliabilityChain, pivot_tol: float = 1e-12) -> float:
    """Expected number of steps until the chain first enters the failure set.

    Infinite when a state reachable from ``s1`` cannot reach the failure set.
    """
    if chain.failed[chain.s1]:
        return 0.0
    P = chain.P
    ok = ~chain.failed
    adj = (P > 0) & ok[:, None] & ok[None, :]
    from_start = _reachable(adj, np.array([chain.s1]))
    can_fail = _reachable(((P > 0) & ok[:, None]).T, np.flatnonzero(chain.failed))
    if np.any(from_start & ok & ~can_fail):
        return float("inf")
    idx = np.flatnonzero(from_start & ok)
    A = np.eye(len(idx)) - P[np.ix_(idx, idx)]
    lu, piv = lu_factor(A, check_finite=True)
    if np.min(np.abs(np.diag(lu))) < pivot_tol:
        raise SingularSystemError("hitting-time system is singular")
    x = lu_solve((lu, piv), np.ones(len(idx)))
    return float(x[np.searchsorted(idx, chain.s1)])


def reliability_curve(chain: ReliabilityChain, horizon: int) -> np.ndarray:
    """R(1..horizon): probability of not having entered the failure set by step t."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    Pt = chain.absorbing()
    ok = ~chain.failed
    v = np.zeros(len(Pt))
    v[chain.s1] = 1.0
    out = np.empty(horizon)
    for t in range(horizon):
        v = v @ Pt
        out[t] = v[ok].sum()
    return out


def state_distributions(P: np.ndarray, s1: int, horizon: int) -> np.ndarray:
    """Row t-1 is the state distribution at step t, starting from ``s1`` at step 1."""
    v = np.zeros(len(P))
    v[s1] = 1.0
    out = np.empty((horizon, len(P)))
    for t in range(horizon):
        out[t] = v
        v = v @ P
    return out


def no_recovery_failure_curve(p_A: float, p_C1: float, horizon: int) -> np.ndarray:
    """Probability that a healthy node is compromised or crashed by step t, t = 1..horizon."""
    if not (0 <= p_A < 1 and 0 <= p_C1 < 1):
        raise ValueError("probabilities must lie in [0, 1)")
    t = np.arange(1, horizon + 1)
    return 1.0 - ((1.0 - p_A) * (1.0 - p_C1)) ** t


def build_no_recovery_system_chain(N: int, q: float, f: int,
                                   s1: int | None = None) -> ReliabilityChain:
    """Healthy-node count where each healthy node independently survives a step w.p. ``q``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    s = np.arange(N + 1)
    P = binom.pmf(s[None, :], s[:, None], q)
    P /= P.sum(axis=1, keepdims=True)
    return ReliabilityChain(P, f, N if s1 is None else s1)


def curve_csv(values: np.ndarray, header: tuple[str, str] = ("t", "R")) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for t, r in enumerate(values, start=1):
        w.writerow([t, repr(float(r))])
    return buf.getvalue()
