"""Grid dynamic-programming oracle for the single-node recovery problem."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..belief import belief_update
from ..model import NodeAction, NodeParams, ObservationModel, survival_matrix
from .strategy import ThresholdStrategy


class ConvergenceError(RuntimeError):
    """Value iteration did not reach the stopping tolerance."""


@dataclass(frozen=True, eq=False)
class DPResult:
    """Values, decisions and thresholds on a uniform belief grid.

    For a finite period, row k of ``values``/``policy`` is period step k+1 and
    the last row is the forced recovery. For an infinite period there is a
    single stationary row holding relative values and ``gain`` is the
    long-run average cost.
    """

    grid: np.ndarray
    values: np.ndarray
    policy: np.ndarray
    thresholds: np.ndarray
    delta_r: int | None
    gain: float | None = None
    sweeps: int = 0
    extra: dict[str, Any] = field(default_factory=dict)

    def strategy(self) -> ThresholdStrategy:
        """Threshold strategy that reproduces the grid policy on grid points."""
        if self.delta_r is None:
            return ThresholdStrategy((float(self.thresholds[0]),), None)
        d = ThresholdStrategy.expected_dim(self.delta_r)
        th = self.thresholds[:d] if self.delta_r > 1 else np.zeros(1)
        return ThresholdStrategy(tuple(float(x) for x in th), self.delta_r)


def _expectation_operator(params: NodeParams, obs: ObservationModel, grid: np.ndarray,
                          a: NodeAction) -> np.ndarray:
    """Matrix P with (P @ V)[g] = E[V(b') | b = grid[g], a], V interpolated linearly.

    The next-belief distribution is conditioned on survival.
    """
    G = len(grid)
    Wm = survival_matrix(params, a)
    pred = (1 - grid)[:, None] * Wm[0] + grid[:, None] * Wm[1]
    pred = pred / pred.sum(axis=1, keepdims=True)
    p_obs = pred @ obs.Z
    P = np.zeros((G, G))
    rows = np.arange(G)
    for o in range(obs.n_obs):
        nb = np.asarray(belief_update(grid, np.full(G, int(a)), np.full(G, o), params, obs))
        x = nb * (G - 1)
        lo = np.clip(np.floor(x).astype(int), 0, G - 2)
        w = np.clip(x - lo, 0.0, 1.0)
        np.add.at(P, (rows, lo), p_obs[:, o] * (1 - w))
        np.add.at(P, (rows, lo + 1), p_obs[:, o] * w)
    return P


def _thresholds(policy: np.ndarray, grid: np.ndarray) -> np.ndarray:
    out = np.ones(policy.shape[0])
    for k, row in enumerate(policy):
        idx = np.flatnonzero(row)
        if idx.size:
            out[k] = grid[idx[0]]
    return out


def dp_oracle(params: NodeParams, obs: ObservationModel, delta_r: int | None = None,
              grid_size: int = 201, tol: float = 1e-8, max_sweeps: int = 100_000,
              tie_tol: float = 1e-12) -> DPResult:
    """Optimal recovery decisions on a belief grid.

    A finite ``delta_r`` is solved by backward induction over one period whose
    last step is a forced recovery; ``None`` by relative value iteration on
    the average-cost criterion with reference belief 0. Ties go to waiting.
    """
    if grid_size < 51:
        raise ValueError(f"grid_size must be >= 51, got {grid_size}")
    grid = np.linspace(0.0, 1.0, grid_size)
    P0 = _expectation_operator(params, obs, grid, NodeAction.WAIT)
    P1 = _expectation_operator(params, obs, grid, NodeAction.RECOVER)
    wait_cost = params.eta * grid

    if delta_r is not None:
        if delta_r < 1:
            raise ValueError("delta_r must be >= 1")
        V = np.empty((delta_r, grid_size))
        pol = np.zeros((delta_r, grid_size), dtype=bool)
        V[-1] = 1.0
        pol[-1] = True
        for k in range(delta_r - 2, -1, -1):
            q0 = wait_cost + P0 @ V[k + 1]
            q1 = 1.0 + P1 @ V[k + 1]
            pol[k] = q1 < q0 - tie_tol
            V[k] = np.where(pol[k], q1, q0)
        return DPResult(grid, V, pol, _thresholds(pol, grid), delta_r)

    h = np.zeros(grid_size)
    for sweep in range(1, max_sweeps + 1):
        q0 = wait_cost + P0 @ h
        q1 = 1.0 + P1 @ h
        Th = np.minimum(q0, q1)
        gain = Th[0]
        h_new = Th - gain
        diff = h_new - h
        h = h_new
        if diff.max() - diff.min() < tol:
            break
    else:
        raise ConvergenceError(f"relative value iteration did not converge in {max_sweeps} sweeps")
    q0 = wait_cost + P0 @ h
    q1 = 1.0 + P1 @ h
    pol = (q1 < q0 - tie_tol)[None, :]
    return DPResult(grid, h[None, :], pol, _thresholds(pol, grid), None,
                    gain=float(gain), sweeps=sweep)


def is_midpoint_concave(values: np.ndarray, tol: float = 1e-9) -> bool:
    """V[i] >= (V[i-1] + V[i+1]) / 2 on every consecutive grid triple of every row."""
    V = np.atleast_2d(values)
    return bool(np.all(V[:, 1:-1] >= 0.5 * (V[:, :-2] + V[:, 2:]) - tol))


@dataclass(frozen=True)
class StructureReport:
    is_threshold: np.ndarray
    alpha: np.ndarray
    falsified: tuple[int, ...]
    monotone_violations: tuple[int, ...]

    @property
    def all_threshold(self) -> bool:
        return bool(np.all(self.is_threshold))


def verify_threshold_structure(policy: np.ndarray, grid: np.ndarray,
                               delta_r: int | None = None) -> StructureReport:
    """Check each row's recovery set is an upper interval of the grid.

    For a finite period the free-step thresholds must also be non-decreasing
    up to one grid cell. Returned indices are zero-based rows.
    """
    policy = np.atleast_2d(np.asarray(policy, dtype=bool))
    is_thr = np.array([not np.any(row[:-1] & ~row[1:]) for row in policy])
    alpha = _thresholds(policy, grid)
    falsified = tuple(int(k) for k in np.flatnonzero(~is_thr))
    viol: tuple[int, ...] = ()
    if delta_r is not None and policy.shape[0] > 2:
        cell = grid[1] - grid[0]
        free = alpha[:-1]
        viol = tuple(int(k) + 1 for k in np.flatnonzero(np.diff(free) < -cell - 1e-12))
    return StructureReport(is_thr, alpha, falsified, viol)
