"""Monte Carlo estimate of the time-averaged recovery cost of threshold strategies."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..model import NodeParams, ObservationModel, betabin_observation_model
from ..nodes import step_nodes
from .strategy import ThresholdStrategy


@dataclass(frozen=True)
class RecoveryObjective:
    params: NodeParams = field(default_factory=NodeParams)
    obs: ObservationModel = field(default_factory=betabin_observation_model)
    horizon: int = 100
    episodes: int = 50
    seed: int = 0
    threads: int = 1

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")

    def with_seed(self, seed: int) -> RecoveryObjective:
        return RecoveryObjective(self.params, self.obs, self.horizon, self.episodes, seed,
                                 self.threads)

    def with_episodes(self, episodes: int) -> RecoveryObjective:
        return RecoveryObjective(self.params, self.obs, self.horizon, episodes, self.seed,
                                 self.threads)


def episode_noise(seed: int | np.random.SeedSequence, episodes: int, horizon: int) -> np.ndarray:
    """Uniforms of shape (episodes, horizon, 3) for crash, state move and alert draws.

    Each episode owns a child seed, so episode i is identical whatever the batch size.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(episodes)
    return np.stack([np.random.default_rng(c).random((horizon, 3)) for c in children])


def _index_schedule(horizon: int, delta_r: int | None, d: int, index_rule: str):
    """Per-step (forced, threshold index) arrays for t = 1..horizon."""
    t = np.arange(1, horizon + 1)
    if delta_r is None:
        return np.zeros(horizon, dtype=bool), np.zeros(horizon, dtype=int)
    forced = t % delta_r == 0
    if index_rule == "max":
        return forced, np.full(horizon, d - 1)
    return forced, np.minimum(t % delta_r, d) - 1


def simulate_costs(thetas: np.ndarray, delta_r: int | None, params: NodeParams,
                   obs: ObservationModel, noise: np.ndarray, index_rule: str = "min") -> np.ndarray:
    """Per-episode average cost for each candidate, shape (candidates, episodes).

    All candidates share the same noise (common random numbers).
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    C, d = thetas.shape
    M, T, _ = noise.shape
    forced, kidx = _index_schedule(T, delta_r, d, index_rule)
    s = np.zeros((C, M), dtype=np.int8)
    b = np.full((C, M), params.p_A)
    alive = np.ones((C, M), dtype=bool)
    total = np.zeros((C, M))
    for t in range(T):
        if forced[t]:
            a = np.ones((C, M), dtype=bool)
        else:
            a = b >= thetas[:, kidx[t]][:, None]
        total += np.where(alive, np.where(a, 1.0, params.eta * s), 0.0)
        s, crash, _, b_next = step_nodes(s, b, a, noise[None, :, t, :], params, obs)
        alive &= ~crash
        b = np.where(alive, b_next, b)
    return total / T


def _costs_threaded(thetas: np.ndarray, delta_r: int | None, obj: RecoveryObjective,
                    noise: np.ndarray, index_rule: str) -> np.ndarray:
    if obj.threads <= 1 or noise.shape[0] < 2 * obj.threads:
        return simulate_costs(thetas, delta_r, obj.params, obj.obs, noise, index_rule)
    chunks = np.array_split(np.arange(noise.shape[0]), obj.threads)
    with ThreadPoolExecutor(obj.threads) as pool:
        parts = list(pool.map(
            lambda idx: simulate_costs(thetas, delta_r, obj.params, obj.obs, noise[idx],
                                       index_rule),
            chunks))
    return np.concatenate(parts, axis=1)


def evaluate_candidates(thetas: np.ndarray, delta_r: int | None, obj: RecoveryObjective,
                        seed: int | np.random.SeedSequence | None = None,
                        index_rule: str = "min") -> tuple[np.ndarray, np.ndarray]:
    """Mean cost and standard error per candidate row of ``thetas``."""
    noise = episode_noise(obj.seed if seed is None else seed, obj.episodes, obj.horizon)
    costs = _costs_threaded(np.clip(thetas, 0.0, 1.0), delta_r, obj, noise, index_rule)
    mean = costs.mean(axis=1)
    se = costs.std(axis=1, ddof=1) / np.sqrt(costs.shape[1]) if costs.shape[1] > 1 \
        else np.zeros(costs.shape[0])
    return mean, se


def evaluate_objective(strategy: ThresholdStrategy, obj: RecoveryObjective) -> tuple[float, float]:
    mean, se = evaluate_candidates(np.array([strategy.thetas]), strategy.delta_r, obj,
                                   index_rule=strategy.index_rule)
    return float(mean[0]), float(se[0])
