"""Single-node recovery: threshold strategies, cost estimation, optimization, grid oracle."""
from __future__ import annotations

from typing import Any

import numpy as np

from .dp import (ConvergenceError, DPResult, StructureReport, dp_oracle, is_midpoint_concave,
                 verify_threshold_structure)
from .objective import (RecoveryObjective, episode_noise, evaluate_candidates,
                        evaluate_objective, simulate_costs)
from .optimizers import (OPTIMIZERS, CEMConfig, DEConfig, HistoryRow, OptimizeResult, SPSAConfig,
                         cem, differential_evolution, spsa)
from .strategy import ThresholdStrategy, strategy_action

__all__ = [
    "CEMConfig", "ConvergenceError", "DEConfig", "DPResult", "HistoryRow", "OPTIMIZERS",
    "OptimizeResult", "RecoveryObjective", "SPSAConfig", "StructureReport", "ThresholdStrategy",
    "cem", "differential_evolution", "dp_oracle", "episode_noise", "evaluate_candidates",
    "evaluate_objective", "is_midpoint_concave", "optimize", "simulate_costs", "spsa",
    "strategy_action", "verify_threshold_structure",
]


def optimize(method: str, obj: RecoveryObjective, delta_r: int | None, budget: int,
             seed: int = 0, config: Any = None,
             validation_episodes: int | None = None,
             index_rule: str = "min") -> tuple[ThresholdStrategy, OptimizeResult]:
    """Search threshold vectors with ``method`` in {"CEM", "DE", "SPSA"}.

    Every iteration draws fresh episodes shared by all its candidates. The
    returned strategy is the contender with the lowest cost on a separate
    validation batch of ``validation_episodes`` (default 4x the episode count).
    """
    key = method.upper()
    if key not in OPTIMIZERS:
        raise ValueError(f"unknown optimizer {method!r}; expected one of {sorted(OPTIMIZERS)}")
    if budget < 1:
        raise ValueError("budget must be >= 1 iteration")
    d = ThresholdStrategy.expected_dim(delta_r)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))

    def fn(thetas: np.ndarray, it: int) -> tuple[np.ndarray, np.ndarray]:
        return evaluate_candidates(thetas, delta_r, obj, seed=np.random.SeedSequence([seed, 1, it]),
                                   index_rule=index_rule)

    kwargs = {} if config is None else {"cfg": config}
    res = OPTIMIZERS[key](fn, d, budget, rng, **kwargs)
    val = obj.with_episodes(validation_episodes or 4 * obj.episodes)
    J, _ = evaluate_candidates(res.contenders, delta_r, val, seed=np.random.SeedSequence([seed, 2]),
                               index_rule=index_rule)
    best = res.contenders[int(np.argmin(J))]
    return ThresholdStrategy(tuple(np.clip(best, 0.0, 1.0)), delta_r, index_rule), res
