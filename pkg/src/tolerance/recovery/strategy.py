from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from ..model import NodeAction


@dataclass(frozen=True)
class ThresholdStrategy:
    """Belief-threshold recovery strategy with a bounded time-to-recovery.

    ``delta_r=None`` means no periodic recovery. With a finite period the
    node recovers unconditionally at every multiple of ``delta_r`` and uses
    ``thetas[k-1]`` at the k-th step of the period otherwise.

    ``index_rule="max"`` selects the alternative reading of the threshold
    index, under which ``thetas[-1]`` is used at every step.
    """

    thetas: tuple[float, ...]
    delta_r: int | None = None
    index_rule: str = "min"

    def __post_init__(self) -> None:
        thetas = tuple(float(x) for x in np.atleast_1d(self.thetas))
        object.__setattr__(self, "thetas", thetas)
        if self.delta_r is not None and self.delta_r < 1:
            raise ValueError(f"delta_r must be a positive integer or None, got {self.delta_r}")
        if len(thetas) != self.expected_dim(self.delta_r):
            raise ValueError(f"expected {self.expected_dim(self.delta_r)} thresholds "
                             f"for delta_r={self.delta_r}, got {len(thetas)}")
        if any(not 0.0 <= x <= 1.0 for x in thetas):
            raise ValueError("thresholds must lie in [0, 1]")
        if self.index_rule not in ("min", "max"):
            raise ValueError(f"unknown index rule {self.index_rule!r}")

    @staticmethod
    def expected_dim(delta_r: int | None) -> int:
        if delta_r is None:
            return 1
        return max(delta_r - 1, 1)

    @property
    def d(self) -> int:
        return len(self.thetas)

    def is_forced(self, t: int) -> bool:
        return self.delta_r is not None and t % self.delta_r == 0

    def threshold_index(self, t: int) -> int:
        """Zero-based index into ``thetas`` used at step ``t`` (ignoring forced steps)."""
        if self.delta_r is None or self.index_rule == "max":
            return self.d - 1
        return min(t % self.delta_r, self.d) - 1

    def to_dict(self) -> dict[str, Any]:
        return {"delta_r": self.delta_r, "thetas": list(self.thetas), "index_rule": self.index_rule}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ThresholdStrategy:
        dr = d.get("delta_r")
        if dr is not None and (isinstance(dr, str) or math.isinf(dr)):
            dr = None
        return cls(tuple(d["thetas"]), None if dr is None else int(dr), d.get("index_rule", "min"))


def strategy_action(strategy: ThresholdStrategy, b: float, t: int) -> NodeAction:
    if strategy.is_forced(t):
        return NodeAction.RECOVER
    theta = strategy.thetas[strategy.threshold_index(t)]
    return NodeAction.RECOVER if b >= theta else NodeAction.WAIT
