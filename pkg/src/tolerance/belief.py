"""Exact Bayesian filtering of a node's compromise probability.

Crash is observable (a crashed node stops reporting), so the filter runs on
{healthy, compromised} and the crash mass is removed by renormalization.
"""
from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np

from .model import NodeAction, NodeParams, ObservationModel, survival_matrix


class FilterDegeneracyError(ArithmeticError):
    """The observation has zero likelihood under the predicted belief."""


def predict(b, a, params: NodeParams):
    """One-step predicted compromise probability given survival.

    ``b`` and ``a`` may be arrays; they broadcast together.
    """
    b = np.asarray(b, dtype=float)
    a = np.asarray(a)
    W, R = survival_matrix(params, NodeAction.WAIT), survival_matrix(params, NodeAction.RECOVER)
    M = np.where(a[..., None, None] == 1, R, W)
    to_h = (1 - b) * M[..., 0, 0] + b * M[..., 1, 0]
    to_c = (1 - b) * M[..., 0, 1] + b * M[..., 1, 1]
    return to_c / (to_h + to_c)


def belief_update(b, a_prev, o, params: NodeParams, obs: ObservationModel):
    """Posterior compromise probability after action ``a_prev`` and alert count ``o``.

    Vectorized over ``b``, ``a_prev`` and ``o``. Returns a float for scalar input.
    """
    o = np.asarray(o)
    if np.any(o < 0) or np.any(o >= obs.n_obs):
        raise IndexError(f"observation out of range [0, {obs.n_obs})")
    pc = predict(b, a_prev, params)
    lh = obs.Z[0][o] * (1 - pc)
    lc = obs.Z[1][o] * pc
    den = lh + lc
    if np.any(den <= 0):
        raise FilterDegeneracyError("zero-likelihood observation")
    out = lc / den
    return float(out) if np.ndim(out) == 0 else out


def forward_filter_oracle(actions: Sequence[int], observations: Sequence[int],
                          params: NodeParams, obs: ObservationModel, b1: float) -> list[float]:
    """Beliefs b_1..b_{n+1} from the unnormalized joint over (healthy, compromised).

    ``actions[k]`` is the action taken at step k+1 and ``observations[k]`` the
    alert count seen at step k+2. Normalization happens only at read-out.
    """
    if len(actions) != len(observations):
        raise ValueError("actions and observations must have equal length")
    alpha = np.array([1.0 - b1, b1])
    out = [float(b1)]
    for a, o in zip(actions, observations):
        alpha = alpha @ survival_matrix(params, a)
        alpha = alpha * obs.Z[:, int(o)]
        total = alpha.sum()
        if total <= 0:
            raise FilterDegeneracyError("zero-likelihood observation")
        out.append(float(alpha[1] / total))
        # power-of-two rescaling against underflow is exact in floating point
        alpha = np.ldexp(alpha, -math.frexp(total)[1])
    return out
