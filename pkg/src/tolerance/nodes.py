"""Vectorized one-step dynamics of many independent nodes driven by given uniforms."""
from __future__ import annotations

import numpy as np

from .belief import belief_update
from .model import NodeParams, ObservationModel


def step_nodes(s: np.ndarray, b: np.ndarray, a: np.ndarray, u: np.ndarray,
               params: NodeParams, obs: ObservationModel):
    """Advance nodes in states ``s`` (0 healthy, 1 compromised) under actions ``a``.

    ``u[..., 0]`` decides crash, ``u[..., 1]`` the healthy/compromised move and
    ``u[..., 2]`` the alert count by inverse CDF. Returns ``(s_next, crashed,
    o, b_next)``; entries of crashed nodes in ``s_next``/``b_next`` are
    meaningless.
    """
    a = np.asarray(a, dtype=bool)
    crashed = u[..., 0] < np.where(s == 1, params.p_C2, params.p_C1)
    p_to_c = np.where((s == 0) | a, params.p_A, 1.0 - params.p_U)
    s_next = (u[..., 1] < p_to_c).astype(np.int8)
    o = (obs.cdf[s_next] <= u[..., 2, None]).sum(axis=-1)
    b_next = belief_update(b, a.astype(np.int8), o, params, obs)
    return s_next, crashed, o, np.asarray(b_next, dtype=float)
