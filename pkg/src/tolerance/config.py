"""Experiment configuration: one JSON document, defaults for every omitted field.

Every command reads the same document and uses only the blocks it needs.
Randomness is split from the top-level ``seed`` by name: each command and
module gets ``derive_seed(seed, command, module)``, and modules split that
further into per-episode or per-state streams.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .model import ModelError, NodeParams, ObservationModel, betabin_observation_model

BASELINES = ("NO_RECOVERY", "PERIODIC", "PERIODIC_ADAPTIVE")
STRATEGY_SETS = ("TOLERANCE",) + BASELINES
METHODS = ("CEM", "DE", "SPSA")


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


def derive_seed(root: int, *names: str | int) -> int:
    """Deterministic 32-bit seed for the stream identified by ``names`` under ``root``."""
    key = [int(root)] + [zlib.crc32(n.encode()) if isinstance(n, str) else int(n) for n in names]
    return int(np.random.SeedSequence(key).generate_state(1, np.uint32)[0])


def parse_delta_r(v: Any) -> int | None:
    """``null``/``"inf"`` mean no recovery deadline."""
    if v is None or (isinstance(v, str) and v.lower() in ("inf", "infinity")):
        return None
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError(f"delta_r must be a positive integer, null or \"inf\", got {v!r}")
    return v


def _block(cls: type, raw: Any, name: str) -> Any:
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"block {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"block {name!r} has unknown keys: {', '.join(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"block {name!r}: {e}") from e


def _int(v: Any, name: str, lo: int | None = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{name} must be >= {lo}, got {v}")
    return v


def _prob(v: Any, name: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
        raise ConfigError(f"{name} must be a number in [0, 1], got {v!r}")
    return float(v)


@dataclass(frozen=True)
class RecoveryBlock:
    method: str = "CEM"
    budget: int = 30
    delta_r: Any = None
    horizon: int = 100
    episodes: int = 50
    eval_episodes: int = 2000
    grid_size: int = 201
    index_rule: str = "min"

    def __post_init__(self) -> None:
        m = str(self.method).upper()
        if m not in METHODS + ("ALL",):
            raise ConfigError(f"recovery.method must be one of {', '.join(METHODS)} or ALL")
        object.__setattr__(self, "method", m)
        object.__setattr__(self, "delta_r", parse_delta_r(self.delta_r))
        for name, lo in (("budget", 1), ("horizon", 1), ("episodes", 1), ("eval_episodes", 1),
                         ("grid_size", 51)):
            _int(getattr(self, name), f"recovery.{name}", lo)
        if self.index_rule not in ("min", "max"):
            raise ConfigError("recovery.index_rule must be 'min' or 'max'")

    @property
    def methods(self) -> tuple[str, ...]:
        return METHODS if self.method == "ALL" else (self.method,)


@dataclass(frozen=True)
class ReplicationBlock:
    source: str = "estimate"
    s_max: int = 13
    epsilon_A: Any = 0.9
    f: Any = 2
    smoothing: float = 1.0
    samples: int = 1000
    delta_r: Any = None
    grid_size: int = 201
    synthetic_smoothing: float = 1e-3
    d_axis: str = "tail"
    dump_lp: bool = False

    def __post_init__(self) -> None:
        if self.source not in ("estimate", "synthetic"):
            raise ConfigError("replication.source must be 'estimate' or 'synthetic'")
        _int(self.s_max, "replication.s_max", 1)
        if self.epsilon_A is None:
            if self.source != "synthetic":
                raise ConfigError("replication.epsilon_A may be null only for synthetic instances")
        else:
            _prob(self.epsilon_A, "replication.epsilon_A")
        if self.f is None:
            if self.source != "synthetic":
                raise ConfigError("replication.f may be null only for synthetic instances")
        elif not 0 <= _int(self.f, "replication.f", 0) <= self.s_max:
            raise ConfigError("replication.f must lie in [0, s_max]")
        if self.smoothing < 0 or self.synthetic_smoothing < 0:
            raise ConfigError("smoothing must be >= 0")
        _int(self.samples, "replication.samples", 1)
        _int(self.grid_size, "replication.grid_size", 51)
        object.__setattr__(self, "delta_r", parse_delta_r(self.delta_r))
        if self.d_axis not in ("tail", "state"):
            raise ConfigError("replication.d_axis must be 'tail' or 'state'")


@dataclass(frozen=True)
class SimBlock:
    N1: int = 3
    k: int = 1
    T: int = 1000
    seeds: Any = field(default_factory=lambda: list(range(20)))
    delta_r: Any = field(default_factory=lambda: [15])
    strategies: Any = field(default_factory=lambda: list(STRATEGY_SETS))
    s_max: int = 13
    epsilon_A: float = 0.9
    f_cmdp: Any = None
    samples: int = 1000
    grid_size: int = 201
    write_traces: bool = True

    def __post_init__(self) -> None:
        _int(self.N1, "sim.N1", 1)
        _int(self.k, "sim.k", 1)
        _int(self.T, "sim.T", 1)
        _int(self.s_max, "sim.s_max", 1)
        _int(self.samples, "sim.samples", 1)
        _int(self.grid_size, "sim.grid_size", 51)
        if not isinstance(self.seeds, list) or not self.seeds:
            raise ConfigError("sim.seeds must be a non-empty list of integers")
        for s in self.seeds:
            _int(s, "sim.seeds entry", 0)
        drs = self.delta_r if isinstance(self.delta_r, list) else [self.delta_r]
        if not drs:
            raise ConfigError("sim.delta_r must not be empty")
        object.__setattr__(self, "delta_r", [parse_delta_r(v) for v in drs])
        if not isinstance(self.strategies, list) or not self.strategies:
            raise ConfigError("sim.strategies must be a non-empty list")
        names = [str(s).upper().replace("-", "_") for s in self.strategies]
        bad = sorted(set(names) - set(STRATEGY_SETS))
        if bad:
            raise ConfigError(f"unknown strategies: {', '.join(bad)}")
        object.__setattr__(self, "strategies", names)
        _prob(self.epsilon_A, "sim.epsilon_A")
        if self.f_cmdp is not None:
            _int(self.f_cmdp, "sim.f_cmdp", 0)


@dataclass(frozen=True)
class ReliabilityBlock:
    N_grid: Any = field(default_factory=lambda: list(range(3, 11)))
    p_A_grid: Any = field(default_factory=lambda: [0.1, 0.05, 0.025, 0.01])
    f: int = 1
    horizon: int = 100

    def __post_init__(self) -> None:
        if not isinstance(self.N_grid, list) or not self.N_grid:
            raise ConfigError("reliability.N_grid must be a non-empty list")
        for N in self.N_grid:
            if _int(N, "reliability.N_grid entry", 1) <= self.f + 1:
                raise ConfigError(f"reliability.N_grid entry {N} must exceed f + 1 = {self.f + 1}")
        if not isinstance(self.p_A_grid, list) or not self.p_A_grid:
            raise ConfigError("reliability.p_A_grid must be a non-empty list")
        for p in self.p_A_grid:
            if _prob(p, "reliability.p_A_grid entry") >= 1.0:
                raise ConfigError("reliability.p_A_grid entries must be < 1")
        _int(self.f, "reliability.f", 0)
        _int(self.horizon, "reliability.horizon", 1)


_TOP_KEYS = ("scenario", "seed", "node", "obs", "recovery", "replication", "sim", "reliability",
             "output_dir")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "default"
    seed: int = 0
    node: NodeParams = field(default_factory=NodeParams)
    obs: ObservationModel | None = None
    recovery: RecoveryBlock = field(default_factory=RecoveryBlock)
    replication: ReplicationBlock = field(default_factory=ReplicationBlock)
    sim: SimBlock = field(default_factory=SimBlock)
    reliability: ReliabilityBlock = field(default_factory=ReliabilityBlock)
    output_dir: str = "out"

    def require_obs(self) -> ObservationModel:
        if self.obs is None:
            raise ConfigError("missing key: obs (use {} for the default alert model)")
        return self.obs

    @classmethod
    def from_dict(cls, d: Any) -> ExperimentConfig:
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = sorted(set(d) - set(_TOP_KEYS))
        if unknown:
            raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
        node_raw = d.get("node", {})
        if not isinstance(node_raw, dict):
            raise ConfigError("block 'node' must be an object")
        bad = sorted(set(node_raw) - {"p_A", "p_C1", "p_C2", "p_U", "eta"})
        if bad:
            raise ConfigError(f"block 'node' has unknown keys: {', '.join(bad)}")
        try:
            node = NodeParams.from_dict(node_raw)
            obs = None
            if "obs" in d:
                if not isinstance(d["obs"], dict):
                    raise ConfigError("block 'obs' must be an object")
                raw_obs = d["obs"]
                obs = (ObservationModel.from_dict(raw_obs) if raw_obs
                       else betabin_observation_model())
        except (ModelError, TypeError) as e:
            raise ConfigError(str(e)) from e
        return cls(
            scenario=str(d.get("scenario", "default")),
            seed=_int(d.get("seed", 0), "seed", 0),
            node=node,
            obs=obs,
            recovery=_block(RecoveryBlock, d.get("recovery"), "recovery"),
            replication=_block(ReplicationBlock, d.get("replication"), "replication"),
            sim=_block(SimBlock, d.get("sim"), "sim"),
            reliability=_block(ReliabilityBlock, d.get("reliability"), "reliability"),
            output_dir=str(d.get("output_dir", "out")),
        )

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from e
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        return cls.from_dict(raw)
