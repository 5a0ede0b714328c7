"""Derivative-free optimizers over threshold vectors in the unit cube.

Each optimizer takes a batch objective ``fn(thetas, it) -> (values, stderrs)``
where ``thetas`` has shape (candidates, d) and ``it`` is the iteration
number. Candidates evaluated in the same call share random numbers.
"""
from __future__ import annotations

import csv
import io
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

BatchObjective = Callable[[np.ndarray, int], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class CEMConfig:
    population: int = 100
    elite_fraction: float = 0.15
    var_floor: float = 1e-4
    init_mean: float = 0.5
    init_std: float = 0.5


@dataclass(frozen=True)
class DEConfig:
    population: int = 10
    mutation: float = 0.2
    recombination: float = 0.7


@dataclass(frozen=True)
class SPSAConfig:
    """Gain sequences a_k = a / (k + 1 + A)^lam and c_k = c / (k + 1)^eps.

    Iterates live in logit space; the perturbation is c_k * delta * (+-1).
    """

    c: float = 10.0
    eps: float = 0.101
    lam: float = 0.602
    A: float = 100.0
    a: float = 1.0
    delta: float = 0.2


@dataclass(frozen=True)
class HistoryRow:
    iteration: int
    best_J: float
    mean_J: float
    stderr: float


@dataclass
class OptimizeResult:
    theta: np.ndarray
    best_J: float
    best_stderr: float
    history: list[HistoryRow] = field(default_factory=list)
    contenders: np.ndarray | None = None

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "best_J", "mean_J", "stderr"])
        for r in self.history:
            w.writerow([r.iteration, repr(r.best_J), repr(r.mean_J), repr(r.stderr)])
        return buf.getvalue()


class _Incumbent:
    def __init__(self, d: int) -> None:
        self.theta = np.full(d, 0.5)
        self.J = np.inf
        self.se = 0.0

    def offer(self, thetas: np.ndarray, J: np.ndarray, se: np.ndarray) -> None:
        i = int(np.argmin(J))
        if J[i] < self.J:
            self.theta, self.J, self.se = thetas[i].copy(), float(J[i]), float(se[i])


def cem(fn: BatchObjective, d: int, budget: int, rng: np.random.Generator,
        cfg: CEMConfig = CEMConfig()) -> OptimizeResult:
    mu = np.full(d, cfg.init_mean)
    sigma = np.full(d, cfg.init_std)
    n_elite = max(1, int(round(cfg.elite_fraction * cfg.population)))
    inc = _Incumbent(d)
    hist: list[HistoryRow] = []
    for it in range(budget):
        pop = np.clip(mu + sigma * rng.standard_normal((cfg.population, d)), 0.0, 1.0)
        if np.isfinite(inc.J):
            pop[0] = inc.theta
        J, se = fn(pop, it)
        inc.offer(pop, J, se)
        elite = pop[np.argsort(J, kind="stable")[:n_elite]]
        mu = elite.mean(axis=0)
        sigma = np.sqrt(np.maximum(elite.var(axis=0), cfg.var_floor))
        hist.append(HistoryRow(it, inc.J, float(J.mean()), float(se.mean())))
    return OptimizeResult(inc.theta, inc.J, inc.se, hist, np.vstack([inc.theta, mu]))


def differential_evolution(fn: BatchObjective, d: int, budget: int, rng: np.random.Generator,
                           cfg: DEConfig = DEConfig()) -> OptimizeResult:
    """DE/rand/1/bin; parents are re-evaluated alongside trials each generation."""
    n = cfg.population
    if n < 4:
        raise ValueError("differential evolution needs a population of at least 4")
    pop = rng.random((n, d))
    inc = _Incumbent(d)
    hist: list[HistoryRow] = []
    for it in range(budget):
        trials = np.empty_like(pop)
        for i in range(n):
            r1, r2, r3 = rng.choice([j for j in range(n) if j != i], size=3, replace=False)
            mutant = pop[r1] + cfg.mutation * (pop[r2] - pop[r3])
            cross = rng.random(d) < cfg.recombination
            cross[rng.integers(d)] = True
            trials[i] = np.clip(np.where(cross, mutant, pop[i]), 0.0, 1.0)
        J, se = fn(np.vstack([pop, trials]), it)
        inc.offer(np.vstack([pop, trials]), J, se)
        better = J[n:] <= J[:n]
        pop = np.where(better[:, None], trials, pop)
        hist.append(HistoryRow(it, inc.J, float(J.mean()), float(se.mean())))
    return OptimizeResult(inc.theta, inc.J, inc.se, hist, np.vstack([inc.theta, pop]))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def spsa(fn: BatchObjective, d: int, budget: int, rng: np.random.Generator,
         cfg: SPSAConfig = SPSAConfig()) -> OptimizeResult:
    x = np.zeros(d)
    inc = _Incumbent(d)
    hist: list[HistoryRow] = []
    for k in range(budget):
        ak = cfg.a / (k + 1 + cfg.A) ** cfg.lam
        ck = cfg.c / (k + 1) ** cfg.eps * cfg.delta
        pert = rng.choice([-1.0, 1.0], size=d)
        cand = _sigmoid(np.vstack([x + ck * pert, x - ck * pert, x]))
        J, se = fn(cand, k)
        inc.offer(cand, J, se)
        x = np.clip(x - ak * (J[0] - J[1]) / (2.0 * ck * pert), -30.0, 30.0)
        hist.append(HistoryRow(k, inc.J, float(J.mean()), float(se.mean())))
    return OptimizeResult(inc.theta, inc.J, inc.se, hist, np.vstack([inc.theta, _sigmoid(x)]))


OPTIMIZERS = {"CEM": cem, "DE": differential_evolution, "SPSA": spsa}
