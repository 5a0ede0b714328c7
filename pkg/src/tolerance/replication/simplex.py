"""Dense two-phase primal simplex for small and medium linear programs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InfeasibleError(ValueError):
    """The constraints admit no solution."""


class UnboundedError(RuntimeError):
    """The objective decreases without bound on the feasible set."""


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """minimize c @ x  s.t.  A_eq @ x = b_eq,  A_ge @ x >= b_ge,  x >= 0."""

    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ge: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    b_ge: np.ndarray = field(default_factory=lambda: np.zeros(0))
    names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        n = len(self.c)
        for name in ("c", "A_eq", "b_eq", "A_ge", "b_ge"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.A_ge.size == 0:
            object.__setattr__(self, "A_ge", np.zeros((0, n)))
        if self.A_eq.size == 0:
            object.__setattr__(self, "A_eq", np.zeros((0, n)))
        if self.A_eq.shape[1] != n or self.A_ge.shape[1] != n:
            raise ValueError("constraint matrices must have one column per variable")
        if len(self.b_eq) != self.A_eq.shape[0] or len(self.b_ge) != self.A_ge.shape[0]:
            raise ValueError("right-hand sides must have one entry per constraint row")

    @property
    def n_vars(self) -> int:
        return len(self.c)

    def to_text(self) -> str:
        """Fixed-format dump: objective row, then one row per constraint."""
        def row(v: np.ndarray) -> str:
            return " ".join(f"{x: .17e}" for x in v)
        header = f"VARS {self.n_vars} EQ {len(self.b_eq)} GE {len(self.b_ge)}"
        lines = [header, "OBJ " + row(self.c)]
        lines += [f"EQ {row(a)} RHS {b: .17e}" for a, b in zip(self.A_eq, self.b_eq)]
        lines += [f"GE {row(a)} RHS {b: .17e}" for a, b in zip(self.A_ge, self.b_ge)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LPSolution:
    x: np.ndarray
    objective: float
    dual_bound: float
    iterations: int

    @property
    def duality_gap(self) -> float:
        return self.objective - self.dual_bound


def _pivot(T: np.ndarray, r: int, j: int) -> None:
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _run(T: np.ndarray, basis: np.ndarray, allowed: np.ndarray, lex: slice, tol: float,
         max_iter: int, stall_limit: int) -> int:
    """Minimize the tableau's last-row objective; returns the pivot count.

    Entering columns follow the most negative reduced cost, or the lowest
    index after ``stall_limit`` consecutive pivots without objective progress.
    Ratio-test ties are broken lexicographically on the columns ``lex``, which
    hold the current basis inverse, so the method cannot cycle.
    """
    m = T.shape[0] - 1
    stalled = 0
    for it in range(max_iter):
        red = T[m, :-1]
        cand = np.flatnonzero((red < -tol) & allowed)
        if cand.size == 0:
            return it
        j = int(cand[0]) if stalled >= stall_limit else int(cand[np.argmin(red[cand])])
        col = T[:m, j]
        pos = col > tol
        if not np.any(pos):
            raise UnboundedError("objective is unbounded below")
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        if ties.size > 1:
            M = T[ties, lex] / col[ties, None]
            for k in range(M.shape[1]):
                v = M[:, k]
                keep = v <= v.min() + tol
                ties, M = ties[keep], M[keep]
                if ties.size == 1:
                    break
        r = int(ties[0])
        before = T[m, -1]
        _pivot(T, r, j)
        basis[r] = j
        stalled = stalled + 1 if T[m, -1] >= before - tol else 0
    raise RuntimeError(f"simplex did not terminate within {max_iter} pivots")


def solve_lp(lp: LinearProgram, tol: float = 1e-9, max_iter: int = 1_000_000,
             stall_limit: int = 50) -> LPSolution:
    """Optimal basic solution by two-phase simplex with lexicographic anti-cycling."""
    n = lp.n_vars
    n_ge = lp.A_ge.shape[0]
    # standard form: [x, surplus] with equality rows only
    A = np.zeros((lp.A_eq.shape[0] + n_ge, n + n_ge))
    A[:lp.A_eq.shape[0], :n] = lp.A_eq
    A[lp.A_eq.shape[0]:, :n] = lp.A_ge
    A[lp.A_eq.shape[0]:, n:] = -np.eye(n_ge)
    b = np.concatenate([lp.b_eq, lp.b_ge])
    c = np.concatenate([lp.c, np.zeros(n_ge)])
    neg = b < 0
    A[neg] *= -1
    b = np.where(neg, -b, b)
    m, N = A.shape

    # columns: x and surplus, artificials (kept as the basis inverse), rhs
    T = np.zeros((m + 1, N + m + 1))
    T[:m, :N] = A
    T[:m, N:N + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :N] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = np.arange(N, N + m)
    lex = slice(N, N + m)
    allowed = np.ones(N + m, dtype=bool)
    iters = _run(T, basis, allowed, lex, tol, max_iter, stall_limit)
    if -T[m, -1] > tol * max(1.0, np.abs(b).max(initial=0.0)):
        raise InfeasibleError(f"phase-one residual {-T[m, -1]:.3e} > 0")

    # drive remaining artificials out of the basis; rows that cannot be pivoted are redundant
    keep = np.ones(m, dtype=bool)
    independent = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] >= N:
            j = int(np.argmax(np.abs(T[r, :N])))
            if abs(T[r, j]) > 1e3 * tol:
                _pivot(T, r, j)
                basis[r] = j
            else:
                # tableau row r vanishes on x: original row basis[r] - N depends on the others
                keep[r] = False
                independent[basis[r] - N] = False
    rows = np.flatnonzero(keep)
    T = np.vstack([T[rows], np.zeros((1, N + m + 1))])
    basis = basis[rows]
    A_kept = A[independent]
    b_kept = b[independent]
    mk = len(rows)

    T[mk, :N] = c - c[basis] @ T[:mk, :N]
    T[mk, -1] = -c[basis] @ T[:mk, -1]
    allowed[N:] = False
    iters += _run(T, basis, allowed, lex, tol, max_iter, stall_limit)

    z = np.zeros(N)
    z[basis] = T[:mk, -1]
    z = np.maximum(z, 0.0)
    obj = float(lp.c @ z[:n])
    y = np.linalg.solve(A_kept[:, basis].T, c[basis]) if mk else np.zeros(0)
    red = c - A_kept.T @ y
    dual = float(b_kept @ y)
    if red.min(initial=0.0) < -1e3 * tol:
        raise RuntimeError(f"simplex terminated with negative reduced cost {red.min():.3e}")
    return LPSolution(z[:n], obj, dual, iters)
