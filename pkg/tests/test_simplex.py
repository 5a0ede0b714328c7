from __future__ import annotations

import numpy as np
import pytest
from scipy.optimize import linprog

from tolerance.replication.simplex import (InfeasibleError, LinearProgram, UnboundedError,
                                           solve_lp)


def test_single_variable_lower_bound():
    sol = solve_lp(LinearProgram(np.array([1.0]), np.zeros((0, 1)), np.zeros(0),
                                 np.array([[1.0]]), np.array([3.0])))
    assert sol.x[0] == pytest.approx(3.0)
    assert sol.objective == pytest.approx(3.0)


def test_beale_cycling_example_terminates():
    # cycles under most-negative-reduced-cost pricing without an anti-cycling rule
    c = np.array([-0.75, 20.0, -0.5, 6.0])
    A_le = np.array([[0.25, -8.0, -1.0, 9.0], [0.5, -12.0, -0.5, 3.0], [0.0, 0.0, 1.0, 0.0]])
    b_le = np.array([0.0, 0.0, 1.0])
    sol = solve_lp(LinearProgram(c, np.zeros((0, 4)), np.zeros(0), -A_le, -b_le))
    assert sol.objective == pytest.approx(-1.25, abs=1e-12)
    assert abs(sol.duality_gap) < 1e-9


@pytest.mark.parametrize("stall_limit", [0, 50])
def test_random_lps_match_highs(stall_limit):
    rng = np.random.default_rng(0)
    checked = 0
    for _ in range(150):
        n, m_eq, m_ge = rng.integers(2, 7), rng.integers(0, 4), rng.integers(0, 4)
        c = rng.integers(-3, 4, n).astype(float)
        A = rng.integers(-3, 4, (m_eq, n)).astype(float)
        G = rng.integers(-3, 4, (m_ge, n)).astype(float)
        x0 = rng.uniform(0, 2, n) * (rng.uniform(size=n) < 0.7)
        b, h = A @ x0, G @ x0 - rng.uniform(0, 1, m_ge)
        if m_eq and rng.uniform() < 0.3:
            A, b = np.vstack([A, A[0]]), np.append(b, b[0])
        ref = linprog(c, A_ub=-G if m_ge else None, b_ub=-h if m_ge else None,
                      A_eq=A if len(b) else None, b_eq=b if len(b) else None,
                      bounds=[(0, None)] * n, method="highs")
        lp = LinearProgram(c, A, b, G, h)
        if ref.status == 3:
            with pytest.raises(UnboundedError):
                solve_lp(lp, stall_limit=stall_limit)
            continue
        assert ref.status == 0
        sol = solve_lp(lp, stall_limit=stall_limit)
        assert sol.objective == pytest.approx(ref.fun, abs=1e-7)
        assert abs(sol.duality_gap) <= 1e-7
        np.testing.assert_allclose(A @ sol.x, b, atol=1e-8)
        assert np.all(G @ sol.x >= h - 1e-8) and np.all(sol.x >= 0)
        checked += 1
    assert checked > 50


def test_infeasible_is_reported():
    lp = LinearProgram(np.array([1.0, 1.0]), np.array([[1.0, 1.0]]), np.array([1.0]),
                       np.array([[1.0, 1.0]]), np.array([2.0]))
    with pytest.raises(InfeasibleError):
        solve_lp(lp)


def test_unbounded_is_reported():
    lp = LinearProgram(np.array([-1.0, 0.0]), np.array([[1.0, -1.0]]), np.array([0.0]))
    with pytest.raises(UnboundedError):
        solve_lp(lp)


def test_redundant_rows_are_dropped():
    A = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [1.0, 2.0, 1.0]])
    b = np.array([1.0, 1.0, 1.0, 2.0])
    sol = solve_lp(LinearProgram(np.array([1.0, 2.0, 3.0]), A, b))
    ref = linprog([1, 2, 3], A_eq=A, b_eq=b, method="highs")
    assert sol.objective == pytest.approx(ref.fun)
    assert abs(sol.duality_gap) < 1e-9


def test_text_dump_layout():
    lp = LinearProgram(np.array([1.0, 2.0]), np.array([[1.0, 1.0]]), np.array([1.0]),
                       np.array([[1.0, 0.0]]), np.array([0.25]))
    lines = lp.to_text().splitlines()
    assert lines[0] == "VARS 2 EQ 1 GE 1"
    assert lines[1].startswith("OBJ ") and lines[2].startswith("EQ ") and lines[3].startswith("GE ")
    assert float(lines[3].split("RHS")[1]) == 0.25


def test_shape_validation():
    with pytest.raises(ValueError):
        LinearProgram(np.array([1.0, 2.0]), np.array([[1.0]]), np.array([1.0]))
    with pytest.raises(ValueError):
        LinearProgram(np.array([1.0]), np.array([[1.0]]), np.array([1.0, 2.0]))
