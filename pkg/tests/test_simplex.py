import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from maas_auction.market import DomainError
from maas_auction.simplex import StandardLP, solve_lp


def test_examples():
    res = solve_lp(StandardLP([1.0], [[1.0]], [3.0], ("<=",)))
    assert res.status == "optimal"
    assert res.x[0] == pytest.approx(3.0)
    assert res.duals[0] == pytest.approx(1.0)
    assert solve_lp(StandardLP([1.0], np.zeros((0, 1)), [], ())).status == "unbounded"
    assert solve_lp(StandardLP([1.0], [[1.0]], [-1.0], ("<=",))).status == "infeasible"


def test_dimension_errors():
    with pytest.raises(DomainError):
        StandardLP([1.0, 2.0], [[1.0, 1.0]], [1.0, 2.0], ("<=",))
    with pytest.raises(DomainError):
        StandardLP([1.0], [[1.0]], [1.0], ("<",))
    with pytest.raises(DomainError):
        StandardLP([1.0], [[1.0]], [1.0], ("<=",), lb=[2.0], ub=[1.0])


def test_minimize_equality_and_bounds():
    # min x + 2y s.t. x + y = 4, x <= 3, y >= 0.5
    res = solve_lp(StandardLP([1.0, 2.0], [[1.0, 1.0]], [4.0], ("=",), lb=[0, 0.5], ub=[3, np.inf],
                              maximize=False))
    assert res.objective == pytest.approx(5.0)
    assert res.x == pytest.approx([3.0, 1.0])


def test_two_user_knapsack_duals():
    # relaxation of Q={6,5}, b={10,9}, A=10 with x <= 1 rows: LP 52/3, capacity dual 5/3
    A = [[6.0, 5.0], [1.0, 0.0], [0.0, 1.0]]
    res = solve_lp(StandardLP([10.0, 9.0], A, [10.0, 1.0, 1.0], ("<=", "<=", "<=")))
    assert res.objective == pytest.approx(52 / 3)
    assert res.duals == pytest.approx([5 / 3, 0.0, 2 / 3])


def test_degenerate_cycling_example_terminates():
    # Beale's classic cycling instance; Bland's rule must terminate at the optimum 1/20
    c = [0.75, -150.0, 0.02, -6.0]
    A = [[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]]
    res = solve_lp(StandardLP(c, A, [0.0, 0.0, 1.0], ("<=", "<=", "<=")))
    assert res.status == "optimal"
    assert res.objective == pytest.approx(0.05)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_matches_scipy(n, m, seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=n)
    A = rng.uniform(-1, 2, size=(m, n))
    senses = tuple(rng.choice(["<=", ">=", "="], size=m, p=[0.6, 0.25, 0.15]))
    x0 = rng.uniform(0, 2, size=n)  # keeps the instance feasible most of the time
    b = A @ x0 + np.where(np.array(senses) == "<=", 0.5, np.where(np.array(senses) == ">=", -0.5, 0.0))
    ub = np.where(rng.random(n) < 0.7, 5.0, np.inf)
    lb = np.where(rng.random(n) < 0.2, -1.0, 0.0)
    maximize = bool(rng.random() < 0.5)
    ours = solve_lp(StandardLP(c, A, b, senses, lb, ub, maximize))
    sign = -1.0 if maximize else 1.0
    a_ub = [A[i] * (1 if s == "<=" else -1) for i, s in enumerate(senses) if s != "="]
    b_ub = [b[i] * (1 if s == "<=" else -1) for i, s in enumerate(senses) if s != "="]
    a_eq = [A[i] for i, s in enumerate(senses) if s == "="]
    b_eq = [b[i] for i, s in enumerate(senses) if s == "="]
    ref = linprog(sign * c, A_ub=a_ub or None, b_ub=b_ub or None, A_eq=a_eq or None, b_eq=b_eq or None,
                  bounds=list(zip(lb, [None if np.isinf(u) else u for u in ub])), method="highs")
    if ref.status == 2:
        assert ours.status == "infeasible"
    elif ref.status == 3:
        assert ours.status == "unbounded"
    else:
        assert ours.status == "optimal"
        assert ours.objective == pytest.approx(sign * ref.fun, rel=1e-7, abs=1e-7)
        # the reported point is feasible
        x = ours.x
        assert np.all(x >= lb - 1e-8) and np.all(x <= ub + 1e-8)
        lhs = A @ x
        for i, s in enumerate(senses):
            if s == "<=":
                assert lhs[i] <= b[i] + 1e-7
            elif s == ">=":
                assert lhs[i] >= b[i] - 1e-7
            else:
                assert lhs[i] == pytest.approx(b[i], abs=1e-7)
        # duals price the right-hand side: objective = b.y + bound terms (strong duality check)
        y = ours.duals
        reduced = c - A.T @ y
        bound_part = sum(r * (lb[j] if (r < 0) == maximize else ub[j]) if abs(r) > 1e-9 else 0.0
                         for j, r in enumerate(reduced))
        assert b @ y + bound_part == pytest.approx(ours.objective, rel=1e-6, abs=1e-6)
