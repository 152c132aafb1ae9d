import numpy as np
import pytest
from hypothesis import given, strategies as st

from fairpost.errors import Infeasible, NumericalFailure
from fairpost.simplex import solve

linprog = pytest.importorskip("scipy.optimize").linprog


def random_lp(seed, m, n):
    rng = np.random.default_rng(seed)
    A = rng.integers(-3, 4, size=(m, n)).astype(float)
    x0 = rng.uniform(0, 2, size=n) * (rng.random(n) < 0.7)
    b = A @ x0
    c = rng.uniform(0, 5, size=n)
    return c, A, b


@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(2, 10))
def test_matches_reference_solver(seed, m, n):
    c, A, b = random_lp(seed, m, n)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=[(0, None)] * n, method="highs")
    assert ref.status == 0
    res = solve(c, A, b)
    assert abs(res.objective - ref.fun) <= 1e-9 * max(1, abs(ref.fun))
    assert np.abs(A @ res.x - b).max() <= 1e-9
    assert (res.x >= 0).all()


def test_redundant_rows():
    A = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 1.0, 1.0]])
    b = np.array([1.0, 2.0, 1.0])
    res = solve([1.0, 2.0, 0.0], A, b)
    assert res.objective == pytest.approx(1.0)
    assert res.x == pytest.approx([1.0, 0.0, 1.0])


def test_negative_right_hand_side():
    res = solve([1.0, 1.0], [[-1.0, -1.0]], [-2.0])
    assert res.objective == pytest.approx(2.0)


def test_infeasible():
    with pytest.raises(Infeasible):
        solve([1.0, 1.0], [[1.0, 1.0]], [-1.0])


def test_unbounded():
    with pytest.raises(Infeasible, match="unbounded"):
        solve([-1.0, 0.0], [[1.0, -1.0]], [0.0])


def test_iteration_cap():
    c, A, b = random_lp(3, 5, 10)
    with pytest.raises(NumericalFailure):
        solve(c, A, b, max_iter=1)


def test_deterministic():
    c, A, b = random_lp(11, 4, 8)
    one, two = solve(c, A, b), solve(c, A, b)
    assert (one.x == two.x).all() and one.iterations == two.iterations
