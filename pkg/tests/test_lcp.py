import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mftgne.errors import DimensionTooLarge, ZeroDiagonal
from mftgne.lcp import LcpStatus, enumeration_solve, lemke_solve, pgs_solve, residual

M2 = np.array([[2.0, 1.0], [1.0, 2.0]])
Q2 = np.array([-5.0, -6.0])


def spd(rng, m):
    A = rng.normal(size=(m, m))
    return A @ A.T + 0.5 * np.eye(m)


def test_nonnegative_q_needs_no_pivots():
    sol = lemke_solve(M2, np.array([1.0, 0.0]))
    assert sol.solved and sol.pivots_or_sweeps == 0
    np.testing.assert_array_equal(sol.z, 0.0)
    np.testing.assert_array_equal(sol.w, [1.0, 0.0])


def test_identity_matrix():
    sol = lemke_solve(np.eye(2), np.array([-1.0, -2.0]))
    assert sol.solved
    np.testing.assert_allclose(sol.z, [1.0, 2.0], atol=1e-14)
    np.testing.assert_allclose(sol.w, 0.0, atol=1e-14)


def test_two_by_two_with_both_active():
    sol = lemke_solve(M2, Q2)
    assert sol.solved
    np.testing.assert_allclose(sol.z, [4 / 3, 7 / 3], atol=1e-14)
    np.testing.assert_allclose(sol.w, 0.0, atol=1e-13)


def test_infeasible_problem_ends_on_a_ray():
    sol = lemke_solve(-np.eye(2), np.array([-1.0, -1.0]))
    assert sol.status is LcpStatus.RAY_TERMINATION
    assert not sol.solved


def test_pivot_budget():
    rng = np.random.default_rng(1)
    M = spd(rng, 8)
    q = -np.abs(rng.normal(size=8)) - 1
    sol = lemke_solve(M, q, max_pivots=1)
    assert sol.status is LcpStatus.ITERATION_LIMIT


def test_pgs_on_identity_takes_one_sweep():
    sol = pgs_solve(np.eye(2), np.array([-1.0, -2.0]))
    assert sol.solved and sol.pivots_or_sweeps == 1
    np.testing.assert_allclose(sol.z, [1.0, 2.0])


def test_pgs_two_by_two():
    sol = pgs_solve(M2, Q2)
    assert sol.solved
    np.testing.assert_allclose(sol.z, [4 / 3, 7 / 3], atol=1e-10)


def test_pgs_rejects_zero_diagonal():
    M = np.array([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(ZeroDiagonal) as err:
        pgs_solve(M, np.array([-1.0, -1.0]))
    assert err.value.index == 1


def test_pgs_reports_sweep_limit():
    sol = pgs_solve(M2, Q2, max_sweeps=2)
    assert sol.status is LcpStatus.ITERATION_LIMIT


def test_enumeration_nonnegative_q_includes_zero():
    sols = enumeration_solve(M2, np.array([1.0, 3.0]))
    assert len(sols) == 1 and not sols[0].z.any()


def test_enumeration_unique_solution():
    sols = enumeration_solve(M2, Q2)
    assert len(sols) == 1
    np.testing.assert_allclose(sols[0].z, [4 / 3, 7 / 3])


def test_enumeration_non_p_matrix_lists_all():
    M = np.array([[0.0, -1.0], [-1.0, 0.0]])
    sols = enumeration_solve(M, np.array([1.0, 1.0]))
    # z = 0 always works; (1, 1) solves the fully active system w = 0
    zs = sorted(tuple(np.round(s.z, 12)) for s in sols)
    assert zs == [(0.0, 0.0), (1.0, 1.0)]


def test_enumeration_size_guard():
    with pytest.raises(DimensionTooLarge):
        enumeration_solve(np.eye(21), -np.ones(21))


def test_residual_examples():
    assert residual(np.eye(2), [-1.0, -2.0], [1.0, 2.0]) == 0.0
    assert residual(np.eye(2), [0.5, -0.3], [0.0, 0.0]) >= 0.3
    r = residual(np.eye(2), [-1.0, -2.0], [1.0 + 1e-6, 2.0 + 1e-6])
    assert r == pytest.approx(1e-6, rel=1e-6)


def test_empty_problem():
    sol = lemke_solve(np.zeros((0, 0)), np.zeros(0))
    assert sol.solved and sol.z.size == 0


def test_degenerate_ties_resolved():
    # repeated rows create ties in the ratio test
    M = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]) + 1e-3 * np.eye(3)
    q = np.array([-1.0, -1.0, -1.0])
    sol = lemke_solve(M, q)
    assert sol.solved
    assert residual(M, q, sol.z) < 1e-10


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 1_000_000), m=st.integers(1, 10))
def test_solvers_agree_with_enumeration_on_spd(seed, m):
    rng = np.random.default_rng(seed)
    M = spd(rng, m)
    q = rng.normal(size=m) * 3
    oracle = enumeration_solve(M, q)
    assert len(oracle) == 1
    lem = lemke_solve(M, q)
    pgs = pgs_solve(M, q)
    assert lem.solved and pgs.solved
    np.testing.assert_allclose(lem.z, oracle[0].z, atol=1e-8)
    np.testing.assert_allclose(pgs.z, oracle[0].z, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 1_000_000), m=st.integers(1, 12))
def test_lemke_solves_p_matrix_problems(seed, m):
    # positive-definite but non-symmetric M: unique solution, Lemke must find it
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, m))
    M = spd(rng, m) + (A - A.T)
    q = rng.normal(size=m) * 3
    sol = lemke_solve(M, q)
    assert sol.solved
    assert np.all(sol.z >= 0) and np.all(sol.w >= -1e-9)
    assert np.max(np.abs(sol.z * sol.w)) < 1e-8
