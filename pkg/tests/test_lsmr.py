import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from rirdeconv.lsmr import LsmrOptions, NumericalError, StopReason, lsmr_solve


def dense(A):
    return (lambda v: A @ v), (lambda u: A.T @ u)


def test_identity():
    res = lsmr_solve(lambda v: v, lambda u: u, np.array([3.0, -1.0, 2.0]))
    np.testing.assert_allclose(res.solution, [3, -1, 2], atol=1e-12)
    assert res.iterations <= 2


def test_diagonal():
    d = np.array([1.0, 2.0, 4.0])
    res = lsmr_solve(lambda v: d * v, lambda u: d * u, np.array([1.0, 4.0, 16.0]))
    np.testing.assert_allclose(res.solution, [1, 2, 4], atol=1e-8)


def test_dense_normal_equations():
    rng = np.random.default_rng(1)
    A, b = rng.standard_normal((40, 20)), rng.standard_normal(40)
    ref = np.linalg.solve(A.T @ A, A.T @ b)
    res = lsmr_solve(*dense(A), b)
    assert np.linalg.norm(res.solution - ref) / np.linalg.norm(ref) < 1e-6
    assert res.stop_reason is StopReason.CONVERGED_NORMAL_EQ


def test_damped_normal_equations():
    rng = np.random.default_rng(1)
    A, b = rng.standard_normal((40, 20)), rng.standard_normal(40)
    damp = 0.7
    ref = np.linalg.solve(A.T @ A + damp**2 * np.eye(20), A.T @ b)
    res = lsmr_solve(*dense(A), b, LsmrOptions(damp=damp))
    assert np.linalg.norm(res.solution - ref) / np.linalg.norm(ref) < 1e-6


def test_matches_scipy():
    rng = np.random.default_rng(7)
    A, b = rng.standard_normal((60, 25)), rng.standard_normal(60)
    mine = lsmr_solve(*dense(A), b, LsmrOptions(atol=1e-10, btol=1e-10)).solution
    ref = spla.lsmr(A, b, atol=1e-10, btol=1e-10)[0]
    np.testing.assert_allclose(mine, ref, rtol=1e-8, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 30), st.integers(0, 20), st.integers(0, 2**31))
def test_consistent_system_recovery(n, extra, seed):
    # The normal-equation stop ||A^T r|| <= atol ||A|| ||r|| bounds the error by
    # about cond(A)^2 * atol; a flat 1e-5 cannot hold at atol = 1e-6 for every system.
    r = np.random.default_rng(seed)
    A = r.standard_normal((n + extra, n)) + 3 * np.eye(n + extra, n)
    z = r.standard_normal(n)
    res = lsmr_solve(*dense(A), A @ z)
    bound = np.linalg.cond(A) ** 2 * LsmrOptions().atol
    assert np.linalg.norm(res.solution - z) <= bound * np.linalg.norm(z)
    assert res.operator_calls <= 2 * (res.iterations + 1)


def test_consistent_well_conditioned_tall():
    for seed in range(20):
        r = np.random.default_rng(seed)
        A = r.standard_normal((200, 20))
        z = r.standard_normal(20)
        res = lsmr_solve(*dense(A), A @ z)
        assert np.linalg.norm(res.solution - z) <= 1e-5 * np.linalg.norm(z)


def test_normal_residual_monotone():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((200, 80)) @ np.diag(np.logspace(0, 3, 80))
    b = rng.standard_normal(200)
    res = lsmr_solve(*dense(A), b, LsmrOptions(atol=1e-12, btol=1e-12, record_history=True))
    h = np.array(res.normal_eq_history)
    assert h.size == res.iterations
    assert np.all(np.diff(h) <= 1e-12 * h[0])
    assert len(res.residual_history) == res.iterations


def test_zero_rhs_and_iteration_cap():
    A = np.random.default_rng(0).standard_normal((10, 4))
    res = lsmr_solve(*dense(A), np.zeros(10))
    assert res.stop_reason is StopReason.ZERO_RHS
    np.testing.assert_array_equal(res.solution, np.zeros(4))
    res = lsmr_solve(*dense(A), np.ones(10), LsmrOptions(atol=0, btol=0, max_iters=2))
    assert res.iterations == 2 and res.stop_reason is StopReason.MAX_ITERS


def test_non_finite_operator():
    with pytest.raises(NumericalError):
        lsmr_solve(lambda v: v * np.nan, lambda u: u, np.ones(3))
    with pytest.raises(NumericalError):
        lsmr_solve(lambda v: v, lambda u: u, np.array([1.0, np.inf]))


def test_option_validation():
    with pytest.raises(ValueError):
        LsmrOptions(atol=-1)
    with pytest.raises(ValueError):
        LsmrOptions(max_iters=0)
