import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stylefield.errors import DomainError, ShapeError
from stylefield.linalg import jacobi_eigh, psd_sqrt


def test_eigenvalues_match_numpy(rng):
    a = rng.normal(size=(9, 9))
    a = a + a.T
    w, v = jacobi_eigh(a)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(a), atol=1e-10)
    np.testing.assert_allclose(v.T @ v, np.eye(9), atol=1e-10)
    np.testing.assert_allclose(v @ np.diag(w) @ v.T, a, atol=1e-10)


def test_diagonal_and_zero():
    w, v = jacobi_eigh(np.diag([3.0, -1.0, 2.0]))
    np.testing.assert_array_equal(w, [-1.0, 2.0, 3.0])
    w, v = jacobi_eigh(np.zeros((3, 3)))
    np.testing.assert_array_equal(w, 0.0)
    np.testing.assert_array_equal(v, np.eye(3))


def test_repeated_eigenvalues(rng):
    q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    a = q @ np.diag([1.0, 1.0, 1.0, 2.0, 2.0, 5.0]) @ q.T
    w, _ = jacobi_eigh(a)
    np.testing.assert_allclose(w, [1, 1, 1, 2, 2, 5], atol=1e-12)


def test_badly_scaled_entries():
    a = np.array([[1e8, 1e-9, 0.0], [1e-9, 1.0, 1e-12], [0.0, 1e-12, 1e-8]])
    w, _ = jacobi_eigh(a)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(a), rtol=1e-9)


def test_psd_sqrt_identity():
    np.testing.assert_allclose(psd_sqrt(np.eye(5)), np.eye(5), atol=1e-15)


def test_psd_sqrt_matches_eigh_oracle(rng):
    x = rng.normal(size=(40, 6))
    cov = np.cov(x, rowvar=False)
    w, u = np.linalg.eigh(cov)
    oracle = (u * np.sqrt(w)) @ u.T
    np.testing.assert_allclose(psd_sqrt(cov), oracle, atol=1e-10)


def test_psd_sqrt_clamps_rank_deficient(rng):
    b = rng.normal(size=(5, 2))
    cov = b @ b.T
    root = psd_sqrt(cov)
    np.testing.assert_allclose(root @ root, cov, atol=1e-10)
    assert np.all(np.linalg.eigvalsh(root) > -1e-7)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_sqrt_squares_back(n, seed):
    a = np.random.default_rng(seed).normal(size=(n, n))
    cov = a @ a.T
    root = psd_sqrt(cov)
    np.testing.assert_allclose(root, root.T, atol=0)
    np.testing.assert_allclose(root @ root, cov, atol=1e-9 * max(1.0, np.abs(cov).max()))


def test_input_errors():
    with pytest.raises(ShapeError):
        jacobi_eigh(np.ones((2, 3)))
    with pytest.raises(DomainError):
        jacobi_eigh(np.array([[np.nan, 0.0], [0.0, 1.0]]))
