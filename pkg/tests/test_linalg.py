import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sslseg import kernels
from sslseg.errors import InvalidArgumentError, NumericError
from sslseg.linalg import canonical_signs, symmetric_eigh


def _random_sym(n, seed):
    a = np.random.default_rng(seed).normal(size=(n, n))
    return a @ a.T


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**16))
def test_matches_numpy_eigh(n, seed):
    a = _random_sym(n, seed)
    w, v = symmetric_eigh(a)
    ref_w, ref_v = np.linalg.eigh(a)
    np.testing.assert_allclose(w, ref_w[::-1], atol=1e-9 * max(1, abs(ref_w).max()))
    np.testing.assert_allclose(v.T @ v, np.eye(n), atol=1e-10)
    np.testing.assert_allclose(a @ v, v * w, atol=1e-8 * max(1, abs(ref_w).max()))
    # canonical signs: largest-magnitude entry positive
    idx = np.argmax(np.abs(v), axis=0)
    assert np.all(v[idx, np.arange(n)] > 0)


def test_descending_and_deterministic():
    a = np.diag([1.0, 3.0, 2.0])
    w, v = symmetric_eigh(a)
    np.testing.assert_array_equal(w, [3.0, 2.0, 1.0])
    np.testing.assert_array_equal(np.abs(v), np.eye(3)[:, [1, 2, 0]])
    w2, v2 = symmetric_eigh(a)
    np.testing.assert_array_equal(v, v2)


def test_rejects_bad_input():
    with pytest.raises(NumericError):
        symmetric_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NumericError):
        symmetric_eigh(np.array([[np.nan, 0.0], [0.0, 1.0]]))
    with pytest.raises(InvalidArgumentError):
        symmetric_eigh(np.ones((2, 3)))


def test_non_convergence_is_reported():
    with pytest.raises(NumericError):
        symmetric_eigh(_random_sym(6, 0), max_sweeps=1)


def test_canonical_signs_flips():
    v = np.array([[-3.0, 1.0], [1.0, -0.5]])
    np.testing.assert_array_equal(canonical_signs(v), [[3.0, 1.0], [-1.0, -0.5]])


@pytest.mark.skipif(kernels.numba_impl is None, reason="numba not installed")
@pytest.mark.parametrize("n", [3, 9, 45])
def test_backends_agree(n):
    a = _random_sym(n, n)
    w1, v1, s1 = kernels.numpy_impl.jacobi_eigh(a.copy(), 1e-15, 100)
    w2, v2, s2 = kernels.numba_impl.jacobi_eigh(a.copy(), 1e-15, 100)
    np.testing.assert_allclose(np.sort(w1), np.sort(w2), rtol=1e-12, atol=1e-10)
    assert s1 < 100 and s2 < 100
