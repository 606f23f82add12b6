import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from netrack.linalg import NumericalError, jacobi_eigh, spectral_norm_sym


def sym(n, seed):
    B = np.random.default_rng(seed).standard_normal((n, n))
    return B + B.T


@pytest.mark.parametrize("n", [1, 2, 3, 4, 7, 16, 33])
def test_matches_lapack(n):
    A = sym(n, n)
    w, V = jacobi_eigh(A, vectors=True)
    ref = np.sort(np.linalg.eigvalsh(A))[::-1]
    np.testing.assert_allclose(w, ref, atol=1e-12 * max(1, np.abs(ref).max()))
    np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-12)
    np.testing.assert_allclose(A @ V, V * w, atol=1e-11)


def test_diagonal_and_zero():
    np.testing.assert_array_equal(jacobi_eigh(np.diag([3.0, -1.0, 2.0])), [3.0, 2.0, -1.0])
    np.testing.assert_array_equal(jacobi_eigh(np.zeros((3, 3))), [0.0, 0.0, 0.0])


def test_2x2_by_hand():
    # [[0.3, 0.5], [0.5, 0.3]] has eigenvalues 0.8 and -0.2
    np.testing.assert_allclose(jacobi_eigh([[0.3, 0.5], [0.5, 0.3]]), [0.8, -0.2], atol=1e-15)
    assert spectral_norm_sym([[0.3, 0.5], [0.5, 0.3]]) == pytest.approx(0.8, abs=1e-15)


def test_nonconvergence_reports_sweeps():
    with pytest.raises(NumericalError) as exc:
        jacobi_eigh(sym(20, 0), max_sweeps=1)
    assert exc.value.iterations == 1


def test_rejects_non_square():
    with pytest.raises(ValueError):
        jacobi_eigh(np.zeros((2, 3)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 9), st.just(9)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_hypothesis_spectrum(B):
    k = B.shape[0]
    A = B[:, :k] + B[:, :k].T
    w = jacobi_eigh(A)
    ref = np.sort(np.linalg.eigvalsh(A))[::-1]
    assert np.all(np.diff(w) <= 0)
    np.testing.assert_allclose(w, ref, atol=1e-10 * max(1.0, np.abs(A).max()))
    assert np.sum(w) == pytest.approx(np.trace(A), abs=1e-9 * max(1.0, np.abs(A).max()))
