import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gih.tensor import (
    NotPositiveDefiniteError,
    SeededRng,
    UndefinedCorrelationError,
    as_symmetric,
    cholesky,
    frobenius_corr,
    gaussian_sample,
    gram_schmidt,
    jacobi_eig,
    read_matrix_bin,
    read_matrix_csv,
    sym_eig,
    write_matrix_bin,
    write_matrix_csv,
)

A7 = np.array([[1.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 1.0]])


def _rand_sym(seed, n):
    b = np.random.default_rng(seed).standard_normal((n, n))
    return b + b.T


# sym_eig -------------------------------------------------------------------


def test_sym_eig_worked_example():
    w, v = sym_eig(A7)
    np.testing.assert_allclose(w, [3.0, 1.0, 0.0], atol=1e-12)
    expected = np.array([[1, 2, 1], [-1, 0, 1], [1, -1, 1]], dtype=float)
    for i in range(3):
        e = expected[i] / np.linalg.norm(expected[i])
        assert abs(abs(v[:, i] @ e) - 1.0) < 1e-10


def test_sym_eig_identity_and_diagonal():
    np.testing.assert_allclose(sym_eig(np.eye(3)).values, [1, 1, 1])
    w, v = sym_eig(np.diag([5.0, 2.0]))
    np.testing.assert_allclose(w, [5, 2])
    np.testing.assert_allclose(v, np.eye(2), atol=1e-14)


def test_sym_eig_sign_convention():
    _, v = sym_eig(_rand_sym(3, 7))
    for col in v.T:
        assert col[np.argmax(np.abs(col))] > 0


def test_sym_eig_rejects_nonfinite():
    a = np.eye(2)
    a[0, 1] = a[1, 0] = np.nan
    with pytest.raises(ValueError):
        sym_eig(a)


def test_sym_eig_rejects_asymmetric():
    with pytest.raises(ValueError):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_jacobi_matches_lapack_route():
    a = _rand_sym(11, 40)
    wj = sym_eig(a, method="jacobi").values
    wl = sym_eig(a, method="lapack").values
    np.testing.assert_allclose(wj, wl, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 24))
def test_sym_eig_reconstruction_property(seed, n):
    a = _rand_sym(seed, n)
    w, v = sym_eig(a)
    rec = (v * w) @ v.T
    assert np.linalg.norm(rec - a) / max(1.0, np.linalg.norm(a)) <= 1e-8
    assert np.all(np.diff(w) <= 1e-12)
    assert np.max(np.abs(v.T @ v - np.eye(n))) < 1e-9


@pytest.mark.parametrize("n", [64, 256])
def test_jacobi_reconstruction_large(n):
    a = _rand_sym(n, n)
    w, v = jacobi_eig(a)
    rec = (v * w) @ v.T
    assert np.linalg.norm(rec - a) / np.linalg.norm(a) <= 1e-8


# cholesky ------------------------------------------------------------------


def test_cholesky_examples():
    np.testing.assert_array_equal(cholesky(np.eye(2)), np.eye(2))
    np.testing.assert_allclose(cholesky([[4.0, 2.0], [2.0, 5.0]]), [[2.0, 0.0], [1.0, 2.0]])
    with pytest.raises(NotPositiveDefiniteError):
        cholesky([[1.0, 2.0], [2.0, 1.0]])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 20))
def test_cholesky_roundtrip_property(seed, n):
    b = np.random.default_rng(seed).standard_normal((n, n))
    a = b.T @ b + np.eye(n)
    L = cholesky(a)
    assert np.allclose(L, np.tril(L))
    assert np.all(np.diag(L) > 0)
    assert np.linalg.norm(L @ L.T - a) / np.linalg.norm(a) <= 1e-10


# gram_schmidt ----------------------------------------------------------------


def test_gram_schmidt_examples():
    np.testing.assert_array_equal(gram_schmidt([np.eye(2)[0], np.eye(2)[1]]), np.eye(2))
    np.testing.assert_allclose(gram_schmidt([[1.0, 0.0], [1.0, 1.0]]), np.eye(2), atol=1e-15)
    out = gram_schmidt([[1.0, 0.0], [2.0, 0.0]], drop_tol=1e-8)
    np.testing.assert_array_equal(out, [[1.0, 0.0]])
    assert gram_schmidt([]).shape[0] == 0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 8), dim=st.integers(2, 10))
def test_gram_schmidt_span_property(seed, n, dim):
    gen = np.random.default_rng(seed)
    vecs = gen.standard_normal((n, dim))
    if n > 2:
        vecs[2] = vecs[0] - 0.5 * vecs[1]  # force a dependent vector
    q = gram_schmidt(vecs, drop_tol=1e-8)
    assert np.max(np.abs(q @ q.T - np.eye(q.shape[0]))) <= 1e-10
    for v in vecs:
        resid = v - q.T @ (q @ v)
        assert np.linalg.norm(resid) <= 1e-8 * max(1.0, np.linalg.norm(v))


# frobenius_corr ---------------------------------------------------------------


def test_corr_examples():
    a = np.array([[1.0, 2.0], [3.0, -1.0]])
    assert frobenius_corr(a, a) == pytest.approx(1.0)
    assert frobenius_corr(np.eye(2), [[0.0, 1.0], [1.0, 0.0]]) == 0.0
    with pytest.raises(UndefinedCorrelationError):
        frobenius_corr(np.zeros((2, 2)), a)
    with pytest.raises(ValueError):
        frobenius_corr(np.eye(2), np.eye(3))


def test_corr_random_high_dim_vectors():
    # E|<a,b>|/(|a||b|) for i.i.d. Gaussian vectors is about sqrt(2 / (pi D))
    gen = np.random.default_rng(0)
    dim = 3072
    vals = [abs(frobenius_corr(gen.standard_normal((1, dim)), gen.standard_normal((1, dim)))) for _ in range(1000)]
    expected = math.sqrt(2.0 / (math.pi * dim))
    assert abs(np.mean(vals) - expected) < 0.1 * expected
    assert np.mean(vals) < 0.02


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(-10, 10).filter(lambda x: abs(x) > 1e-3))
def test_corr_properties(seed, c):
    gen = np.random.default_rng(seed)
    a, b = gen.standard_normal((2, 4, 5))
    r = frobenius_corr(a, b)
    assert -1.0 <= r <= 1.0
    assert frobenius_corr(b, a) == pytest.approx(r, abs=1e-14)
    assert frobenius_corr(c * a, b) == pytest.approx(math.copysign(1, c) * r, abs=1e-12)


# randomness and sampling --------------------------------------------------------


def test_seeded_rng_reproducible_and_distinct():
    a = SeededRng(7, 3).generator().standard_normal(5)
    b = SeededRng(7, 3).generator().standard_normal(5)
    c = SeededRng(7, 4).generator().standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert SeededRng(7).child(1) == SeededRng(7).child(1)
    assert SeededRng(7).child(1) != SeededRng(7).child(2)
    assert pickle.loads(pickle.dumps(SeededRng(7, 9))) == SeededRng(7, 9)


def test_child_streams_uncorrelated():
    base = SeededRng(1)
    xs = np.stack([base.child(i).generator().standard_normal(20_000) for i in range(4)])
    c = np.corrcoef(xs)
    assert np.max(np.abs(c - np.eye(4))) < 0.03


def test_gaussian_sample_identity():
    x = gaussian_sample(SeededRng(0), np.eye(4), 100_000)
    assert np.max(np.abs(x.T @ x / len(x) - np.eye(4))) < 0.05


def test_gaussian_sample_a7_covariance():
    x = gaussian_sample(SeededRng(1), A7, 100_000)
    assert np.max(np.abs(x.T @ x / len(x) - A7)) < 0.05


def test_gaussian_sample_small_isotropic():
    x = gaussian_sample(SeededRng(2), 1e-8, 20_000, 6)
    assert np.all(np.abs(x.std(axis=0) / 1e-4 - 1.0) < 0.05)


def test_gaussian_sample_rejects_non_psd():
    with pytest.raises(ValueError):
        gaussian_sample(SeededRng(0), np.diag([1.0, -0.1]), 3)
    # tiny negative eigenvalues are clipped
    x = gaussian_sample(SeededRng(0), np.diag([1.0, -1e-12]), 3)
    assert x.shape == (3, 2)


def test_gaussian_sample_deterministic():
    a = gaussian_sample(SeededRng(5, 1), A7, 50)
    b = gaussian_sample(SeededRng(5, 1), A7, 50)
    assert a.tobytes() == b.tobytes()


def test_as_symmetric_tolerance():
    a = np.array([[1.0, 1.0 + 1e-14], [1.0, 1.0]])
    np.testing.assert_array_equal(as_symmetric(a), as_symmetric(a).T)
    with pytest.raises(ValueError):
        as_symmetric(np.array([[1.0, 1.1], [1.0, 1.0]]))


# serialization ----------------------------------------------------------------


def test_matrix_csv_roundtrip(tmp_path):
    a = np.random.default_rng(0).standard_normal((3, 4)) * 1e-7
    write_matrix_csv(tmp_path / "a.csv", a)
    np.testing.assert_array_equal(read_matrix_csv(tmp_path / "a.csv"), a)


def test_matrix_bin_roundtrip_and_layout(tmp_path):
    a = np.arange(6, dtype=float).reshape(2, 3)
    write_matrix_bin(tmp_path / "a.bin", a)
    raw = (tmp_path / "a.bin").read_bytes()
    assert raw[:16] == (2).to_bytes(8, "little") + (3).to_bytes(8, "little")
    assert np.frombuffer(raw[16:], "<f8").tolist() == [0, 1, 2, 3, 4, 5]
    np.testing.assert_array_equal(read_matrix_bin(tmp_path / "a.bin"), a)


def test_matrix_bin_rejects_truncated(tmp_path):
    (tmp_path / "b.bin").write_bytes(b"\x01" * 10)
    with pytest.raises(ValueError):
        read_matrix_bin(tmp_path / "b.bin")


def test_write_rejects_nonfinite(tmp_path):
    with pytest.raises(ValueError):
        write_matrix_csv(tmp_path / "x.csv", np.array([[np.inf]]))
