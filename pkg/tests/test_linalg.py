import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from treesolve.errors import NotPositiveDefinite, NotPSD, RankDeficient, SingularHessian
from treesolve.linalg import (BlockDiagMatrix, BlockVector, SparseBlockMatrix, dense_cholesky, local_norm,
                              qr_positive, smat, svec, svec_dim, sym_inv_sqrt, sym_kron, sym_sqrt)

seeds = st.integers(0, 2**31 - 1)


def spd(rng, k, shift=1.0):
    B = rng.normal(size=(k, k))
    return B @ B.T + shift * np.eye(k)


# dense_cholesky ---------------------------------------------------------------

def test_cholesky_identity():
    assert np.array_equal(dense_cholesky(np.eye(3)), np.eye(3))


def test_cholesky_two_by_two():
    L = dense_cholesky(np.array([[4.0, 2.0], [2.0, 5.0]]))
    assert np.allclose(L, [[2.0, 0.0], [1.0, 2.0]], atol=1e-15)


def test_cholesky_indefinite_raises():
    with pytest.raises(NotPositiveDefinite):
        dense_cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_cholesky_tiny_pivot_raises():
    with pytest.raises(NotPositiveDefinite):
        dense_cholesky(np.diag([1.0, 1e-13]))


@given(seeds, st.integers(1, 64))
def test_cholesky_reconstruction(seed, k):
    M = spd(np.random.default_rng(seed), k)
    L = dense_cholesky(M)
    assert np.allclose(L, np.tril(L))
    assert np.all(np.diag(L) > 0)
    assert np.linalg.norm(L @ L.T - M) <= 1e-10 * np.linalg.norm(M)


# square roots -----------------------------------------------------------------

def test_sqrt_diagonal():
    assert np.allclose(sym_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)


@pytest.mark.parametrize("k", [1, 4])
def test_sqrt_identity(k):
    assert np.allclose(sym_sqrt(np.eye(k)), np.eye(k), atol=1e-14)


def test_sqrt_random_spd():
    M = spd(np.random.default_rng(3), 3)
    S = sym_sqrt(M)
    assert np.linalg.norm(S @ S - M) <= 1e-9 * (1 + np.linalg.norm(M))


def test_sqrt_rejects_indefinite():
    with pytest.raises(NotPSD):
        sym_sqrt(np.diag([1.0, -0.1]))


def test_sqrt_clamps_roundoff():
    S = sym_sqrt(np.diag([1.0, -1e-12]))
    assert np.allclose(S, np.diag([1.0, 0.0]))


@given(seeds, st.integers(1, 12))
def test_sqrt_commutes_and_is_psd(seed, k):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(k, k - 1 if k > 1 else 1))
    M = B @ B.T
    S = sym_sqrt(M)
    assert np.allclose(S, S.T)
    assert np.min(np.linalg.eigvalsh(S)) >= -1e-10
    assert np.linalg.norm(S @ M - M @ S) <= 1e-8 * max(np.linalg.norm(M), 1e-300)


@given(seeds, st.integers(1, 10))
def test_inverse_sqrt(seed, k):
    M = spd(np.random.default_rng(seed), k)
    R = sym_inv_sqrt(M)
    assert np.allclose(R @ M @ R, np.eye(k), atol=1e-9)


def test_inverse_sqrt_singular():
    with pytest.raises(SingularHessian):
        sym_inv_sqrt(np.diag([1.0, 0.0]))


# local norms ------------------------------------------------------------------

def test_local_norm_examples():
    v = np.array([3.0, -4.0])
    assert local_norm(v, np.eye(2)) == pytest.approx(5.0)
    assert local_norm(np.zeros(2), np.eye(2)) == 0.0
    assert local_norm(np.array([1.0, 0.0]), np.diag([4.0, 1.0])) == pytest.approx(2.0)
    assert local_norm(np.array([1.0, 0.0]), np.diag([4.0, 1.0]), dual=True) == pytest.approx(0.5)


def test_local_norm_dual_singular():
    with pytest.raises(SingularHessian):
        local_norm(np.ones(2), np.diag([1.0, 0.0]), dual=True)


@given(seeds, st.integers(1, 8))
def test_local_norm_cauchy_schwarz(seed, k):
    rng = np.random.default_rng(seed)
    H = spd(rng, k, 0.1)
    v, w = rng.normal(size=k), rng.normal(size=k)
    assert local_norm(v, H) * local_norm(w, H, dual=True) >= abs(v @ w) * (1 - 1e-12)


# QR ---------------------------------------------------------------------------

def test_qr_upper_triangular_input():
    # R is upper triangular here, so an already upper-triangular input is a fixed point
    U = np.array([[2.0, 1.0, -1.0], [0.0, 3.0, 0.5], [0.0, 0.0, 1.5]])
    Q, R = qr_positive(U)
    assert np.allclose(Q, np.eye(3), atol=1e-14)
    assert np.allclose(R, U, atol=1e-14)


def test_qr_orthogonal_input():
    Q0, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(4, 4)))
    Q, R = qr_positive(Q0)
    D = np.diag(np.diag(R))
    assert np.allclose(np.abs(D), np.eye(4), atol=1e-12)
    assert np.allclose(R, np.eye(4), atol=1e-12)
    assert np.allclose(Q @ R, Q0, atol=1e-12)


@given(seeds, st.integers(1, 10))
def test_qr_reconstruction(seed, k):
    M = np.random.default_rng(seed).normal(size=(k, k)) + 3 * np.eye(k)
    Q, R = qr_positive(M)
    assert np.allclose(Q @ R, M, atol=1e-10)
    assert np.allclose(Q.T @ Q, np.eye(k), atol=1e-10)
    assert np.all(np.diag(R) > 0)
    assert np.allclose(R, np.triu(R))


def test_qr_square_root_gives_cholesky():
    A = spd(np.random.default_rng(5), 5)
    _, R = qr_positive(sym_sqrt(A))
    assert np.allclose(R.T, np.linalg.cholesky(A), atol=1e-10)


def test_qr_rank_deficient():
    with pytest.raises(RankDeficient):
        qr_positive(np.array([[1.0, 2.0], [2.0, 4.0]]))


# symmetric vectorisation ------------------------------------------------------

@given(seeds, st.integers(1, 7))
def test_svec_roundtrip_and_isometry(seed, k):
    rng = np.random.default_rng(seed)
    X, Y = rng.normal(size=(k, k)), rng.normal(size=(k, k))
    X, Y = X + X.T, Y + Y.T
    assert svec(X).shape == (svec_dim(k),)
    assert np.allclose(smat(svec(X)), X)
    assert svec(X) @ svec(Y) == pytest.approx(np.sum(X * Y))


@given(seeds, st.integers(1, 6))
def test_sym_kron_matches_congruence(seed, k):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(k, k))
    P = P + P.T
    Y = rng.normal(size=(k, k))
    Y = Y + Y.T
    assert np.allclose(sym_kron(P) @ svec(Y), svec(P @ Y @ P), atol=1e-10)


# containers -------------------------------------------------------------------

def test_block_vector_signature_checks():
    v = BlockVector.from_blocks([np.ones(2), np.arange(3.0)])
    assert v.signature == (2, 3)
    assert np.array_equal(v.block(1), np.arange(3.0))
    w = v + v * 2.0
    assert w.dot(v) == pytest.approx(3 * v.dot(v))
    with pytest.raises(ValueError):
        v + BlockVector.zeros((3, 2))


def test_block_diag_rejects_asymmetric():
    with pytest.raises(ValueError):
        BlockDiagMatrix([np.array([[1.0, 2.0], [0.0, 1.0]])])
    D = BlockDiagMatrix([np.eye(2) * 2, np.ones((1, 1))])
    assert np.array_equal(D.to_dense(), np.diag([2.0, 2.0, 1.0]))


@given(seeds)
def test_sparse_block_roundtrip(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(5, 6))
    M[:2, 3:] = 0.0
    S = SparseBlockMatrix.from_dense(M, (2, 3), (3, 3))
    assert (0, 1) not in S.blocks
    assert np.array_equal(S.to_dense(), M)
    v, u = rng.normal(size=6), rng.normal(size=5)
    assert np.allclose(S.matvec(v), M @ v)
    assert np.allclose(S.rmatvec(u), M.T @ u)


def test_sparse_block_drops_zero_blocks():
    S = SparseBlockMatrix((1,), (1,), {(0, 0): np.zeros((1, 1))})
    assert S.blocks == {}
    with pytest.raises(ValueError):
        SparseBlockMatrix((1,), (2,), {(0, 0): np.ones((1, 1))})
