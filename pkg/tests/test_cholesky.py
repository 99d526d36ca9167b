import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from instances import ancestor_mask, block_order_rows, random_etree, random_path_update, random_tree_spd
from treesolve.errors import NotPositiveDefinite, StructureViolation, SupportViolation
from treesolve.cholesky import (LazyUpperSolve, apply_Wt, apply_Wt_block, batch_path_solve, block_cholesky,
                                block_cholesky_update, factor_inverse, path_solve, restricted_upper_solve,
                                solve_lower, solve_upper)
from treesolve.linalg import SparseBlockMatrix, dense_cholesky
from treesolve.treewidth import BlockElimTree

seeds = st.integers(0, 2**31 - 1)


def three_level():
    # 0,1 -> 2 ; 2,3 -> 4 (root)
    return BlockElimTree([2, 2, 4, 4, -1], [[0, 1], [2], [3, 4], [5], [6, 7]])


def factor_of(seed, m=6, max_size=4):
    rng = np.random.default_rng(seed)
    et = random_etree(rng, m, max_size)
    M = random_tree_spd(rng, et)
    return rng, et, M, block_cholesky(M, et)


# factorization ----------------------------------------------------------------

def test_identity():
    F = block_cholesky(np.eye(8), three_level())
    assert np.array_equal(F.to_dense(), np.eye(8))


def test_block_diagonal():
    rng = np.random.default_rng(0)
    et = BlockElimTree([-1, -1], [[0, 1], [2, 3, 4]])
    A = random_tree_spd(rng, BlockElimTree([-1], [[0, 1]]))
    B = random_tree_spd(rng, BlockElimTree([-1], [[0, 1, 2]]))
    M = sla.block_diag(A, B)
    L = block_cholesky(M, et).to_dense()
    assert np.allclose(L, sla.block_diag(dense_cholesky(A), dense_cholesky(B)), atol=1e-14)


def test_three_block_path_matches_dense():
    rng = np.random.default_rng(1)
    et = BlockElimTree([1, 2, -1], [[0, 1], [2, 3], [4]])
    M = random_tree_spd(rng, et)
    assert np.max(np.abs(block_cholesky(M, et).to_dense() - np.linalg.cholesky(M))) <= 1e-10


@given(seeds, st.integers(1, 12))
def test_matches_dense_and_confines_fill(seed, m):
    rng = np.random.default_rng(seed)
    et = random_etree(rng, m, 5)
    M = random_tree_spd(rng, et)
    F = block_cholesky(M, et)
    L = F.to_dense()
    assert np.max(np.abs(L - np.linalg.cholesky(M))) <= 1e-10 * max(1.0, np.abs(M).max())
    assert not np.any(L[~ancestor_mask(et)])
    for j in range(et.m):
        assert np.all(np.diag(F.Ljj(j)) > 0)
    assert np.linalg.norm(L @ L.T - M) <= 1e-8 * np.linalg.norm(M)


def test_accepts_sparse_and_block_inputs():
    _, et, M, F = factor_of(11)
    L = F.to_dense()
    assert np.allclose(block_cholesky(sp.csr_matrix(M), et).to_dense(), L, atol=1e-13)
    S = SparseBlockMatrix.from_dense(M, et.sizes, et.sizes)
    assert np.allclose(block_cholesky(S, et).to_dense(), L, atol=1e-13)


def test_structure_violation():
    et = BlockElimTree([2, 2, -1], [[0], [1], [2]])
    M = np.eye(3)
    M[0, 1] = M[1, 0] = 0.1
    with pytest.raises(StructureViolation):
        block_cholesky(M, et)
    with pytest.raises(StructureViolation):
        block_cholesky(sp.csr_matrix(M), et)


def test_not_positive_definite():
    et = BlockElimTree([-1], [[0, 1]])
    with pytest.raises(NotPositiveDefinite):
        block_cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]), et)


# updates ----------------------------------------------------------------------

def test_null_update_advances_version():
    _, et, M, F = factor_of(2)
    before = F.snapshot()
    delta = block_cholesky_update(F, np.zeros((len(F.prow[0]),) * 2), 0)
    assert delta == {} and F.version == 1
    assert all(a is b for a, b in zip(before, F.cols))


def test_leaf_diagonal_scaling_changes_one_column():
    et = three_level()
    rng = np.random.default_rng(3)
    M = random_tree_spd(rng, et)
    # a decoupled leaf: its Schur complement contribution to ancestors is zero
    M[2, :2] = M[:2, 2] = 0.0
    M[2, 3:] = M[3:, 2] = 0.0
    F = block_cholesky(M, et)
    before = F.snapshot()
    D = np.zeros((len(F.prow[1]),) * 2)
    D[0, 0] = 0.7  # block 1 is a leaf of size 1
    delta = block_cholesky_update(F, D, 1)
    M2 = M.copy()
    rows = F.prow[1]
    M2[np.ix_(rows, rows)] += D
    assert np.max(np.abs(F.to_dense() - np.linalg.cholesky(M2))) <= 1e-9
    changed = [j for j in range(et.m) if not np.array_equal(F.cols[j], before[j])]
    assert changed == [1]
    assert set(delta) <= set(et.path(1))


def test_root_update_on_three_levels():
    et = three_level()
    rng = np.random.default_rng(4)
    M = random_tree_spd(rng, et)
    F = block_cholesky(M, et)
    D = random_path_update(rng, et, 4)
    block_cholesky_update(F, D, 4)
    M2 = M.copy()
    rows = F.prow[4]
    M2[np.ix_(rows, rows)] += D
    assert np.max(np.abs(F.to_dense() - block_cholesky(M2, et).to_dense())) <= 1e-9


def test_update_with_block_mapping():
    et = three_level()
    rng = np.random.default_rng(5)
    M = random_tree_spd(rng, et)
    F = block_cholesky(M, et)
    B = 0.1 * rng.normal(size=(2, 2))
    block_cholesky_update(F, {(4, 0): B.T, (0, 0): 0.2 * np.eye(2)}, 0)
    M2 = M.copy()
    M2[6:8, 0:2] += B.T
    M2[0:2, 6:8] += B
    M2[0:2, 0:2] += 0.2 * np.eye(2)
    assert np.max(np.abs(F.to_dense() - np.linalg.cholesky(M2))) <= 1e-10
    with pytest.raises(StructureViolation):
        block_cholesky_update(F, {(3, 0): np.ones((1, 2))}, 0)


@given(seeds, st.integers(2, 12), st.integers(1, 20))
def test_update_sequence_matches_refactor(seed, m, steps):
    rng = np.random.default_rng(seed)
    et = random_etree(rng, m, 4)
    M = random_tree_spd(rng, et)
    F = block_cholesky(M, et)
    for _ in range(steps):
        v = int(rng.integers(m))
        D = random_path_update(rng, et, v, 0.4 / steps)
        before = F.snapshot()
        block_cholesky_update(F, D, v)
        rows = F.prow[v]
        M[np.ix_(rows, rows)] += D
        fresh = block_cholesky(M, et).to_dense()
        assert np.linalg.norm(F.to_dense() - fresh) <= 1e-8 * np.linalg.norm(fresh)
        path = set(et.path(v))
        for j in range(m):
            if j not in path:
                assert F.cols[j] is before[j]


def test_history_replay():
    rng, et, M, F = factor_of(6)
    versions = [F.snapshot()]
    for _ in range(5):
        v = int(rng.integers(et.m))
        block_cholesky_update(F, random_path_update(rng, et, v, 0.05), v)
        versions.append(F.snapshot())
    for t, cols in enumerate(versions):
        replay = F.columns_at(t)
        assert all(np.array_equal(a, b) for a, b in zip(replay, cols))


# solves -----------------------------------------------------------------------

def test_solves_identity_and_zero():
    F = block_cholesky(np.eye(8), three_level())
    v = np.arange(8.0)
    assert np.array_equal(solve_lower(F, v), v)
    assert np.array_equal(solve_upper(F, np.zeros(8)), np.zeros(8))


@given(seeds)
def test_solves_match_dense(seed):
    rng, et, M, F = factor_of(seed)
    L = F.to_dense()
    v = rng.normal(size=F.n)
    x = solve_lower(F, v)
    assert np.linalg.norm(L @ x - v) <= 1e-9 * (1 + np.linalg.norm(v))
    y = solve_upper(F, v)
    assert np.allclose(y, sla.solve_triangular(L, v, lower=True, trans="T"), atol=1e-9)
    # with explicit column lists (historical versions)
    assert np.allclose(solve_lower(F, v, cols=F.snapshot()), x, atol=1e-12)
    assert np.allclose(solve_upper(F, v, cols=F.snapshot()), y, atol=1e-12)


def test_path_solve_root_and_leaf():
    et = three_level()
    rng = np.random.default_rng(7)
    M = random_tree_spd(rng, et)
    F = block_cholesky(M, et)
    e = np.zeros(8)
    e[6] = 1.0
    assert np.allclose(path_solve(F, e), solve_lower(F, e))
    e = np.zeros(8)
    e[2] = 1.0  # leaf block 1
    x = path_solve(F, e)
    assert np.allclose(x, solve_lower(F, e))
    off_path = np.ones(8, bool)
    off_path[block_order_rows(et, 1)] = False
    assert not np.any(x[off_path])


def test_path_solve_multi_path_rejected():
    F = block_cholesky(np.eye(8), three_level())
    v = np.zeros(8)
    v[0] = v[2] = 1.0
    with pytest.raises(SupportViolation):
        path_solve(F, v)
    with pytest.raises(SupportViolation):
        path_solve(F, v, anchor=0)


@given(seeds)
def test_restricted_upper_solve(seed):
    rng, et, M, F = factor_of(seed)
    v = rng.normal(size=F.n)
    leaf = int(rng.integers(et.m))
    S = et.path(leaf)
    rows = block_order_rows(et, leaf)
    got = restricted_upper_solve(F, v, S)
    full = solve_upper(F, v)
    assert np.allclose(got[rows], full[rows], atol=1e-10)
    # depends only on v_S
    w = rng.normal(size=F.n)
    w[rows] = v[rows]
    assert np.allclose(restricted_upper_solve(F, w, S)[rows], got[rows], atol=1e-12)
    lazy = LazyUpperSolve(F, v)
    assert np.allclose(lazy.on_path(leaf), full[rows], atol=1e-10)


def test_restricted_upper_solve_root_and_full_path():
    et = BlockElimTree([1, 2, -1], [[0], [1, 2], [3]])
    M = random_tree_spd(np.random.default_rng(8), et)
    F = block_cholesky(M, et)
    v = np.arange(1.0, 5.0)
    assert np.allclose(restricted_upper_solve(F, v, [2])[3], v[3] / F.Ljj(2)[0, 0])
    assert np.allclose(restricted_upper_solve(F, v, [0, 1, 2]), solve_upper(F, v))
    with pytest.raises(SupportViolation):
        restricted_upper_solve(F, v, [0, 2])


# W^T products -----------------------------------------------------------------

def test_apply_wt_identities():
    et = BlockElimTree([1, -1], [[0], [1]])
    F = block_cholesky(np.eye(2), et)
    v = np.array([2.0, -3.0])
    assert np.allclose(apply_Wt(F, [np.eye(1), np.eye(1)], np.eye(2), v), v)
    assert np.array_equal(apply_Wt(F, [np.eye(1), np.eye(1)], np.eye(2), np.zeros(2)), np.zeros(2))


@given(seeds)
def test_apply_wt_block_matches_full(seed):
    rng = np.random.default_rng(seed)
    et = random_etree(rng, 6, 3)
    n_cons = sum(et.sizes)
    col_sig = [2] * 5
    A = np.zeros((n_cons, 10))
    anchors = []
    for i in range(5):
        a = int(rng.integers(et.m))
        anchors.append(a)
        A[block_order_rows(et, a), 2 * i:2 * i + 2] = rng.normal(size=(len(block_order_rows(et, a)), 2))
    Hs = []
    for _ in range(5):
        B = rng.normal(size=(2, 2))
        Hs.append(B @ B.T + np.eye(2))
    M = random_tree_spd(rng, et)
    F = block_cholesky(M, et)
    v = rng.normal(size=n_cons)
    full = apply_Wt(F, Hs, sp.csr_matrix(A), v)
    L = F.to_dense()
    dense = sla.block_diag(*Hs) @ A.T @ np.linalg.solve(L.T, v)
    assert np.allclose(full, dense, atol=1e-9)
    off = [0, 2, 4, 6, 8, 10]
    for i in range(5):
        blk = apply_Wt_block(F, Hs[i], sp.csr_matrix(A), v, i, off, anchors[i])
        assert np.allclose(blk, full[2 * i:2 * i + 2], atol=1e-10)


# inverse and batched solves ---------------------------------------------------

def test_factor_inverse_identity_and_block_diagonal():
    et = BlockElimTree([-1, -1], [[0, 1], [2]])
    M = np.array([[4.0, 2.0, 0.0], [2.0, 5.0, 0.0], [0.0, 0.0, 9.0]])
    Linv = factor_inverse(block_cholesky(M, et)).to_dense()
    assert np.allclose(Linv, np.linalg.inv(np.linalg.cholesky(M)))
    assert np.allclose(factor_inverse(block_cholesky(np.eye(3), et)).to_dense(), np.eye(3))


@given(seeds)
def test_factor_inverse_random(seed):
    rng, et, M, F = factor_of(seed)
    Linv = factor_inverse(F).to_dense()
    L = F.to_dense()
    assert np.allclose(L @ Linv, np.eye(F.n), atol=1e-9)
    assert not np.any(Linv[~ancestor_mask(et)])


def test_batch_path_solve():
    rng, et, M, F = factor_of(9)
    cols = []
    for _ in range(7):
        b = int(rng.integers(et.m))
        v = np.zeros(F.n)
        sl = F.block_slice(b)
        v[sl] = rng.normal(size=sl.stop - sl.start)
        cols.append((v, b))
    for (v, _), x in zip(cols, batch_path_solve(F, cols)):
        assert np.allclose(x, solve_lower(F, v), atol=1e-11)
    zero = batch_path_solve(F, [(np.zeros(F.n), 0)])[0]
    assert not np.any(zero)
    bad = np.ones(F.n)
    with pytest.raises(SupportViolation):
        batch_path_solve(F, [(bad, 0)])


def test_batch_path_solve_standard_basis():
    et = BlockElimTree([2, 2, -1], [[0], [1], [2]])
    F = block_cholesky(np.eye(3), et)
    out = batch_path_solve(F, [(np.eye(3)[i], i) for i in range(3)])
    assert np.allclose(np.array(out), np.eye(3))
