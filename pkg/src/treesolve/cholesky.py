"""Block Cholesky factorization aligned to a block elimination tree.

Everything here works in *block order*: scalar constraint positions are
grouped by elimination-tree label, so block ``j`` occupies
``off[j]:off[j+1]``.  ``F.perm`` maps block order back to original indices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import StructureViolation, SupportViolation
from .linalg import SparseBlockMatrix, dense_cholesky
from .treewidth import BlockElimTree


class BlockCholeskyFactor:
    """Lower factor stored column by column.

    Column ``j`` is an immutable dense array of shape ``(rows on path(j), m_j)``
    whose first ``m_j`` rows are ``L_jj``.  Updates replace whole columns, so
    older versions stay valid as long as someone holds the arrays.
    """

    def __init__(self, et: BlockElimTree):
        self.et = et
        self.m = et.m
        self.sizes = np.array(et.sizes, dtype=np.int64)
        self.off = np.zeros(self.m + 1, dtype=np.int64)
        np.cumsum(self.sizes, out=self.off[1:])
        self.n = int(self.off[-1])
        self.perm = np.concatenate(et.blocks).astype(np.int64) if self.m else np.zeros(0, np.int64)
        self.prow: List[np.ndarray] = []
        self.coff: List[Dict[int, int]] = []
        for j in range(self.m):
            rows, offs, acc = [], {}, 0
            for a in et.path(j):
                offs[a] = acc
                acc += int(self.sizes[a])
                rows.append(np.arange(self.off[a], self.off[a + 1]))
            self.prow.append(np.concatenate(rows) if rows else np.zeros(0, np.int64))
            self.coff.append(offs)
        self.cols: List[np.ndarray] = [np.zeros((len(self.prow[j]), int(self.sizes[j]))) for j in range(self.m)]
        self.dinv: List[np.ndarray] = [np.zeros((int(s), int(s))) for s in self.sizes]
        self.version = 0
        self.log: List[Dict[int, Tuple[np.ndarray, np.ndarray]]] = []
        self.base_cols: List[np.ndarray] = []

    # -- helpers -------------------------------------------------------------

    def block_slice(self, j: int) -> slice:
        return slice(int(self.off[j]), int(self.off[j + 1]))

    def Ljj(self, j: int) -> np.ndarray:
        return self.cols[j][: self.sizes[j]]

    def block(self, i: int, j: int) -> np.ndarray:
        """Dense L_{i,j} (zero when i is not on the root path of j)."""
        o = self.coff[j].get(i)
        if o is None:
            return np.zeros((self.sizes[i], self.sizes[j]))
        return self.cols[j][o:o + self.sizes[i]]

    def to_dense(self, cols: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
        cols = self.cols if cols is None else cols
        L = np.zeros((self.n, self.n))
        for j in range(self.m):
            L[np.ix_(self.prow[j], np.arange(self.off[j], self.off[j + 1]))] = cols[j]
        return L

    def snapshot(self) -> List[np.ndarray]:
        return list(self.cols)

    def columns_at(self, version: int) -> List[np.ndarray]:
        """Replay the delta log from version 0."""
        if not 0 <= version <= self.version:
            raise ValueError("unknown version")
        cols = list(self.base_cols)
        for delta in self.log[:version]:
            for j, (_, new) in delta.items():
                cols[j] = new
        return cols

    def _finalize(self, j: int, S: np.ndarray) -> np.ndarray:
        mj = int(self.sizes[j])
        if mj == 0:
            self.dinv[j] = np.zeros((0, 0))
            return np.zeros((S.shape[0], 0))
        Ljj = dense_cholesky(0.5 * (S[:mj] + S[:mj].T))
        inv = sla.solve_triangular(Ljj, np.eye(mj), lower=True, check_finite=False)
        self.dinv[j] = inv
        col = np.empty_like(S)
        col[:mj] = Ljj
        if S.shape[0] > mj:
            col[mj:] = S[mj:] @ inv.T
        col.setflags(write=False)
        return col


def _as_block_dense(M, F: BlockCholeskyFactor) -> Union[np.ndarray, sp.csr_matrix]:
    if isinstance(M, SparseBlockMatrix):
        if M.row_sig != tuple(int(s) for s in F.sizes) or M.col_sig != M.row_sig:
            raise ValueError("matrix signature does not match the elimination tree")
        for (i, j) in M.blocks:
            lo, hi = min(i, j), max(i, j)
            if not F.et.is_ancestor(hi, lo):
                raise StructureViolation(f"block ({i},{j}) lies off every root path")
        return M.to_dense()
    if sp.issparse(M):
        return sp.csr_matrix(M)
    return np.asarray(M, dtype=float)


def _check_structure(M: sp.csr_matrix, F: BlockCholeskyFactor) -> None:
    coo = M.tocoo()
    blk = np.repeat(np.arange(F.m), F.sizes)
    bi, bj = blk[coo.row], blk[coo.col]
    mask = (bi != bj) & (coo.data != 0)
    pairs = set(zip(np.minimum(bi[mask], bj[mask]).tolist(), np.maximum(bi[mask], bj[mask]).tolist()))
    for lo, hi in pairs:
        if not F.et.is_ancestor(hi, lo):
            raise StructureViolation(f"block ({hi},{lo}) lies off every root path")


def _gather_columns(M: sp.spmatrix, F: BlockCholeskyFactor) -> List[np.ndarray]:
    """Scatter a sparse block-order matrix into the per-column path arrays in one pass."""
    coo = sp.coo_matrix(M)
    blk = np.repeat(np.arange(F.m), F.sizes)
    bj, br = blk[coo.col], blk[coo.row]
    code = bj.astype(np.int64) * max(F.m, 1) + br
    uniq, inv = np.unique(code, return_inverse=True)
    offs = np.zeros(len(uniq), dtype=np.int64)
    keep_pair = np.ones(len(uniq), dtype=bool)
    for k, cde in enumerate(uniq.tolist()):
        j, a = divmod(cde, max(F.m, 1))
        o = F.coff[j].get(a)
        if o is None:
            if j not in F.coff[a]:
                raise StructureViolation(f"block ({max(a, j)},{min(a, j)}) lies off every root path")
            keep_pair[k] = False
        else:
            offs[k] = o
    keep = keep_pair[inv] & (coo.data != 0)
    heights = np.array([len(r) for r in F.prow], dtype=np.int64)
    base = np.zeros(F.m + 1, dtype=np.int64)
    np.cumsum(heights * F.sizes, out=base[1:])
    bj_k, br_k = bj[keep], br[keep]
    rowpos = offs[inv[keep]] + coo.row[keep] - F.off[br_k]
    idx = base[bj_k] + rowpos * F.sizes[bj_k] + (coo.col[keep] - F.off[bj_k])
    buf = np.bincount(idx, weights=coo.data[keep], minlength=int(base[-1]))
    return [buf[base[j]:base[j + 1]].reshape(int(heights[j]), int(F.sizes[j])) for j in range(F.m)]


def block_cholesky(M, et: BlockElimTree) -> BlockCholeskyFactor:
    """Factor M (block order) column by column, right-looking along root paths."""
    F = BlockCholeskyFactor(et)
    Md = _as_block_dense(M, F)
    if sp.issparse(Md):
        pend = _gather_columns(Md, F)
    else:
        if not isinstance(M, SparseBlockMatrix):
            _check_structure(sp.csr_matrix(Md), F)
        pend = [Md[np.ix_(F.prow[j], np.arange(F.off[j], F.off[j + 1]))].copy() for j in range(F.m)]
    for j in range(F.m):
        col = F._finalize(j, pend[j])
        F.cols[j] = col
        mj = int(F.sizes[j])
        if mj == 0:
            continue
        for a in et.path(j)[1:]:
            o = F.coff[j][a]
            ma = int(F.sizes[a])
            if ma:
                pend[a] -= col[o:] @ col[o:o + ma].T
        pend[j] = None  # type: ignore[call-overload]
    F.base_cols = list(F.cols)
    return F


def _delta_on_path(F: BlockCholeskyFactor, dM, v: int) -> np.ndarray:
    rows = F.prow[v]
    if isinstance(dM, Mapping):
        D = np.zeros((len(rows), len(rows)))
        for (a, b), B in dM.items():
            if a not in F.coff[v] or b not in F.coff[v]:
                raise StructureViolation(f"update block ({a},{b}) is off the root path of {v}")
            oa, ob = F.coff[v][a], F.coff[v][b]
            D[oa:oa + F.sizes[a], ob:ob + F.sizes[b]] += B
            if a != b:
                D[ob:ob + F.sizes[b], oa:oa + F.sizes[a]] += np.asarray(B).T
        return D
    D = np.asarray(dM, dtype=float)
    if D.shape != (len(rows), len(rows)):
        raise ValueError("dense update must be given over the root-path rows of v")
    return D


def block_cholesky_update(F: BlockCholeskyFactor, dM, v: int) -> Dict[int, Tuple[np.ndarray, np.ndarray]]:
    """Refactor the columns on the root path of ``v`` after M += dM.

    ``dM`` is either a dense matrix over ``F.prow[v]`` or a mapping
    ``(a, b) -> block`` with ``a, b`` on the root path of ``v`` (give each
    off-diagonal pair once).  Returns ``{j: (old, new)}``.
    """
    D = _delta_on_path(F, dM, v)
    delta: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
    if np.any(D != 0):
        path = F.et.path(v)
        ov = F.coff[v]
        for idx, j in enumerate(path):
            mj = int(F.sizes[j])
            old = F.cols[j]
            X = old @ old[:mj].T
            o = ov[j]
            X = X + D[o:, o:o + mj]
            for k in path[:idx]:
                ok = F.coff[k][j]
                nk, pk = delta[k][1], delta[k][0]
                X -= nk[ok:] @ nk[ok:ok + mj].T - pk[ok:] @ pk[ok:ok + mj].T
            new = F._finalize(j, X)
            delta[j] = (old, new)
            F.cols[j] = new
    F.version += 1
    F.log.append(delta)
    return delta


def rank_update_blocks(F: BlockCholeskyFactor, A_rows_block: np.ndarray, D: np.ndarray, v: int) -> np.ndarray:
    """Dense dM = A D A^T over the root-path rows of v (A given on those rows)."""
    return A_rows_block @ D @ A_rows_block.T


# ---------------------------------------------------------------------------
# solves
# ---------------------------------------------------------------------------


def solve_lower(F: BlockCholeskyFactor, v: np.ndarray, cols: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
    cols = F.cols if cols is None else cols
    x = np.array(v, dtype=float, copy=True)
    for j in range(F.m):
        mj = int(F.sizes[j])
        if mj == 0:
            continue
        sl = F.block_slice(j)
        xj = F.dinv[j] @ x[sl] if cols is F.cols else sla.solve_triangular(cols[j][:mj], x[sl], lower=True)
        x[sl] = xj
        if len(F.prow[j]) > mj:
            x[F.prow[j][mj:]] -= cols[j][mj:] @ xj
    return x


def solve_upper(F: BlockCholeskyFactor, v: np.ndarray, cols: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
    cols = F.cols if cols is None else cols
    x = np.array(v, dtype=float, copy=True)
    for j in range(F.m - 1, -1, -1):
        mj = int(F.sizes[j])
        if mj == 0:
            continue
        sl = F.block_slice(j)
        y = x[sl]
        if len(F.prow[j]) > mj:
            y = y - cols[j][mj:].T @ x[F.prow[j][mj:]]
        if cols is F.cols:
            x[sl] = F.dinv[j].T @ y
        else:
            x[sl] = sla.solve_triangular(cols[j][:mj], y, lower=True, trans="T")
    return x


def support_blocks(F: BlockCholeskyFactor, v: np.ndarray, tol: float = 0.0) -> List[int]:
    mag = np.abs(v) if v.ndim == 1 else np.abs(v).max(axis=1)
    out = []
    for j in range(F.m):
        sl = F.block_slice(j)
        if sl.stop > sl.start and mag[sl].max() > tol:
            out.append(j)
    return out


def path_of_support(F: BlockCholeskyFactor, blocks: Iterable[int]) -> List[int]:
    blocks = list(blocks)
    if not blocks:
        return []
    deepest = min(blocks)
    path = F.et.path(deepest)
    ps = set(path)
    for b in blocks:
        if b not in ps:
            raise SupportViolation(f"support block {b} is off the root path of block {deepest}")
    return path


def path_solve(F: BlockCholeskyFactor, v: np.ndarray, anchor: Optional[int] = None) -> np.ndarray:
    """L^{-1} v for v supported on one root path; only path blocks are touched."""
    if anchor is None:
        path = path_of_support(F, support_blocks(F, v))
    else:
        path = F.et.path(anchor)
        bad = set(support_blocks(F, v)) - set(path)
        if bad:
            raise SupportViolation(f"vector has mass on blocks {sorted(bad)} off the path")
    x = np.array(v, dtype=float, copy=True)
    if not path:
        return x
    rows = F.prow[path[0]]
    local = x[rows]
    forward_on_path(F, path[0], local)
    x[rows] = local
    return x


def forward_on_path(F: BlockCholeskyFactor, anchor: int, R: np.ndarray,
                    cols: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
    """In-place L^{-1} on a local array laid out over F.prow[anchor]."""
    cols = F.cols if cols is None else cols
    path = F.et.path(anchor)
    oa = F.coff[anchor]
    for j in path:
        mj = int(F.sizes[j])
        if mj == 0:
            continue
        o = oa[j]
        if cols is F.cols:
            xj = F.dinv[j] @ R[o:o + mj]
        else:
            xj = sla.solve_triangular(cols[j][:mj], R[o:o + mj], lower=True, check_finite=False)
        R[o:o + mj] = xj
        if o + mj < R.shape[0]:
            R[o + mj:] -= cols[j][mj:] @ xj
    return R


def restricted_upper_solve(F: BlockCholeskyFactor, v: np.ndarray, S: Sequence[int]) -> np.ndarray:
    """(L^{-T} v) on the blocks of a root path S, using only v_S and L_{S,S}."""
    S = sorted(S)
    if not S:
        return np.zeros_like(v, dtype=float)
    path = F.et.path(S[0])
    if path != S:
        raise SupportViolation("S must be a root path")
    rows = F.prow[S[0]]
    local = np.array(v[rows], dtype=float)
    backward_on_path(F, S[0], local)
    out = np.zeros_like(v, dtype=float)
    out[rows] = local
    return out


def backward_on_path(F: BlockCholeskyFactor, anchor: int, R: np.ndarray,
                     cols: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
    """In-place L^{-T} restricted to the root path of ``anchor`` (local layout)."""
    cols = F.cols if cols is None else cols
    path = F.et.path(anchor)
    oa = F.coff[anchor]
    for j in reversed(path):
        mj = int(F.sizes[j])
        if mj == 0:
            continue
        o = oa[j]
        y = R[o:o + mj]
        if o + mj < R.shape[0]:
            y = y - cols[j][mj:].T @ R[o + mj:]
        if cols is F.cols:
            R[o:o + mj] = F.dinv[j].T @ y
        else:
            R[o:o + mj] = sla.solve_triangular(cols[j][:mj], y, lower=True, trans="T", check_finite=False)
    return R


class LazyUpperSolve:
    """Memoised blocks of u = L^{-T} y, computed root-down on demand."""

    def __init__(self, F: BlockCholeskyFactor, y: np.ndarray, cols: Optional[Sequence[np.ndarray]] = None):
        self.F = F
        self.y = y
        self.cols = F.cols if cols is None else cols
        self.exact_dinv = cols is None
        self.u: Dict[int, np.ndarray] = {}

    def block(self, j: int) -> np.ndarray:
        got = self.u.get(j)
        if got is not None:
            return got
        F = self.F
        path = F.et.path(j)
        k = len(path)
        while k > 0 and path[k - 1] in self.u:
            k -= 1
        # path[k:] already known; fill path[k-1], ..., path[0]
        for idx in range(k - 1, -1, -1):
            b = path[idx]
            mb = int(F.sizes[b])
            yb = self.y[F.block_slice(b)]
            if mb and idx + 1 < len(path):
                anc = np.concatenate([self.u[a] for a in path[idx + 1:]])
                yb = yb - self.cols[b][mb:].T @ anc
            if mb == 0:
                self.u[b] = yb[:0]
            elif self.exact_dinv:
                self.u[b] = F.dinv[b].T @ yb
            else:
                self.u[b] = sla.solve_triangular(self.cols[b][:mb], yb, lower=True, trans="T", check_finite=False)
        return self.u[j]

    def on_path(self, j: int) -> np.ndarray:
        self.block(j)
        return np.concatenate([self.u[a] for a in self.F.et.path(j)])


# ---------------------------------------------------------------------------
# W^T products, inverse, batched path solves
# ---------------------------------------------------------------------------


def apply_Wt(F: BlockCholeskyFactor, H_inv_half: Sequence[np.ndarray], A, v: np.ndarray) -> np.ndarray:
    """H^{-1/2} A^T L^{-T} v with A given in block-ordered rows."""
    u = solve_upper(F, v)
    g = np.asarray(A.T @ u).ravel()
    out = np.empty_like(g)
    o = 0
    for B in H_inv_half:
        d = B.shape[0]
        out[o:o + d] = B @ g[o:o + d]
        o += d
    return out


def apply_Wt_block(F: BlockCholeskyFactor, H_inv_half_i: np.ndarray, A, v: np.ndarray, i: int,
                   col_off: Sequence[int], anchor: int) -> np.ndarray:
    """Block i of H^{-1/2} A^T L^{-T} v using only the root path of ``anchor``."""
    rows = F.prow[anchor]
    local = np.array(v[rows], dtype=float)
    backward_on_path(F, anchor, local)
    Ai = sp.csc_matrix(A)[:, col_off[i]:col_off[i + 1]][rows]
    return H_inv_half_i @ np.asarray(Ai.T @ local).ravel()


def factor_inverse(F: BlockCholeskyFactor) -> SparseBlockMatrix:
    """Explicit L^{-1}, eliminated row block by row block."""
    sig = tuple(int(s) for s in F.sizes)
    V: Dict[Tuple[int, int], np.ndarray] = {(j, j): np.eye(sig[j]) for j in range(F.m)}
    X: Dict[Tuple[int, int], np.ndarray] = {}
    rows_of: Dict[int, List[int]] = {j: [j] for j in range(F.m)}
    for j in range(F.m):
        Xj = {}
        for k in rows_of[j]:
            B = V.pop((j, k), None)
            if B is None:
                continue
            Xj[k] = F.dinv[j] @ B
            X[(j, k)] = Xj[k]
        for a in F.et.path(j)[1:]:
            Laj = F.block(a, j)
            if not np.any(Laj):
                continue
            for k, B in Xj.items():
                key = (a, k)
                V[key] = V.get(key, np.zeros((sig[a], sig[k]))) - Laj @ B
                if k not in rows_of[a]:
                    rows_of[a].append(k)
    return SparseBlockMatrix(sig, sig, X)


def batch_path_solve(F: BlockCholeskyFactor, columns: Sequence[Tuple[np.ndarray, int]]) -> List[np.ndarray]:
    """L^{-1} v_i for columns v_i each supported on block ``b_i``; grouped by block."""
    out: List[Optional[np.ndarray]] = [None] * len(columns)
    groups: Dict[int, List[int]] = {}
    for idx, (vec, b) in enumerate(columns):
        sl = F.block_slice(b)
        mass = np.concatenate([vec[: sl.start], vec[sl.stop:]])
        if np.any(mass != 0):
            raise SupportViolation(f"column {idx} has mass outside block {b}")
        groups.setdefault(b, []).append(idx)
    for b, idxs in groups.items():
        rows = F.prow[b]
        R = np.zeros((len(rows), len(idxs)))
        mb = int(F.sizes[b])
        sl = F.block_slice(b)
        for c, idx in enumerate(idxs):
            R[:mb, c] = columns[idx][0][sl]
        forward_on_path(F, b, R)
        for c, idx in enumerate(idxs):
            x = np.zeros(F.n)
            x[rows] = R[:, c]
            out[idx] = x
    return out  # type: ignore[return-value]
