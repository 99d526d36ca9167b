"""Exact implicit representation of the primal-dual iterate.

    x = x_hat + H^{-1/2} beta_x c_x - H^{-1} A^T L^{-T} (beta_x h + eps_x)
    s = s_hat + A^T L^{-T} (beta_s h + eps_s)

with H the weighted Hessian at x_bar, L L^T = A H^{-1} A^T (rows in
elimination order), c_x = H^{-1/2} dbar and h = L^{-1} A H^{-1} dbar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
import scipy.sparse as sp

from ..cholesky import (BlockCholeskyFactor, LazyUpperSolve, block_cholesky, block_cholesky_update,
                        solve_lower, solve_upper)
from ..errors import UnsupportedSparsity
from ..sketch import SketchContext
from ..treewidth import (TreeDecomposition, build_block_elim_tree, build_partition_tree, heavy_light_order,
                         merge_blocks, min_degree_decomposition, validate_decomposition)
from .barriers import LocalMetric, block_metric, step_coefficients
from .params import CenteringParams
from .program import GeneralProgram


def constraint_graph_edges(P: GeneralProgram) -> List[Tuple[int, int]]:
    """Rows are adjacent when some variable block touches both."""
    Ac = sp.csc_matrix(P.A)
    edges: Set[Tuple[int, int]] = set()
    for i in range(P.n):
        lo, hi = int(P.col_off[i]), int(P.col_off[i + 1])
        rows = np.unique(Ac.indices[Ac.indptr[lo]:Ac.indptr[hi]])
        for a, b in combinations(rows.tolist(), 2):
            edges.add((a, b))
    return sorted(edges)


class FastStructure:
    """Elimination tree, partition tree and per-block column data of one program."""

    def __init__(self, P: GeneralProgram, merge_tau: int = 0):
        self.P = P
        td = P.row_td
        edges = None
        if td is not None:
            edges = constraint_graph_edges(P)
            if not validate_decomposition(edges, td, P.m_lp):
                td = None
        if td is None:
            edges = constraint_graph_edges(P) if edges is None else edges
            td = min_degree_decomposition(P.m_lp, edges)
        self.row_td: TreeDecomposition = td
        et = build_block_elim_tree(td)
        if merge_tau > 1:
            et = merge_blocks(et, merge_tau)
        self.et = et
        self.F0 = BlockCholeskyFactor(et)
        perm = self.F0.perm
        if len(perm) != P.m_lp:
            raise UnsupportedSparsity("row decomposition does not cover every constraint")
        self.perm = perm
        self.A_blk = sp.csr_matrix(P.A[perm])
        self.A_blk_T = sp.csr_matrix(self.A_blk.T)
        self.hl = heavy_light_order(et)
        self.pt = build_partition_tree(P.A, et, self.hl, P.col_sig)
        self.low = self.pt.low
        self.ctx = SketchContext(self.F0, self.pt, self.A_blk, P.col_sig)
        self.A_path = self.ctx.A_path
        self.prow = [self.F0.prow[self.low[i]] for i in range(P.n)]


@dataclass
class UpdateDeltas:
    """Everything the sketches need after one ExactDS update."""

    changed_H: Dict[int, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    old_cols: Dict[int, np.ndarray] = field(default_factory=dict)
    d_h: Optional[np.ndarray] = None
    d_eps_x: Optional[np.ndarray] = None
    d_eps_s: Optional[np.ndarray] = None
    d_Hx_hat: Dict[int, np.ndarray] = field(default_factory=dict)
    d_Hs_hat: Dict[int, np.ndarray] = field(default_factory=dict)
    d_cx: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return not (self.changed_H or self.d_cx or self.d_Hx_hat or self.d_Hs_hat)


class ExactDS:
    def __init__(self, S: FastStructure, params: CenteringParams):
        self.S = S
        self.P = S.P
        self.params = params
        self.F: Optional[BlockCholeskyFactor] = None
        self._lazy: Dict[str, LazyUpperSolve] = {}

    # -- setup -------------------------------------------------------------------

    def _block_state(self, i: int, xb: np.ndarray, sb: np.ndarray,
                     metric: Optional[LocalMetric] = None, grad: Optional[np.ndarray] = None):
        P = self.P
        if metric is None:
            grad, metric = block_metric(P.barriers[i], xb, float(P.weights[i]))
        mu = sb / self.t_bar + grad
        gamma = math.sqrt(max(float(P.weights[i]) * float(mu @ metric.inv @ mu), 0.0))
        return grad, metric, mu, gamma

    def initialize(self, x: np.ndarray, s: np.ndarray, x_bar: np.ndarray, s_bar: np.ndarray, t_bar: float) -> None:
        P, S, prm = self.P, self.S, self.params
        n = P.n
        self.t_bar = float(t_bar)
        self.x_bar = [x_bar[P.sl(i)].copy() for i in range(n)]
        self.s_bar = [s_bar[P.sl(i)].copy() for i in range(n)]
        self.grad: List[np.ndarray] = [None] * n  # type: ignore[list-item]
        self.metric: List[LocalMetric] = [None] * n  # type: ignore[list-item]
        self.mu: List[np.ndarray] = [None] * n  # type: ignore[list-item]
        self.gamma = np.zeros(n)
        for i in range(n):
            self.grad[i], self.metric[i], self.mu[i], self.gamma[i] = self._block_state(i, self.x_bar[i], self.s_bar[i])
        coef, c2 = step_coefficients(self.gamma, prm.lam, P.weights, prm.alpha)
        self.c2 = c2
        self.dbar = [coef[i] * self.mu[i] for i in range(n)]
        self.x_hat = np.array(x, dtype=float)
        self.s_hat = np.array(s, dtype=float)
        self.c_x = np.concatenate([self.metric[i].inv_half @ self.dbar[i] for i in range(n)]) if n else np.zeros(0)
        Hinv = sp.block_diag([m.inv for m in self.metric], format="csr")
        M = (S.A_blk @ Hinv @ S.A_blk_T).tocsr()
        self.F = block_cholesky(M, S.et)
        gvec = S.A_blk @ np.concatenate([self.metric[i].inv @ self.dbar[i] for i in range(n)])
        self.g = np.asarray(gvec).ravel()
        self.h = solve_lower(self.F, self.g)
        m = P.m_lp
        self.eps_x = np.zeros(m)
        self.eps_s = np.zeros(m)
        self.beta_x = 0.0
        self.beta_s = 0.0
        self._lazy = {}
        self.last_step_norm = 0.0

    @property
    def alpha_bar(self) -> float:
        return float(np.sum(self.c2))

    # -- move / output -----------------------------------------------------------

    def step_norm_sq_per_unit(self) -> float:
        """||delta_x||^2 in the x_bar metric for a unit beta increment, times alpha_bar."""
        return max(float(self.c_x @ self.c_x) - float(self.h @ self.h), 0.0)

    def move(self) -> Tuple[float, float]:
        ab = self.alpha_bar
        inc = 1.0 / math.sqrt(ab)
        self.beta_x += inc
        self.beta_s += self.t_bar * inc
        self.last_step_norm = math.sqrt(self.step_norm_sq_per_unit() / ab)
        self._lazy = {}
        return self.beta_x, self.beta_s

    def _vx(self) -> np.ndarray:
        return self.beta_x * self.h + self.eps_x

    def _vs(self) -> np.ndarray:
        return self.beta_s * self.h + self.eps_s

    def output(self) -> Tuple[np.ndarray, np.ndarray]:
        P, S = self.P, self.S
        ux = solve_upper(self.F, self._vx())
        us = solve_upper(self.F, self._vs())
        Atux = S.A_blk_T @ ux
        x = self.x_hat.copy()
        for i in range(P.n):
            sl = P.sl(i)
            met = self.metric[i]
            x[sl] += met.inv @ (self.beta_x * self.dbar[i] - Atux[sl])
        s = self.s_hat + S.A_blk_T @ us
        return x, s

    def _lazy_for(self, key: str) -> LazyUpperSolve:
        lz = self._lazy.get(key)
        if lz is None:
            lz = LazyUpperSolve(self.F, self._vx() if key == "x" else self._vs())
            self._lazy[key] = lz
        return lz

    def query_x(self, i: int) -> np.ndarray:
        S = self.S
        u = self._lazy_for("x").on_path(S.low[i])
        met = self.metric[i]
        return self.x_hat[self.P.sl(i)] + met.inv @ (self.beta_x * self.dbar[i] - S.A_path[i].T @ u)

    def query_s(self, i: int) -> np.ndarray:
        S = self.S
        u = self._lazy_for("s").on_path(S.low[i])
        return self.s_hat[self.P.sl(i)] + S.A_path[i].T @ u

    # -- value-preserving update -------------------------------------------------------

    def update(self, changes: Mapping[int, Tuple[Optional[np.ndarray], Optional[np.ndarray]]],
               t_bar: Optional[float] = None) -> UpdateDeltas:
        """Move x_bar / s_bar (and optionally t_bar) without changing (x, s)."""
        P, S, F, prm = self.P, self.S, self.F, self.params
        out = UpdateDeltas()
        changes = dict(changes)
        if t_bar is not None and float(t_bar) != self.t_bar:
            self.t_bar = float(t_bar)
            for i in range(P.n):
                changes.setdefault(i, (None, None))
        if not changes:
            return out
        C = sorted(changes)
        et = F.et
        U: Set[int] = set()
        for i in C:
            U.update(et.path(S.low[i]))
        U_sorted = sorted(U)
        lzx = self._lazy_for("x")
        lzs = self._lazy_for("s")
        for j in U_sorted:
            lzx.block(j)
            lzs.block(j)
        ux, us = lzx.u, lzs.u
        dg = np.zeros(P.m_lp)
        old_cols: Dict[int, np.ndarray] = {}
        for i in C:
            new_x, new_s = changes[i]
            sl = P.sl(i)
            old_met, old_dbar, old_cx = self.metric[i], self.dbar[i], self.c_x[sl].copy()
            old_hx = old_met.half @ self.x_hat[sl]
            old_hs = old_met.inv_half @ self.s_hat[sl]
            if new_x is not None:
                self.x_bar[i] = np.array(new_x, dtype=float)
                grad, met = block_metric(P.barriers[i], self.x_bar[i], float(P.weights[i]))
            else:
                grad, met = self.grad[i], old_met
            if new_s is not None:
                self.s_bar[i] = np.array(new_s, dtype=float)
            grad, met, mu, gamma = self._block_state(i, self.x_bar[i], self.s_bar[i], met, grad)
            self.grad[i], self.metric[i], self.mu[i], self.gamma[i] = grad, met, mu, gamma
            coef, c2 = step_coefficients(np.array([gamma]), prm.lam, P.weights[i:i + 1], prm.alpha)
            self.c2[i] = c2[0]
            dbar = coef[0] * mu
            self.dbar[i] = dbar
            rows = S.prow[i]
            Ai = S.A_path[i]
            u_path_x = np.concatenate([ux[a] for a in et.path(S.low[i])])
            Atu = Ai.T @ u_path_x
            shift = (self.beta_x * (old_met.inv @ old_dbar - met.inv @ dbar)
                     - (old_met.inv - met.inv) @ Atu)
            self.x_hat[sl] += shift
            dg[rows] += Ai @ (met.inv @ dbar - old_met.inv @ old_dbar)
            self.c_x[sl] = met.inv_half @ dbar
            if met is not old_met:
                dM = Ai @ (met.inv - old_met.inv) @ Ai.T
                for j, (o, _) in block_cholesky_update(F, dM, S.low[i]).items():
                    old_cols.setdefault(j, o)
                out.changed_H[i] = (old_met.inv_half, met.inv_half)
                out.d_Hs_hat[i] = met.inv_half @ self.s_hat[sl] - old_hs
            out.d_Hx_hat[i] = met.half @ self.x_hat[sl] - old_hx
            out.d_cx[i] = self.c_x[sl] - old_cx
        # d = L'^{-1} [dg - (L' - L) h] restricted to U
        r = dg
        ex = np.zeros(P.m_lp)
        es = np.zeros(P.m_lp)
        for j, old in old_cols.items():
            mj = int(F.sizes[j])
            if mj == 0:
                continue
            D = F.cols[j] - old
            rows = F.prow[j]
            r[rows] -= D @ self.h[F.block_slice(j)]
            ex[F.block_slice(j)] += D.T @ np.concatenate([ux[a] for a in et.path(j)])
            es[F.block_slice(j)] += D.T @ np.concatenate([us[a] for a in et.path(j)])
        d = _forward_set(F, r, U_sorted)
        ex -= self.beta_x * d
        es -= self.beta_s * d
        self.g += dg
        self.h += d
        self.eps_x += ex
        self.eps_s += es
        self._lazy = {}
        out.old_cols = old_cols
        out.d_h, out.d_eps_x, out.d_eps_s = d, ex, es
        return out


def _forward_set(F: BlockCholeskyFactor, r: np.ndarray, U_sorted: Sequence[int]) -> np.ndarray:
    """In-place L^{-1} r for r supported on an ancestor-closed block set."""
    for j in U_sorted:
        mj = int(F.sizes[j])
        if mj == 0:
            continue
        sl = F.block_slice(j)
        xj = F.dinv[j] @ r[sl]
        r[sl] = xj
        col = F.cols[j]
        if col.shape[0] > mj:
            r[F.prow[j][mj:]] -= col[mj:] @ xj
    return r
