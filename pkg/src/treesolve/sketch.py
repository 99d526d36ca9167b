"""JL sketches of implicitly represented iterates.

The partition tree doubles as the segment tree of the vector sketches: every
node owns a contiguous range of variable blocks, and its payload is the sum of
its children's payloads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .cholesky import BlockCholeskyFactor, LazyUpperSolve, forward_on_path
from .errors import MissingSnapshot
from .treewidth import PartitionTree


def default_sketch_dim(n_lp: int, delta_apx: float, C: float = 1.0) -> int:
    n = max(n_lp, 2)
    return max(1, int(math.ceil(C * math.log(n) ** 3 * math.log(1.0 / max(delta_apx, 1e-300)))))


def practical_sketch_dim(n_lp: int, delta_apx: float, C: float = 8.0) -> int:
    """C log(n_lp / delta): enough for a union bound over all blocks and steps."""
    n = max(n_lp, 2)
    return max(1, int(math.ceil(C * math.log(n / max(delta_apx, 1e-300)))))


class JLMatrix:
    """Gaussian N(0, 1/r) matrix; column c is drawn from a Philox stream keyed by (seed, c)."""

    def __init__(self, r: int, n_lp: int, seed: int = 0):
        if r < 1:
            raise ValueError("sketch dimension must be positive")
        self.r = int(r)
        self.n_lp = int(n_lp)
        self.seed = int(seed)
        self._cols: Dict[int, np.ndarray] = {}

    def column(self, c: int) -> np.ndarray:
        col = self._cols.get(c)
        if col is None:
            key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF, c], dtype=np.uint64)
            gen = np.random.Generator(np.random.Philox(key=key))
            col = gen.standard_normal(self.r) / math.sqrt(self.r)
            self._cols[c] = col
        return col

    def columns(self, start: int, stop: int) -> np.ndarray:
        if stop <= start:
            return np.zeros((self.r, 0))
        return np.stack([self.column(c) for c in range(start, stop)], axis=1)

    def dense(self) -> np.ndarray:
        return self.columns(0, self.n_lp)

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return self.dense() @ x


def jl_sample(r: int, n_lp: int, seed: int = 0) -> JLMatrix:
    return JLMatrix(r, n_lp, seed)


# ---------------------------------------------------------------------------
# static geometry shared by all sketches
# ---------------------------------------------------------------------------

Chunks = Dict[int, np.ndarray]


class SketchContext:
    """Partition tree, factor layout and per-variable constraint columns.

    Every node v carries a block set: the root path of its anchor block for
    nodes below the B part, and Lambda(v) plus Lambda-bar(v) for B nodes.
    Both sets are closed under taking ancestors in the elimination tree.
    """

    def __init__(self, F: BlockCholeskyFactor, pt: PartitionTree, A_block: sp.spmatrix,
                 var_sig: Sequence[int]):
        self.F = F
        self.pt = pt
        self.var_sig = [int(d) for d in var_sig]
        self.var_off = np.concatenate([[0], np.cumsum(self.var_sig)]).astype(np.int64)
        self.n = len(self.var_sig)
        Ac = sp.csc_matrix(A_block)
        self.A_path: List[np.ndarray] = []
        for i in range(self.n):
            rows = F.prow[pt.low[i]]
            self.A_path.append(Ac[:, self.var_off[i]:self.var_off[i + 1]][rows].toarray())
        self.node_blocks: List[List[int]] = [[] for _ in range(pt.size)]
        self.lam_set: List[frozenset] = [frozenset() for _ in range(pt.size)]
        self.anchor_of_node = [-1] * pt.size
        leaf_block = {leaf: j for j, leaf in enumerate(pt.b_leaf)}
        for v in range(pt.size):
            if pt.is_b[v]:
                self.node_blocks[v] = sorted(set(pt.lam[v]) | set(pt.lam_bar[v]))
                self.lam_set[v] = frozenset(pt.lam[v])
            else:
                u = v
                while not pt.is_b[u]:
                    u = pt.parent[u]
                self.anchor_of_node[v] = leaf_block[u]
                self.node_blocks[v] = list(F.et.path(leaf_block[u]))
        self.b_anc_of_block = [pt.b_ancestors(pt.b_leaf[j]) for j in range(F.m)]
        self.circ_anc = [pt.b_ancestors(pt.lam_circ[j]) for j in range(F.m)]
        self.var_anc = [pt.ancestors(pt.var_leaf[i]) for i in range(self.n)]

    def phi_block(self, phi: "JLMatrix", i: int) -> np.ndarray:
        return phi.columns(int(self.var_off[i]), int(self.var_off[i + 1]))

    def split_path(self, j: int, arr: np.ndarray, axis: int = 1) -> Chunks:
        """Cut an array laid out over F.prow[j] into per-block pieces."""
        F = self.F
        out = {}
        for a in F.et.path(j):
            o = F.coff[j][a]
            sl = slice(o, o + int(F.sizes[a]))
            out[a] = arr[:, sl] if axis == 1 else arr[sl]
        return out


def forward_chunks(F: BlockCholeskyFactor, R: Chunks, blocks: Sequence[int],
                   cols: Optional[Sequence[np.ndarray]] = None) -> Chunks:
    """L^{-1} applied to block pieces (rows x k each) over an ancestor-closed set."""
    exact = cols is None
    cols = F.cols if cols is None else cols
    for b in blocks:
        mb = int(F.sizes[b])
        rb = R.get(b)
        if rb is None or mb == 0:
            continue
        if exact:
            xb = F.dinv[b] @ rb
        else:
            xb = sla.solve_triangular(cols[b][:mb], rb, lower=True, check_finite=False)
        R[b] = xb
        col = cols[b]
        cb = F.coff[b]
        for a in F.et.path(b)[1:]:
            o = cb[a]
            upd = col[o:o + int(F.sizes[a])] @ xb
            prev = R.get(a)
            R[a] = -upd if prev is None else prev - upd
    return R


# ---------------------------------------------------------------------------
# vector sketch
# ---------------------------------------------------------------------------


class VectorSketch:
    """Maintains Phi_{chi(v)} x_{chi(v)} for every partition-tree node."""

    def __init__(self, ctx: SketchContext, phi: JLMatrix, x: np.ndarray):
        self.ctx = ctx
        self.phi = phi
        self.x = np.array(x, dtype=float)
        pt = ctx.pt
        self.payload: List[np.ndarray] = [np.zeros(phi.r) for _ in range(pt.size)]
        for i in range(ctx.n):
            leaf = pt.var_leaf[i]
            self.payload[leaf] = ctx.phi_block(phi, i) @ self.x[ctx.var_off[i]:ctx.var_off[i + 1]]
        for v in pt.bottom_up:
            if pt.children[v]:
                self.payload[v] = np.sum([self.payload[c] for c in pt.children[v]], axis=0)

    def update(self, delta: Mapping[int, np.ndarray]) -> None:
        ctx = self.ctx
        for i, d in delta.items():
            d = np.asarray(d, dtype=float)
            if not np.any(d):
                continue
            self.x[ctx.var_off[i]:ctx.var_off[i + 1]] += d
            add = ctx.phi_block(self.phi, i) @ d
            for u in ctx.var_anc[i]:
                self.payload[u] = self.payload[u] + add

    def query(self, v: int) -> np.ndarray:
        return self.payload[v]


def vsk_update(st: VectorSketch, delta: Mapping[int, np.ndarray]) -> None:
    st.update(delta)


def vsk_query(st: VectorSketch, v: int) -> np.ndarray:
    return st.query(v)


# ---------------------------------------------------------------------------
# balanced sketch of W^T y for several constraint-side vectors y
# ---------------------------------------------------------------------------


class BalancedSketch:
    """Maintains Phi_{chi(v)} (W^T y)_{chi(v)} for each channel vector y.

    W = L^{-1} A H^{-1/2}.  Nodes below the B part keep J_v; B nodes keep
    Z_v = J_v L^{-T} (with Lambda columns frozen at their last refresh) and
    the contracted terms y-bar.  All of these are stored as per-block pieces
    that are replaced, never mutated, so shallow copies of the node lists
    form a consistent snapshot.
    """

    def __init__(self, ctx: SketchContext, phi: JLMatrix, H_inv_half: Sequence[np.ndarray],
                 vectors: Sequence[np.ndarray], F: Optional[BlockCholeskyFactor] = None):
        self.ctx = ctx
        self.phi = phi
        self.F = ctx.F if F is None else F
        pt = ctx.pt
        self.H_inv_half = list(H_inv_half)
        self.vecs = [np.array(y, dtype=float) for y in vectors]
        self.k = len(self.vecs)
        self.t = 0
        self.J: List[Optional[Chunks]] = [None] * pt.size
        self.Z: List[Optional[Chunks]] = [None] * pt.size
        self.snap: List[Optional[Dict[int, np.ndarray]]] = [None] * pt.size
        self.tv = [0] * pt.size
        self.ybar: List[Optional[Tuple[np.ndarray, ...]]] = [None] * pt.size
        self._lazy: List[Optional[LazyUpperSolve]] = [None] * self.k
        self._Y: Optional[np.ndarray] = None
        self._init_nodes()

    # -- construction ----------------------------------------------------------

    def _leaf_J(self, i: int, Hih: np.ndarray) -> Chunks:
        ctx = self.ctx
        full = (ctx.phi_block(self.phi, i) @ Hih) @ ctx.A_path[i].T
        return ctx.split_path(ctx.pt.low[i], full)

    def _scratch_J(self) -> List[Chunks]:
        pt = self.ctx.pt
        J: List[Chunks] = [None] * pt.size  # type: ignore[list-item]
        for v in pt.bottom_up:
            if pt.leaf_var[v] >= 0:
                i = pt.leaf_var[v]
                J[v] = self._leaf_J(i, self.H_inv_half[i])
                continue
            acc: Chunks = {}
            for c in pt.children[v]:
                for b, arr in J[c].items():
                    prev = acc.get(b)
                    acc[b] = arr if prev is None else prev + arr
            J[v] = acc
        return J

    def _z_from_j(self, v: int, Jv: Chunks, cols: Optional[Sequence[np.ndarray]] = None) -> Chunks:
        R = {b: arr.T for b, arr in Jv.items()}
        forward_chunks(self.F, R, self.ctx.node_blocks[v], cols)
        r = self.phi.r
        return {b: (R[b].T if b in R else np.zeros((r, int(self.F.sizes[b])))) for b in self.ctx.node_blocks[v]}

    def _contract_all(self, v: int, Zv: Chunks, lam: bool) -> Tuple[np.ndarray, ...]:
        """_contract for every channel vector at once."""
        if self._Y is None:
            self._Y = np.column_stack(self.vecs) if self.vecs else np.zeros((self.F.n, 0))
        F, lset, Y = self.F, self.ctx.lam_set[v], self._Y
        out = np.zeros((self.phi.r, self.k))
        for b, arr in Zv.items():
            if (b in lset) == lam and arr.shape[1]:
                out += arr @ Y[F.off[b]:F.off[b + 1]]
        return tuple(out.T.copy())

    def _contract(self, v: int, Zv: Chunks, y: np.ndarray, lam: bool) -> np.ndarray:
        F, lset = self.F, self.ctx.lam_set[v]
        out = np.zeros(self.phi.r)
        for b, arr in Zv.items():
            if (b in lset) == lam and arr.shape[1]:
                out += arr @ y[F.off[b]:F.off[b + 1]]
        return out

    def _z_plain(self, Jv: Chunks) -> Chunks:
        """J L^{-T} over the ancestor closure of J's support, with current columns."""
        closure: Set[int] = set()
        for b in Jv:
            closure.update(self.F.et.path(b))
        R = {b: arr.T for b, arr in Jv.items()}
        forward_chunks(self.F, R, sorted(closure))
        return {b: arr.T for b, arr in R.items()}

    def _init_nodes(self) -> None:
        # Z is linear in J, so a B node sums its children's Z instead of solving again
        pt = self.ctx.pt
        F = self.F
        r = self.phi.r
        J = self._scratch_J()
        for v in pt.bottom_up:
            if not pt.is_b[v]:
                self.J[v] = J[v]
                continue
            kids = pt.children[v]
            if not kids:
                acc = self._z_plain(J[v])
            else:
                acc = {}
                for c in kids:
                    Zc = self.Z[c] if pt.is_b[c] else self._z_plain(J[c])
                    for b, arr in Zc.items():
                        prev = acc.get(b)
                        acc[b] = arr if prev is None else prev + arr
            self.Z[v] = {b: (acc[b] if b in acc else np.zeros((r, int(F.sizes[b]))))
                         for b in self.ctx.node_blocks[v]}
            self.snap[v] = {j: F.cols[j] for j in pt.lam[v]}
            self.ybar[v] = self._contract_all(v, self.Z[v], False)

    # -- lazy refresh ------------------------------------------------------------

    def _catch_up(self, v: int, Z: Chunks, snap: Dict[int, np.ndarray], cols: Sequence[np.ndarray],
                  extra_old: Optional[Mapping[int, np.ndarray]] = None,
                  exact_dinv: bool = True) -> Tuple[Chunks, Optional[Chunks], bool]:
        """Bring Z up to ``cols``; returns (new Z, its change, whether non-Lambda pieces moved)."""
        F, pt = self.F, self.ctx.pt
        changed: List[Tuple[int, np.ndarray]] = [(j, old) for j, old in snap.items() if old is not cols[j]]
        outside = False
        if extra_old:
            for j in pt.lam_bar[v]:
                old = extra_old.get(j)
                if old is not None and old is not cols[j]:
                    changed.append((j, old))
                    outside = True
        if not changed:
            return Z, None, False
        R: Chunks = {}
        affected: Set[int] = set()
        for j, old in changed:
            if int(F.sizes[j]) == 0:
                continue
            P = (cols[j] - old) @ Z[j].T
            for a, piece in self.ctx.split_path(j, P, axis=0).items():
                prev = R.get(a)
                R[a] = piece if prev is None else prev + piece
            affected.update(F.et.path(j))
        forward_chunks(F, R, sorted(affected), None if exact_dinv else cols)
        newZ = dict(Z)
        dZ: Chunks = {}
        for b, rb in R.items():
            d = -rb.T
            dZ[b] = d
            newZ[b] = Z[b] + d
        return newZ, dZ, outside

    def refresh(self, v: int, extra_old: Optional[Mapping[int, np.ndarray]] = None) -> None:
        pt = self.ctx.pt
        if not pt.is_b[v]:
            return
        Znew, dZ, outside = self._catch_up(v, self.Z[v], self.snap[v], self.F.cols, extra_old)
        if dZ is not None:
            self.Z[v] = Znew
            if outside:
                self.ybar[v] = tuple(yb + add for yb, add in zip(self.ybar[v], self._contract_all(v, dZ, False)))
            self.snap[v] = {j: self.F.cols[j] for j in pt.lam[v]}
        self.tv[v] = self.t

    # -- queries -------------------------------------------------------------------

    def _lazy_solve(self, ch: int) -> LazyUpperSolve:
        lz = self._lazy[ch]
        if lz is None:
            lz = LazyUpperSolve(self.F, self.vecs[ch])
            self._lazy[ch] = lz
        return lz

    def query(self, v: int, ch: int = 0) -> np.ndarray:
        pt = self.ctx.pt
        if not pt.is_b[v]:
            lz = self._lazy_solve(ch)
            lz.block(self.ctx.anchor_of_node[v])
            out = np.zeros(self.phi.r)
            for b, arr in self.J[v].items():
                if arr.shape[1]:
                    out += arr @ lz.u[b]
            return out
        self.refresh(v)
        return self._contract(v, self.Z[v], self.vecs[ch], True) + self.ybar[v][ch]

    # -- updates -------------------------------------------------------------------

    def update(self, changed_H: Mapping[int, Tuple[np.ndarray, np.ndarray]],
               old_cols: Mapping[int, np.ndarray],
               deltas: Sequence[Optional[np.ndarray]]) -> None:
        """Apply one batch: new H^{-1/2} blocks (old, new), then channel deltas.

        The factor must already hold the new columns; ``old_cols`` gives the
        pre-batch version of every column that changed.
        """
        ctx, pt, F = self.ctx, self.ctx.pt, self.F
        self.t += 1
        self._lazy = [None] * self.k
        owned: Set[int] = set()

        def own(store: List[Optional[Chunks]], u: int) -> Chunks:
            if u not in owned:
                store[u] = dict(store[u])
                owned.add(u)
            return store[u]

        if changed_H:
            touched_b: Set[int] = set()
            for i in changed_H:
                touched_b.update(ctx.b_anc_of_block[pt.low[i]])
            for v in sorted(touched_b):
                self.refresh(v, old_cols)
            for i, (old, new) in changed_H.items():
                self.H_inv_half[i] = new
                low = pt.low[i]
                full = (ctx.phi_block(self.phi, i) @ (new - old)) @ ctx.A_path[i].T
                if not np.any(full):
                    continue
                dJ = ctx.split_path(low, full)
                dZ = ctx.split_path(low, forward_on_path(F, low, full.T.copy()).T)
                for u in ctx.var_anc[i]:
                    if not pt.is_b[u]:
                        Ju = own(self.J, u)
                        for a, piece in dJ.items():
                            Ju[a] = Ju[a] + piece
                        continue
                    Zu = own(self.Z, u)
                    for a, piece in dZ.items():
                        Zu[a] = Zu[a] + piece
                    self.ybar[u] = tuple(yb + add for yb, add in zip(self.ybar[u], self._contract_all(u, dZ, False)))
        for ch, d in enumerate(deltas):
            if d is None:
                continue
            d = np.asarray(d, dtype=float)
            nz = np.flatnonzero(d)
            if nz.size == 0:
                continue
            blocks = np.unique(np.searchsorted(F.off, nz, side="right") - 1)
            gain: Dict[int, np.ndarray] = {}
            for b in blocks:
                b = int(b)
                db = d[F.off[b]:F.off[b + 1]]
                for u in ctx.circ_anc[b]:
                    add = self.Z[u][b] @ db
                    prev = gain.get(u)
                    gain[u] = add if prev is None else prev + add
            for u, add in gain.items():
                yb = list(self.ybar[u])
                yb[ch] = yb[ch] + add
                self.ybar[u] = tuple(yb)
            self.vecs[ch] = self.vecs[ch] + d
            self._Y = None

    # -- snapshots and checks ----------------------------------------------------------

    def freeze(self) -> "FrozenBalanced":
        return FrozenBalanced(self)

    def check_invariants(self, tol: float = 1e-8) -> List[str]:
        """Compare J, Z and y-bar with from-scratch values."""
        pt, F = self.ctx.pt, self.F
        problems: List[str] = []
        J = self._scratch_J()

        def gap(a: Chunks, b: Chunks) -> Tuple[float, float]:
            num = sum(float(np.linalg.norm(a[k] - b.get(k, 0.0))) for k in a)
            num += sum(float(np.linalg.norm(b[k])) for k in b if k not in a)
            return num, 1.0 + sum(float(np.linalg.norm(x)) for x in a.values())

        for v in range(pt.size):
            if not pt.is_b[v]:
                num, den = gap(J[v], self.J[v])
                if num > tol * den:
                    problems.append(f"J mismatch at node {v}")
                continue
            cols = list(F.cols)
            for j, c in self.snap[v].items():
                cols[j] = c
            want = self._z_from_j(v, J[v], cols)
            num, den = gap(want, self.Z[v])
            if num > tol * den:
                problems.append(f"Z mismatch at node {v}")
            for ch, y in enumerate(self.vecs):
                yb = self._contract(v, self.Z[v], y, False)
                if np.linalg.norm(yb - self.ybar[v][ch]) > tol * (1.0 + np.linalg.norm(yb)):
                    problems.append(f"ybar mismatch at node {v} channel {ch}")
        return problems


class FrozenBalanced:
    """Read-only view of a BalancedSketch at one timestamp."""

    def __init__(self, live: BalancedSketch):
        self.live = live
        self.J = list(live.J)
        self.Z = list(live.Z)
        self.snap = list(live.snap)
        self.ybar = list(live.ybar)
        self.vecs = list(live.vecs)
        self.cols = live.F.snapshot()
        self._lazy: Dict[int, LazyUpperSolve] = {}
        self._zcache: Dict[int, Chunks] = {}

    def query(self, v: int, ch: int = 0) -> np.ndarray:
        live = self.live
        ctx, pt = live.ctx, live.ctx.pt
        if not pt.is_b[v]:
            lz = self._lazy.get(ch)
            if lz is None:
                lz = LazyUpperSolve(live.F, self.vecs[ch], self.cols)
                self._lazy[ch] = lz
            lz.block(ctx.anchor_of_node[v])
            out = np.zeros(live.phi.r)
            for b, arr in self.J[v].items():
                if arr.shape[1]:
                    out += arr @ lz.u[b]
            return out
        Z = self._zcache.get(v)
        if Z is None:
            Z, _, _ = live._catch_up(v, self.Z[v], self.snap[v], self.cols, None, exact_dinv=False)
            self._zcache[v] = Z
        return live._contract(v, Z, self.vecs[ch], True) + self.ybar[v][ch]


# ---------------------------------------------------------------------------
# batch sketch
# ---------------------------------------------------------------------------


H_CH, EX_CH, ES_CH = 0, 1, 2


@dataclass
class _Snapshot:
    bal: FrozenBalanced
    px: List[np.ndarray]
    ps: List[np.ndarray]
    pc: List[np.ndarray]
    beta_x: float
    beta_s: float
    cache_x: Dict[int, np.ndarray] = field(default_factory=dict)
    cache_s: Dict[int, np.ndarray] = field(default_factory=dict)

    def sketch_x(self, v: int) -> np.ndarray:
        got = self.cache_x.get(v)
        if got is None:
            got = (-self.beta_x * self.bal.query(v, H_CH) - self.bal.query(v, EX_CH)
                   + self.px[v] + self.beta_x * self.pc[v])
            self.cache_x[v] = got
        return got

    def sketch_s(self, v: int) -> np.ndarray:
        got = self.cache_s.get(v)
        if got is None:
            got = self.beta_s * self.bal.query(v, H_CH) + self.bal.query(v, ES_CH) + self.ps[v]
            self.cache_s[v] = got
        return got


class BatchSketch:
    """Sketches of H^{1/2} x and H^{-1/2} s with per-timestamp history."""

    def __init__(self, ctx: SketchContext, phi: JLMatrix, H_inv_half: Sequence[np.ndarray],
                 h: np.ndarray, eps_x: np.ndarray, eps_s: np.ndarray,
                 Hx_hat: np.ndarray, Hs_hat: np.ndarray, c_x: np.ndarray,
                 beta_x: float, beta_s: float, keep_history: Optional[int] = None,
                 F: Optional[BlockCholeskyFactor] = None):
        self.ctx = ctx
        self.phi = phi
        self.bal = BalancedSketch(ctx, phi, H_inv_half, [h, eps_x, eps_s], F)
        self.vx = VectorSketch(ctx, phi, Hx_hat)
        self.vs = VectorSketch(ctx, phi, Hs_hat)
        self.vc = VectorSketch(ctx, phi, c_x)
        self.beta_x = float(beta_x)
        self.beta_s = float(beta_s)
        self.ell = 0
        self.keep_history = keep_history
        self.history: Dict[int, _Snapshot] = {}
        self._cur_x: Dict[int, np.ndarray] = {}
        self._cur_s: Dict[int, np.ndarray] = {}
        self._take_snapshot()

    def _take_snapshot(self) -> None:
        self.history[self.ell] = _Snapshot(self.bal.freeze(), list(self.vx.payload), list(self.vs.payload),
                                           list(self.vc.payload), self.beta_x, self.beta_s)
        if self.keep_history is not None:
            for old in [k for k in self.history if k < self.ell - self.keep_history]:
                del self.history[old]

    def move(self, beta_x: float, beta_s: float) -> None:
        self.beta_x = float(beta_x)
        self.beta_s = float(beta_s)
        self._cur_x.clear()
        self._cur_s.clear()

    def update(self, changed_H: Mapping[int, Tuple[np.ndarray, np.ndarray]], old_cols: Mapping[int, np.ndarray],
               d_h: Optional[np.ndarray], d_ex: Optional[np.ndarray], d_es: Optional[np.ndarray],
               d_Hx_hat: Mapping[int, np.ndarray], d_Hs_hat: Mapping[int, np.ndarray],
               d_cx: Mapping[int, np.ndarray]) -> None:
        self.bal.update(changed_H, old_cols, [d_h, d_ex, d_es])
        self.vx.update(d_Hx_hat)
        self.vs.update(d_Hs_hat)
        self.vc.update(d_cx)
        self._cur_x.clear()
        self._cur_s.clear()
        self.ell += 1
        self._take_snapshot()

    def sketch_x(self, v: int) -> np.ndarray:
        got = self._cur_x.get(v)
        if got is None:
            b = self.bal
            got = (-self.beta_x * b.query(v, H_CH) - b.query(v, EX_CH)
                   + self.vx.query(v) + self.beta_x * self.vc.query(v))
            self._cur_x[v] = got
        return got

    def sketch_s(self, v: int) -> np.ndarray:
        got = self._cur_s.get(v)
        if got is None:
            b = self.bal
            got = self.beta_s * b.query(v, H_CH) + b.query(v, ES_CH) + self.vs.query(v)
            self._cur_s[v] = got
        return got

    def _bfs(self, ell_prime: int, eps: float, primal: bool) -> List[int]:
        snap = self.history.get(ell_prime)
        if snap is None:
            raise MissingSnapshot(f"no snapshot for timestamp {ell_prime}")
        pt = self.ctx.pt
        cur = self.sketch_x if primal else self.sketch_s
        old = snap.sketch_x if primal else snap.sketch_s
        found: List[int] = []
        level = [pt.root]
        thr = 0.9 * eps
        while level:
            nxt = []
            for v in level:
                kids = pt.children[v]
                if not kids:
                    if pt.leaf_var[v] >= 0:
                        found.append(pt.leaf_var[v])
                    continue
                for u in kids:
                    if pt.hi[u] <= pt.lo[u]:
                        continue
                    if np.linalg.norm(cur(u) - old(u)) > thr:
                        nxt.append(u)
            level = nxt
        return found

    def query_x(self, ell_prime: int, eps: float) -> List[int]:
        return self._bfs(ell_prime, eps, True)

    def query_s(self, ell_prime: int, eps: float) -> List[int]:
        return self._bfs(ell_prime, eps, False)
