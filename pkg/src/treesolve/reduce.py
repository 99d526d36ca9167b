"""From SDP instances, graphs and LPs to block programs, and back to PSD factors.

A bag program has one PSD matrix variable X_j per bag of a tree decomposition.
Overlapping bags are tied together by scalar consistency rows, objective and
constraint cells are assigned to the deepest covering bag, and inequality rows
get nonnegative slack variables packed into small box blocks.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import (CompletionFailure, DisconnectedBagSet, InconsistentMinors, InvalidDecomposition,
                     ParseError, UncoveredSupport, UnsupportedConstraint)
from .ipm.program import BlockBarrier, GeneralProgram
from .linalg import smat, svec_dim
from .treewidth import TreeDecomposition, validate_decomposition

EQ, GE, LE = 0, 1, -1
_SENSE_NAMES = {"eq": EQ, "=": EQ, "ge": GE, ">=": GE, "le": LE, "<=": LE}


# --------------------------------------------------------------------------
# instances
# --------------------------------------------------------------------------


def _sym(M, n: int) -> sp.csr_matrix:
    M = sp.csr_matrix(M, shape=(n, n), dtype=float)
    if abs(M - M.T).sum() > 1e-12 * (1.0 + abs(M).sum()):
        raise ValueError("matrix is not symmetric")
    M.eliminate_zeros()
    return M


@dataclass
class Graph:
    """Simple undirected weighted graph on vertices 0..n-1."""

    n: int
    edges: List[Tuple[int, int, float]]

    def __post_init__(self) -> None:
        seen: Set[Tuple[int, int]] = set()
        clean = []
        for u, v, *w in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ParseError(f"self loop at vertex {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ParseError(f"edge ({u},{v}) out of range")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ParseError(f"duplicate edge {key}")
            seen.add(key)
            clean.append((key[0], key[1], float(w[0]) if w else 1.0))
        self.edges = clean

    def pairs(self) -> List[Tuple[int, int]]:
        return [(u, v) for u, v, _ in self.edges]

    def laplacian(self) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        deg = np.zeros(self.n)
        for u, v, w in self.edges:
            rows += [u, v]
            cols += [v, u]
            vals += [-w, -w]
            deg[u] += w
            deg[v] += w
        L = sp.coo_matrix((vals, (rows, cols)), shape=(self.n, self.n)).tocsr()
        return (L + sp.diags(deg)).tocsr()

    def complement(self) -> "Graph":
        present = set(self.pairs())
        return Graph(self.n, [(u, v) for u in range(self.n) for v in range(u + 1, self.n)
                              if (u, v) not in present])

    @staticmethod
    def path(n: int) -> "Graph":
        return Graph(n, [(i, i + 1) for i in range(n - 1)])

    @staticmethod
    def cycle(n: int) -> "Graph":
        return Graph(n, [(i, (i + 1) % n) for i in range(n)])


@dataclass
class SdpInstance:
    """optimize C . X subject to A_i . X (=, >=, <=) b_i and X PSD.

    ``sense`` is "min" or "max"; the bag program always minimizes, using -C
    for maximization.  ``R`` bounds tr X on the region of interest and ``r``
    is the inner radius recorded for the solver's geometry.
    """

    n: int
    C: sp.csr_matrix
    A: List[sp.csr_matrix]
    b: np.ndarray
    kinds: Optional[List[int]] = None
    sense: str = "min"
    R: Optional[float] = None
    r: float = 0.5
    name: str = ""
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.C = _sym(self.C, self.n)
        self.A = [_sym(Ai, self.n) for Ai in self.A]
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.b.shape[0] != len(self.A):
            raise ValueError("one right-hand side per constraint")
        if self.kinds is None:
            self.kinds = [EQ] * len(self.A)
        self.kinds = [int(k) for k in self.kinds]
        if len(self.kinds) != len(self.A) or any(k not in (EQ, GE, LE) for k in self.kinds):
            raise ValueError("constraint kinds must be EQ, GE or LE, one per constraint")
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        if self.R is None:
            self.R = float(self.n)

    @property
    def m(self) -> int:
        return len(self.A)

    @property
    def degenerate(self) -> bool:
        """No constraints at all: the optimum sits on the boundary (often at X = 0)."""
        return self.m == 0

    @property
    def sign(self) -> float:
        return -1.0 if self.sense == "max" else 1.0

    def objective(self, X: np.ndarray) -> float:
        return float((self.C.multiply(X)).sum())

    def constraint_values(self, X: np.ndarray) -> np.ndarray:
        return np.array([float(Ai.multiply(X).sum()) for Ai in self.A])

    def violation(self, X: np.ndarray) -> float:
        v = self.constraint_values(X) - self.b
        k = np.asarray(self.kinds)
        v = np.where(k == GE, np.minimum(v, 0.0), np.where(k == LE, np.maximum(v, 0.0), v))
        return float(np.linalg.norm(v))

    @staticmethod
    def support(M: sp.csr_matrix) -> List[int]:
        return sorted(set(M.nonzero()[0].tolist()))

    def graph_edges(self) -> List[Tuple[int, int]]:
        """Edges of the SDP graph: every constraint support is a clique, plus C's off-diagonal cells."""
        E: Set[Tuple[int, int]] = set()
        for Ai in self.A:
            s = self.support(Ai)
            E.update((s[a], s[b]) for a in range(len(s)) for b in range(a + 1, len(s)))
        Cu = sp.triu(self.C, k=1).tocoo()
        E.update(zip(Cu.row.tolist(), Cu.col.tolist()))
        return sorted(E)

    def rank_deficit(self) -> int:
        """m minus the rank of the stacked vectorized constraint matrices."""
        if self.m == 0:
            return 0
        iu, ju = np.triu_indices(self.n)
        M = np.array([Ai.toarray()[iu, ju] for Ai in self.A])
        return self.m - int(np.linalg.matrix_rank(M))


# --------------------------------------------------------------------------
# bag programs
# --------------------------------------------------------------------------


def _svec_pos(k: int, a: int, b: int) -> int:
    """Position of cell (a, b), a <= b, in the row-major upper-triangle svec of a k x k matrix."""
    if a > b:
        a, b = b, a
    return a * k - a * (a - 1) // 2 + (b - a)


def _depths(td: TreeDecomposition) -> Tuple[List[int], List[int]]:
    """BFS depth and parent of every bag, rooting each component at its lowest bag."""
    adj = td.adjacency()
    depth = [-1] * td.n_bags
    parent = [-1] * td.n_bags
    for root in range(td.n_bags):
        if depth[root] >= 0:
            continue
        depth[root] = 0
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if depth[w] < 0:
                    depth[w] = depth[u] + 1
                    parent[w] = u
                    queue.append(w)
    return depth, parent


@dataclass
class BagProgram:
    """A GeneralProgram plus the bookkeeping that maps it back to the SDP.

    ``blocks[i]`` is ("bag", j) for X_j or ("slack", j) for a slack block owned
    by bag j; ``rows[r]`` is ("A", i) for original constraint i or
    ("N", (child, parent), (u, v)) for the overlap cell (u, v).
    """

    program: GeneralProgram
    sdp: SdpInstance
    td: TreeDecomposition
    blocks: List[Tuple[str, int]]
    rows: List[tuple]
    slack_rows: Dict[int, List[int]] = field(default_factory=dict)

    @property
    def bags(self) -> List[Tuple[int, ...]]:
        return self.td.bags

    def bag_matrices(self, x: np.ndarray) -> List[np.ndarray]:
        P = self.program
        return [smat(x[P.sl(i)]) for i, (kind, _) in enumerate(self.blocks) if kind == "bag"]

    def sdp_objective_from_bags(self, x: np.ndarray) -> float:
        """C . X evaluated through the per-bag split (in the instance's own sense)."""
        return self.sdp.sign * float(self.program.c[self._bag_cols()] @ x[self._bag_cols()])

    def _bag_cols(self) -> np.ndarray:
        P = self.program
        return np.concatenate([np.arange(P.col_off[i], P.col_off[i + 1])
                               for i, (kind, _) in enumerate(self.blocks) if kind == "bag"])

    def assemble(self, Xs: Sequence[np.ndarray]) -> np.ndarray:
        """Dense n x n matrix agreeing with every bag on its cells (later bags overwrite)."""
        n = self.sdp.n
        X = np.zeros((n, n))
        for bag, Xj in zip(self.bags, Xs):
            idx = np.asarray(bag)
            X[np.ix_(idx, idx)] = Xj
        return X

    def complete(self, x: np.ndarray) -> np.ndarray:
        return psd_complete(self.bag_matrices(x), self.td)


def _check_bags(td: TreeDecomposition) -> None:
    if td.n_bags == 0:
        raise InvalidDecomposition("decomposition has no bags")
    if any(len(b) == 0 for b in td.bags):
        raise InvalidDecomposition("empty bags are not allowed")


def _cell_owner(cands: Iterable[int], depth: Sequence[int]) -> int:
    return min(cands, key=lambda j: (-depth[j], j))


def _build(sdp: SdpInstance, td: TreeDecomposition, row_bags: List[List[int]],
           bag_sets: Optional[List[List[int]]]) -> BagProgram:
    """Shared assembly.  ``row_bags[i]`` lists the bags constraint i may use."""
    depth, parent = _depths(td)
    bags = td.bags
    where: Dict[int, Set[int]] = {}
    for j, bag in enumerate(bags):
        for v in bag:
            where.setdefault(v, set()).add(j)
    local = [{v: a for a, v in enumerate(bag)} for bag in bags]
    ks = [len(bag) for bag in bags]
    off = np.concatenate([[0], np.cumsum([svec_dim(k) for k in ks])]).astype(np.int64)
    n_bag_cols = int(off[-1])
    sq2 = math.sqrt(2.0)

    def coef(u: int, v: int, val: float) -> float:
        return val if u == v else sq2 * val

    def place(j: int, u: int, v: int) -> int:
        return int(off[j]) + _svec_pos(ks[j], local[j][u], local[j][v])

    c = np.zeros(n_bag_cols)
    Cu = sp.triu(sdp.C).tocoo()
    for u, v, val in zip(Cu.row.tolist(), Cu.col.tolist(), Cu.data.tolist()):
        cands = where.get(u, set()) & where.get(v, set())
        if not cands:
            raise UncoveredSupport(f"objective cell ({u},{v}) is not covered by any bag")
        c[place(_cell_owner(cands, depth), u, v)] += sdp.sign * coef(u, v, val)

    rows_i, cols_i, vals = [], [], []
    rhs: List[float] = []
    prov: List[tuple] = []
    row_of_constraint: Dict[int, int] = {}
    owner_of_constraint: Dict[int, int] = {}
    for i, Ai in enumerate(sdp.A):
        allowed = set(row_bags[i])
        Au = sp.triu(Ai).tocoo()
        r = len(rhs)
        used: Set[int] = set()
        for u, v, val in zip(Au.row.tolist(), Au.col.tolist(), Au.data.tolist()):
            cands = where.get(u, set()) & where.get(v, set()) & allowed
            if not cands:
                raise UncoveredSupport(f"cell ({u},{v}) of constraint {i} is not covered by its bags")
            j = _cell_owner(cands, depth)
            used.add(j)
            rows_i.append(r)
            cols_i.append(place(j, u, v))
            vals.append(coef(u, v, val))
        rhs.append(float(sdp.b[i]))
        prov.append(("A", i))
        row_of_constraint[i] = r
        owner_of_constraint[i] = _cell_owner(used or allowed, depth)

    edge_rows: Dict[Tuple[int, int], List[int]] = {}
    for a, b in td.edges:
        child, par = (a, b) if parent[a] == b else (b, a)
        shared = sorted(set(bags[child]) & set(bags[par]))
        lst = edge_rows.setdefault((min(a, b), max(a, b)), [])
        for p in range(len(shared)):
            for q in range(p, len(shared)):
                u, v = shared[p], shared[q]
                r = len(rhs)
                rows_i += [r, r]
                cols_i += [place(child, u, v), place(par, u, v)]
                vals += [1.0, -1.0]
                rhs.append(0.0)
                prov.append(("N", (child, par), (u, v)))
                lst.append(r)

    A = sp.csr_matrix((vals, (rows_i, cols_i)), shape=(len(rhs), n_bag_cols))
    barriers = [BlockBarrier.psd_trace(k, 2.0 * float(sdp.R)) for k in ks]
    blocks = [("bag", j) for j in range(len(bags))]

    # constraint graph decomposition: row-bag j holds the rows touching X_j
    rb: List[List[int]] = [[] for _ in bags]
    for i in range(sdp.m):
        for j in (row_bags[i] if bag_sets is not None else [owner_of_constraint[i]]):
            rb[j].append(row_of_constraint[i])
    for (a, b), lst in edge_rows.items():
        rb[a].extend(lst)
        rb[b].extend(lst)
    row_td = TreeDecomposition(rb, list(td.edges), len(rhs))

    P = GeneralProgram(A, np.asarray(rhs), c, barriers, row_td=row_td, name=sdp.name or "bag-program")
    P.with_geometry(sdp.R, sdp.r)
    bp = BagProgram(P, sdp, td, blocks, prov)
    ineq = {i: owner_of_constraint[i] for i in range(sdp.m) if sdp.kinds[i] != EQ}
    if ineq:
        bp = add_inequality_slacks(bp, ineq)
    return bp


def sdp_to_bag_program(sdp: SdpInstance, td: TreeDecomposition, validate: bool = True) -> BagProgram:
    """One PSD block per bag; every constraint must fit inside a single bag."""
    _check_bags(td)
    if validate:
        res = validate_decomposition(sdp.graph_edges(), td, sdp.n)
        if not res:
            raise InvalidDecomposition(res.message)
    depth, _ = _depths(td)
    bagsets = [set(b) for b in td.bags]
    row_bags = []
    for i, Ai in enumerate(sdp.A):
        s = set(SdpInstance.support(Ai))
        cands = [j for j in range(td.n_bags) if s <= bagsets[j]]
        if not cands:
            raise UnsupportedConstraint(f"constraint {i} fits no single bag; pass explicit bag sets")
        row_bags.append([_cell_owner(cands, depth)])
    return _build(sdp, td, row_bags, None)


def decomposable_sdp_to_bag_program(sdp: SdpInstance, td: TreeDecomposition,
                                    bag_sets: Sequence[Sequence[int]]) -> BagProgram:
    """Constraint i is split across the connected bag set ``bag_sets[i]``."""
    _check_bags(td)
    if len(bag_sets) != sdp.m:
        raise ValueError("one bag set per constraint")
    adj = td.adjacency()
    sets = []
    for i, S in enumerate(bag_sets):
        S = sorted(set(int(j) for j in S))
        if S:
            seen = {S[0]}
            stack = [S[0]]
            inset = set(S)
            while stack:
                u = stack.pop()
                for w in adj[u]:
                    if w in inset and w not in seen:
                        seen.add(w)
                        stack.append(w)
            if len(seen) != len(S):
                raise DisconnectedBagSet(f"bag set of constraint {i} is not connected")
        elif sdp.A[i].nnz:
            raise UncoveredSupport(f"constraint {i} has an empty bag set")
        sets.append(S)
    return _build(sdp, td, sets, sets)


def add_inequality_slacks(bp: BagProgram, rows: Dict[int, int], tau: Optional[int] = None) -> BagProgram:
    """Turn the listed constraints (index -> owning bag) into equalities with slacks.

    A >= row gets -v and a <= row gets +v with 0 <= v <= U, where U bounds
    |A_i . X| through the bag trace bound.  Slacks owned by one bag are packed
    into ceil(count / tau) box blocks.
    """
    if not rows:
        return bp
    sdp = bp.sdp
    P = bp.program
    tau = tau or max(1, bp.td.width)
    r_of = {p[1]: r for r, p in enumerate(bp.rows) if p[0] == "A"}
    by_bag: Dict[int, List[int]] = {}
    for i, j in sorted(rows.items()):
        if sdp.kinds[i] == EQ:
            continue
        by_bag.setdefault(j, []).append(i)
    new_cols = []
    barriers = list(P.barriers)
    blocks = list(bp.blocks)
    slack_rows: Dict[int, List[int]] = dict(bp.slack_rows)
    col = P.n_lp
    entries_r, entries_c, entries_v = [], [], []
    bound = 2.0 * float(sdp.R)
    for j in sorted(by_bag):
        ids = by_bag[j]
        for start in range(0, len(ids), tau):
            chunk = ids[start:start + tau]
            upper = []
            for i in chunk:
                entries_r.append(r_of[i])
                entries_c.append(col)
                entries_v.append(-1.0 if sdp.kinds[i] == GE else 1.0)
                col += 1
                upper.append(float(sp.linalg.norm(sdp.A[i])) * bound + abs(float(sdp.b[i])) + 1.0)
            slack_rows[len(barriers)] = list(chunk)
            barriers.append(BlockBarrier.box(np.zeros(len(chunk)), np.asarray(upper), dim=len(chunk)))
            blocks.append(("slack", j))
            new_cols.append(len(chunk))
    extra = sp.csr_matrix((entries_v, (entries_r, [c - P.n_lp for c in entries_c])),
                          shape=(P.m_lp, col - P.n_lp))
    A = sp.hstack([P.A, extra], format="csr")
    c = np.concatenate([P.c, np.zeros(col - P.n_lp)])
    Q = GeneralProgram(A, P.b, c, barriers, row_td=P.row_td, name=P.name)
    Q.geometry = P.geometry
    return BagProgram(Q, sdp, bp.td, blocks, bp.rows, slack_rows)


# --------------------------------------------------------------------------
# PSD completion
# --------------------------------------------------------------------------


def _psd_factor(M: np.ndarray, width: int, tol: float) -> np.ndarray:
    """F with F F^T = M (up to clipping of tiny negative eigenvalues), F has ``width`` columns."""
    k = M.shape[0]
    if k == 0:
        return np.zeros((0, width))
    w, V = np.linalg.eigh((M + M.T) / 2.0)
    scale = max(1.0, float(np.max(np.abs(w))))
    if w[0] < -tol * scale:
        raise CompletionFailure(f"matrix has eigenvalue {w[0]:.3g} below the PSD tolerance")
    F = V * np.sqrt(np.clip(w, 0.0, None))
    if k > width:
        F = F[:, -width:]
    out = np.zeros((k, width))
    out[:, :F.shape[1]] = F
    return out


def psd_complete(Xs: Sequence[np.ndarray], td: TreeDecomposition, overlap_tol: float = 1e-6,
                 psd_tol: float = 1e-8) -> np.ndarray:
    """U (n x width) with (U U^T) restricted to every bag equal to that bag's matrix.

    Bags are visited in BFS order from each component root.  A child bag
    reuses the overlap rows of U, matches the cross block by least squares
    and fills the rest of its rows from the Schur complement in the directions
    orthogonal to the overlap rows.
    """
    _check_bags(td)
    if len(Xs) != td.n_bags:
        raise ValueError("one matrix per bag")
    bags = td.bags
    width = td.width
    n = td.n_vertices
    scale = max(1.0, max(float(np.max(np.abs(X))) for X in Xs))
    for a, b in td.edges:
        shared = sorted(set(bags[a]) & set(bags[b]))
        ia = [bags[a].index(v) for v in shared]
        ib = [bags[b].index(v) for v in shared]
        diff = np.max(np.abs(Xs[a][np.ix_(ia, ia)] - Xs[b][np.ix_(ib, ib)])) if shared else 0.0
        if diff > overlap_tol * scale:
            raise InconsistentMinors(f"bags {a} and {b} disagree on their overlap by {diff:.3g}")
    U = np.zeros((n, width))
    done = np.zeros(n, dtype=bool)
    depth, _ = _depths(td)
    order = sorted(range(td.n_bags), key=lambda j: (depth[j], j))
    for j in order:
        bag = list(bags[j])
        X = np.asarray(Xs[j], dtype=float)
        old = [a for a, v in enumerate(bag) if done[v]]
        new = [a for a, v in enumerate(bag) if not done[v]]
        if not new:
            continue
        if not old:
            U[np.asarray(bag)] = _psd_factor(X, width, psd_tol)
        else:
            Us = U[[bag[a] for a in old]]
            X_ns = X[np.ix_(new, old)]
            X_nn = X[np.ix_(new, new)]
            pinv = np.linalg.pinv(Us, rcond=1e-10)
            Un0 = X_ns @ pinv.T
            schur = X_nn - Un0 @ Un0.T
            # orthonormal basis of the complement of the row space of Us
            _, sv, Vt = np.linalg.svd(Us, full_matrices=True)
            rank = int(np.sum(sv > 1e-10 * max(1.0, sv[0] if sv.size else 1.0)))
            Q = Vt[rank:].T
            W = _psd_factor(schur, Q.shape[1], psd_tol)
            U[[bag[a] for a in new]] = Un0 + W @ Q.T
        for v in bag:
            done[v] = True
    if not done.all():
        raise CompletionFailure("some vertices are in no bag")
    G = U @ U.T
    for j, bag in enumerate(bags):
        idx = np.asarray(bag)
        err = np.max(np.abs(G[np.ix_(idx, idx)] - Xs[j]))
        if err > overlap_tol * scale:
            raise CompletionFailure(f"bag {j} is reproduced only to {err:.3g}")
    return U


# --------------------------------------------------------------------------
# applications
# --------------------------------------------------------------------------


def _entry(n: int, u: int, v: int, val: float = 1.0) -> sp.csr_matrix:
    """Symmetric matrix whose inner product with X is val * X_uv."""
    if u == v:
        return sp.csr_matrix(([val], ([u], [u])), shape=(n, n))
    return sp.csr_matrix(([val / 2.0, val / 2.0], ([u, v], [v, u])), shape=(n, n))


def build_maxcut_sdp(graph: Graph, k: int = 2) -> SdpInstance:
    """maximize (k-1)/(2k) L . X with unit diagonal; k > 2 adds X_uv >= -1/(k-1) per edge."""
    if k < 2:
        raise ValueError("k must be at least 2")
    n = graph.n
    C = graph.laplacian() * ((k - 1) / (2.0 * k))
    A = [_entry(n, i, i) for i in range(n)]
    b = [1.0] * n
    kinds = [EQ] * n
    if k > 2:
        for u, v in graph.pairs():
            A.append(_entry(n, u, v))
            b.append(-1.0 / (k - 1))
            kinds.append(GE)
    name = "maxcut" if k == 2 else f"max{k}cut"
    return SdpInstance(n, C, A, np.asarray(b), kinds, sense="max", R=float(n), r=0.5, name=name,
                       meta={"problem": name, "k": k})


def build_lovasz_theta(graph: Graph) -> SdpInstance:
    """minimize [[I, 1], [1^T, 0]] . X with X_uv = 0 on non-edges and X_oo = 1.

    The apex o is vertex n.  The optimum is negative; ``meta["value"]`` holds
    the map from optimum to the reported number (its negation).
    """
    n = graph.n
    N = n + 1
    rows, cols, vals = list(range(n)), list(range(n)), [1.0] * n
    for i in range(n):
        rows += [i, n]
        cols += [n, i]
        vals += [1.0, 1.0]
    C = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    non_edges = graph.complement().pairs()
    A = [_entry(N, u, v) for u, v in non_edges] + [_entry(N, n, n)]
    b = [0.0] * len(non_edges) + [1.0]
    return SdpInstance(N, C, A, np.asarray(b), sense="min", R=float(N), r=0.5, name="theta",
                       meta={"problem": "theta", "value": "negated"})


def theta_decomposition(td_complement: TreeDecomposition) -> TreeDecomposition:
    """Add the apex vertex to every bag of a decomposition of the complement graph."""
    apex = td_complement.n_vertices
    return TreeDecomposition([tuple(b) + (apex,) for b in td_complement.bags], list(td_complement.edges),
                             apex + 1)


def build_matrix_completion(n: int, omega: Dict[Tuple[int, int], float]) -> SdpInstance:
    """minimize I . Y over 2n x 2n PSD Y with Y_{i, n+j} = B_ij on the observed cells."""
    N = 2 * n
    A, b = [], []
    for (i, j), val in sorted(omega.items()):
        if not (0 <= i < n and 0 <= j < n):
            raise ParseError(f"observed cell ({i},{j}) is out of range")
        A.append(_entry(N, i, n + j))
        b.append(float(val))
    R = float(N) + 2.0 * float(sum(abs(v) for v in omega.values()))
    return SdpInstance(N, sp.identity(N, format="csr"), A, np.asarray(b), sense="min", R=R, r=0.5,
                       name="completion", meta={"problem": "completion"})


def completion_graph(n: int, omega: Iterable[Tuple[int, int]]) -> Graph:
    return Graph(n, sorted({(min(i, j), max(i, j)) for i, j in omega if i != j}))


def completion_decomposition(td: TreeDecomposition) -> TreeDecomposition:
    """Replace every bag S by {i, i + n : i in S}."""
    n = td.n_vertices
    return TreeDecomposition([tuple(b) + tuple(v + n for v in b) for b in td.bags], list(td.edges), 2 * n)


def build_box_lp(A, b, c, lower, upper) -> GeneralProgram:
    """min c^T x subject to A x = b and lower < x < upper, one box block per variable."""
    A = sp.csr_matrix(A, dtype=float)
    n = A.shape[1]
    lo = np.broadcast_to(np.asarray(lower, float), (n,))
    hi = np.broadcast_to(np.asarray(upper, float), (n,))
    barriers = [BlockBarrier.box(lo[i:i + 1], hi[i:i + 1]) for i in range(n)]
    P = GeneralProgram(A, b, c, barriers, name="box-lp")
    R = float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))
    r = float(np.min(hi - lo)) / 2.0 if n else 1.0
    return P.with_geometry(max(R, 1e-12), r)


# --------------------------------------------------------------------------
# parsers
# --------------------------------------------------------------------------


def _lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("%")[0].strip()
        if line and not line.startswith(("c ", "#", '"', "*")) and line != "c":
            yield lineno, line


def read_graph(text: str) -> Graph:
    """Edge list: ``p <n> <m>`` header then ``e u v [w]`` lines, vertices numbered from 1."""
    n = m = None
    edges = []
    for lineno, line in _lines(text):
        tok = line.split()
        try:
            if tok[0] == "p":
                if len(tok) < 3:
                    raise ParseError(f"line {lineno}: header needs n and m")
                n, m = int(tok[-2]), int(tok[-1])
            elif tok[0] == "e":
                if n is None:
                    raise ParseError(f"line {lineno}: edge before header")
                if len(tok) not in (3, 4):
                    raise ParseError(f"line {lineno}: malformed edge")
                u, v = int(tok[1]) - 1, int(tok[2]) - 1
                edges.append((u, v, float(tok[3])) if len(tok) == 4 else (u, v))
            else:
                raise ParseError(f"line {lineno}: unknown record {tok[0]!r}")
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
    if n is None:
        raise ParseError("missing 'p' header")
    if m is not None and m != len(edges):
        raise ParseError(f"header announces {m} edges, found {len(edges)}")
    return Graph(n, edges)


def write_graph(g: Graph) -> str:
    out = [f"p edge {g.n} {len(g.edges)}"]
    for u, v, w in g.edges:
        out.append(f"e {u + 1} {v + 1}" + ("" if w == 1.0 else f" {w!r}"))
    return "\n".join(out) + "\n"


def read_sdpa(text: str) -> SdpInstance:
    """Sparse SDPA with a single PSD block, read as: maximize F0 . X s.t. Fi . X = ci."""
    toks: List[Tuple[int, str]] = []
    for lineno, line in _lines(text.replace("{", " ").replace("}", " ").replace(",", " ")
                               .replace("(", " ").replace(")", " ")):
        toks.extend((lineno, t) for t in line.split())
    try:
        pos = 0
        m = int(toks[pos][1]); pos += 1
        nblocks = int(toks[pos][1]); pos += 1
        if nblocks != 1:
            raise ParseError("only a single block is supported")
        n = int(toks[pos][1]); pos += 1
        if n <= 0:
            raise ParseError("the block must be a positive-size PSD block")
        cvec = np.array([float(toks[pos + i][1]) for i in range(m)]); pos += m
        ent: Dict[int, List[Tuple[int, int, float]]] = {i: [] for i in range(m + 1)}
        rest = toks[pos:]
        if len(rest) % 5:
            raise ParseError(f"line {rest[-1][0]}: entry lines need five fields")
        for q in range(0, len(rest), 5):
            mat, blk, i, j = (int(t[1]) for t in rest[q:q + 4])
            val = float(rest[q + 4][1])
            if blk != 1 or not (0 <= mat <= m) or not (1 <= i <= n and 1 <= j <= n):
                raise ParseError(f"line {rest[q][0]}: entry out of range")
            ent[mat].append((i - 1, j - 1, val))
    except (IndexError, ValueError) as exc:
        raise ParseError(f"malformed SDPA input: {exc}") from exc

    def mk(lst):
        rows, cols, vals = [], [], []
        for i, j, v in lst:
            rows.append(i); cols.append(j); vals.append(v)
            if i != j:
                rows.append(j); cols.append(i); vals.append(v)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    return SdpInstance(n, mk(ent[0]), [mk(ent[i]) for i in range(1, m + 1)], cvec, sense="max",
                       name="sdpa")


def _triplets(n: int, trip) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for i, j, v in trip:
        i, j, v = int(i), int(j), float(v)
        rows.append(i); cols.append(j); vals.append(v)
        if i != j:
            rows.append(j); cols.append(i); vals.append(v)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def read_sdp_json(text: str) -> SdpInstance:
    """JSON with n, sense, C and constraints [{A, b, type}]; matrices as [i, j, v] triplets
    (0-based, each off-diagonal pair listed once), optional R and r."""
    try:
        d = json.loads(text)
        n = int(d["n"])
        cons = d.get("constraints", [])
        A = [_triplets(n, con["A"]) for con in cons]
        b = [float(con["b"]) for con in cons]
        kinds = [_SENSE_NAMES[str(con.get("type", "eq")).lower()] for con in cons]
        return SdpInstance(n, _triplets(n, d.get("C", [])), A, np.asarray(b), kinds,
                           sense=d.get("sense", "min"), R=d.get("R"), r=float(d.get("r", 0.5)),
                           name=d.get("name", "sdp"))
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ParseError(f"malformed SDP JSON: {exc}") from exc


def sdp_to_json(sdp: SdpInstance) -> str:
    def trip(M):
        U = sp.triu(M).tocoo()
        return [[int(i), int(j), float(v)] for i, j, v in zip(U.row, U.col, U.data)]
    names = {EQ: "eq", GE: "ge", LE: "le"}
    return json.dumps({"n": sdp.n, "sense": sdp.sense, "R": sdp.R, "r": sdp.r, "name": sdp.name,
                       "C": trip(sdp.C),
                       "constraints": [{"A": trip(Ai), "b": float(bi), "type": names[k]}
                                       for Ai, bi, k in zip(sdp.A, sdp.b, sdp.kinds)]}, indent=1)


def read_lp_json(text: str) -> GeneralProgram:
    """JSON with shape [m, n], A as [i, j, v] triplets, b, c, lower, upper."""
    try:
        d = json.loads(text)
        m, n = (int(v) for v in d["shape"])
        trip = d.get("A", [])
        rows = [int(t[0]) for t in trip]
        cols = [int(t[1]) for t in trip]
        vals = [float(t[2]) for t in trip]
        if any(not (0 <= i < m) for i in rows) or any(not (0 <= j < n) for j in cols):
            raise ValueError("A entry out of range")
        A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
        b = np.asarray(d.get("b", [0.0] * m), float)
        c = np.asarray(d["c"], float)
        lower = np.asarray(d.get("lower", 0.0), float)
        upper = np.asarray(d.get("upper", 1.0), float)
        if b.shape != (m,) or c.shape != (n,):
            raise ValueError("b or c has the wrong length")
        return build_box_lp(A, b, c, lower, upper)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ParseError(f"malformed LP JSON: {exc}") from exc


def lp_to_json(A, b, c, lower, upper) -> str:
    A = sp.coo_matrix(A)
    return json.dumps({"shape": list(A.shape),
                       "A": [[int(i), int(j), float(v)] for i, j, v in zip(A.row, A.col, A.data)],
                       "b": [float(v) for v in b], "c": [float(v) for v in c],
                       "lower": np.broadcast_to(np.asarray(lower, float), (A.shape[1],)).tolist(),
                       "upper": np.broadcast_to(np.asarray(upper, float), (A.shape[1],)).tolist()})
