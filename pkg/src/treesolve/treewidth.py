"""Tree decompositions, block elimination trees and partition trees."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import ParseError, UnsupportedSparsity

Edge = Tuple[int, int]


# --------------------------------------------------------------------------
# tree decompositions
# --------------------------------------------------------------------------


@dataclass
class TreeDecomposition:
    """Bags over vertices ``0..n_vertices-1`` joined by tree edges."""

    bags: List[Tuple[int, ...]]
    edges: List[Edge]
    n_vertices: int = -1

    def __post_init__(self) -> None:
        self.bags = [tuple(sorted(set(int(v) for v in b))) for b in self.bags]
        self.edges = [(int(a), int(b)) for a, b in self.edges]
        if self.n_vertices < 0:
            self.n_vertices = 1 + max((max(b) for b in self.bags if b), default=-1)

    @property
    def n_bags(self) -> int:
        return len(self.bags)

    @property
    def width(self) -> int:
        """Largest bag size (tau, which is treewidth + 1)."""
        return max((len(b) for b in self.bags), default=0)

    def adjacency(self) -> List[List[int]]:
        adj: List[List[int]] = [[] for _ in self.bags]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        for lst in adj:
            lst.sort()
        return adj

    def max_degree(self) -> int:
        return max((len(a) for a in self.adjacency()), default=0)


@dataclass
class Validation:
    ok: bool
    message: str = "ok"
    kind: str = ""
    item: Optional[Tuple[int, ...]] = None

    def __bool__(self) -> bool:
        return self.ok


def _is_tree(n: int, edges: Sequence[Edge]) -> Optional[str]:
    if n == 0:
        return None
    if len(edges) != n - 1:
        return f"tree has {len(edges)} edges for {n} bags"
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        if not (0 <= a < n and 0 <= b < n):
            return f"tree edge ({a},{b}) out of range"
        ra, rb = find(a), find(b)
        if ra == rb:
            return f"tree edge ({a},{b}) closes a cycle"
        parent[ra] = rb
    return None


def validate_decomposition(graph_edges: Iterable[Edge], td: TreeDecomposition,
                           n_vertices: Optional[int] = None) -> Validation:
    """Check edge coverage and connectivity of every vertex's bag set."""
    err = _is_tree(td.n_bags, td.edges)
    if err:
        return Validation(False, err, "tree")
    n = td.n_vertices if n_vertices is None else n_vertices
    where: Dict[int, List[int]] = {}
    for j, bag in enumerate(td.bags):
        for v in bag:
            where.setdefault(v, []).append(j)
    bagsets = [set(b) for b in td.bags]
    for a, b in graph_edges:
        a, b = int(a), int(b)
        if a == b:
            continue
        cand = where.get(a, [])
        if not any(b in bagsets[j] for j in cand):
            return Validation(False, f"edge ({a},{b}) is not covered by any bag", "edge", (a, b))
    adj = td.adjacency()
    for v in range(n):
        js = where.get(v)
        if not js:
            return Validation(False, f"vertex {v} is in no bag", "vertex", (v,))
        inset = set(js)
        seen = {js[0]}
        stack = [js[0]]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w in inset and w not in seen:
                    seen.add(w)
                    stack.append(w)
        if len(seen) != len(inset):
            return Validation(False, f"bags containing vertex {v} are not connected", "vertex", (v,))
    return Validation(True)


def reduce_degree(td: TreeDecomposition) -> TreeDecomposition:
    """Split high-degree bags into chains of copies so every degree is at most 3."""
    if td.n_bags <= 1:
        return TreeDecomposition(list(td.bags), list(td.edges), td.n_vertices)
    adj = td.adjacency()
    bags = list(td.bags)
    edges: List[Edge] = []
    order = [0]
    par = {0: -1}
    for u in order:
        for w in adj[u]:
            if w != par[u]:
                par[w] = u
                order.append(w)
    for u in order:
        kids = [w for w in adj[u] if w != par[u]]
        anchor = u
        # anchor keeps one child plus a copy while more than two remain
        while len(kids) > 2:
            edges.append((anchor, kids.pop(0)))
            copy = len(bags)
            bags.append(bags[u])
            edges.append((anchor, copy))
            anchor = copy
        for w in kids:
            edges.append((anchor, w))
    return TreeDecomposition(bags, edges, td.n_vertices)


# PACE format ------------------------------------------------------------------


def read_pace_td(text: str) -> TreeDecomposition:
    header = None
    bags: Dict[int, Tuple[int, ...]] = {}
    edges: List[Edge] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        tok = line.split()
        try:
            if tok[0] == "s":
                if len(tok) != 5 or tok[1] != "td":
                    raise ParseError(f"line {lineno}: bad header")
                header = (int(tok[2]), int(tok[3]), int(tok[4]))
            elif tok[0] == "b":
                if header is None:
                    raise ParseError(f"line {lineno}: bag before header")
                bags[int(tok[1])] = tuple(int(v) - 1 for v in tok[2:])
            else:
                if header is None:
                    raise ParseError(f"line {lineno}: edge before header")
                if len(tok) != 2:
                    raise ParseError(f"line {lineno}: malformed edge")
                edges.append((int(tok[0]) - 1, int(tok[1]) - 1))
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
    if header is None:
        raise ParseError("missing 's td' header")
    nb, _, nv = header
    if sorted(bags) != list(range(1, nb + 1)):
        raise ParseError("bag ids must be 1..#bags")
    for b in bags.values():
        if any(v < 0 or v >= nv for v in b):
            raise ParseError("bag vertex out of range")
    return TreeDecomposition([bags[i] for i in range(1, nb + 1)], edges, nv)


def write_pace_td(td: TreeDecomposition) -> str:
    lines = [f"s td {td.n_bags} {td.width} {td.n_vertices}"]
    for j, b in enumerate(td.bags, 1):
        lines.append("b " + " ".join([str(j)] + [str(v + 1) for v in b]))
    for a, b in td.edges:
        lines.append(f"{a + 1} {b + 1}")
    return "\n".join(lines) + "\n"


def min_degree_decomposition(n_vertices: int, graph_edges: Iterable[Edge]) -> TreeDecomposition:
    """Heuristic (non-optimal) decomposition from greedy min-degree elimination."""
    import networkx as nx
    from networkx.algorithms.approximation import treewidth_min_degree

    G = nx.Graph()
    G.add_nodes_from(range(n_vertices))
    G.add_edges_from((int(a), int(b)) for a, b in graph_edges if a != b)
    bags: List[Tuple[int, ...]] = []
    edges: List[Edge] = []
    offset = 0
    for comp in sorted(nx.connected_components(G), key=min):
        H = G.subgraph(comp)
        if H.number_of_nodes() == 1:
            tree = nx.Graph()
            tree.add_node(frozenset(comp))
        else:
            _, tree = treewidth_min_degree(H)
        nodes = sorted(tree.nodes, key=lambda b: (min(b), len(b), sorted(b)))
        idx = {b: offset + k for k, b in enumerate(nodes)}
        bags.extend(tuple(sorted(b)) for b in nodes)
        edges.extend(sorted((min(idx[a], idx[b]), max(idx[a], idx[b])) for a, b in tree.edges))
        if offset > 0:
            edges.append((0, offset))
        offset += len(nodes)
    return TreeDecomposition(bags, edges, n_vertices)


# --------------------------------------------------------------------------
# block elimination trees
# --------------------------------------------------------------------------


@dataclass
class BlockElimTree:
    """Rooted forest over constraint blocks, labelled in postorder."""

    parent: List[int]
    blocks: List[np.ndarray]
    children: List[List[int]] = field(init=False)
    depth: List[int] = field(init=False)

    def __post_init__(self) -> None:
        self.parent = [int(p) for p in self.parent]
        self.blocks = [np.asarray(sorted(int(c) for c in b), dtype=np.int64) for b in self.blocks]
        m = len(self.parent)
        self.children = [[] for _ in range(m)]
        for v, p in enumerate(self.parent):
            if p >= 0:
                if p <= v:
                    raise ValueError("labels must be a postorder (child < parent)")
                self.children[p].append(v)
        self.depth = [0] * m
        for v in range(m - 1, -1, -1):
            p = self.parent[v]
            self.depth[v] = 1 if p < 0 else self.depth[p] + 1
        self._paths: Dict[int, List[int]] = {}

    @property
    def m(self) -> int:
        return len(self.parent)

    @property
    def eta(self) -> int:
        """Maximum number of blocks on a root path."""
        return max(self.depth, default=0)

    @property
    def m_max(self) -> int:
        return max((len(b) for b in self.blocks), default=0)

    @property
    def sizes(self) -> List[int]:
        return [len(b) for b in self.blocks]

    @property
    def roots(self) -> List[int]:
        return [v for v, p in enumerate(self.parent) if p < 0]

    def n_items(self) -> int:
        return int(sum(len(b) for b in self.blocks))

    def path(self, v: int) -> List[int]:
        """Blocks from v up to its root, ascending labels."""
        p = self._paths.get(v)
        if p is None:
            p = [v]
            while self.parent[p[-1]] >= 0:
                p.append(self.parent[p[-1]])
            self._paths[v] = p
        return p

    def is_ancestor(self, a: int, v: int) -> bool:
        """True when a lies on the root path of v (a node is its own ancestor)."""
        while v >= 0 and v <= a:
            if v == a:
                return True
            v = self.parent[v]
        return False

    def block_of(self) -> np.ndarray:
        """Map from item (constraint) index to block label."""
        out = np.full(self.n_items(), -1, dtype=np.int64)
        for j, b in enumerate(self.blocks):
            out[b] = j
        return out

    def subtree_sizes(self) -> List[int]:
        size = [1] * self.m
        for v in range(self.m):
            p = self.parent[v]
            if p >= 0:
                size[p] += size[v]
        return size

    def check_edges(self, item_edges: Iterable[Edge]) -> Optional[Edge]:
        """First interaction edge whose blocks are not ancestor-related, if any."""
        blk = self.block_of()
        for a, b in item_edges:
            u, v = int(blk[a]), int(blk[b])
            if u == v:
                continue
            lo, hi = min(u, v), max(u, v)
            if not self.is_ancestor(hi, lo):
                return (a, b)
        return None


@dataclass
class _Node:
    items: List[int]
    children: List["_Node"] = field(default_factory=list)


def _components(nodes: Set[int], adj: List[List[int]]) -> List[List[int]]:
    comps = []
    seen: Set[int] = set()
    for s in sorted(nodes):
        if s in seen:
            continue
        comp = [s]
        seen.add(s)
        stack = [s]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w in nodes and w not in seen:
                    seen.add(w)
                    comp.append(w)
                    stack.append(w)
        comps.append(sorted(comp))
    return comps


def _centroid(comp: List[int], adj: List[List[int]]) -> int:
    """Lowest-index node minimising the largest remaining component."""
    inset = set(comp)
    root = comp[0]
    order = [root]
    par = {root: -1}
    for u in order:
        for w in adj[u]:
            if w in inset and w != par[u]:
                par[w] = u
                order.append(w)
    size = {u: 1 for u in order}
    for u in reversed(order):
        if par[u] >= 0:
            size[par[u]] += size[u]
    k = len(comp)
    best, best_val = -1, k + 1
    for u in comp:
        worst = k - size[u]
        for w in adj[u]:
            if w in inset and w != par[u]:
                worst = max(worst, size[w])
        if worst < best_val:
            best, best_val = u, worst
    return best


def _centroid_recursion(td: TreeDecomposition, scalar: bool) -> List[_Node]:
    adj = td.adjacency()

    def build(comp: List[int], above: Set[int]) -> List[_Node]:
        c = _centroid(comp, adj)
        new = [v for v in td.bags[c] if v not in above]
        below = above | set(new)
        rest = set(comp) - {c}
        subs: List[_Node] = []
        for sub in _components(rest, adj):
            subs.extend(build(sub, below))
        if not new:
            return subs  # empty block elided, children re-parented
        if scalar:
            top = _Node([new[0]])
            cur = top
            for v in new[1:]:
                nxt = _Node([v])
                cur.children.append(nxt)
                cur = nxt
            cur.children.extend(subs)
            return [top]
        return [_Node(new, subs)]

    if td.n_bags == 0:
        return []
    roots: List[_Node] = []
    for comp in _components(set(range(td.n_bags)), adj):
        roots.extend(build(comp, set()))
    return roots


def _postorder(roots: List[_Node]) -> BlockElimTree:
    parent: List[int] = []
    blocks: List[List[int]] = []

    def visit(node: _Node) -> int:
        kids = [visit(ch) for ch in node.children]
        me = len(parent)
        parent.append(-1)
        blocks.append(node.items)
        for k in kids:
            parent[k] = me
        return me

    import sys

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 10000))
    try:
        for r in roots:
            visit(r)
    finally:
        sys.setrecursionlimit(limit)
    return BlockElimTree(parent, blocks)


def build_block_elim_tree(td: TreeDecomposition) -> BlockElimTree:
    """Centroid recursion with one block per bag (ancestor bags subtracted)."""
    return _postorder(_centroid_recursion(td, scalar=False))


def build_scalar_elim_tree(td: TreeDecomposition) -> BlockElimTree:
    """Centroid recursion where each bag becomes a path of singletons."""
    return _postorder(_centroid_recursion(td, scalar=True))


def merge_blocks(et: BlockElimTree, tau: int) -> BlockElimTree:
    """Absorb children smaller than ``tau`` into their parents, then cap degrees."""
    m = et.m
    items = [list(b) for b in et.blocks]
    kids = [list(c) for c in et.children]
    alive = [True] * m
    for v in range(m):
        new_kids: List[int] = []
        for c in kids[v]:
            if len(items[c]) < tau:
                items[v].extend(items[c])
                new_kids.extend(kids[c])
                alive[c] = False
            else:
                new_kids.append(c)
        kids[v] = new_kids

    def node(v: int) -> _Node:
        n = _Node(sorted(items[v]))
        n.children = _binary([node(c) for c in kids[v]])
        return n

    def _binary(subs: List[_Node]) -> List[_Node]:
        if len(subs) <= 2:
            return subs
        half = (len(subs) + 1) // 2
        return [_group(subs[:half]), _group(subs[half:])]

    def _group(subs: List[_Node]) -> _Node:
        if len(subs) == 1:
            return subs[0]
        return _Node([], _binary(subs))

    roots = [node(v) for v in range(m) if et.parent[v] < 0]
    return _postorder(roots)


# --------------------------------------------------------------------------
# heavy-light ordering and partition trees
# --------------------------------------------------------------------------


@dataclass
class HLOrdering:
    order: List[int]          # pi: position -> block
    pos: List[int]            # block -> position
    head: List[int]           # block -> top of its heavy chain
    size: List[int]           # subtree sizes

    def interval(self, v: int) -> Tuple[int, int]:
        return self.pos[v], self.pos[v] + self.size[v]


def heavy_light_order(et: BlockElimTree) -> HLOrdering:
    size = et.subtree_sizes()
    order: List[int] = []
    head = [-1] * et.m
    for r in sorted(et.roots, reverse=True):
        stack = [(r, r)]
        while stack:
            v, h = stack.pop()
            order.append(v)
            head[v] = h
            kids = sorted(et.children[v], key=lambda c: (-size[c], c))
            # push light children first so the heavy one is visited next
            for c in reversed(kids[1:]):
                stack.append((c, c))
            if kids:
                stack.append((kids[0], h))
    pos = [0] * et.m
    for k, v in enumerate(order):
        pos[v] = k
    return HLOrdering(order, pos, head, size)


def path_intervals(et: BlockElimTree, hl: HLOrdering, v: int) -> List[Tuple[int, int]]:
    """Contiguous pi-intervals covering the root path of v."""
    out = []
    while v >= 0:
        h = hl.head[v]
        out.append((hl.pos[h], hl.pos[v] + 1))
        v = et.parent[h]
    return out


@dataclass
class PartitionTree:
    """Hierarchy over variable blocks; the top part B is a balanced tree over pi."""

    parent: List[int]
    children: List[List[int]]
    lo: List[int]             # chi(v) = var_order[lo:hi]
    hi: List[int]
    is_b: List[bool]
    b_lo: List[int]           # for B nodes: pi interval of elimination blocks below
    b_hi: List[int]
    leaf_var: List[int]       # variable id for variable leaves, else -1
    var_order: List[int]
    low: List[int]            # variable -> anchor block
    var_leaf: List[int]       # variable -> its leaf node
    b_leaf: List[int]         # elimination block -> its B leaf node
    root: int
    lam: Dict[int, List[int]] = field(default_factory=dict)      # Lambda(v), ascending
    lam_bar: Dict[int, List[int]] = field(default_factory=dict)  # Lambda-bar(v), ascending
    lam_circ: List[int] = field(default_factory=list)            # block u -> Lambda-circle(u)

    @property
    def size(self) -> int:
        return len(self.parent)

    def chi(self, v: int) -> List[int]:
        return self.var_order[self.lo[v]:self.hi[v]]

    def ancestors(self, v: int) -> List[int]:
        out = []
        while v >= 0:
            out.append(v)
            v = self.parent[v]
        return out

    def b_ancestors(self, v: int) -> List[int]:
        return [u for u in self.ancestors(v) if self.is_b[u]]

    @property
    def bottom_up(self) -> List[int]:
        """Every node after all of its descendants (reverse BFS from the root)."""
        cached = self.__dict__.get("_bottom_up")
        if cached is None:
            order = [self.root]
            for u in order:
                order.extend(self.children[u])
            cached = order[::-1]
            self.__dict__["_bottom_up"] = cached
        return cached

    def depth(self) -> int:
        best = 0
        for leaf in range(self.size):
            if not self.children[leaf]:
                best = max(best, len(self.ancestors(leaf)))
        return best


def variable_anchors(et: BlockElimTree, touched: Sequence[Iterable[int]]) -> List[int]:
    """Deepest touched block per variable; raises when touches leave one root path."""
    low = []
    fallback = et.m - 1
    for i, blocks in enumerate(touched):
        blocks = sorted(set(int(b) for b in blocks))
        if not blocks:
            low.append(fallback)
            continue
        deepest = max(blocks, key=lambda b: (et.depth[b], -b))
        for b in blocks:
            if not et.is_ancestor(b, deepest):
                raise UnsupportedSparsity(
                    f"variable block {i} touches blocks {deepest} and {b} off one root path")
        low.append(deepest)
    return low


def touched_blocks(A, et: BlockElimTree, col_sig: Sequence[int]) -> List[Set[int]]:
    """Constraint blocks touched by each variable block of a scipy/dense matrix A."""
    import scipy.sparse as sp

    blk = et.block_of()
    Ac = sp.csc_matrix(A)
    off = np.concatenate([[0], np.cumsum(col_sig)]).astype(int)
    out = []
    for i in range(len(col_sig)):
        rows = Ac.indices[Ac.indptr[off[i]]:Ac.indptr[off[i + 1]]]
        out.append(set(int(b) for b in blk[rows]))
    return out


def build_partition_tree(A, et: BlockElimTree, hl: HLOrdering,
                         col_sig: Optional[Sequence[int]] = None) -> PartitionTree:
    """Partition tree over variable blocks.

    ``A`` is either a SparseBlockMatrix whose row blocks are the elimination
    blocks, or a scipy/dense matrix over original constraint indices together
    with the variable block signature ``col_sig``.
    """
    from .linalg import SparseBlockMatrix

    if isinstance(A, SparseBlockMatrix):
        touched: List[Set[int]] = [set() for _ in A.col_sig]
        for (bi, bj) in A.blocks:
            touched[bj].add(bi)
    else:
        if col_sig is None:
            raise ValueError("col_sig required for a plain matrix")
        touched = touched_blocks(A, et, col_sig)
    low = variable_anchors(et, touched)
    n = len(low)
    m = et.m
    var_order = sorted(range(n), key=lambda i: (hl.pos[low[i]], i))
    by_block: Dict[int, List[int]] = {}
    for i in var_order:
        by_block.setdefault(low[i], []).append(i)
    first_var_pos = [0] * (m + 1)
    counts = [len(by_block.get(hl.order[p], [])) for p in range(m)]
    for p in range(m):
        first_var_pos[p + 1] = first_var_pos[p] + counts[p]

    parent: List[int] = []
    children: List[List[int]] = []
    lo: List[int] = []
    hi: List[int] = []
    is_b: List[bool] = []
    b_lo: List[int] = []
    b_hi: List[int] = []
    leaf_var: List[int] = []
    var_leaf = [-1] * n
    b_leaf = [-1] * m

    def new(par: int, l: int, h: int, isb: bool, bl: int = -1, bh: int = -1, lv: int = -1) -> int:
        k = len(parent)
        parent.append(par)
        children.append([])
        lo.append(l)
        hi.append(h)
        is_b.append(isb)
        b_lo.append(bl)
        b_hi.append(bh)
        leaf_var.append(lv)
        if par >= 0:
            children[par].append(k)
        return k

    def var_tree(par: int, l: int, h: int) -> None:
        if h - l == 1:
            v = new(par, l, h, False, lv=var_order[l])
            var_leaf[var_order[l]] = v
            return
        v = new(par, l, h, False)
        mid = (l + h + 1) // 2
        var_tree(v, l, mid)
        var_tree(v, mid, h)

    def b_tree(par: int, a: int, b: int) -> int:
        v = new(par, first_var_pos[a], first_var_pos[b], True, a, b)
        if b - a == 1:
            b_leaf[hl.order[a]] = v
            if hi[v] > lo[v]:
                var_tree(v, lo[v], hi[v])
        else:
            mid = (a + b + 1) // 2
            b_tree(v, a, mid)
            b_tree(v, mid, b)
        return v

    if m == 0:
        raise UnsupportedSparsity("partition tree needs at least one constraint block")
    root = b_tree(-1, 0, m)
    pt = PartitionTree(parent, children, lo, hi, is_b, b_lo, b_hi, leaf_var, var_order,
                       low, var_leaf, b_leaf, root)
    _fill_lambda(pt, et, hl)
    return pt


def _fill_lambda(pt: PartitionTree, et: BlockElimTree, hl: HLOrdering) -> None:
    """Lambda(v): blocks with descendants both inside and outside chi-bar(v)."""
    for v in range(pt.size):
        if not pt.is_b[v]:
            continue
        a, b = pt.b_lo[v], pt.b_hi[v]
        cand = set(et.path(hl.order[a])) | set(et.path(hl.order[b - 1]))
        lam = []
        for u in cand:
            s, e = hl.interval(u)
            if s < b and e > a and not (a <= s and e <= b):
                lam.append(u)
        pt.lam[v] = sorted(lam)
        # Lambda-bar: blocks whose whole subtree sits inside [a,b)
        pt.lam_bar[v] = sorted(hl.order[p] for p in range(a, b)
                               if hl.interval(hl.order[p])[1] <= b)
    circ = []
    for u in range(et.m):
        s, e = hl.interval(u)
        v = pt.root
        while True:
            nxt = -1
            for c in pt.children[v]:
                if pt.is_b[c] and pt.b_lo[c] <= s and e <= pt.b_hi[c]:
                    nxt = c
                    break
            if nxt < 0:
                break
            v = nxt
        circ.append(v)
    pt.lam_circ = circ
