import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from treesolve.errors import ParseError, UnsupportedSparsity
from treesolve.linalg import SparseBlockMatrix
from treesolve.treewidth import (BlockElimTree, TreeDecomposition, build_block_elim_tree, build_partition_tree,
                                 build_scalar_elim_tree, heavy_light_order, merge_blocks, min_degree_decomposition,
                                 path_intervals, read_pace_td, reduce_degree, validate_decomposition,
                                 write_pace_td)

seeds = st.integers(0, 2**31 - 1)


def random_graph(rng, n, p):
    return [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < p]


def random_tree(rng, m):
    """Parent array with child < parent (a single root at m - 1)."""
    return [int(rng.integers(v + 1, m)) for v in range(m - 1)] + [-1]


# validation -------------------------------------------------------------------

def test_validate_single_bag_triangle():
    assert validate_decomposition([(0, 1), (1, 2), (0, 2)], TreeDecomposition([(0, 1, 2)], []))


def test_validate_path():
    assert validate_decomposition([(0, 1), (1, 2)], TreeDecomposition([(0, 1), (1, 2)], [(0, 1)]))


def test_validate_uncovered_edge():
    res = validate_decomposition([(0, 1), (1, 2)], TreeDecomposition([(0, 1), (2,)], [(0, 1)]))
    assert not res.ok and res.kind == "edge" and res.item == (1, 2)


def test_validate_disconnected_vertex():
    td = TreeDecomposition([(0, 1), (2,), (0, 2)], [(0, 1), (1, 2)])
    res = validate_decomposition([(0, 1), (0, 2)], td)
    assert not res.ok and res.kind == "vertex" and res.item == (0,)


def test_validate_not_a_tree():
    td = TreeDecomposition([(0,), (0,), (0,)], [(0, 1), (1, 2), (2, 0)])
    assert validate_decomposition([], td).kind == "tree"


# degree reduction -------------------------------------------------------------

def test_reduce_degree_star():
    td = TreeDecomposition([(0, 1, 2)] + [(0, i) for i in range(3, 8)], [(0, i) for i in range(1, 6)])
    out = reduce_degree(td)
    assert out.n_bags <= 2 * td.n_bags
    assert out.max_degree() <= 3
    assert out.width == td.width


def test_reduce_degree_path_and_single_bag_unchanged():
    path = TreeDecomposition([(0, 1), (1, 2), (2, 3)], [(0, 1), (1, 2)])
    assert reduce_degree(path).bags == path.bags
    assert sorted(reduce_degree(path).edges) == sorted(path.edges)
    one = TreeDecomposition([(0, 1)], [])
    assert reduce_degree(one).bags == one.bags


@given(seeds, st.integers(2, 25), st.floats(0.05, 0.5))
def test_reduce_degree_preserves_validity(seed, n, p):
    rng = np.random.default_rng(seed)
    edges = random_graph(rng, n, p)
    td = min_degree_decomposition(n, edges)
    assert validate_decomposition(edges, td)
    out = reduce_degree(td)
    assert validate_decomposition(edges, out)
    assert out.max_degree() <= 3
    assert out.width == td.width
    assert out.n_bags <= 2 * td.n_bags


# PACE format ------------------------------------------------------------------

def test_pace_roundtrip():
    td = TreeDecomposition([(0, 1), (1, 2), (2, 3, 4)], [(0, 1), (1, 2)], 5)
    text = write_pace_td(td)
    assert text.splitlines()[0] == "s td 3 3 5"
    back = read_pace_td(text)
    assert back.bags == td.bags and back.edges == td.edges and back.n_vertices == 5


@pytest.mark.parametrize("text", [
    "b 1 1 2\n",
    "s td 1 2\n",
    "s td 2 2 2\nb 1 1 2\n",
    "s td 1 2 2\nb 1 1 9\n",
    "s td 1 2 2\nb 1 1 x\n",
])
def test_pace_errors(text):
    with pytest.raises(ParseError):
        read_pace_td(text)


# elimination trees ------------------------------------------------------------

def test_block_elim_tree_single_bag():
    et = build_block_elim_tree(TreeDecomposition([(0, 1, 2)], []))
    assert et.parent == [-1] and list(et.blocks[0]) == [0, 1, 2]


def test_block_elim_tree_path_of_seven():
    td = TreeDecomposition([(i, i + 1) for i in range(7)], [(i, i + 1) for i in range(6)])
    assert build_block_elim_tree(td).eta <= 3


def test_block_elim_tree_binary_fifteen():
    td = TreeDecomposition([(i,) for i in range(15)], [((i - 1) // 2, i) for i in range(1, 15)])
    assert build_block_elim_tree(td).eta <= 4


def test_scalar_elim_tree_examples():
    et = build_scalar_elim_tree(TreeDecomposition([(0, 1, 2)], []))
    assert et.m == 3 and et.eta == 3 and all(len(b) == 1 for b in et.blocks)
    et = build_scalar_elim_tree(TreeDecomposition([(0, 1), (1, 2), (2, 3)], [(0, 1), (1, 2)]))
    assert et.eta <= 4


def test_scalar_elim_tree_elides_contained_bag():
    et = build_scalar_elim_tree(TreeDecomposition([(0, 1), (0,), (1, 2)], [(0, 1), (0, 2)]))
    assert sorted(int(b[0]) for b in et.blocks) == [0, 1, 2]
    assert all(len(b) == 1 for b in et.blocks)


@given(seeds, st.integers(1, 40), st.floats(0.05, 0.4), st.booleans())
def test_elim_tree_invariants(seed, n, p, scalar):
    rng = np.random.default_rng(seed)
    edges = random_graph(rng, n, p)
    td = reduce_degree(min_degree_decomposition(n, edges))
    et = (build_scalar_elim_tree if scalar else build_block_elim_tree)(td)
    items = sorted(int(i) for b in et.blocks for i in b)
    assert items == list(range(n))
    assert all(p < 0 or p > v for v, p in enumerate(et.parent))
    assert et.check_edges(edges) is None
    if not scalar:
        assert et.m <= td.n_bags
        assert et.eta <= math.ceil(math.log(max(td.n_bags, 1), 1.5)) + 1


def test_check_edges_reports_violation():
    et = BlockElimTree([2, 2, -1], [[0], [1], [2]])
    assert et.check_edges([(0, 2), (1, 2)]) is None
    assert et.check_edges([(0, 1)]) == (0, 1)


def test_postorder_enforced():
    with pytest.raises(ValueError):
        BlockElimTree([-1, 0], [[0], [1]])


# merging ----------------------------------------------------------------------

def test_merge_no_merges_when_blocks_large():
    et = BlockElimTree([2, 2, -1], [[0, 1, 2], [3, 4, 5], [6, 7, 8]])
    out = merge_blocks(et, 3)
    assert out.parent == et.parent
    assert [list(b) for b in out.blocks] == [list(b) for b in et.blocks]


def test_merge_path_of_ten():
    et = BlockElimTree(list(range(1, 10)) + [-1], [[i] for i in range(10)])
    out = merge_blocks(et, 3)
    assert out.m <= 4
    assert sorted(int(i) for b in out.blocks for i in b) == list(range(10))


def test_merge_star_degree_repair():
    et = BlockElimTree([8] * 8 + [-1], [[i] for i in range(8)] + [list(range(8, 20))])
    out = merge_blocks(et, 1)
    assert out.m - et.m <= 8
    assert max(len(c) for c in out.children) <= 2


@given(seeds, st.integers(2, 60), st.integers(1, 6))
def test_merge_preserves_ancestry(seed, m, tau):
    rng = np.random.default_rng(seed)
    et = BlockElimTree(random_tree(rng, m), [[i] for i in range(m)])
    out = merge_blocks(et, tau)
    blk = out.block_of()
    for v in range(m):
        for a in et.path(v):
            assert out.is_ancestor(int(blk[a]), int(blk[v]))
    assert max(len(c) for c in out.children) <= 2


# heavy-light ------------------------------------------------------------------

def test_hl_rooted_path():
    et = BlockElimTree([1, 2, 3, -1], [[i] for i in range(4)])
    hl = heavy_light_order(et)
    assert hl.order == [3, 2, 1, 0]
    assert len(set(hl.head)) == 1


def test_hl_single_node():
    hl = heavy_light_order(BlockElimTree([-1], [[0]]))
    assert hl.order == [0] and hl.interval(0) == (0, 1)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_hl_perfect_binary_chain_count(d):
    # nodes labelled in postorder of a perfect binary tree of depth d
    parent = []

    def build(depth):
        if depth == 0:
            parent.append(-1)
            return len(parent) - 1
        left, right = build(depth - 1), build(depth - 1)
        parent.append(-1)
        me = len(parent) - 1
        parent[left] = parent[right] = me
        return me

    build(d)
    et = BlockElimTree(parent, [[i] for i in range(len(parent))])
    hl = heavy_light_order(et)
    for v in range(et.m):
        if not et.children[v]:
            assert len(path_intervals(et, hl, v)) <= d + 1


@given(seeds, st.integers(1, 200))
def test_hl_contiguity_and_chain_bound(seed, m):
    rng = np.random.default_rng(seed)
    et = BlockElimTree(random_tree(rng, m), [[i] for i in range(m)])
    hl = heavy_light_order(et)
    assert sorted(hl.order) == list(range(m))
    desc = [[v] for v in range(m)]
    for v in range(m):
        p = et.parent[v]
        if p >= 0:
            desc[p].extend(desc[v])
    for v in range(m):
        s, e = hl.interval(v)
        assert sorted(hl.pos[u] for u in desc[v]) == list(range(s, e))
        ivs = path_intervals(et, hl, v)
        assert len(ivs) <= 2 * math.ceil(math.log2(max(m, 2))) + 1
        covered = sorted(p for a, b in ivs for p in range(a, b))
        assert covered == sorted(hl.pos[u] for u in et.path(v))


# partition trees --------------------------------------------------------------

def _path_program(rng, et, n_vars):
    """Each variable block touches a random root path segment ending at a random block."""
    touched = []
    blocks = {}
    for j in range(n_vars):
        v = int(rng.integers(et.m))
        path = et.path(v)
        keep = path[:int(rng.integers(1, len(path) + 1))]
        touched.append(set(keep))
        for b in keep:
            blocks[(b, j)] = rng.normal(size=(len(et.blocks[b]), 1)) + 5.0
    A = SparseBlockMatrix(tuple(et.sizes), (1,) * n_vars, blocks)
    return A, touched


def test_partition_tree_single_constraint_block():
    et = BlockElimTree([-1], [[0]])
    A = SparseBlockMatrix((1,), (1,) * 5, {(0, j): np.ones((1, 1)) for j in range(5)})
    pt = build_partition_tree(A, et, heavy_light_order(et))
    root = pt.root
    assert pt.is_b[root] and sorted(pt.chi(root)) == list(range(5))
    assert sum(1 for v in range(pt.size) if pt.leaf_var[v] >= 0) == 5


def test_partition_tree_block_diagonal():
    et = BlockElimTree([2, 2, -1], [[0], [1], [2]])
    A = SparseBlockMatrix((1, 1, 1), (1,) * 6, {(j % 3, j): np.ones((1, 1)) for j in range(6)})
    pt = build_partition_tree(A, et, heavy_light_order(et))
    for b in range(3):
        assert sorted(pt.chi(pt.b_leaf[b])) == [j for j in range(6) if j % 3 == b]


def test_partition_tree_rejects_off_path():
    et = BlockElimTree([2, 2, -1], [[0], [1], [2]])
    A = SparseBlockMatrix((1, 1, 1), (1,), {(0, 0): np.ones((1, 1)), (1, 0): np.ones((1, 1))})
    with pytest.raises(UnsupportedSparsity):
        build_partition_tree(A, et, heavy_light_order(et))


@given(seeds, st.integers(1, 30), st.integers(1, 40))
def test_partition_tree_invariants(seed, m, n):
    rng = np.random.default_rng(seed)
    et = BlockElimTree(random_tree(rng, m), [[i] for i in range(m)])
    A, touched = _path_program(rng, et, n)
    pt = build_partition_tree(A, et, heavy_light_order(et))
    assert sorted(pt.chi(pt.root)) == list(range(n))
    for v in range(pt.size):
        kids = pt.children[v]
        if kids:
            merged = sorted(i for c in kids for i in pt.chi(c))
            assert merged == sorted(pt.chi(v))
        elif not pt.is_b[v]:
            assert len(pt.chi(v)) == 1
    # depth() counts nodes on the longest root path, the bound counts edges
    assert pt.depth() <= math.ceil(math.log2(m)) + math.ceil(math.log2(max(n, 1))) + 2 + 1
    for i, t in enumerate(touched):
        assert pt.low[i] in t
        assert all(et.is_ancestor(b, pt.low[i]) for b in t)


def test_partition_tree_three_bag_path_depth():
    td = TreeDecomposition([(0, 1), (1, 2), (2, 3)], [(0, 1), (1, 2)])
    et = build_block_elim_tree(td)
    rng = np.random.default_rng(0)
    A, _ = _path_program(rng, et, 6)
    pt = build_partition_tree(A, et, heavy_light_order(et))
    assert pt.depth() <= math.ceil(math.log2(3)) + math.ceil(math.log2(6)) + 2 + 1


def test_min_degree_decomposition_valid_on_grid():
    edges = [(r * 4 + c, r * 4 + c + 1) for r in range(4) for c in range(3)]
    edges += [(r * 4 + c, (r + 1) * 4 + c) for r in range(3) for c in range(4)]
    td = min_degree_decomposition(16, edges)
    assert validate_decomposition(edges, td)
    assert td.width <= 6
