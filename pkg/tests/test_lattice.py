import numpy as np
import pytest
from hypothesis import given, strategies as st

from pairpotts import lattice
from pairpotts.lattice import DUAL, PRIMAL, Cluster, EdgeSet


def components(n, ends, mask):
    """Plain union-find, kept separate from the kernels under test."""
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (a, b), keep in zip(ends, mask):
        if keep:
            parent[find(a)] = find(b)
    return len({find(x) for x in range(n)})


def torus_steps(g, side):
    """Lattice displacement of each oriented edge, read from the index layout of build_torus."""
    n = int(round(np.sqrt(g.n_vertices)))
    N = n * n
    steps = np.zeros((g.n_edges, 2), dtype=int)
    for e in range(g.n_edges):
        y, x = divmod(e % N, n)
        east = e < N
        if side == PRIMAL:
            steps[e] = (1, 0) if east else (0, 1)
        elif east:
            # face (x, y) lies above the east edge at (x, y)
            steps[e] = (0, -1) if g.eu[e, 0] == y * n + x else (0, 1)
        else:
            # face (x, y) lies right of the north edge at (x, y)
            steps[e] = (-1, 0) if g.eu[e, 0] == y * n + x else (1, 0)
    return steps


def homology_rank(g, mask, side):
    """Rank of the lifted displacement of every fundamental cycle."""
    n = int(round(np.sqrt(g.n_vertices)))
    ends = g.ev if side == PRIMAL else g.eu
    steps = torus_steps(g, side)
    nodes = g.n_nodes(side)
    adj = [[] for _ in range(nodes)]
    for e in np.flatnonzero(mask):
        a, b = ends[e]
        adj[a].append((e, b, steps[e]))
        adj[b].append((e, a, -steps[e]))
    pos = [None] * nodes
    tree = set()
    for r in range(nodes):
        if pos[r] is not None:
            continue
        pos[r] = np.zeros(2, int)
        queue = [r]
        for x in queue:
            for e, y, d in adj[x]:
                if pos[y] is None:
                    pos[y] = pos[x] + d
                    tree.add(e)
                    queue.append(y)
    vecs = []
    for e in np.flatnonzero(mask):
        if e in tree:
            continue
        a, b = ends[e]
        w = pos[a] + steps[e] - pos[b]
        assert (w % n == 0).all()
        vecs.append(w // n)
    return int(np.linalg.matrix_rank(np.array(vecs, float))) if vecs else 0


# ---------------------------------------------------------------------------
# construction


@pytest.mark.parametrize("n,V,E,U", [(1, 4, 4, 2), (2, 16, 24, 10), (3, 36, 60, 26)])
def test_box_counts(n, V, E, U):
    g = lattice.build_box(n)
    assert (g.n_vertices, g.n_edges, g.n_faces) == (V, E, U)
    assert V - E + U == 2
    assert g.outer_face is not None
    g.check()


@pytest.mark.parametrize("n", [1, 2, 3])
def test_box_dual_involution(n):
    g = lattice.build_box(n)
    gdd = g.dual().dual()
    # the second dual reverses every edge
    assert np.array_equal(gdd.ev, g.ev[:, ::-1])
    assert np.array_equal(gdd.eu, g.eu[:, ::-1])
    d = np.arange(2 * g.n_edges)
    assert np.array_equal(gdd.rot_next, g.rot_next[d ^ 1] ^ 1)


@pytest.mark.parametrize("n,V,E", [(2, 4, 8), (3, 9, 18), (4, 16, 32)])
def test_torus_counts(n, V, E):
    g = lattice.build_torus(n)
    assert (g.n_vertices, g.n_edges, g.n_faces) == (V, E, V)
    assert g.topology == lattice.TORUS and g.outer_face is None
    assert g.euler_characteristic == 0
    g.check()


def test_torus_dual_pairing_distinct_and_involutive(torus2):
    assert len({tuple(r) for r in torus2.eu}) == torus2.n_edges
    assert np.array_equal(torus2.dual().dual().eu, torus2.eu[:, ::-1])
    perm = lattice.torus_dual_isomorphism(torus2)
    assert sorted(perm) == list(range(torus2.n_edges))


@pytest.mark.parametrize("bad", [0, -1])
def test_box_rejects_nonpositive(bad):
    with pytest.raises(ValueError):
        lattice.build_box(bad)


def test_torus_rejects_small():
    with pytest.raises(ValueError):
        lattice.build_torus(1)


def test_prism_is_cubic_and_planar(prism):
    assert (prism.n_vertices, prism.n_edges, prism.n_faces) == (6, 9, 5)
    assert (np.bincount(prism.ev.ravel()) == 3).all()
    prism.check()


def test_dump_edges_format(box1):
    lines = lattice.dump_edges(box1).splitlines()
    assert len(lines) == box1.n_edges
    for e, line in enumerate(lines):
        idx, v1, v2, u1, u2 = map(int, line.split())
        assert idx == e
        assert (v1, v2) == tuple(box1.ev[e]) and (u1, u2) == tuple(box1.eu[e])


# ---------------------------------------------------------------------------
# edge sets and clusters


@given(st.integers(0, (1 << 24) - 1))
def test_dagger_is_involution(bits):
    s = EdgeSet(PRIMAL, bits, 24)
    assert s.dagger().dagger() == s
    assert len(s) + len(s.dagger()) == 24
    assert s.dagger().side == DUAL


def test_cluster_counts_extremes(box1):
    assert lattice.count_clusters(box1, EdgeSet(PRIMAL, 0, 4)) == 4
    assert lattice.count_clusters(box1, EdgeSet(PRIMAL, 0b1111, 4)) == 1


@pytest.mark.parametrize("n", [1, 2])
def test_planar_euler_all_subsets(n):
    g = lattice.build_box(n)
    E = g.n_edges
    subsets = range(1 << E) if E <= 12 else np.random.default_rng(0).integers(0, 1 << E, 2000)
    for bits in subsets:
        mask = lattice.bits_to_array(int(bits), E)
        k = components(g.n_vertices, g.ev, mask)
        kd = components(g.n_faces, g.eu, ~mask)
        assert kd == k + mask.sum() - g.n_vertices + 1
        assert lattice.clusters(g, mask).k == k


@given(st.integers(0, (1 << 24) - 1))
def test_cluster_labels_match_union_find(bits):
    g = lattice.build_box(2)
    mask = lattice.bits_to_array(bits, g.n_edges)
    part = lattice.clusters(g, mask)
    assert part.k == components(g.n_vertices, g.ev, mask)
    for e in np.flatnonzero(mask):
        assert part.same(*g.ev[e])


# ---------------------------------------------------------------------------
# torus topology


def test_torus_delta_examples(torus2):
    assert lattice.torus_delta(torus2, EdgeSet(PRIMAL, 0, 8)) == 0
    ring = EdgeSet.from_indices(PRIMAL, [0, 1], 8)
    assert lattice.torus_delta(torus2, ring) == 1
    two_rings = EdgeSet.from_indices(PRIMAL, [0, 1, 4, 6], 8)
    assert lattice.torus_delta(torus2, two_rings) == 2


def test_torus_delta_rejects_planar(box1):
    with pytest.raises(lattice.TopologyError):
        lattice.torus_delta(box1, EdgeSet(PRIMAL, 0, 4))


def test_torus_exhaustive_against_lifted_cycles(torus2):
    g = torus2
    for bits in range(1 << g.n_edges):
        mask = lattice.bits_to_array(bits, g.n_edges)
        d = lattice.torus_delta(g, mask, PRIMAL)
        dd = lattice.torus_delta(g, ~mask, DUAL)
        assert d == homology_rank(g, mask, PRIMAL)
        assert dd == homology_rank(g, ~mask, DUAL)
        assert d + dd == 2
        k = components(g.n_vertices, g.ev, mask)
        kd = components(g.n_faces, g.eu, ~mask)
        assert kd == k + mask.sum() - d - g.n_vertices + 1


@given(st.integers(0, (1 << 18) - 1))
def test_torus3_random_subsets(bits):
    g = lattice.build_torus(3)
    mask = lattice.bits_to_array(bits, g.n_edges)
    d = lattice.torus_delta(g, mask, PRIMAL)
    assert d == homology_rank(g, mask, PRIMAL)
    assert d + lattice.torus_delta(g, ~mask, DUAL) == 2
    k = components(g.n_vertices, g.ev, mask)
    kd = components(g.n_faces, g.eu, ~mask)
    assert kd == k + mask.sum() - d - g.n_vertices + 1


def test_torus_face_path_is_shortest():
    g = lattice.build_torus(4)
    path = lattice.torus_face_path(g, 0, 2 * 4 + 2)
    assert len(path) == 4
    for (e, f, t), nxt in zip(path, path[1:] + [None]):
        assert {f, t} == set(g.eu[e])
        if nxt is not None:
            assert nxt[1] == t
    # horizontal moves come first
    assert [t - f for _, f, t in path[:2]] == [1, 1]


# ---------------------------------------------------------------------------
# disconnection


def dual_cluster(g, edges):
    em = np.zeros(g.n_edges, bool)
    em[edges] = True
    nodes = np.zeros(g.n_faces, bool)
    nodes[g.eu[em].ravel()] = True
    return Cluster(DUAL, nodes, em)


def primal_cluster(g, edges):
    em = np.zeros(g.n_edges, bool)
    em[edges] = True
    nodes = np.zeros(g.n_vertices, bool)
    nodes[g.ev[em].ravel()] = True
    return Cluster(PRIMAL, nodes, em)


def dual_edges_between(g, faces):
    fs = set(faces)
    return [e for e, (a, b) in enumerate(g.eu) if a in fs and b in fs and a != b]


def test_dual_ring_disconnects_centre(box2):
    # faces 0..8 form a 3x3 grid, 9 is outer; the ring avoids the centre face 4
    ring = [0, 1, 2, 5, 8, 7, 6, 3]
    c = dual_cluster(box2, dual_edges_between(box2, ring))
    assert c.edges.sum() == 8
    assert lattice.disconnects(box2, c, 4, 9)
    assert not lattice.disconnects(box2, c, 9, 9) or c.nodes[9]


def test_singleton_dual_cluster_membership(box2):
    for u in range(box2.n_faces):
        nodes = np.zeros(box2.n_faces, bool)
        nodes[u] = True
        c = Cluster(DUAL, nodes, np.zeros(box2.n_edges, bool))
        assert lattice.disconnects(box2, c, u, box2.outer_face)


def test_tree_cluster_separates_nothing(box2):
    c = dual_cluster(box2, dual_edges_between(box2, [0, 1, 2]))
    assert not lattice.disconnects(box2, c, 3, 4)
    assert not lattice.disconnects(box2, c, 4, 9)


def test_primal_cycle_disconnects(box2):
    around_centre = [e for e in range(box2.n_edges) if 4 in box2.eu[e]]
    c = primal_cluster(box2, around_centre)
    assert lattice.disconnects(box2, c, 4, 9)
    assert not lattice.disconnects(box2, c, 0, 9)
    path = primal_cluster(box2, around_centre[:3])
    assert not lattice.disconnects(box2, path, 4, 9)


def test_disconnects_rejects_torus(torus2):
    c = Cluster(DUAL, np.ones(4, bool), np.ones(8, bool))
    with pytest.raises(lattice.TopologyError):
        lattice.disconnects(torus2, c, 0, 1)


def test_face_path_prefers_low_edges(box2):
    path = lattice.face_path(box2, 9, 4)
    assert len(path) == 2
    assert path[0][1] == 9 and path[-1][2] == 4
    for e, f, t in path:
        assert {f, t} == set(box2.eu[e])


# ---------------------------------------------------------------------------
# medial graph


def test_medial_of_square(box1):
    mg = lattice.medial(box1)
    assert mg.n_vertices == 4
    assert (mg.degrees() == 4).all()
    assert mg.graph.n_faces == box1.n_vertices + box1.n_faces == 6


@pytest.mark.parametrize("n", [1, 2, 3])
def test_medial_faces_match_cells(n):
    g = lattice.build_box(n)
    mg = lattice.medial(g)
    assert mg.n_vertices == g.n_edges
    assert (mg.degrees() == 4).all()
    _, faces = lattice._trace_faces(mg.graph.rot_prev)
    assert len(faces) == g.n_vertices + g.n_faces
    # each medial face is bounded by corners of exactly one cell
    cells = {(int(mg.sep_vertex[c]), "v") for c in range(2 * g.n_edges)}
    assert len(cells) == g.n_vertices


def test_medial_quads(box2):
    mg = lattice.medial(box2)
    for e, (v1, u1, v2, u2) in enumerate(mg.quad):
        assert (v1, v2) == tuple(box2.ev[e]) and (u1, u2) == tuple(box2.eu[e])


def test_medial_rejects_torus(torus2):
    with pytest.raises(lattice.TopologyError):
        lattice.medial(torus2)
