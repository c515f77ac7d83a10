import numpy as np
import pytest

from rotorloops.graph import (UNREACHABLE, Graph, build_lattice, verify_bidimensional,
                              write_edge_csv)


def bfs_oracle(adj, src):
    # independent shortest-path enumeration
    dist = {src: 0}
    frontier = [src]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist


def square_adj(extent):
    adj = {}
    for i in range(-extent, extent + 1):
        for j in range(-extent, extent + 1):
            adj[(i, j)] = [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)]
    return {v: [u for u in ns if u in adj] for v, ns in adj.items()}


def test_square_box_examples():
    g = build_lattice("square_box", 1)
    assert len(g.ball((0, 0), 1)) == 5
    g2 = build_lattice("square_box", 2)
    # BFS enumeration oracle on an independently built adjacency
    oracle = bfs_oracle(square_adj(4), (0, 0))
    assert len(g2.sphere((0, 0), 2)) == sum(1 for d in oracle.values() if d == 2) == 8
    gs = build_lattice("square_box", 1, metric="sup")
    # direct enumeration of the max-norm sphere of radius 1
    sup_sphere = [(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1) if (i, j) != (0, 0)]
    assert len(gs.sphere((0, 0), 1)) == len(sup_sphere) == 8


def test_distances():
    g = build_lattice("square_box", 3)
    gs = build_lattice("square_box", 3, metric="sup")
    assert g.distance((0, 0), (1, 1)) == 2
    assert gs.distance((0, 0), (1, 1)) == 1
    assert g.distance((2, -1), (2, -1)) == 0


def test_unreachable_pair():
    g = Graph.from_edges([(0, 1), (2, 3)], origin=0)
    assert g.distance(0, 3) == UNREACHABLE


def test_distance_symmetry_and_triangle_exhaustive():
    g = build_lattice("square_box", 3)
    vs = g.vertices
    rng = np.random.default_rng(0)
    triples = rng.integers(0, len(vs), size=(300, 3))
    for a, b, c in triples:
        u, v, w = vs[a], vs[b], vs[c]
        assert g.distance(u, v) == g.distance(v, u)
        assert g.distance(u, w) <= g.distance(u, v) + g.distance(v, w)


def test_sphere_ball_partition():
    g = build_lattice("square_box", 4)
    ball4 = set(g.ball((0, 0), 4))
    union = set()
    total = 0
    for k in range(5):
        s = set(g.sphere((0, 0), k))
        assert not (union & s)
        union |= s
        total += len(s)
    assert union == ball4 and total == len(ball4)
    assert g.sphere((0, 0), 0) == [(0, 0)] == g.ball((0, 0), 0)


def test_lazy_square_sphere_growth_law():
    g = build_lattice("square")
    for n in (1, 5, 17, 64):
        assert len(g.sphere((0, 0), n)) == 4 * n


def test_triangular_first_sphere():
    g = build_lattice("triangular")
    assert len(g.sphere((0, 0), 1)) == 6
    rep = verify_bidimensional(g, 24)
    assert rep.passed and rep.sphere_ratio_sup == pytest.approx(6.0)


def test_bidimensional_square_and_ring():
    rep = verify_bidimensional(build_lattice("square"), 32)
    assert rep.passed and rep.sphere_ratio_sup == pytest.approx(4.0)
    rep_ring = verify_bidimensional(build_lattice("ring", 12), 6)
    assert rep_ring.passed and rep_ring.sphere_ratio_sup <= 2.0


def test_tree_fails_bidimensionality():
    # 3-regular tree: sphere sizes 3 * 2^(n-1), exponential
    edges = []
    counter = [1]

    def grow(v, depth, parent_deg):
        if depth == 0:
            return
        for _ in range(3 - parent_deg):
            u = counter[0]
            counter[0] += 1
            edges.append((v, u))
            grow(u, depth - 1, 1)

    grow(0, 10, 0)
    tree = Graph.from_edges(edges, origin=0)
    oracle_sphere_10 = 3 * 2**9
    assert len(tree.sphere(0, 10)) == oracle_sphere_10
    rep = verify_bidimensional(tree, 10, centers=[0])
    assert not rep.passed
    assert rep.sphere_ratio_sup == pytest.approx(oracle_sphere_10 / 10)


def test_build_errors():
    with pytest.raises(ValueError):
        build_lattice("hexagonal")
    with pytest.raises(ValueError):
        build_lattice("square_box", 0)
    with pytest.raises(ValueError):
        build_lattice("ring", 0)


def test_no_self_loops_or_parallel_edges():
    with pytest.raises(ValueError):
        Graph.from_edges([(0, 0)])
    g = Graph.from_edges([(0, 1), (1, 0)])
    assert g.neighbors(0) == (1,)


def test_adjacency_symmetric():
    g = build_lattice("square_box", 2, metric="sup")
    for v in g.vertices:
        for u in g.neighbors(v):
            assert v in g.neighbors(u)


def test_box_carries_boundary_annulus():
    g = build_lattice("square_box", 2)
    assert set(g.boundary) == set(g.sphere((0, 0), 3))
    assert set(g.interior) == set(g.ball((0, 0), 2))


def test_edge_csv(tmp_path):
    g = build_lattice("ring", 4)
    path = tmp_path / "edges.csv"
    write_edge_csv(g, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "src,dst"
    assert len(lines) == 1 + 4
