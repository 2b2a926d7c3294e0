import io
import itertools
from collections import Counter

import numpy as np
import pytest
from scipy.sparse.csgraph import connected_components

from gogbench.config import parse_config
from gogbench.errors import BudgetExceeded, EmptySelection, NotInBall, UnknownTreeLocation
from gogbench.normalform import cross, identity_nf, right_multiply
from gogbench.treespace import (
    TreeEdge,
    TreeNode,
    build_ball,
    distortion_profile,
    fit_constants,
    hausdorff_distance,
    sides_decomposition,
    tree_ball,
    TreeBall,
)

import oracles


@pytest.fixture(scope="module")
def torus():
    return parse_config("torus-complex-3.cfg").gog


@pytest.fixture(scope="module")
def ball4(torus):
    return build_ball(torus, 4)


def test_small_balls(torus):
    assert len(build_ball(torus, 0)) == 1
    ball = build_ball(torus, 1)
    assert len(ball) == 8
    assert sorted(p.end for p in ball.points) == ["v1"] * 7 + ["v2"]


def test_ball_sizes_regression(torus):
    assert [len(build_ball(torus, r)) for r in range(6)] == [1, 8, 38, 150, 554, 1998]


def test_double_ball_matches_oracle():
    g = parse_config("double-f2xz.cfg").gog
    for r in range(5):
        assert len(build_ball(g, r)) == len(oracles.double_ball(r))


def test_budget(torus):
    with pytest.raises(BudgetExceeded):
        build_ball(torus, 5, budget=500)
    with pytest.raises(ValueError):
        build_ball(torus, -1)


def test_distance_examples(torus, ball4):
    b = torus.backend("v1")
    p0 = ball4.points[0]
    assert ball4.distance(0, 0) == 0
    assert ball4.distance(0, ball4.alpha(0, "1")) == 1
    ab = right_multiply(torus, p0, b.parse("a1 b2"))
    assert ball4.distance(p0, ab) == 2
    with pytest.raises(NotInBall):
        ball4.distance(0, right_multiply(torus, p0, b.parse("a1^9")))


def test_ball_structure(ball4):
    a = ball4.adjacency
    assert (a != a.T).nnz == 0
    assert a.diagonal().sum() == 0
    d = ball4.distances_from([0])[0]
    assert (d == ball4.depth).all()
    assert ball4.depth.max() == 4


def test_metric_axioms(ball4):
    rng = np.random.default_rng(7)
    pts = rng.integers(0, len(ball4), size=(1000, 3))
    d = ball4.distances_from(range(len(ball4)))
    assert (d == d.T).all()
    x, y, z = pts.T
    assert (d[x, z] <= d[x, y] + d[y, z]).all()


def test_monotone_refinement(torus):
    small, big = build_ball(torus, 3), build_ball(torus, 5)
    ds = small.distances_from(range(len(small)))
    idx = np.array([big.index_of(p) for p in small.points])
    db = big.distances_from(idx)[:, idx]
    assert (db <= ds).all()
    # certified distances do not change
    i, j = np.triu_indices(len(small), 1)
    ok = small.certified(i, j, ds[i, j])
    assert (db[i, j][ok] == ds[i, j][ok]).all()


def test_alpha_involution(torus):
    for name in ("torus-complex-3.cfg", "hnn-f2xz.cfg"):
        g = parse_config(name).gog
        ball = build_ball(g, 4)
        for e in g.edges:
            f = g.rev(e)
            src = np.flatnonzero(ball.cross_index[e] >= 0)
            for i in src:
                j = ball.alpha(i, e)
                assert ball.cross_index[f][j] == i
                assert ball.points[j] == cross(g, ball.points[i], e)


def test_vertex_spaces_are_disjoint(ball4):
    seen = Counter()
    for n in ball4.nodes:
        try:
            seen.update(ball4.subspace(n).indices.tolist())
        except UnknownTreeLocation:
            pass
    assert set(seen.values()) == {1}
    assert len(seen) == len(ball4)


def test_base_vertex_space(torus):
    ball = build_ball(torus, 1)
    sel = ball.subspace(ball.node_of_point(0))
    assert len(sel) == 7
    assert all(ball.points[i].end == "v1" for i in sel.indices)


def _edge_spaces(ball):
    g = ball.g
    out = set()
    for e in g.edges:
        for i in np.flatnonzero(ball.cross_node[e] >= 0):
            out.add(ball.edge_at(int(i), e))
    return out


def test_edge_space_in_neighbourhoods(ball4):
    g = ball4.g
    for te in _edge_spaces(ball4):
        xe = ball4.subspace(te).indices
        near = [ball4.subspace(te.tail).indices]
        for loc in (te.head, te.reverse(g)):
            try:
                near.append(ball4.subspace(loc).indices)
            except UnknownTreeLocation:
                continue
        for target in near:
            d = ball4.distance_to_set(target)
            # points whose partner fell outside the ball are exempt
            inside = xe[ball4.cross_index[te.edge][xe] >= 0]
            assert (d[inside] <= 1).all() and (d[inside] >= 0).all()


def test_unknown_locations(ball4, torus):
    stray = TreeNode("v1", ((torus.backend("v1").parse("a1^7"), "1"),), "v2")
    with pytest.raises(UnknownTreeLocation):
        ball4.subspace(stray)
    with pytest.raises(UnknownTreeLocation):
        ball4.subspace("v1")


def test_hausdorff(torus):
    values = []
    for r in (3, 4, 5):
        ball = build_ball(torus, r)
        b = torus.backend("v1")
        q = ball.index_of(right_multiply(torus, ball.points[0], b.parse("a1")))
        e0, e1 = ball.edge_at(0, "1"), ball.edge_at(q, "1")
        xe = ball.subspace(e0)
        assert hausdorff_distance(ball, xe, xe) == 0
        assert hausdorff_distance(ball, xe, ball.subspace(e0.reverse(torus))) == 1
        values.append(hausdorff_distance(ball, xe, ball.subspace(e1)))
    assert values == sorted(values) and values[0] < values[-1]


def test_hausdorff_empty(ball4):
    from gogbench.treespace import SubspaceSelection

    with pytest.raises(EmptySelection):
        hausdorff_distance(ball4, SubspaceSelection(None, np.empty(0, dtype=np.int64)), ball4.subspace(ball4.nodes[0]))


def _torus_coset_key(g, p, v):
    # the edge group at v is <root> x Z, so a coset of (w, z) is w with trailing root letters removed
    root = {"v1": 2, "v2": 1}[v]
    w = list(p.tail.free.letters)
    while w and abs(w[-1]) == root:
        w.pop()
    return tuple(w)


def test_tree_ball_degrees_match_coset_count(torus):
    ball = build_ball(torus, 2)
    tb = TreeBall.from_ball(ball)
    for k, node in enumerate(ball.nodes):
        members = np.flatnonzero(ball.node_of == k)
        if len(members) == 0:
            continue
        keys = {_torus_coset_key(torus, ball.points[i], node.vertex) for i in members}
        assert tb.degree(node) == len(keys)


def test_between(torus):
    tb = tree_ball(torus, 3)
    for te in list(tb.edges)[:20]:
        assert tb.between(te.tail, te, te.reverse(torus))
        assert tb.between(te.tail, te, te.head)
        assert not tb.between(te.head, te, te.reverse(torus))
    n, m = tb.root, next(iter(tb.adj[tb.root]))
    assert not tb.between(n, n, m)
    assert tb.between(n, n, m, strict=False)


def test_paths_through_between_nodes(torus):
    ball = build_ball(torus, 3)
    tb = TreeBall.from_ball(ball)
    nodes = [n for k, n in enumerate(ball.nodes) if (ball.node_of == k).any()]
    checked = 0
    for b in nodes:
        sel = ball.subspace(b).indices
        keep = np.ones(len(ball), dtype=bool)
        keep[sel] = False
        sub = ball.adjacency[keep][:, keep]
        _, labels = connected_components(sub, directed=False)
        where = np.full(len(ball), -1)
        where[keep] = labels
        for a, c in itertools.combinations(nodes, 2):
            if b in (a, c) or not tb.between(a, b, c):
                continue
            la = set(where[ball.subspace(a).indices].tolist())
            lc = set(where[ball.subspace(c).indices].tolist())
            assert not la & lc
            checked += 1
    assert checked > 50


def test_sides(torus):
    ball = build_ball(torus, 4)
    te = ball.edge_at(0, "1")
    s = sides_decomposition(ball, te)
    assert len(s.on_edge) + len(s.plus) + len(s.minus) == len(ball)
    xeb = ball.subspace(te.reverse(torus)).indices
    assert set(xeb.tolist()) <= set(s.plus.tolist())
    tail = ball.subspace(te.tail).indices
    off = np.setdiff1d(tail, s.on_edge)
    assert set(off.tolist()) <= set(s.minus.tolist())
    for k in range(len(ball.nodes)):
        members = np.flatnonzero(ball.node_of == k)
        if len(members):
            assert len(set(s.epsilon[members].tolist())) == 1


def test_distortion_ambient_is_trivial(torus):
    ball = build_ball(torus, 3)
    sel = ball.subspace(ball.node_of_point(0))
    prof = distortion_profile(ball, sel, intrinsic="ambient")
    assert (prof.K, prof.A) == (1.0, 0.0)


def test_distortion_double_edge_space():
    g = parse_config("double-f2xz.cfg").gog
    ball = build_ball(g, 6)
    prof = distortion_profile(ball, ball.subspace(ball.edge_at(0, "1")), "edge")
    assert prof.K <= 2 and prof.A <= 2
    assert prof.certified_pairs > 0 and not prof.sampled


def test_distortion_vertex_space_stable(torus):
    ks = []
    for r in (4, 5):
        ball = build_ball(torus, r)
        prof = distortion_profile(ball, ball.subspace(ball.node_of_point(0)), "vertex", seed=0)
        ks.append(prof.K)
        assert np.isfinite(prof.K) and np.isfinite(prof.A)
    assert abs(ks[0] - ks[1]) <= 0.5


def test_distortion_sampling_needs_seed(torus):
    ball = build_ball(torus, 6)
    sel = ball.subspace(ball.node_of_point(0))
    assert len(sel) > 2000
    with pytest.raises(ValueError, match="seed"):
        distortion_profile(ball, sel, "vertex")
    a = distortion_profile(ball, sel, "vertex", seed=3)
    b = distortion_profile(ball, sel, "vertex", seed=3)
    assert a.sampled and a.table == b.table
    assert 99_000 < a.pairs <= 100_000  # self-pairs are dropped


def test_fit_constants():
    k, a, mr = fit_constants(Counter({(6, 3): 1, (2, 1): 4, (5, 5): 2}))
    assert (k, a, mr) == (2, 0, 2)
    k, a, _ = fit_constants(Counter({(4, 1): 1}))
    assert (k, a) == (1, 3)


def test_export(torus):
    ball = build_ball(torus, 1)
    buf = io.StringIO()
    ball.write(buf, "abc")
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# gogbench ball v1"
    assert "# config-sha256: abc" in lines
    assert sum(1 for l in lines if l.startswith("v\t")) == 8
    assert sum(1 for l in lines if l.startswith("e\t")) == 7
    assert lines[6] == "v\t0\tv1\t0\t1"


def test_identity_basepoint_choice(torus):
    ball = build_ball(torus, 2, start="v2")
    assert ball.points[0] == identity_nf(torus, "v2")
    assert isinstance(ball.edge_at(0, "1b"), TreeEdge)
