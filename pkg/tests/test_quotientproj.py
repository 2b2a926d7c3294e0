from fractions import Fraction

import numpy as np
import pytest

from gogbench.config import parse_config, parse_config_text
from gogbench.errors import EmptyLine, NotTypeS, OutOfBall
from gogbench.groupcore import BackendSpec, FreeWord, free_inv, free_mul
from gogbench.normalform import identity_nf, right_multiply
from gogbench.quotientproj import (
    QuotientBall,
    check_product_identity,
    closest_point_projection,
    edge_space_points,
    fit_two_sided,
    kernel_power_in_edge_group,
    lift,
    lipschitz_failures,
    peripheral_roots,
    proj_bound,
    project,
    verify_dist_projs,
    vertex_space_distances,
)
from gogbench.treespace import build_ball

import oracles


@pytest.fixture(scope="module")
def torus():
    return parse_config("torus-complex-3.cfg").gog


@pytest.fixture(scope="module")
def ball4(torus):
    return build_ball(torus, 4)


@pytest.fixture(scope="module")
def f2ball():
    return QuotientBall(BackendSpec.free(["x", "y"]), 4)


def test_project_and_lift(torus):
    b = torus.backend("v1")
    p = right_multiply(torus, identity_nf(torus), b.parse("a1 b2 a2^7"))
    assert project(torus, p) == b.parse("a1 b2").free
    assert lift(torus, p, project(torus, p)) == p
    q = right_multiply(torus, identity_nf(torus), b.parse("a2^5"))
    up = lift(torus, q, FreeWord((1,)))
    assert up.tail == b.parse("a1 a2^5")
    qb = QuotientBall.at_vertex(torus, "v1", 2)
    with pytest.raises(OutOfBall):
        lift(torus, q, FreeWord((1, 1, 1)), qb)


def test_not_type_s():
    g = parse_config("torus-complex-3.cfg").gog
    text = """
[graph]
base = A
[vertex A]
free = x y
center = z
[vertex B]
free = x
center = z
[edge 1]
source = A
target = B
reverse = 1b
basis = x, z
image = x, z
[edge 1b]
source = B
target = A
reverse = 1
basis = x, z
image = x, z
"""
    h = parse_config_text(text).gog
    with pytest.raises(NotTypeS):
        project(h, identity_nf(h, "B"))
    with pytest.raises(NotTypeS):
        verify_dist_projs(h, "1", 2)
    assert project(g, identity_nf(g)) == FreeWord()


def test_fibers_and_lipschitz(ball4, torus):
    assert lipschitz_failures(ball4) == []
    idx = ball4.subspace(ball4.node_of_point(0)).indices
    fibers = {}
    for i in idx:
        fibers.setdefault(project(torus, ball4.points[i]), []).append(i)
    for members in fibers.values():
        frees = {ball4.points[i].tail.free for i in members}
        assert len(frees) == 1
    assert sum(len(m) for m in fibers.values()) == len(idx)


def test_lipschitz_on_sampled_pairs(ball4, torus):
    idx, d = vertex_space_distances(ball4, ball4.node_of_point(0))
    rng = np.random.default_rng(1)
    for a, c in rng.integers(0, len(idx), size=(1000, 2)):
        x, y = ball4.points[idx[a]], ball4.points[idx[c]]
        dy = len(free_mul(free_inv(project(torus, x).letters), project(torus, y).letters))
        assert d[a, c] < 0 or dy <= d[a, c]


def test_lift_preserves_distance(ball4, torus):
    idx, d = vertex_space_distances(ball4, ball4.node_of_point(0))
    pos = {int(i): k for k, i in enumerate(idx)}
    b = torus.backend("v1")
    rng = np.random.default_rng(2)
    checked = 0
    for a, c in rng.integers(0, len(idx), size=(1000, 2)):
        x = ball4.points[idx[a]]
        y = project(torus, ball4.points[idx[c]])
        up = lift(torus, x, y)
        if up not in ball4.index or b.word_length(up.tail) > 4 or b.word_length(x.tail) > 4:
            continue
        dy = len(free_mul(free_inv(x.tail.free.letters), y.letters))
        assert d[a, pos[ball4.index[up]]] == dy
        checked += 1
    assert checked > 100


def test_product_identity_exact(ball4):
    res = check_product_identity(ball4)
    assert res.failures == []
    assert res.pairs > 10_000


def test_kernel_in_edge_group(torus):
    for e in torus.edges:
        assert kernel_power_in_edge_group(torus, e) == 1
    hnn = parse_config("hnn-f2xz.cfg").gog
    assert kernel_power_in_edge_group(hnn, "1") == 1


def test_quotient_ball_distances(f2ball):
    assert len(f2ball.points) == oracles.free_ball_size(2, 4)
    for a in f2ball.points[:40]:
        for b in f2ball.points[::7]:
            assert f2ball.distance(a, b) == len(free_mul(free_inv(a.letters), b.letters))
    with pytest.raises(OutOfBall):
        f2ball.distance(FreeWord((1,) * 5), FreeWord())


def test_lines_disjoint_and_connected(f2ball):
    lines = f2ball.lines([(1,), (2,)])
    for u in ((1,), (2,)):
        same = [ln for ln in lines if ln.u == u]
        covered = np.concatenate([ln.indices for ln in same])
        assert len(covered) == len(set(covered.tolist())) == len(f2ball.points)
    for ln in lines:
        sub = f2ball.dist[np.ix_(ln.indices, ln.indices)]
        assert sub.max() == len(ln.indices) - 1  # a segment of a line


def test_projection_examples(f2ball):
    x_line = f2ball.line(FreeWord(), (1,))
    y_coset = f2ball.line(FreeWord((2,)), (1,))
    proj = closest_point_projection(f2ball, x_line, y_coset.indices)
    assert [f2ball.points[i] for i in proj.points] == [FreeWord()]
    assert proj.diameter == 0
    inner = [i for i in x_line.indices if f2ball.length[i] < 4]
    same = closest_point_projection(f2ball, x_line, inner)
    assert sorted(same.points.tolist()) == sorted(inner)
    assert same.diameter == 6
    with pytest.raises(EmptyLine):
        f2ball.line(FreeWord((2,) * 5), (1,))


def test_proj_bound_small(f2ball):
    res = proj_bound(f2ball, f2ball.lines([(1,), (2,)]))
    assert res.max_diameter == 0
    assert res.pairs > 0 and res.skipped_pairs > 0
    unguarded = proj_bound(f2ball, f2ball.lines([(1,), (2,)]), guard=False)
    assert unguarded.pairs >= res.pairs


def test_peripheral_roots(torus):
    assert peripheral_roots(torus, "v1") == [(2,)]
    assert peripheral_roots(torus, "v2") == [(1,)]


def test_dist_projs_example(torus):
    # x = 1, y = (b2^3, a2^5): a2 is central at v1 and free at v2
    res = verify_dist_projs(torus, "1", 8, cap=(2, 2))
    coords = edge_space_points(torus, "1", 8)
    i, j = sorted((coords.index((0, 0)), coords.index((3, 5))))
    pid = sum(len(coords) - 1 - k for k in range(i)) + (j - i - 1)
    assert res.rows[pid][1:] == (8, 3, 5, 8)
    assert (res.K, res.A) == (1.0, 0.0)
    assert res.violations == []


def test_dist_projs_matches_vertex_space_bfs(torus):
    ball = build_ball(torus, 6)
    node = ball.node_of_point(0)
    coords = edge_space_points(torus, "1", 3)
    pts = [ball.index[right_multiply(torus, identity_nf(torus), torus.element_from_coords("1", k))] for k in coords]
    idx, d = vertex_space_distances(ball, node)
    pos = {int(i): k for k, i in enumerate(idx)}
    res = verify_dist_projs(torus, "1", 3)
    n, pid = len(coords), 0
    for a in range(n):
        for c in range(a + 1, n):
            row = res.rows[pid]
            x, y = ball.points[pts[a]], ball.points[pts[c]]
            fx, fy = ball.points[ball.alpha(pts[a], "1")], ball.points[ball.alpha(pts[c], "1")]
            assert row[4] == d[pos[pts[a]], pos[pts[c]]]
            assert row[2] == len(free_mul(free_inv(project(torus, x).letters), project(torus, y).letters))
            assert row[3] == len(free_mul(free_inv(project(torus, fx).letters), project(torus, fy).letters))
            pid += 1


def test_fit_two_sided():
    assert fit_two_sided([(3, 3), (4, 8), (1, 0)]) == (Fraction(2), Fraction(1, 2))
    assert fit_two_sided([(1, 1), (2, 2)]) == (1, 0)
