"""Quotient geometry of type-S vertex spaces.

For ``G_v = F_k x Z`` the quotient map deletes the central coordinate, so
``Y_v`` is the Cayley tree of ``F_k`` and the peripheral line of an edge
``e`` is a coset ``g<u_e>`` there.  Distances in a ball of a free group are
exact: the ball of a tree is convex.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import BudgetExceeded, EmptyEdgeSpace, EmptyLine, NotTypeS, OutOfBall
from .gog import GraphOfGroups
from .groupcore import DEFAULT_BUDGET, BackendSpec, FreeWord, ProductPair, cyclic_membership, free_coset_rep, free_inv, free_mul
from .normalform import NormalForm
from .treespace import BallGraph, TreeNode


def _type_s(g: GraphOfGroups, v: str) -> None:
    if not g.is_type_s(v):
        raise NotTypeS(f"vertex {v} has backend {g.backend(v)}, not F_k x Z with k >= 2")


def project(g: GraphOfGroups, p: NormalForm) -> FreeWord:
    """``pi_v``: the free part of the point's vertex-group element."""
    _type_s(g, p.end)
    return p.tail.free


def lift(g: GraphOfGroups, x: NormalForm, y: FreeWord, qb: QuotientBall | None = None) -> NormalForm:
    """The point over ``y`` in the fiber-line through ``x``'s central coordinate."""
    _type_s(g, x.end)
    if qb is not None and y not in qb.index:
        raise OutOfBall(f"{y} is outside the radius-{qb.radius} quotient ball")
    return NormalForm(x.start, x.pairs, ProductPair(y, x.tail.center), x.end)


class QuotientBall:
    """The radius-``r`` ball of the free factor, with its exact distance matrix."""

    def __init__(self, backend: BackendSpec, radius: int):
        free = backend if backend.kind == "free" else backend.free_part()
        self.backend = free
        self.radius = radius
        self.points: list[FreeWord] = free.ball(radius)
        self.index = {p: i for i, p in enumerate(self.points)}
        self.length = np.array([len(p) for p in self.points], dtype=np.int64)
        rows, cols = [], []
        gens = free.generators()
        for i, p in enumerate(self.points):
            for s in gens:
                j = self.index.get(free.multiply(p, s))
                if j is not None:
                    rows.append(i)
                    cols.append(j)
        n = len(self.points)
        adj = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
        self.dist = dijkstra(adj, unweighted=True).astype(np.int32)

    @classmethod
    def at_vertex(cls, g: GraphOfGroups, v: str, radius: int) -> QuotientBall:
        _type_s(g, v)
        return cls(g.backend(v), radius)

    def distance(self, a: FreeWord, b: FreeWord) -> int:
        try:
            return int(self.dist[self.index[a], self.index[b]])
        except KeyError:
            raise OutOfBall(f"{a} or {b} is outside the quotient ball") from None

    def lines(self, roots) -> list[PeripheralLine]:
        """Every coset ``g<u>`` (for each root ``u``) that meets the ball, deduplicated."""
        seen, out = set(), []
        for u in roots:
            u = tuple(u)
            groups: dict[tuple, list[int]] = {}
            for i, p in enumerate(self.points):
                groups.setdefault(free_coset_rep(p.letters, u)[0], []).append(i)
            for rep, members in sorted(groups.items(), key=lambda kv: kv[1][0]):
                key = frozenset(members)
                if key not in seen:
                    seen.add(key)
                    out.append(PeripheralLine(FreeWord(rep), u, np.array(members, dtype=np.int64)))
        return out

    def line(self, g: FreeWord, u) -> PeripheralLine:
        u = tuple(u)
        members = [
            i for i, p in enumerate(self.points) if cyclic_membership(free_mul(free_inv(g.letters), p.letters), u) is not None
        ]
        if not members:
            raise EmptyLine(f"coset {g}<{u}> misses the radius-{self.radius} ball")
        rep = FreeWord(free_coset_rep(g.letters, u)[0])
        return PeripheralLine(rep, u, np.array(members, dtype=np.int64))


@dataclass
class PeripheralLine:
    """The coset ``rep * <u>`` restricted to a quotient ball (ball indices)."""

    rep: FreeWord
    u: tuple
    indices: np.ndarray


@dataclass
class Projection:
    points: np.ndarray
    diameter: int
    excluded: int = 0


def _nearest(qb: QuotientBall, line: PeripheralLine, z: np.ndarray):
    if len(line.indices) == 0:
        raise EmptyLine("peripheral line misses the ball")
    d = qb.dist[np.ix_(z, line.indices)]
    best = d.min(axis=1)
    hits = d == best[:, None]
    first = line.indices[hits.argmax(axis=1)]
    unique = hits.sum(axis=1) == 1
    return first, unique


def closest_point_projection(qb: QuotientBall, line: PeripheralLine, z, guard: bool = True) -> Projection:
    """Project the ball points ``z`` onto ``line``.

    With ``guard`` a point is dropped when its nearest line point sits on the
    sphere of the ball (the true nearest point might lie beyond it) or when
    the nearest point is not unique.
    """
    z = np.asarray(z, dtype=np.int64)
    proj, unique = _nearest(qb, line, z)
    keep = unique & (qb.length[proj] < qb.radius) if guard else np.ones(len(z), dtype=bool)
    pts = np.unique(proj[keep])
    diam = int(qb.dist[np.ix_(pts, pts)].max()) if len(pts) else 0
    return Projection(pts, diam, int((~keep).sum()))


@dataclass
class ProjBoundResult:
    rows: list  # (line index, other line index, diameter, points used)
    lines: list
    max_diameter: int
    pairs: int
    skipped_pairs: int
    excluded_points: int

    def csv_rows(self, qb: QuotientBall) -> list[tuple]:
        names = [f"{qb.backend.render(ln.rep) or '1'}<{qb.backend.render(FreeWord(ln.u))}>" for ln in self.lines]
        return [(names[a], names[b], d, n) for a, b, d, n in self.rows]


def proj_bound(qb: QuotientBall, lines: list[PeripheralLine], guard: bool = True) -> ProjBoundResult:
    """Projection diameters of every line onto every other line, over ordered pairs."""
    n = len(qb.points)
    rows, worst, skipped, excluded = [], 0, 0, 0
    everyone = np.arange(n)
    for a, ln in enumerate(lines):
        proj, unique = _nearest(qb, ln, everyone)
        ok = unique & (qb.length[proj] < qb.radius) if guard else np.ones(n, dtype=bool)
        for b, other in enumerate(lines):
            if a == b:
                continue
            z = other.indices
            good = z[ok[z]]
            excluded += len(z) - len(good)
            if len(good) == 0:
                skipped += 1
                continue
            pts = np.unique(proj[good])
            diam = int(qb.dist[np.ix_(pts, pts)].max()) if len(pts) > 1 else 0
            worst = max(worst, diam)
            rows.append((a, b, diam, len(good)))
    return ProjBoundResult(rows, lines, worst, len(rows), skipped, excluded)


def peripheral_roots(g: GraphOfGroups, v: str) -> list[tuple]:
    _type_s(g, v)
    return [g.edge_groups[e].root for e in g.lk(v)]


# -- the distance formula across an edge ------------------------------------------


@dataclass
class DistProjsResult:
    edge: str
    radius: int
    rows: list  # (pair id, d_edge, d_Yv, d_Yw, d_Xv)
    K: float
    A: float
    cap: tuple | None
    violations: list = field(default_factory=list)


def _free_dist(a: tuple, b: tuple) -> int:
    return len(free_mul(free_inv(a), b))


def fit_two_sided(pairs, min_d: int = 3) -> tuple[Fraction, Fraction]:
    """Least K (over pairs with d >= min_d), then least A, with d/K - A <= s <= K d + A."""
    k = Fraction(1)
    for d, s in pairs:
        if d >= min_d:
            if s == 0:
                return Fraction(10**9), Fraction(0)
            k = max(k, Fraction(s, d), Fraction(d, s))
    a = Fraction(0)
    for d, s in pairs:
        a = max(a, d / k - s, s - k * d)
    return k, a


def edge_space_points(g: GraphOfGroups, e: str, radius: int) -> list[tuple]:
    """Edge coordinates of edge-group elements of word length ``<= radius`` in ``G_{e_-}``."""
    b = g.backend(g.edges[e].source)
    out = []
    span = radius  # |u^k1| >= |k1| for a nontrivial root, and |c k2| >= |k2|
    for k1 in range(-span, span + 1):
        for k2 in range(-span, span + 1):
            if b.word_length(g.element_from_coords(e, (k1, k2))) <= radius:
                out.append((k1, k2))
    return out


def verify_dist_projs(
    g: GraphOfGroups, e: str, radius: int, cap: tuple | None = None, budget: int = DEFAULT_BUDGET
) -> DistProjsResult:
    """Compare ``d_{X_v}(x, y)`` with ``d_{Y_v}(pi x, pi y) + d_{Y_w}(pi alpha x, pi alpha y)``.

    ``x`` and ``y`` range over the edge space through the identity of
    ``v = e_-`` with ``d_{X_v}(1, x) <= radius``.
    """
    g.require_valid()
    edge = g.edges[e]
    grp = g.edge_groups[e]
    _type_s(g, edge.source)
    _type_s(g, edge.target)
    coords = edge_space_points(g, e, radius)
    if not coords:
        raise EmptyEdgeSpace(f"edge space of {e} is empty at radius {radius}")
    if len(coords) > budget:
        raise BudgetExceeded(f"{len(coords)} edge-space points exceed the budget of {budget}")
    here = [g.element_from_coords(e, k) for k in coords]
    there = [g.tau(e, x) for x in here]
    rows, data = [], []
    pid = 0
    for i in range(len(coords)):
        for j in range(i + 1, len(coords)):
            x, y = here[i], here[j]
            d_edge = abs(coords[i][0] - coords[j][0]) * len(grp.root) + abs(coords[i][1] - coords[j][1]) * grp.c
            d_yv = _free_dist(x.free.letters, y.free.letters)
            d_yw = _free_dist(there[i].free.letters, there[j].free.letters)
            d_xv = d_yv + abs(x.center.coords[0] - y.center.coords[0])
            rows.append((pid, d_edge, d_yv, d_yw, d_xv))
            data.append((d_xv, d_yv + d_yw))
            pid += 1
    k, a = fit_two_sided(data)
    violations = []
    if cap is not None:
        ck, ca = Fraction(cap[0]), Fraction(cap[1])
        violations = [r for r, (d, s) in zip(rows, data) if s > ck * d + ca or s < d / ck - ca]
    return DistProjsResult(e, radius, rows, float(k), float(a), cap, violations)


# -- structural checks on a ball of X -----------------------------------------------


def vertex_space_distances(ball: BallGraph, node: TreeNode, sources=None) -> tuple[np.ndarray, np.ndarray]:
    """BFS distances using only vertex-space edges among the ball points of ``node``."""
    idx = ball.subspace(node).indices
    sub = ball.adjacency[idx][:, idx]
    src = np.arange(len(idx)) if sources is None else np.asarray(sources)
    d = dijkstra(sub, unweighted=True, indices=src)
    d[np.isinf(d)] = -1
    return idx, d.astype(np.int64)


@dataclass
class ProductCheck:
    pairs: int
    failures: list


def check_product_identity(ball: BallGraph, node: TreeNode | None = None) -> ProductCheck:
    """``d_{X_v} = |delta center| + d_{Y_v}`` on the vertex-group ball of radius r inside ``ball``.

    Points are restricted to word length ``<= r`` from the node's identity,
    a set on which vertex-space geodesics never leave the ball.
    """
    g = ball.g
    node = node or TreeNode.of(ball.basepoint)
    _type_s(g, node.vertex)
    b = g.backend(node.vertex)
    idx = ball.subspace(node).indices
    inner = [k for k, i in enumerate(idx) if b.word_length(ball.points[i].tail) <= ball.radius]
    full, dist = vertex_space_distances(ball, node, sources=inner)
    tails = [ball.points[full[k]].tail for k in inner]
    failures, pairs = [], 0
    for r, a in enumerate(inner):
        x = tails[r]
        for s, c in enumerate(inner):
            y = tails[s]
            expect = abs(x.center.coords[0] - y.center.coords[0]) + _free_dist(x.free.letters, y.free.letters)
            pairs += 1
            if dist[r, c] != expect:
                failures.append((int(full[a]), int(full[c]), int(dist[r, c]), expect))
    return ProductCheck(pairs, failures)


def lipschitz_failures(ball: BallGraph) -> list[tuple[int, int]]:
    """Vertex-space ball edges whose endpoints project more than 1 apart."""
    bad = []
    a = ball.adjacency
    for i in range(len(ball)):
        for j in a.indices[a.indptr[i]:a.indptr[i + 1]]:
            if j <= i or ball.node_of[i] != ball.node_of[j]:
                continue
            p, q = ball.points[i], ball.points[j]
            if not ball.g.is_type_s(p.end):
                continue
            if _free_dist(project(ball.g, p).letters, project(ball.g, q).letters) > 1:
                bad.append((i, int(j)))
    return bad


def kernel_power_in_edge_group(g: GraphOfGroups, e: str) -> int | None:
    """Least ``m >= 1`` with ``z^m`` in ``G_e`` for the central generator ``z`` of ``G_{e_-}``.

    A finite answer means every central fiber through an edge-space point
    meets the edge space in a coset of ``<z^m>``.
    """
    b = g.backend(g.edges[e].source)
    for m in range(1, g.edge_groups[e].c + 1):
        if g.edge_membership(b.element((), m), e) is not None:
            return m
    return None
