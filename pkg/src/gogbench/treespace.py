"""Finite balls in the tree of spaces X and in the Bass-Serre tree T.

A point of X is a normal form ``p`` from the basepoint's Gamma-vertex to
``p.end``; it lives in the vertex space indexed by ``p.node``.  Unit edges
join ``p`` to ``p * s`` for the standard generators ``s`` of ``G_{p.end}``,
and to ``alpha_e(p) = p e`` for every ``e`` leaving ``p.end`` (every point
of a vertex space lies in exactly one edge space per incident edge).

Ball distances only see paths inside the ball, so they over-estimate the
true metric near the boundary.  ``BallGraph.certified`` flags the pairs for
which the ball distance is provably exact.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, TextIO

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import BudgetExceeded, EmptyEdgeSpace, EmptySelection, NotInBall, UnknownTreeLocation
from .gog import GraphOfGroups
from .groupcore import DEFAULT_BUDGET, free_inv, free_mul
from .normalform import NormalForm, cross, identity_nf, render_nf, right_multiply

SAMPLE_THRESHOLD = 2000
SAMPLE_PAIRS = 100_000
_CHUNK = 256


@dataclass(frozen=True)
class TreeNode:
    """A vertex of the Bass-Serre tree: the coset reached by ``pairs`` from ``start``."""

    start: str
    pairs: tuple
    vertex: str

    @classmethod
    def of(cls, p: NormalForm) -> TreeNode:
        return cls(p.start, p.pairs, p.end)

    def representative(self, g: GraphOfGroups) -> NormalForm:
        return NormalForm(self.start, self.pairs, g.backend(self.vertex).identity(), self.vertex)


@dataclass(frozen=True)
class TreeEdge:
    """An oriented edge of the Bass-Serre tree, lifting the Gamma-edge ``edge``."""

    tail: TreeNode
    head: TreeNode
    edge: str

    def reverse(self, g: GraphOfGroups) -> TreeEdge:
        return TreeEdge(self.head, self.tail, g.rev(self.edge))


@dataclass
class SubspaceSelection:
    location: object  # TreeNode or TreeEdge
    indices: np.ndarray

    def __len__(self):
        return len(self.indices)


class BallGraph:
    """The radius-``r`` ball of X around ``basepoint`` as an unweighted graph."""

    def __init__(self, g: GraphOfGroups, radius: int, basepoint: NormalForm, budget: int = DEFAULT_BUDGET):
        self.g = g
        self.radius = radius
        self.basepoint = basepoint
        self.points: list[NormalForm] = []
        self.index: dict[NormalForm, int] = {}
        self._nodes: dict[TreeNode, int] = {}
        self.nodes: list[TreeNode] = []
        self._build(budget)
        self._sigma = None

    def _node_id(self, p: NormalForm) -> int:
        key = TreeNode.of(p)
        i = self._nodes.get(key)
        if i is None:
            i = self._nodes[key] = len(self.nodes)
            self.nodes.append(key)
        return i

    def _build(self, budget: int) -> None:
        g, r = self.g, self.radius
        gens = {v: g.backend(v).generators() for v in g.vertices}
        points, index = self.points, self.index
        points.append(self.basepoint)
        index[self.basepoint] = 0
        depth = [0]
        nbrs: list[list] = []  # per point: (neighbor NormalForm, crossing edge or None)
        queue = deque([0])
        while queue:
            i = queue.popleft()
            p = points[i]
            out = [(right_multiply(g, p, s), None) for s in gens[p.end]]
            out += [(cross(g, p, e), e) for e in g.lk(p.end)]
            nbrs.append(out)
            if depth[i] == r:
                continue
            for q, _ in out:
                if q not in index:
                    index[q] = len(points)
                    points.append(q)
                    depth.append(depth[i] + 1)
                    if len(points) > budget:
                        raise BudgetExceeded(f"ball of radius {r} exceeds the budget of {budget} vertices")
                    queue.append(index[q])
        n = len(points)
        self.depth = np.asarray(depth, dtype=np.int64)
        self.node_of = np.fromiter((self._node_id(p) for p in points), dtype=np.int64, count=n)
        self.cross_index = {e: np.full(n, -1, dtype=np.int64) for e in g.edges}
        self.cross_node = {e: np.full(n, -1, dtype=np.int64) for e in g.edges}
        rows, cols = [], []
        for i, out in enumerate(nbrs):
            for q, e in out:
                j = index.get(q, -1)
                if e is not None:
                    self.cross_index[e][i] = j
                    self.cross_node[e][i] = self._node_id(q)
                if j >= 0:
                    rows.append(i)
                    cols.append(j)
        data = np.ones(len(rows), dtype=np.int8)
        adj = csr_matrix((data, (rows, cols)), shape=(n, n))
        adj.sum_duplicates()
        adj.data[:] = 1
        self.adjacency = adj

    # -- lookup -------------------------------------------------------------

    def __len__(self):
        return len(self.points)

    def index_of(self, p) -> int:
        if isinstance(p, (int, np.integer)):
            if not 0 <= p < len(self.points):
                raise NotInBall(f"index {p} is not in the ball")
            return int(p)
        i = self.index.get(p)
        if i is None:
            raise NotInBall(f"{p!r} is not in the radius-{self.radius} ball")
        return i

    def neighbors(self, i: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[i]:a.indptr[i + 1]]

    def alpha(self, p, e: str) -> int:
        """Index of ``alpha_e(p)``; raises ``NotInBall`` if it falls outside."""
        i = self.index_of(p)
        if self.points[i].end != self.g.edges[e].source:
            raise ValueError(f"edge {e} does not leave vertex {self.points[i].end}")
        j = int(self.cross_index[e][i])
        if j < 0:
            raise NotInBall(f"alpha_{e} of point {i} leaves the ball")
        return j

    def render(self, i: int) -> str:
        return render_nf(self.g, self.points[i])

    # -- metric ---------------------------------------------------------------

    def distances_from(self, sources: Iterable[int]) -> np.ndarray:
        """Hop distances inside the ball; rows follow ``sources``, ``-1`` if unreachable."""
        src = np.asarray(list(sources), dtype=np.int64)
        out = np.empty((len(src), len(self.points)), dtype=np.int64)
        for lo in range(0, len(src), _CHUNK):
            d = dijkstra(self.adjacency, unweighted=True, indices=src[lo:lo + _CHUNK])
            d[np.isinf(d)] = -1
            out[lo:lo + _CHUNK] = d.astype(np.int64)
        return out

    def distance_to_set(self, targets: Iterable[int], mask: np.ndarray | None = None) -> np.ndarray:
        """Distance from every point to the nearest target (``-1`` if none reachable)."""
        tgt = np.asarray(list(targets), dtype=np.int64)
        if len(tgt) == 0:
            return np.full(len(self.points), -1, dtype=np.int64)
        n = len(self.points)
        if mask is None:
            d = dijkstra(self.adjacency, unweighted=True, indices=tgt, min_only=True)
        else:
            keep = np.flatnonzero(mask)
            local = np.full(n, -1, dtype=np.int64)
            local[keep] = np.arange(len(keep))
            tgt = local[tgt]
            tgt = tgt[tgt >= 0]
            d = np.full(n, np.inf)
            if len(tgt):
                d[keep] = dijkstra(self.adjacency[keep][:, keep], unweighted=True, indices=tgt, min_only=True)
        d[np.isinf(d)] = -1
        return d.astype(np.int64)

    def distance(self, a, b) -> int:
        i, j = self.index_of(a), self.index_of(b)
        return int(self.distances_from([i])[0, j])

    @property
    def sphere_distance(self) -> np.ndarray:
        """Ball distance from each point to the sphere of radius r."""
        if self._sigma is None:
            self._sigma = self.distance_to_set(np.flatnonzero(self.depth == self.radius))
            if (self._sigma < 0).all():  # finite group: nothing is truncated
                self._sigma = np.full(len(self.points), np.iinfo(np.int32).max, dtype=np.int64)
        return self._sigma

    def certified(self, i, j, d) -> np.ndarray | bool:
        """True where the ball distance ``d`` between ``i`` and ``j`` equals the distance in X.

        A shorter path in X would leave the ball, so it would run from ``i`` to
        the sphere, step out, step back in, and run from the sphere to ``j``.
        """
        s = self.sphere_distance
        return np.asarray(d) <= s[np.asarray(i)] + s[np.asarray(j)] + 2

    # -- tree locations ---------------------------------------------------------

    def node_of_point(self, p) -> TreeNode:
        return self.nodes[self.node_of[self.index_of(p)]]

    def edge_at(self, p, e: str) -> TreeEdge:
        """The Bass-Serre edge whose edge space contains ``p`` and lifts ``e``."""
        i = self.index_of(p)
        if self.points[i].end != self.g.edges[e].source:
            raise ValueError(f"edge {e} does not leave vertex {self.points[i].end}")
        return TreeEdge(self.nodes[self.node_of[i]], self.nodes[self.cross_node[e][i]], e)

    def subspace(self, loc) -> SubspaceSelection:
        """Points of the vertex space (TreeNode) or edge space (TreeEdge) ``loc`` in the ball."""
        if isinstance(loc, TreeNode):
            k = self._nodes.get(loc)
            if k is None:
                raise UnknownTreeLocation(f"{loc} does not meet the ball")
            return SubspaceSelection(loc, np.flatnonzero(self.node_of == k))
        if isinstance(loc, TreeEdge):
            t, h = self._nodes.get(loc.tail), self._nodes.get(loc.head)
            if t is None or h is None or loc.edge not in self.g.edges:
                raise UnknownTreeLocation(f"{loc} does not meet the ball")
            sel = np.flatnonzero((self.node_of == t) & (self.cross_node[loc.edge] == h))
            if len(sel) == 0:
                raise UnknownTreeLocation(f"{loc} does not meet the ball")
            return SubspaceSelection(loc, sel)
        raise UnknownTreeLocation(f"not a tree location: {loc!r}")

    # -- export -------------------------------------------------------------------

    def write(self, fh: TextIO, config_hash: str = "") -> None:
        """Text export: ``#`` header, then ``v`` rows and ``e`` rows (tab separated)."""
        a = self.adjacency
        upper = [(i, int(j)) for i in range(len(self.points)) for j in self.neighbors(i) if i < j]
        fh.write("# gogbench ball v1\n")
        fh.write(f"# config-sha256: {config_hash}\n")
        fh.write(f"# radius: {self.radius}\n")
        fh.write(f"# basepoint: {self.render(0)} @ {self.points[0].end}\n")
        fh.write(f"# vertices: {len(self.points)}\n")
        fh.write(f"# edges: {len(upper)}\n")
        for i, p in enumerate(self.points):
            fh.write(f"v\t{i}\t{p.end}\t{self.depth[i]}\t{render_nf(self.g, p)}\n")
        for i, j in upper:
            fh.write(f"e\t{i}\t{j}\n")
        assert a.nnz == 2 * len(upper)


def build_ball(
    g: GraphOfGroups, radius: int, start: str | None = None, budget: int = DEFAULT_BUDGET
) -> BallGraph:
    """Ball of radius ``radius`` around the identity of ``start`` (default: base vertex)."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    g.require_valid()
    return BallGraph(g, radius, identity_nf(g, start), budget)


# -- the Bass-Serre tree ----------------------------------------------------------


class TreeBall:
    """The part of the Bass-Serre tree seen by a ball of X.

    Nodes are the vertex spaces meeting the ball together with the far ends
    of edge spaces meeting it.  For betweenness every edge is subdivided in
    three, placing the point of ``e`` at a third of the way from ``e_-``.
    """

    def __init__(self, g: GraphOfGroups, nodes: Iterable[TreeNode], edges: Iterable[TreeEdge], root: TreeNode):
        self.g = g
        self.root = root
        self.nodes = set(nodes)
        self.edges: set[TreeEdge] = set()
        self.adj: dict[TreeNode, set[TreeNode]] = {n: set() for n in self.nodes}
        for te in edges:
            self.edges.add(te)
            self.edges.add(te.reverse(g))
            self.nodes.update((te.tail, te.head))
            self.adj.setdefault(te.tail, set()).add(te.head)
            self.adj.setdefault(te.head, set()).add(te.tail)
        self._parent: dict[TreeNode, TreeNode | None] = {root: None}
        self._level = {root: 0}
        queue = deque([root])
        while queue:
            n = queue.popleft()
            for m in sorted(self.adj.get(n, ()), key=repr):
                if m not in self._level:
                    self._level[m] = self._level[n] + 1
                    self._parent[m] = n
                    queue.append(m)
        if len(self._level) != len(self.nodes):
            raise ValueError("tree ball is not connected")

    @classmethod
    def from_ball(cls, ball: BallGraph) -> TreeBall:
        g = ball.g
        edges = set()
        for e in g.edges:
            src = np.flatnonzero(ball.cross_node[e] >= 0)
            pairs = set(zip(ball.node_of[src].tolist(), ball.cross_node[e][src].tolist()))
            edges.update(TreeEdge(ball.nodes[t], ball.nodes[h], e) for t, h in pairs)
        nodes = {ball.nodes[k] for k in set(ball.node_of.tolist())}
        return cls(g, nodes, edges, TreeNode.of(ball.basepoint))

    def degree(self, n: TreeNode) -> int:
        return len(self.adj.get(n, ()))

    def node_distance(self, a: TreeNode, b: TreeNode) -> int:
        for n in (a, b):
            if n not in self._level:
                raise UnknownTreeLocation(f"{n} is not in the tree ball")
        d = 0
        while a != b:
            if self._level[a] >= self._level[b]:
                a = self._parent[a]
            else:
                b = self._parent[b]
            d += 1
        return d

    def _anchor(self, x) -> list[tuple[TreeNode, int]]:
        """Nodes at the ends of the segment carrying ``x`` with their distance (in thirds)."""
        if isinstance(x, TreeNode):
            if x not in self._level:
                raise UnknownTreeLocation(f"{x} is not in the tree ball")
            return [(x, 0)]
        if isinstance(x, TreeEdge):
            if x not in self.edges:
                raise UnknownTreeLocation(f"{x} is not in the tree ball")
            return [(x.tail, 1), (x.head, 2)]
        raise UnknownTreeLocation(f"not a tree location: {x!r}")

    def _segment(self, x):
        return frozenset((x.tail, x.head)) if isinstance(x, TreeEdge) else None

    def distance(self, x, y) -> int:
        """Distance in the subdivided tree, in units of a third of an edge."""
        if x == y:
            return 0
        sx, sy = self._segment(x), self._segment(y)
        if sx is not None and sx == sy:
            return 1  # the two points of one edge
        return min(dx + 3 * self.node_distance(a, b) + dy for a, dx in self._anchor(x) for b, dy in self._anchor(y))

    def between(self, a, b, c, strict: bool = True) -> bool:
        """Whether ``b`` lies on the geodesic from ``a`` to ``c`` in the subdivided tree."""
        on = self.distance(a, b) + self.distance(b, c) == self.distance(a, c)
        if strict:
            return on and b != a and b != c
        return on


def tree_ball(g: GraphOfGroups, radius: int, start: str | None = None, budget: int = DEFAULT_BUDGET) -> TreeBall:
    return TreeBall.from_ball(build_ball(g, radius, start, budget))


# -- Hausdorff distance and sides ---------------------------------------------------


def _nonempty(sel: SubspaceSelection, what: str = "selection") -> np.ndarray:
    if sel is None or len(sel.indices) == 0:
        raise EmptySelection(f"empty {what}")
    return sel.indices


def hausdorff_distance(ball: BallGraph, a: SubspaceSelection, b: SubspaceSelection, margin: int = 1) -> int:
    """Hausdorff distance measured inside the ball.

    Only points at depth ``<= r - margin`` are used as witnesses, so edge
    spaces whose partners were cut off at the sphere do not inflate the value.
    """
    ia, ib = _nonempty(a), _nonempty(b)
    worst = 0
    for src, dst in ((ia, ib), (ib, ia)):
        d = ball.distance_to_set(dst)
        pts = src[ball.depth[src] <= ball.radius - margin]
        if len(pts) == 0:
            raise EmptySelection(f"no points of the selection lie within depth {ball.radius - margin}")
        if (d[pts] < 0).any():
            raise EmptySelection("selections lie in different components of the ball")
        worst = max(worst, int(d[pts].max()))
    return worst


@dataclass
class Sides:
    edge: TreeEdge
    on_edge: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    epsilon: np.ndarray  # +1 / -1 per ball point; edge-space points count as -1


def sides_decomposition(ball: BallGraph, te: TreeEdge) -> Sides:
    """Split the ball into the edge space X_e and the two sides of it."""
    try:
        xe = ball.subspace(te).indices
    except UnknownTreeLocation:
        raise EmptyEdgeSpace(f"edge space of {te} is empty in the ball") from None
    try:
        xeb = ball.subspace(te.reverse(ball.g)).indices
    except UnknownTreeLocation:
        xeb = np.empty(0, dtype=np.int64)
    mask = np.ones(len(ball), dtype=bool)
    mask[xe] = False
    d = ball.distance_to_set(xeb, mask=mask)
    plus_mask = (d >= 0) & mask
    eps = np.where(plus_mask, 1, -1).astype(np.int64)
    return Sides(te, xe, np.flatnonzero(plus_mask), np.flatnonzero(mask & ~plus_mask), eps)


# -- distortion -------------------------------------------------------------------


@dataclass
class DistortionProfile:
    table: Counter  # (d_intrinsic, d_ambient) -> count
    K: float
    A: float
    max_ratio: float
    pairs: int
    certified_pairs: int
    sampled: bool
    rows: list = field(default_factory=list)

    def csv_rows(self) -> list[tuple[int, int, int]]:
        return sorted((a, b, n) for (a, b), n in self.table.items())


def fit_constants(table: Counter, min_ambient: int = 3) -> tuple[Fraction, Fraction, Fraction]:
    """Least K (over pairs with d_ambient >= min_ambient), then least A, for d_int <= K d_amb + A."""
    ratios = [Fraction(i, a) for (i, a) in table if a >= min_ambient]
    k = max(ratios) if ratios else Fraction(1)
    a = max([Fraction(i) - k * amb for (i, amb) in table] + [Fraction(0)])
    mr = max([Fraction(i, amb) for (i, amb) in table if amb > 0] + [Fraction(0)])
    return k, a, mr


def _edge_coords(ball: BallGraph, sel: SubspaceSelection) -> np.ndarray:
    te = sel.location
    g = ball.g
    e = te.edge
    b = g.backend(g.edges[e].source)
    grp = g.edge_groups[e]
    base_inv = b.invert(ball.points[sel.indices[0]].tail)
    out = []
    for i in sel.indices:
        k = g.edge_membership(b.multiply(base_inv, ball.points[i].tail), e)
        if k is None:
            raise ValueError(f"point {i} is not in the edge space {te}")
        out.append(k)
    w = np.array([len(grp.root), grp.c], dtype=np.int64)
    return np.asarray(out, dtype=np.int64), w


def _intrinsic(ball: BallGraph, sel: SubspaceSelection, kind: str):
    idx = sel.indices
    if kind == "ambient":
        return None
    if kind == "edge":
        if not isinstance(sel.location, TreeEdge):
            raise ValueError("edge intrinsic metric needs an edge-space selection")
        coords, w = _edge_coords(ball, sel)
        return lambda i, j: (np.abs(coords[i] - coords[j]) * w).sum(axis=-1)
    if kind == "vertex":
        tails = [ball.points[i].tail for i in idx]

        def vertex_metric(i, j):
            out = np.empty(len(i), dtype=np.int64)
            for n, (a, c) in enumerate(zip(i, j)):
                x, y = tails[a], tails[c]
                out[n] = len(free_mul(free_inv(x.free.letters), y.free.letters)) + abs(
                    y.center.coords[0] - x.center.coords[0]
                )
            return out

        return vertex_metric
    raise ValueError(f"unknown intrinsic metric {kind!r}")


def distortion_profile(
    ball: BallGraph,
    sel: SubspaceSelection,
    intrinsic: str = "edge",
    seed: int | None = None,
    certified_only: bool = True,
    keep_rows: bool = False,
) -> DistortionProfile:
    """Intrinsic versus ambient distances over pairs of ``sel``, with fitted (K, A).

    ``intrinsic`` is ``"edge"`` (weighted l1 in edge coordinates), ``"vertex"``
    (word metric of the vertex group) or ``"ambient"``.  All pairs are used
    up to ``SAMPLE_THRESHOLD`` points; beyond that ``SAMPLE_PAIRS`` pairs are
    drawn with ``seed``, which is then required.
    """
    idx = _nonempty(sel)
    n = len(idx)
    metric = _intrinsic(ball, sel, intrinsic)
    sampled = n > SAMPLE_THRESHOLD
    if sampled:
        if seed is None:
            raise ValueError(f"selection has {n} points; a seed is required for sampling")
        rng = np.random.default_rng(seed)
        n_src = min(n, 500)
        src_local = np.sort(rng.choice(n, size=n_src, replace=False))
        per = SAMPLE_PAIRS // n_src
        tgt_local = rng.integers(0, n, size=(n_src, per))
    else:
        src_local = np.arange(n)
    table: Counter = Counter()
    total = cert = 0
    rows = []
    for lo in range(0, len(src_local), _CHUNK):
        block = src_local[lo:lo + _CHUNK]
        dist = ball.distances_from(idx[block])
        for r, a in enumerate(block):
            b = tgt_local[lo + r] if sampled else np.arange(a + 1, n)
            b = b[b != a]
            if len(b) == 0:
                continue
            amb = dist[r, idx[b]]
            ok = ball.certified(idx[a], idx[b], amb) & (amb >= 0)
            total += len(b)
            cert += int(ok.sum())
            if certified_only:
                b, amb = b[ok], amb[ok]
            intr = amb if metric is None else metric(np.full(len(b), a), b)
            for x, y in zip(intr.tolist(), amb.tolist()):
                table[(x, y)] += 1
            if keep_rows:
                rows += [(int(idx[a]), int(idx[c]), x, y) for c, x, y in zip(b.tolist(), intr.tolist(), amb.tolist())]
    if not table:
        raise EmptySelection("no certified pairs in the selection")
    k, a_const, mr = fit_constants(table)
    return DistortionProfile(table, float(k), float(a_const), float(mr), total, cert, sampled, rows)
