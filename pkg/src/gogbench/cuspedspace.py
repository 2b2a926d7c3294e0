"""Combinatorial horoballs, truncated cusped spaces and Gromov delta.

Vertices of a horoball over a base graph T are pairs ``(t, n)`` with depth
``0 <= n <= D``; ``(t, n) ~ (t, n + 1)`` always and ``(s, n) ~ (t, n)``
when ``d_T(s, t) <= 2^n``.  A cusped graph glues one horoball onto each
peripheral coset meeting a Cayley ball.

Delta values are half-integers; they are carried internally as ``2 * delta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Iterable, Sequence, TextIO

import numba
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import BudgetExceeded, Disconnected, DisconnectedBase
from .groupcore import DEFAULT_BUDGET, BackendSpec, FreeWord, GroupElement, IntVector, free_coset_rep

# old system TBB builds only produce a warning; prefer the layers that always work
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


class FiniteGraph:
    """An undirected unweighted graph on labelled vertices.

    ``frontier`` marks vertices whose neighbourhood was cut short by a
    truncation; distances through the missing part of the space are unknown.
    ``guard`` marks the coarser boundary (deepest level, sphere of the ball)
    near which vertices are left out of delta estimates; it defaults to
    ``frontier``.
    """

    def __init__(
        self,
        labels: Sequence[Hashable],
        edges: Iterable[tuple[int, int]],
        depth: Sequence[int] | None = None,
        frontier: Sequence[bool] | None = None,
        guard: Sequence[bool] | None = None,
    ):
        self.labels = list(labels)
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        n = len(self.labels)
        e = np.array([(a, b) for a, b in edges if a != b], dtype=np.int64).reshape(-1, 2)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        adj = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
        adj.sum_duplicates()
        adj.data[:] = 1
        self.adjacency = adj
        self.depth = np.zeros(n, dtype=np.int64) if depth is None else np.asarray(depth, dtype=np.int64)
        self.frontier = np.zeros(n, dtype=bool) if frontier is None else np.asarray(frontier, dtype=bool)
        self.guard = self.frontier.copy() if guard is None else np.asarray(guard, dtype=bool)
        self._dist = None

    def __len__(self):
        return len(self.labels)

    @property
    def edge_count(self) -> int:
        return self.adjacency.nnz // 2

    def edges(self) -> list[tuple[int, int]]:
        coo = self.adjacency.tocoo()
        return sorted((int(a), int(b)) for a, b in zip(coo.row, coo.col) if a < b)

    def is_connected(self) -> bool:
        return len(self) <= 1 or connected_components(self.adjacency, directed=False)[0] == 1

    def distances(self) -> np.ndarray:
        """All-pairs hop distances (``int32``)."""
        if self._dist is None:
            if not self.is_connected():
                raise Disconnected("graph is not connected")
            self._dist = dijkstra(self.adjacency, unweighted=True).astype(np.int32)
        return self._dist

    def distance(self, a, b) -> int:
        return int(self.distances()[self.index[a], self.index[b]])

    def write(self, fh: TextIO, title: str = "") -> None:
        """Edge-list export with a depth column."""
        edges = self.edges()
        fh.write("# gogbench graph v1\n")
        if title:
            fh.write(f"# {title}\n")
        fh.write(f"# vertices: {len(self)}\n# edges: {len(edges)}\n")
        for i, lab in enumerate(self.labels):
            fh.write(f"v\t{i}\t{self.depth[i]}\t{int(self.frontier[i])}\t{lab}\n")
        for a, b in edges:
            fh.write(f"e\t{a}\t{b}\n")


def path_graph(n: int) -> FiniteGraph:
    return FiniteGraph(range(n), [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> FiniteGraph:
    return FiniteGraph(range(n), [(i, (i + 1) % n) for i in range(n)])


def grid_ball(r: int) -> FiniteGraph:
    """The l1 ball of radius r in the standard Cayley graph of Z^2."""
    pts = [(x, y) for x in range(-r, r + 1) for y in range(-r, r + 1) if abs(x) + abs(y) <= r]
    idx = {p: i for i, p in enumerate(pts)}
    edges = [(idx[p], idx[q]) for p in pts for q in ((p[0] + 1, p[1]), (p[0], p[1] + 1)) if q in idx]
    return FiniteGraph(pts, edges)


# -- horoballs ------------------------------------------------------------------------


def _horizontal_pairs(dt: np.ndarray, n: int) -> np.ndarray:
    reach = 1 << n if n < 62 else np.iinfo(np.int64).max
    a, b = np.nonzero(np.triu(dt <= reach, k=1))
    return np.stack([a, b], axis=1)


def build_horoball(base: FiniteGraph, depth: int) -> FiniteGraph:
    """Horoball of depth ``depth`` over a connected finite graph; labels ``(t, n)``."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    if not base.is_connected():
        raise DisconnectedBase("horoball base graph is not connected")
    m = len(base)
    dt = base.distances()
    labels = [(t, n) for n in range(depth + 1) for t in base.labels]
    edges = []
    for n in range(depth + 1):
        off = n * m
        edges += [(off + a, off + b) for a, b in _horizontal_pairs(dt, n).tolist()]
        if n < depth:
            edges += [(off + t, off + m + t) for t in range(m)]
    depths = [n for n in range(depth + 1) for _ in range(m)]
    frontier = [n == depth for n in depths]
    return FiniteGraph(labels, edges, depths, frontier)


# -- cusped spaces --------------------------------------------------------------------


def peripheral_coset_key(b: BackendSpec, x: GroupElement, u: GroupElement) -> Hashable:
    """A label shared exactly by the elements of the coset ``x<u>``."""
    if type(x) is FreeWord:
        return free_coset_rep(x.letters, u.letters)[0]
    if type(x) is IntVector:
        j = next(i for i, c in enumerate(u.coords) if c)
        k = x.coords[j] // u.coords[j]
        return tuple(a - k * c for a, c in zip(x.coords, u.coords))
    if u.center.coords[0]:
        raise ValueError("peripheral element of a product backend must lie in the free factor")
    return (free_coset_rep(x.free.letters, u.free.letters)[0], x.center.coords[0])


@dataclass
class CuspedGraph:
    graph: FiniteGraph
    radius: int
    depth: int
    cosets: list  # lists of ball indices, one per peripheral coset
    ball_size: int


def build_cusped(
    b: BackendSpec, peripheral: GroupElement | str, radius: int, depth: int, budget: int = DEFAULT_BUDGET
) -> CuspedGraph:
    """Cayley ball of radius ``radius`` with a depth-``depth`` horoball on each coset ``g<u>``.

    Labels are ``(element, n)``.  Frontier vertices are those whose
    neighbourhood in the untruncated cusped space is larger: depth-``depth``
    vertices, Cayley vertices on the sphere, and horoball vertices within
    horizontal reach of a coset point that continues past the sphere.
    """
    u = b.parse(peripheral) if isinstance(peripheral, str) else peripheral
    if u == b.identity():
        raise ValueError("peripheral element must be nontrivial")
    if depth < 0 or radius < 0:
        raise ValueError("radius and depth must be non-negative")
    pts = b.ball(radius, budget)
    idx = {p: i for i, p in enumerate(pts)}
    gens = b.generators()
    nbr = [[idx.get(b.multiply(p, s), -1) for s in gens] for p in pts]
    length = np.array([b.word_length(p) for p in pts])
    total = len(pts) * (depth + 1)
    if total > budget:
        raise BudgetExceeded(f"cusped graph needs {total} vertices, budget is {budget}")
    groups: dict = {}
    for i, p in enumerate(pts):
        groups.setdefault(peripheral_coset_key(b, p, u), []).append(i)
    cosets = sorted(groups.values())
    coset_of = np.empty(len(pts), dtype=np.int64)
    for k, c in enumerate(cosets):
        coset_of[c] = k

    labels = [(p, 0) for p in pts]
    depths = [0] * len(pts)
    on_sphere = [bool(x) for x in length == radius]
    frontier = list(on_sphere) if depth > 0 else [True] * len(pts)
    guard = [s or depth == 0 for s in on_sphere]
    edges = [(i, j) for i in range(len(pts)) for j in nbr[i] if j > i]
    for members in cosets:
        local = {g: k for k, g in enumerate(members)}
        tedges = [(local[i], local[j]) for i in members for j in nbr[i] if j in local and j > i]
        t = FiniteGraph(members, tedges)
        if not t.is_connected():
            raise DisconnectedBase(
                f"coset of {b.render(u)} through {b.render(pts[members[0]]) or '1'} is not connected in the ball;"
                " the peripheral element should be a generator"
            )
        dt = t.distances()
        # coset points whose coset continues outside the ball
        ends = [
            local[i]
            for i in members
            if any(j < 0 and peripheral_coset_key(b, b.multiply(pts[i], s), u) == peripheral_coset_key(b, pts[i], u)
                   for s, j in zip(gens, nbr[i]))
        ]
        reach_end = dt[:, ends].min(axis=1) if ends else np.full(len(members), np.iinfo(np.int32).max)
        prev = members  # graph indices of the level above
        for n in range(1, depth + 1):
            level = list(range(len(labels), len(labels) + len(members)))
            labels += [(pts[i], n) for i in members]
            depths += [n] * len(members)
            frontier += [bool(n == depth or reach_end[k] <= (1 << n) - 1) for k in range(len(members))]
            guard += [n == depth or on_sphere[i] for i in members]
            edges += [(level[a], level[c]) for a, c in _horizontal_pairs(dt, n).tolist()]
            edges += list(zip(prev, level))
            prev = level
    g = FiniteGraph(labels, edges, depths, frontier, guard)
    return CuspedGraph(g, radius, depth, cosets, len(pts))


# -- delta ----------------------------------------------------------------------------


@numba.njit(cache=True, parallel=True)
def _four_point_kernel(d, ok):
    n = d.shape[0]
    best = np.zeros(n, dtype=np.int64)
    count = np.zeros(n, dtype=np.int64)
    for i in numba.prange(n):
        bi = 0
        ci = 0
        for j in range(i + 1, n):
            if not ok[i, j]:
                continue
            dij = d[i, j]
            for k in range(j + 1, n):
                if not (ok[i, k] and ok[j, k]):
                    continue
                dik = d[i, k]
                djk = d[j, k]
                for l in range(k + 1, n):
                    if not (ok[i, l] and ok[j, l] and ok[k, l]):
                        continue
                    s1 = dij + d[k, l]
                    s2 = dik + d[j, l]
                    s3 = d[i, l] + djk
                    if s1 < s2:
                        s1, s2 = s2, s1
                    if s2 < s3:
                        s2, s3 = s3, s2
                    if s1 < s2:
                        s1, s2 = s2, s1
                    if s1 - s2 > bi:
                        bi = s1 - s2
                    ci += 1
        best[i] = bi
        count[i] = ci
    return best.max() if n else 0, count.sum()


@numba.njit(cache=True)
def _basepoint_kernel(d, ok, w):
    """Twice the max over x, y, z of min((x|z)_w, (y|z)_w) - (x|y)_w, with twice-products."""
    n = d.shape[0]
    g = np.empty((n, n), dtype=np.int64)
    for x in range(n):
        for y in range(n):
            g[x, y] = d[x, w] + d[y, w] - d[x, y]
    best = 0
    count = 0
    for x in range(n):
        if not ok[x, w]:
            continue
        for y in range(n):
            if not (ok[y, w] and ok[x, y]):
                continue
            for z in range(n):
                if not (ok[z, w] and ok[x, z] and ok[y, z]):
                    continue
                m = g[x, z] if g[x, z] < g[y, z] else g[y, z]
                if m - g[x, y] > best:
                    best = m - g[x, y]
                count += 1
    return best, count


def _maxmin_twice(d: np.ndarray, ok: np.ndarray, w: int) -> int:
    """Max-min matrix form of the basepoint bound (numpy, used as a cross-check)."""
    col = d[:, w].astype(np.int64)
    g = col[:, None] + col[None, :] - d.astype(np.int64)
    valid = ok & ok[:, w][:, None] & ok[:, w][None, :]
    neg = np.iinfo(np.int64).min // 4
    gm = np.where(valid, g, neg)
    best = 0
    for x in range(len(d)):
        if not ok[x, w]:
            continue
        mm = np.minimum(gm[x][None, :], gm).max(axis=1)  # max_z min(g[x,z], g[y,z]) for every y
        cand = np.where(valid[x], mm - g[x], neg)
        best = max(best, int(cand.max()))
    return best


@dataclass
class DeltaEstimate:
    twice: int
    method: str
    certified: int
    guard: str
    vertices: int
    used_vertices: int

    @property
    def value(self) -> Fraction:
        return Fraction(self.twice, 2)

    def record(self) -> str:
        v = self.value
        text = str(v.numerator) if v.denominator == 1 else f"{float(v):g}"
        return (
            f"delta={text} method={self.method} certified={self.certified} "
            f"guard={self.guard} vertices={self.vertices} used={self.used_vertices}"
        )


def _certification(graph: FiniteGraph, margin: int):
    """Usable vertices and the pairs among them whose truncated distance is exact.

    Vertices within ``margin`` of the guard set are dropped.  A pair is
    certified when ``d <= sigma(a) + sigma(b) + 1`` with ``sigma`` the distance
    to the frontier: any path through the missing part of the space must run
    to the frontier, leave, and come back.
    """
    d = graph.distances()
    n = len(graph)
    if not graph.frontier.any() and not graph.guard.any():
        return np.arange(n), np.ones((n, n), dtype=bool), "none"
    big = np.iinfo(np.int32).max // 4
    near = d[:, graph.guard].min(axis=1) if graph.guard.any() else np.full(n, big)
    keep = np.flatnonzero(near > margin)
    sigma = d[:, graph.frontier].min(axis=1).astype(np.int64) if graph.frontier.any() else np.full(n, big)
    s = sigma[keep]
    sub = d[np.ix_(keep, keep)]
    ok = sub <= s[:, None] + s[None, :] + 1
    return keep, ok, f"margin-{margin}+certified-pairs"


def estimate_delta(graph: FiniteGraph, method: str = "four-point", basepoint: int = 0, margin: int = 1) -> DeltaEstimate:
    """Gromov delta by the four-point condition.

    ``four-point`` enumerates every quadruple; ``maxmin`` takes the maximum
    over basepoints of the max-min bound (equal by the Gromov-product form of
    the condition); ``basepoint`` fixes one basepoint.  On truncated graphs
    only vertices farther than ``margin`` from the guard set, and only
    certified pairs among them, enter a quadruple.
    """
    if not graph.is_connected():
        raise Disconnected("graph is not connected")
    keep, ok, guard = _certification(graph, margin)
    d = np.ascontiguousarray(graph.distances()[np.ix_(keep, keep)]).astype(np.int64)
    if method == "four-point":
        twice, count = _four_point_kernel(d, ok)
    elif method == "maxmin":
        twice = max((_maxmin_twice(d, ok, w) for w in range(len(keep))), default=0)
        count = int(ok.sum())
    elif method == "basepoint":
        where = np.flatnonzero(keep == basepoint)
        if len(where) == 0:
            twice, count = 0, 0
        else:
            twice, count = _basepoint_kernel(d, ok, int(where[0]))
    else:
        raise ValueError(f"unknown delta method {method!r}")
    return DeltaEstimate(int(twice), method, int(count), guard, len(graph), len(keep))


def gromov_product(graph: FiniteGraph, x, y, w) -> Fraction:
    """``(x | y)_w`` for labels ``x``, ``y``, ``w``."""
    d = graph.distances()
    i, j, k = graph.index[x], graph.index[y], graph.index[w]
    return Fraction(int(d[i, k]) + int(d[j, k]) - int(d[i, j]), 2)
