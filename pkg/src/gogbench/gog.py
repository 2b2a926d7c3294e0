"""Graph-of-groups data, validation, edge-subgroup algebra and admissibility checks.

Every edge group is a split rank-2 subgroup ``<(u, 0)> x <(1, c)>`` of a
``F_k x Z`` vertex group, with ``u`` a root in the free factor.  Elements of
an edge group are addressed by *edge coordinates* ``(k1, k2)`` meaning
``(u^k1, c*k2)``; the edge map is then an integer 2x2 matrix.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .errors import BackendMismatch, ValidationFailed
from .groupcore import (
    DEFAULT_BUDGET,
    IDENTITY2,
    BackendSpec,
    FreeWord,
    GroupElement,
    IntVector,
    ProductPair,
    conjugator_between,
    cyclic_membership,
    free_coset_rep,
    free_inv,
    free_mul,
    free_pow,
    free_root,
    lattice_index,
    letter_key,
    mat_inv_unimodular,
    mat_mul,
    mat_vec,
    solve2,
)

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive-at-radius"


@dataclass(frozen=True)
class Vertex:
    id: str
    backend: BackendSpec


@dataclass(frozen=True)
class Edge:
    """An oriented edge; ``image[i]`` is the edge map applied to ``basis[i]``."""

    id: str
    source: str
    target: str
    reverse: str
    basis: tuple
    image: tuple


@dataclass(frozen=True)
class EdgeGroup:
    root: tuple  # u as raw free letters
    c: int
    to_target: tuple  # matrix: edge coords here -> edge coords of the reverse edge

    @property
    def u(self) -> FreeWord:
        return FreeWord(self.root)


@dataclass(frozen=True)
class EdgeSubgroupShape:
    """The subgroup ``<(w, 0)> x <(1, c)>`` of a product backend."""

    free_generator: FreeWord
    c: int

    def same_as(self, other: EdgeSubgroupShape) -> bool:
        w, v = self.free_generator.letters, other.free_generator.letters
        return self.c == other.c and (w == v or w == free_inv(v))

    def commensurable_with(self, other: EdgeSubgroupShape) -> bool:
        w, v = self.free_generator.letters, other.free_generator.letters
        if not w or not v:
            return not w and not v
        rw, rv = free_root(w), free_root(v)
        return rw == rv or rw == free_inv(rv)


@dataclass
class Violation:
    code: str
    message: str
    witness: object = None

    def __str__(self):
        return f"[{self.code}] {self.message}" + (f" (witness: {self.witness})" if self.witness is not None else "")


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "valid"
        return "\n".join(str(v) for v in self.violations)


@dataclass
class ConditionVerdict:
    status: str
    method: str
    detail: dict = field(default_factory=dict)
    witnesses: list = field(default_factory=list)

    def __post_init__(self):
        if self.status == FAIL and not self.witnesses:
            raise ValueError("a failing verdict needs a witness")


@dataclass
class AdmissibilityReport:
    radius: int
    conditions: dict

    @property
    def passed(self) -> bool:
        return all(c.status == PASS for c in self.conditions.values())

    def to_dict(self) -> dict:
        return {
            "radius": self.radius,
            "passed": self.passed,
            "conditions": {
                k: {"status": v.status, "method": v.method, "detail": v.detail, "witnesses": v.witnesses}
                for k, v in self.conditions.items()
            },
        }


class GraphOfGroups:
    """The datum (Gamma, {G_v}, {G_e}, {tau_e}) with a fixed base vertex and spanning tree."""

    def __init__(
        self,
        vertices: Iterable[Vertex],
        edges: Iterable[Edge],
        base: str | None = None,
        spanning_tree: Iterable[str] | None = None,
        name: str = "",
    ):
        self.vertices = {v.id: v for v in vertices}
        self.edges = {e.id: e for e in edges}
        self.name = name
        self.base = base if base is not None else (min(self.vertices) if self.vertices else None)
        self._tree_override = None if spanning_tree is None else set(spanning_tree)
        self.tree_edges: frozenset = frozenset()
        self.edge_groups: dict[str, EdgeGroup] = {}
        self._report: ValidationReport | None = None
        self._coset_cache: dict = {}
        self._lk: dict[str, list[str]] = {v: [] for v in self.vertices}
        for e in sorted(self.edges):
            src = self.edges[e].source
            if src in self._lk:
                self._lk[src].append(e)

    # -- structure ------------------------------------------------------------

    def backend(self, v: str) -> BackendSpec:
        return self.vertices[v].backend

    def lk(self, v: str) -> list[str]:
        return self._lk[v]

    def rev(self, e: str) -> str:
        return self.edges[e].reverse

    def is_tree_edge(self, e: str) -> bool:
        return e in self.tree_edges

    def stable_orientation(self, e: str) -> bool:
        """True if ``e`` is the positive orientation of its (non-tree) edge pair."""
        return e <= self.rev(e)

    def tree_path(self, a: str, b: str) -> list[str]:
        """Oriented spanning-tree edges leading from vertex ``a`` to vertex ``b``."""
        prev = {a: None}
        queue = deque([a])
        while queue:
            v = queue.popleft()
            if v == b:
                break
            for e in self.lk(v):
                w = self.edges[e].target
                if e in self.tree_edges and w not in prev:
                    prev[w] = e
                    queue.append(w)
        path = []
        v = b
        while prev[v] is not None:
            e = prev[v]
            path.append(e)
            v = self.edges[e].source
        return path[::-1]

    # -- validation -------------------------------------------------------------

    def validate(self) -> ValidationReport:
        if self._report is None:
            self._report = self._validate()
        return self._report

    def require_valid(self) -> GraphOfGroups:
        rep = self.validate()
        if not rep.ok:
            raise ValidationFailed(f"graph of groups {self.name!r} is invalid:\n{rep}", rep.violations)
        return self

    def _validate(self) -> ValidationReport:
        out: list[Violation] = []
        if not self.vertices:
            out.append(Violation("empty", "no vertices"))
            return ValidationReport(out)
        if self.base not in self.vertices:
            out.append(Violation("base", f"base vertex {self.base!r} is not a vertex", self.base))
        if not self.edges:
            out.append(Violation("no-edge", "the underlying graph needs at least one edge", self.base))
        for e in sorted(self.edges):
            out += self._check_edge_structure(self.edges[e])
        if out:
            return ValidationReport(out)
        for e in sorted(self.edges):
            grp, viol = self._edge_group_shape(self.edges[e])
            out += viol
            if grp is not None:
                self.edge_groups[e] = grp
        if out:
            return ValidationReport(out)
        for e in sorted(self.edges):
            out += self._edge_map(self.edges[e])
        if out:
            return ValidationReport(out)
        for e in sorted(self.edges):
            f = self.rev(e)
            comp = mat_mul(self.edge_groups[f].to_target, self.edge_groups[e].to_target)
            if comp != IDENTITY2:
                bad = next(k for k in ((1, 0), (0, 1)) if mat_vec(comp, k) != k)
                out.append(
                    Violation(
                        "involution",
                        f"tau_{f} o tau_{e} is not the identity: edge coords {bad} -> {mat_vec(comp, bad)}",
                        {"edge": e, "coords": bad, "image": mat_vec(comp, bad)},
                    )
                )
        out += self._check_connected_and_tree()
        return ValidationReport(out)

    def _check_edge_structure(self, edge: Edge) -> list[Violation]:
        out = []
        for end in (edge.source, edge.target):
            if end not in self.vertices:
                out.append(Violation("unknown-vertex", f"edge {edge.id} names unknown vertex {end!r}", edge.id))
        if edge.reverse not in self.edges:
            out.append(Violation("reverse-missing", f"edge {edge.id} has no reverse edge {edge.reverse!r}", edge.id))
            return out
        r = self.edges[edge.reverse]
        if edge.reverse == edge.id:
            out.append(Violation("reverse-fixed", f"edge {edge.id} is its own reverse", edge.id))
        elif r.reverse != edge.id or r.source != edge.target or r.target != edge.source:
            out.append(Violation("reverse-mismatch", f"edges {edge.id} and {r.id} are not mutually reverse", edge.id))
        if out:
            return out
        for end in (edge.source, edge.target):
            if self.backend(end).kind != "product":
                out.append(
                    Violation("edge-shape", f"edge {edge.id}: vertex {end} must be a F_k x Z backend", edge.id)
                )
        if len(edge.basis) != 2 or len(edge.image) != 2:
            out.append(Violation("edge-shape", f"edge {edge.id} needs exactly two basis elements and images", edge.id))
        if out:
            return out
        for x in edge.basis:
            try:
                self.backend(edge.source).check(x)
            except BackendMismatch as err:
                out.append(Violation("edge-shape", f"edge {edge.id}: {err}", edge.id))
        for x in edge.image:
            try:
                self.backend(edge.target).check(x)
            except BackendMismatch as err:
                out.append(Violation("edge-shape", f"edge {edge.id}: {err}", edge.id))
        return out

    def _edge_group_shape(self, edge: Edge):
        b = self.backend(edge.source)
        x, y = edge.basis
        comm = b.multiply_all(x, y, b.invert(x), b.invert(y))
        if comm != b.identity():
            return None, [
                Violation("non-commuting", f"edge {edge.id}: basis elements do not commute", b.render(comm))
            ]
        frees = [x.free.letters, y.free.letters]
        nontrivial = [w for w in frees if w]
        if not nontrivial:
            return None, [Violation("rank", f"edge {edge.id}: basis spans a rank-1 subgroup", edge.id)]
        r = free_root(nontrivial[0])
        r = min(r, free_inv(r), key=lambda w: tuple(letter_key(a) for a in w))
        exps = [cyclic_membership(w, r) for w in frees]
        cols = [(exps[i], (x, y)[i].center.coords[0]) for i in range(2)]
        lat = ((cols[0][0], cols[1][0]), (cols[0][1], cols[1][1]))
        det = lat[0][0] * lat[1][1] - lat[0][1] * lat[1][0]
        if det == 0:
            return None, [Violation("rank", f"edge {edge.id}: basis spans a rank-1 subgroup", edge.id)]
        sol = solve2(lat, (1, 0))
        if sol is None or any(s.denominator != 1 for s in sol):
            return None, [
                Violation(
                    "edge-shape",
                    f"edge {edge.id}: subgroup is not of the split form <(u,0)> x <(1,c)>",
                    [b.render(x), b.render(y)],
                )
            ]
        c = abs(det)
        return EdgeGroup(r, c, IDENTITY2), []

    def _edge_map(self, edge: Edge) -> list[Violation]:
        here, there = self.edge_groups[edge.id], self.edge_groups[edge.reverse]
        src = [self._coords(x, here) for x in edge.basis]
        dst = [self._coords(x, there) for x in edge.image]
        bt = self.backend(edge.target)
        for x, k in zip(edge.image, dst):
            if k is None:
                return [
                    Violation(
                        "image",
                        f"edge {edge.id}: image {bt.render(x)} is not in the edge group of {edge.reverse}",
                        bt.render(x),
                    )
                ]
        d_src = ((src[0][0], src[1][0]), (src[0][1], src[1][1]))
        d_dst = ((dst[0][0], dst[1][0]), (dst[0][1], dst[1][1]))
        det = d_dst[0][0] * d_dst[1][1] - d_dst[0][1] * d_dst[1][0]
        if det not in (1, -1):
            return [
                Violation("not-onto", f"edge {edge.id}: images span index {abs(det) or 'inf'} in the far edge group", edge.id)
            ]
        m = mat_mul(d_dst, mat_inv_unimodular(d_src))
        self.edge_groups[edge.id] = EdgeGroup(here.root, here.c, m)
        return []

    def _check_connected_and_tree(self) -> list[Violation]:
        out = []
        seen = {self.base}
        queue = deque([self.base])
        while queue:
            v = queue.popleft()
            for e in self.lk(v):
                w = self.edges[e].target
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        missing = sorted(set(self.vertices) - seen)
        if missing:
            out.append(Violation("disconnected", f"vertices {missing} are unreachable from {self.base}", missing[0]))
            return out
        if self._tree_override is None:
            tree = set()
            seen = {min(self.vertices)}
            queue = deque([min(self.vertices)])
            while queue:
                v = queue.popleft()
                for e in self.lk(v):
                    w = self.edges[e].target
                    if w not in seen:
                        seen.add(w)
                        tree |= {e, self.rev(e)}
                        queue.append(w)
        else:
            tree = set()
            for e in self._tree_override:
                if e not in self.edges:
                    out.append(Violation("spanning-tree", f"unknown spanning-tree edge {e!r}", e))
                    return out
                tree |= {e, self.rev(e)}
            comp = {v: v for v in self.vertices}

            def find(v):
                while comp[v] != v:
                    v = comp[v]
                return v

            for e in sorted(tree):
                if e > self.rev(e):
                    continue
                a, b = find(self.edges[e].source), find(self.edges[e].target)
                if a == b:
                    out.append(Violation("spanning-tree", f"spanning tree contains a cycle through {e}", e))
                    return out
                comp[a] = b
            if len(tree) // 2 != len(self.vertices) - 1:
                out.append(Violation("spanning-tree", "spanning tree does not reach every vertex", sorted(tree)))
                return out
        self.tree_edges = frozenset(tree)
        return out

    # -- edge subgroup algebra ----------------------------------------------------

    @staticmethod
    def _coords(x: GroupElement, grp: EdgeGroup):
        k1 = cyclic_membership(x.free.letters, grp.root)
        z = x.center.coords[0]
        if k1 is None or z % grp.c:
            return None
        return (k1, z // grp.c)

    def _source_check(self, x, e):
        if type(x) is not ProductPair:
            raise BackendMismatch(f"{x!r} is not in the vertex group of {self.edges[e].source}")

    def edge_membership(self, x: GroupElement, e: str):
        """Edge coordinates of ``x`` in ``G_e``, or ``None`` when ``x`` is not in ``G_e``."""
        self._source_check(x, e)
        return self._coords(x, self.edge_groups[e])

    def element_from_coords(self, e: str, k) -> ProductPair:
        grp = self.edge_groups[e]
        return ProductPair(FreeWord(free_pow(grp.root, k[0])), IntVector((grp.c * k[1],)))

    def tau_coords(self, e: str, k) -> tuple[int, int]:
        return mat_vec(self.edge_groups[e].to_target, k)

    def tau(self, e: str, x: GroupElement) -> ProductPair:
        """The edge map of ``e`` applied to ``x`` (which must lie in ``G_e``)."""
        k = self.edge_membership(x, e)
        if k is None:
            raise ValueError(f"{x!r} is not in the edge group of {e}")
        return self.element_from_coords(self.rev(e), self.tau_coords(e, k))

    def _free_coset(self, w: tuple, e: str) -> tuple[tuple, int]:
        key = (w, e)
        hit = self._coset_cache.get(key)
        if hit is not None:
            return hit
        res = free_coset_rep(w, self.edge_groups[e].root)
        if len(self._coset_cache) > 1_000_000:
            self._coset_cache.clear()
        self._coset_cache[key] = res
        return res

    def coset_decompose(self, x: GroupElement, e: str):
        """Write ``x = r * a`` with ``r = coset_rep(x, e)`` and ``a`` in ``G_e``; return ``(r, coords(a))``."""
        self._source_check(x, e)
        grp = self.edge_groups[e]
        rep_free, k1 = self._free_coset(x.free.letters, e)
        z, c = x.center.coords[0], grp.c
        m = z % c
        if 2 * m > c:
            m -= c
        return ProductPair(FreeWord(rep_free), IntVector((m,))), (k1, (z - m) // c)

    def coset_rep(self, x: GroupElement, e: str) -> ProductPair:
        """Shortlex-least element of the left coset ``x G_e``."""
        return self.coset_decompose(x, e)[0]

    def conjugate_edge_subgroup(self, g: GroupElement, e: str) -> EdgeSubgroupShape:
        self._source_check(g, e)
        grp = self.edge_groups[e]
        w = g.free.letters
        return EdgeSubgroupShape(FreeWord(free_mul(free_mul(w, grp.root), free_inv(w))), grp.c)

    def edge_subgroup(self, e: str) -> EdgeSubgroupShape:
        grp = self.edge_groups[e]
        return EdgeSubgroupShape(FreeWord(grp.root), grp.c)

    # -- admissibility ------------------------------------------------------------

    def check_admissibility(self, radius: int, budget: int = DEFAULT_BUDGET) -> AdmissibilityReport:
        self.require_valid()
        conds = {
            "1-edge-groups-Z2": self._cond_edge_rank(),
            "2a-vertex-type-S": self._cond_type_s(),
            "3-commensurability": self._cond_commensurability(radius, budget),
            "4-kernel-index": self._cond_kernel_index(),
        }
        return AdmissibilityReport(radius, conds)

    def _cond_edge_rank(self) -> ConditionVerdict:
        bases = {}
        for e in sorted(self.edges):
            grp = self.edge_groups[e]
            bases[e] = {"u": self.backend(self.edges[e].source).render(self.element_from_coords(e, (1, 0))), "c": grp.c}
        return ConditionVerdict(PASS, "exact: split rank-2 basis", {"edges": bases})

    def is_type_s(self, v: str) -> bool:
        b = self.backend(v)
        return b.kind == "product" and b.free_rank >= 2

    def _cond_type_s(self) -> ConditionVerdict:
        bad = [v for v in sorted(self.vertices) if not self.is_type_s(v)]
        detail = {v: str(self.backend(v)) for v in sorted(self.vertices)}
        if bad:
            return ConditionVerdict(
                FAIL,
                "exact: F_k x Z with k >= 2",
                detail,
                [{"vertex": v, "backend": str(self.backend(v))} for v in bad],
            )
        return ConditionVerdict(PASS, "exact: F_k x Z with k >= 2, central kernel", detail)

    def _cond_commensurability(self, radius: int, budget: int = DEFAULT_BUDGET) -> ConditionVerdict:
        witnesses = []
        checked = 0
        for v in sorted(self.vertices):
            b = self.backend(v)
            edges = self.lk(v)
            # exact: distinct roots must not be conjugate up to inversion
            for i, e in enumerate(edges):
                for f in edges[i + 1 :]:
                    u, w = self.edge_groups[e].root, self.edge_groups[f].root
                    g = conjugator_between(u, w)
                    if g is None:
                        g = conjugator_between(u, free_inv(w))
                    if g is not None:
                        witnesses.append(
                            {"vertex": v, "edges": [e, f], "g": b.render(b.element(g)), "source": "root conjugacy"}
                        )
            # ball sample, as an independent confirmation of the exact answer
            free_seen = set()
            for g in b.ball(radius, budget):
                if g.free in free_seen:
                    continue
                free_seen.add(g.free)
                for e in edges:
                    conj = self.conjugate_edge_subgroup(g, e)
                    in_e = self.edge_membership(g, e) is not None
                    for f in edges:
                        checked += 1
                        comm = conj.commensurable_with(self.edge_subgroup(f))
                        if comm != (e == f and in_e):
                            witnesses.append(
                                {"vertex": v, "edges": [e, f], "g": b.render(g), "source": f"ball radius {radius}"}
                            )
        detail = {"ball_triples_checked": checked, "radius": radius}
        method = "exact: root conjugacy in the free factor; confirmed on the radius ball"
        if witnesses:
            return ConditionVerdict(FAIL, method, detail, witnesses[:20])
        return ConditionVerdict(PASS, method, detail)

    def kernel_index(self, e: str):
        """Index in G_e of the subgroup generated by both kernel intersections."""
        f = self.rev(e)
        far = mat_vec(self.edge_groups[f].to_target, (0, 1))
        return lattice_index([(0, 1), far])

    def _cond_kernel_index(self) -> ConditionVerdict:
        detail, witnesses = {}, []
        for e in sorted(self.edges):
            if e > self.rev(e):
                continue
            edge = self.edges[e]
            if not (self.is_type_s(edge.source) and self.is_type_s(edge.target)):
                continue
            idx = self.kernel_index(e)
            detail[e] = idx if idx != math.inf else "inf"
            if idx == math.inf:
                witnesses.append({"edge": e, "kernel_coords": [(0, 1), self.tau_coords(self.rev(e), (0, 1))]})
        if witnesses:
            return ConditionVerdict(FAIL, "exact: lattice index of kernel intersections", detail, witnesses)
        return ConditionVerdict(PASS, "exact: lattice index of kernel intersections", detail)
