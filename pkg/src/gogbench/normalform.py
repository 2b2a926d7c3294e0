"""Normal forms and the word problem for the fundamental group(oid) of a graph of groups.

A path ``g0 e1 g1 ... en gn`` is reduced left to right with a stack: every
crossing either pinches against the previous crossing (``f x f_bar`` with
``x`` in the edge group) or pushes the canonical coset representative of
the current vertex element and carries the edge-group remainder across.
The resulting sequence of (coset representative, edge) pairs plus the
final vertex element is unique for each groupoid element.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

from .errors import MalformedWord, UnknownGenerator
from .gog import GraphOfGroups
from .groupcore import GeneratorSymbol, GroupElement, ParseError, parse_word, render_word


@dataclass(frozen=True)
class VertexLetter:
    vertex: str
    word: tuple  # GeneratorSymbols


@dataclass(frozen=True)
class StableLetter:
    edge: str
    sign: int = 1


@dataclass(frozen=True)
class EdgeCross:
    edge: str


Token = Union[VertexLetter, StableLetter, EdgeCross]


class NormalForm:
    """Canonical path ``pairs[0] ... pairs[n-1] tail`` from ``start`` to ``end``.

    ``pairs`` holds ``(coset representative, oriented edge id)``; equality is
    token-for-token equality.
    """

    __slots__ = ("start", "pairs", "tail", "end", "_hash")

    def __init__(self, start: str, pairs: tuple, tail: GroupElement, end: str):
        self.start = start
        self.pairs = pairs
        self.tail = tail
        self.end = end
        self._hash = hash((start, pairs, tail, end))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return (
            isinstance(other, NormalForm)
            and self._hash == other._hash
            and self.pairs == other.pairs
            and self.tail == other.tail
            and self.end == other.end
            and self.start == other.start
        )

    def __repr__(self):
        return f"NormalForm({self.start!r}, {self.pairs!r}, {self.tail!r}, {self.end!r})"

    @property
    def length(self) -> int:
        """Number of edge crossings."""
        return len(self.pairs)

    @property
    def node(self) -> tuple:
        """Key of the Bass-Serre tree vertex (vertex space) containing this point."""
        return (self.start, self.pairs, self.end)


def identity_nf(g: GraphOfGroups, vertex: str | None = None) -> NormalForm:
    v = g.base if vertex is None else vertex
    return NormalForm(v, (), g.backend(v).identity(), v)


# -- core reduction -------------------------------------------------------------


def _cross(g: GraphOfGroups, pairs: list, cur: GroupElement, e: str) -> GroupElement:
    if pairs and pairs[-1][1] == g.edges[e].reverse:
        k = g.edge_membership(cur, e)
        if k is not None:
            r, _ = pairs.pop()
            moved = g.element_from_coords(g.edges[e].reverse, g.tau_coords(e, k))
            return g.backend(g.edges[e].target).multiply(r, moved)
    rep, k = g.coset_decompose(cur, e)
    pairs.append((rep, e))
    return g.element_from_coords(g.edges[e].reverse, g.tau_coords(e, k))


def cross(g: GraphOfGroups, nf: NormalForm, e: str) -> NormalForm:
    """Append the crossing of oriented edge ``e`` (which must leave ``nf.end``)."""
    edge = g.edges[e]
    if edge.source != nf.end:
        raise MalformedWord(f"edge {e} leaves {edge.source}, not {nf.end}")
    pairs = list(nf.pairs)
    cur = _cross(g, pairs, nf.tail, e)
    return NormalForm(nf.start, tuple(pairs), cur, edge.target)


def right_multiply(g: GraphOfGroups, nf: NormalForm, x: GroupElement) -> NormalForm:
    return NormalForm(nf.start, nf.pairs, g.backend(nf.end).multiply(nf.tail, x), nf.end)


def _crossing_edge(g: GraphOfGroups, tok: Token) -> str:
    if isinstance(tok, EdgeCross):
        if tok.edge not in g.edges:
            raise MalformedWord(f"unknown edge {tok.edge!r}")
        if not g.is_tree_edge(tok.edge):
            raise MalformedWord(f"edge {tok.edge} is not a spanning-tree edge; use a stable letter")
        return tok.edge
    if tok.edge not in g.edges:
        raise MalformedWord(f"unknown edge {tok.edge!r}")
    if g.is_tree_edge(tok.edge):
        raise MalformedWord(f"edge {tok.edge} is a spanning-tree edge and has no stable letter")
    if tok.sign not in (1, -1):
        raise MalformedWord(f"bad stable-letter sign {tok.sign}")
    return tok.edge if tok.sign == 1 else g.rev(tok.edge)


def reduce(g: GraphOfGroups, word: Iterable[Token], start: str | None = None) -> NormalForm:
    """Normal form of a well-formed path word starting at ``start`` (default: base vertex)."""
    v = g.base if start is None else start
    if v not in g.vertices:
        raise MalformedWord(f"unknown start vertex {v!r}")
    pairs: list = []
    cur = g.backend(v).identity()
    for tok in word:
        if isinstance(tok, VertexLetter):
            if tok.vertex != v:
                raise MalformedWord(f"vertex letter at {tok.vertex} while the path is at {v}")
            b = g.backend(v)
            try:
                cur = b.multiply(cur, b.canonicalize(tok.word))
            except UnknownGenerator as err:
                raise MalformedWord(str(err)) from None
        elif isinstance(tok, (StableLetter, EdgeCross)):
            e = _crossing_edge(g, tok)
            if g.edges[e].source != v:
                raise MalformedWord(f"crossing {e} leaves {g.edges[e].source} while the path is at {v}")
            cur = _cross(g, pairs, cur, e)
            v = g.edges[e].target
        else:
            raise MalformedWord(f"unknown token {tok!r}")
    return NormalForm(g.base if start is None else start, tuple(pairs), cur, v)


def is_identity(g: GraphOfGroups, word: Iterable[Token], start: str | None = None) -> bool:
    nf = reduce(g, word, start)
    return not nf.pairs and nf.end == nf.start and nf.tail == g.backend(nf.end).identity()


def _apply(g: GraphOfGroups, pairs: list, cur: GroupElement, v: str, nf: NormalForm):
    for rep, e in nf.pairs:
        cur = _cross(g, pairs, g.backend(v).multiply(cur, rep), e)
        v = g.edges[e].target
    return g.backend(v).multiply(cur, nf.tail), v


def multiply_nf(g: GraphOfGroups, a: NormalForm, b: NormalForm) -> NormalForm:
    if a.end != b.start:
        raise ValueError(f"cannot compose a path ending at {a.end} with one starting at {b.start}")
    pairs = list(a.pairs)
    cur, v = _apply(g, pairs, a.tail, a.end, b)
    return NormalForm(a.start, tuple(pairs), cur, v)


def invert_nf(g: GraphOfGroups, a: NormalForm) -> NormalForm:
    pairs: list = []
    v = a.end
    cur = g.backend(v).invert(a.tail)
    for rep, e in reversed(a.pairs):
        f = g.rev(e)
        cur = _cross(g, pairs, cur, f)
        v = g.edges[f].target
        b = g.backend(v)
        cur = b.multiply(cur, b.invert(rep))
    return NormalForm(a.end, tuple(pairs), cur, v)


# -- tokens <-> normal forms <-> text --------------------------------------------


def crossing_token(g: GraphOfGroups, e: str) -> Token:
    if g.is_tree_edge(e):
        return EdgeCross(e)
    return StableLetter(e, 1) if g.stable_orientation(e) else StableLetter(g.rev(e), -1)


def vertex_letter(g: GraphOfGroups, v: str, x: GroupElement) -> VertexLetter:
    return VertexLetter(v, g.backend(v).symbols(x))


def to_word(g: GraphOfGroups, nf: NormalForm) -> tuple:
    out = []
    v = nf.start
    for rep, e in nf.pairs:
        if rep != g.backend(v).identity():
            out.append(vertex_letter(g, v, rep))
        out.append(crossing_token(g, e))
        v = g.edges[e].target
    if nf.tail != g.backend(v).identity():
        out.append(vertex_letter(g, v, nf.tail))
    return tuple(out)


def render_token(tok: Token) -> str:
    if isinstance(tok, VertexLetter):
        return f"{tok.vertex}[{render_word(tok.word)}]"
    if isinstance(tok, StableLetter):
        return f"t{tok.edge}" + ("" if tok.sign == 1 else "^-1")
    return f"e{tok.edge}"


def render_gog_word(word: Iterable[Token]) -> str:
    return " ".join(render_token(t) for t in word)


def render_nf(g: GraphOfGroups, nf: NormalForm) -> str:
    text = render_gog_word(to_word(g, nf))
    return text if text else "1"


_TOKEN = re.compile(
    r"\s*(?:(?P<v>[^\s\[\]]+)\[(?P<w>[^\]]*)\]|t(?P<t>[^\s\^\[\]]+)(?P<inv>\^-1)?|e(?P<e>[^\s\^\[\]]+)|(?P<one>1)(?=\s|$))"
)


def parse_gog_word(text: str) -> tuple:
    """Parse ``v0[x y^-1] t5 e2 t5^-1``; a lone ``1`` is the empty word."""
    out: list = []
    pos, text = 0, text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"cannot parse word at column {pos + 1}: {text[pos:pos + 20]!r}")
        if m.group("v") is not None:
            out.append(VertexLetter(m.group("v"), parse_word(m.group("w"))))
        elif m.group("t") is not None:
            out.append(StableLetter(m.group("t"), -1 if m.group("inv") else 1))
        elif m.group("e") is not None:
            out.append(EdgeCross(m.group("e")))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return tuple(out)


def thread(g: GraphOfGroups, word: Iterable[Token], start: str | None = None, close: bool = False) -> tuple:
    """Insert silent spanning-tree crossings so consecutive tokens are compatible.

    With ``close=True`` the path is returned to ``start``, so a word in the
    vertex groups and stable letters becomes a loop representing the usual
    element of pi_1 relative to the spanning tree.
    """
    v0 = g.base if start is None else start
    v = v0
    out: list = []

    def walk_to(w):
        nonlocal v
        for e in g.tree_path(v, w):
            out.append(EdgeCross(e))
        v = w

    for tok in word:
        if isinstance(tok, VertexLetter):
            if tok.vertex not in g.vertices:
                raise MalformedWord(f"unknown vertex {tok.vertex!r}")
            walk_to(tok.vertex)
            out.append(tok)
        else:
            e = _crossing_edge(g, tok)
            walk_to(g.edges[e].source)
            out.append(tok)
            v = g.edges[e].target
    if close:
        walk_to(v0)
    return tuple(out)


# -- random words (test generator) ----------------------------------------------


def random_word(seed, length: int, g: GraphOfGroups, closed: bool = False) -> tuple:
    """Seeded random path word of ``length`` tokens starting at the base vertex."""
    if length < 0:
        raise ValueError("length must be non-negative")
    rng = random.Random(seed)
    v = g.base
    out: list = []
    for _ in range(length):
        b = g.backend(v)
        options: list = []
        for name in b.free_names + b.abelian_names:
            options += [GeneratorSymbol(name, 1), GeneratorSymbol(name, -1)]
        options += g.lk(v)
        pick = options[rng.randrange(len(options))]
        if isinstance(pick, GeneratorSymbol):
            out.append(VertexLetter(v, (pick,)))
        else:
            out.append(crossing_token(g, pick))
            v = g.edges[pick].target
    if closed:
        return thread(g, out, close=True)
    return tuple(out)


def vertex_at(g: GraphOfGroups, word: Sequence[Token], i: int, start: str | None = None) -> str:
    """Vertex the path sits at just before token ``i``."""
    v = g.base if start is None else start
    for tok in word[:i]:
        if not isinstance(tok, VertexLetter):
            v = g.edges[_crossing_edge(g, tok)].target
    return v


def trivial_insertion(g: GraphOfGroups, word: Sequence[Token], rng: random.Random, kind: str | None = None) -> tuple:
    """Insert a word representing the identity at a random position.

    Kinds: ``cancel`` (x x^-1), ``pinch`` (e x e_bar tau(x)^-1) and
    ``relation`` (a e tau(a)^-1 e_bar).
    """
    word = tuple(word)
    i = rng.randrange(len(word) + 1)
    v = vertex_at(g, word, i)
    b = g.backend(v)
    kind = kind or rng.choice(("cancel", "pinch", "relation"))
    if kind == "cancel":
        gens = b.generators()
        x = b.multiply_all(*(rng.choice(gens) for _ in range(rng.randint(1, 3))))
        ins = [vertex_letter(g, v, x), vertex_letter(g, v, b.invert(x))]
    else:
        e = rng.choice(g.lk(v))
        f = g.rev(e)
        w = g.edges[e].target
        k = (rng.randint(-3, 3), rng.randint(-3, 3))
        if kind == "pinch":
            x = g.element_from_coords(f, k)
            back = g.tau(f, x)
            ins = [crossing_token(g, e), vertex_letter(g, w, x), crossing_token(g, f), vertex_letter(g, v, b.invert(back))]
        elif kind == "relation":
            a = g.element_from_coords(e, k)
            ta = g.tau(e, a)
            ins = [vertex_letter(g, v, a), crossing_token(g, e), vertex_letter(g, w, g.backend(w).invert(ta)), crossing_token(g, f)]
        else:
            raise ValueError(f"unknown insertion kind {kind!r}")
    return word[:i] + tuple(ins) + word[i:]


def inverse_word(g: GraphOfGroups, word: Sequence[Token], start: str | None = None) -> tuple:
    """Formal inverse of a path word (a path from its end back to ``start``)."""
    out = []
    for tok in reversed(tuple(word)):
        if isinstance(tok, VertexLetter):
            out.append(VertexLetter(tok.vertex, tuple(s.inverse() for s in reversed(tok.word))))
        else:
            out.append(crossing_token(g, g.rev(_crossing_edge(g, tok))))
    return tuple(out)
