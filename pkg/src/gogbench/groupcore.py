"""Concrete group backends: free groups, free abelian groups and F_k x Z.

Elements are small frozen value objects in canonical form, so ``==`` and
``hash`` are the group's equality.  Free-group letters are stored as signed
1-based generator indices (``+i`` is generator ``i``, ``-i`` its inverse).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce as _fold
from typing import Iterable, Sequence, Union

from .errors import BackendMismatch, BudgetExceeded, IdentityBase, ParseError, UnknownGenerator

DEFAULT_BUDGET = 5_000_000


@dataclass(frozen=True, slots=True)
class GeneratorSymbol:
    name: str
    sign: int = 1

    def __post_init__(self):
        if not self.name:
            raise ValueError("generator name must be non-empty")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")

    def inverse(self) -> GeneratorSymbol:
        return GeneratorSymbol(self.name, -self.sign)

    def __str__(self):
        return self.name if self.sign == 1 else f"{self.name}^-1"


Word = tuple  # tuple[GeneratorSymbol, ...]


def parse_word(text: str) -> Word:
    """Parse ``"x y^-1 z^3"`` into generator symbols (powers are expanded)."""
    letters = []
    for tok in text.split():
        name, _, power = tok.partition("^")
        if not name:
            raise ParseError(f"bad letter {tok!r}")
        try:
            p = int(power) if power else 1
        except ValueError:
            raise ParseError(f"bad exponent in {tok!r}") from None
        sym = GeneratorSymbol(name, 1 if p > 0 else -1)
        letters.extend([sym] * abs(p))
    return tuple(letters)


def render_word(word: Iterable[GeneratorSymbol]) -> str:
    return " ".join(str(s) for s in word)


@dataclass(frozen=True, slots=True)
class FreeWord:
    letters: tuple = ()

    def __len__(self):
        return len(self.letters)


@dataclass(frozen=True, slots=True)
class IntVector:
    coords: tuple = ()


@dataclass(frozen=True, slots=True)
class ProductPair:
    free: FreeWord
    center: IntVector


GroupElement = Union[FreeWord, IntVector, ProductPair]


# -- free group primitives on raw letter tuples -------------------------------


def free_reduce(letters: Iterable[int]) -> tuple:
    out = []
    for a in letters:
        if out and out[-1] == -a:
            out.pop()
        else:
            out.append(a)
    return tuple(out)


def free_mul(a: tuple, b: tuple) -> tuple:
    i, n = 0, min(len(a), len(b))
    while i < n and a[-1 - i] == -b[i]:
        i += 1
    return a[: len(a) - i] + b[i:]


def free_inv(a: tuple) -> tuple:
    return tuple(-x for x in reversed(a))


def free_pow(a: tuple, k: int) -> tuple:
    base = a if k >= 0 else free_inv(a)
    out: tuple = ()
    for _ in range(abs(k)):
        out = free_mul(out, base)
    return out


def cyclic_decompose(u: tuple) -> tuple[tuple, tuple]:
    """Split a reduced word as ``u = p core p^-1`` with ``core`` cyclically reduced."""
    i, n = 0, len(u)
    while 2 * i + 1 < n and u[i] == -u[n - 1 - i]:
        i += 1
    return u[:i], u[i : n - i]


def primitive_period(core: tuple) -> tuple:
    """Shortest ``rho`` with ``core == rho^m``."""
    n = len(core)
    for d in range(1, n + 1):
        if n % d == 0 and core[:d] * (n // d) == core:
            return core[:d]
    return core


def free_root(u: tuple) -> tuple:
    """The primitive root of a nontrivial reduced word."""
    if not u:
        raise IdentityBase("the identity has no root")
    p, core = cyclic_decompose(u)
    return p + primitive_period(core) + free_inv(p)


def is_root(u: tuple) -> bool:
    return bool(u) and free_root(u) == u


def cyclic_membership(w: FreeWord | tuple, u: FreeWord | tuple) -> int | None:
    """Return ``k`` with ``w == u^k`` or ``None`` if ``w`` is not a power of ``u``."""
    w = getattr(w, "letters", w)
    u = getattr(u, "letters", u)
    if not u:
        raise IdentityBase("cyclic membership needs a nontrivial base")
    if not w:
        return 0
    p, core = cyclic_decompose(u)
    mid = free_mul(free_mul(free_inv(p), w), p)
    if len(mid) % len(core):
        return None
    m = len(mid) // len(core)
    if mid == core * m:
        return m
    if mid == free_inv(core) * m:
        return -m
    return None


def free_coset_rep(w: tuple, u: tuple) -> tuple[tuple, int]:
    """Shortlex-least ``r`` in ``w<u>`` and the ``k`` with ``w = r u^k``."""
    span = 2 * len(w) + 1
    best = None
    cur = free_mul(w, free_pow(u, -span))
    for k in range(-span, span + 1):
        cand = (len(cur), tuple(letter_key(a) for a in cur))
        if best is None or cand < best[0]:
            best = (cand, cur, k)
        cur = free_mul(cur, u)
    _, rep, k = best
    return rep, -k


def conjugator_between(u: tuple, v: tuple) -> tuple | None:
    """Some ``g`` with ``g u g^-1 == v`` (both reduced), or ``None``."""
    if not u or not v:
        return () if u == v else None
    p, cu = cyclic_decompose(u)
    q, cv = cyclic_decompose(v)
    if len(cu) != len(cv):
        return None
    for i in range(len(cu)):
        # cv == s^-1 cu s with cu = s t, cv = t s
        if cu[i:] + cu[:i] == cv:
            s = cu[:i]
            return free_mul(free_mul(q, free_inv(s)), free_inv(p))
    return None


def letter_key(a: int) -> tuple[int, int]:
    """Fixed generator order: x < x^-1 < y < y^-1 < ..."""
    return (abs(a), 0 if a > 0 else 1)


# -- backends -----------------------------------------------------------------


@dataclass(frozen=True)
class BackendSpec:
    """A concrete group: ``free`` (F_k), ``abelian`` (Z^n) or ``product`` (F_k x Z)."""

    kind: str
    free_names: tuple = ()
    abelian_names: tuple = ()

    def __post_init__(self):
        names = self.free_names + self.abelian_names
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate generator names in {names}")
        if any(not n or not isinstance(n, str) for n in names):
            raise ValueError("generator names must be non-empty strings")
        if self.kind == "free":
            ok = len(self.free_names) >= 1 and not self.abelian_names
        elif self.kind == "abelian":
            ok = len(self.abelian_names) >= 1 and not self.free_names
        elif self.kind == "product":
            ok = len(self.free_names) >= 1 and len(self.abelian_names) == 1
        else:
            ok = False
        if not ok:
            raise ValueError(f"bad backend {self.kind} {self.free_names} {self.abelian_names}")

    @classmethod
    def free(cls, names: Sequence[str]) -> BackendSpec:
        return cls("free", tuple(names))

    @classmethod
    def abelian(cls, names: Sequence[str]) -> BackendSpec:
        return cls("abelian", (), tuple(names))

    @classmethod
    def product(cls, free_names: Sequence[str], central: str) -> BackendSpec:
        return cls("product", tuple(free_names), (central,))

    @property
    def free_rank(self) -> int:
        return len(self.free_names)

    @property
    def central_name(self) -> str | None:
        return self.abelian_names[0] if self.kind == "product" else None

    def free_part(self) -> BackendSpec:
        """The free factor of a product backend (the hyperbolic quotient)."""
        if self.kind != "product":
            raise BackendMismatch(f"{self.kind} backend has no free factor")
        return BackendSpec.free(self.free_names)

    def __str__(self):
        if self.kind == "free":
            return f"F({','.join(self.free_names)})"
        if self.kind == "abelian":
            return f"Z^{len(self.abelian_names)}({','.join(self.abelian_names)})"
        return f"F({','.join(self.free_names)}) x Z({self.central_name})"

    # construction ------------------------------------------------------

    def identity(self) -> GroupElement:
        if self.kind == "free":
            return FreeWord()
        if self.kind == "abelian":
            return IntVector((0,) * len(self.abelian_names))
        return ProductPair(FreeWord(), IntVector((0,)))

    def _index(self, name: str) -> int:
        try:
            return (self.free_names + self.abelian_names).index(name) + 1
        except ValueError:
            raise UnknownGenerator(f"{name!r} is not a generator of {self}") from None

    def canonicalize(self, word: Iterable[GeneratorSymbol]) -> GroupElement:
        nf = len(self.free_names)
        free: list[int] = []
        ab = [0] * len(self.abelian_names)
        for sym in word:
            i = self._index(sym.name)
            if i <= nf:
                a = i * sym.sign
                if free and free[-1] == -a:
                    free.pop()
                else:
                    free.append(a)
            else:
                ab[i - nf - 1] += sym.sign
        if self.kind == "free":
            return FreeWord(tuple(free))
        if self.kind == "abelian":
            return IntVector(tuple(ab))
        return ProductPair(FreeWord(tuple(free)), IntVector(tuple(ab)))

    def parse(self, text: str) -> GroupElement:
        return self.canonicalize(parse_word(text))

    def element(self, free: Sequence[int] = (), center: int | Sequence[int] = 0) -> GroupElement:
        """Build an element from raw letters / coordinates (no validation beyond reduction)."""
        if self.kind == "free":
            return FreeWord(free_reduce(free))
        if self.kind == "abelian":
            return IntVector(tuple(center))
        return ProductPair(FreeWord(free_reduce(free)), IntVector((int(center),)))

    # arithmetic ---------------------------------------------------------

    def check(self, a: GroupElement) -> None:
        if self.kind == "free":
            ok = type(a) is FreeWord and all(0 < abs(x) <= self.free_rank for x in a.letters)
        elif self.kind == "abelian":
            ok = type(a) is IntVector and len(a.coords) == len(self.abelian_names)
        else:
            ok = (
                type(a) is ProductPair
                and all(0 < abs(x) <= self.free_rank for x in a.free.letters)
                and len(a.center.coords) == 1
            )
        if not ok:
            raise BackendMismatch(f"{a!r} is not an element of {self}")

    def multiply(self, a: GroupElement, b: GroupElement) -> GroupElement:
        ta, tb = type(a), type(b)
        if ta is not tb:
            raise BackendMismatch(f"cannot multiply {ta.__name__} by {tb.__name__}")
        if ta is ProductPair:
            return ProductPair(
                FreeWord(free_mul(a.free.letters, b.free.letters)),
                IntVector((a.center.coords[0] + b.center.coords[0],)),
            )
        if ta is FreeWord:
            return FreeWord(free_mul(a.letters, b.letters))
        if len(a.coords) != len(b.coords):
            raise BackendMismatch("dimension mismatch")
        return IntVector(tuple(x + y for x, y in zip(a.coords, b.coords)))

    def invert(self, a: GroupElement) -> GroupElement:
        if type(a) is ProductPair:
            return ProductPair(FreeWord(free_inv(a.free.letters)), IntVector((-a.center.coords[0],)))
        if type(a) is FreeWord:
            return FreeWord(free_inv(a.letters))
        return IntVector(tuple(-x for x in a.coords))

    def multiply_all(self, *elements: GroupElement) -> GroupElement:
        return _fold(self.multiply, elements, self.identity())

    def generators(self) -> list[GroupElement]:
        """Standard generators and inverses in the fixed shortlex order."""
        out = []
        for i in range(1, self.free_rank + 1):
            for s in (i, -i):
                out.append(self.element((s,)))
        n = len(self.abelian_names)
        for j in range(n):
            for s in (1, -1):
                if self.kind == "abelian":
                    out.append(IntVector(tuple(s if k == j else 0 for k in range(n))))
                else:
                    out.append(ProductPair(FreeWord(), IntVector((s,))))
        return out

    def word_length(self, a: GroupElement) -> int:
        if type(a) is ProductPair:
            return len(a.free.letters) + abs(a.center.coords[0])
        if type(a) is FreeWord:
            return len(a.letters)
        return sum(abs(x) for x in a.coords)

    # rendering / ordering --------------------------------------------------

    def _letters(self, a: GroupElement) -> list[int]:
        """Signed generator codes of the canonical spelling (free part first)."""
        nf = self.free_rank
        if type(a) is FreeWord:
            return list(a.letters)
        if type(a) is ProductPair:
            z = a.center.coords[0]
            return list(a.free.letters) + [(nf + 1) * (1 if z > 0 else -1)] * abs(z)
        out = []
        for j, z in enumerate(a.coords):
            out += [(nf + j + 1) * (1 if z > 0 else -1)] * abs(z)
        return out

    def symbols(self, a: GroupElement) -> Word:
        names = self.free_names + self.abelian_names
        return tuple(GeneratorSymbol(names[abs(c) - 1], 1 if c > 0 else -1) for c in self._letters(a))

    def render(self, a: GroupElement) -> str:
        return render_word(self.symbols(a))

    def shortlex_key(self, a: GroupElement) -> tuple:
        letters = self._letters(a)
        return (len(letters), tuple(letter_key(c) for c in letters))

    # enumeration -----------------------------------------------------------

    def ball(self, r: int, budget: int = DEFAULT_BUDGET) -> list[GroupElement]:
        """All elements of word length <= r, in breadth-first (then generator) order."""
        if r < 0:
            raise ValueError("radius must be non-negative")
        gens = self.generators()
        start = self.identity()
        seen = {start}
        out = [start]
        frontier = deque([(start, 0)])
        while frontier:
            g, d = frontier.popleft()
            if d == r:
                continue
            for s in gens:
                h = self.multiply(g, s)
                if h not in seen:
                    seen.add(h)
                    out.append(h)
                    if len(out) > budget:
                        raise BudgetExceeded(f"ball of radius {r} in {self} exceeds {budget} elements")
                    frontier.append((h, d + 1))
        return out


# -- integer lattice routines ----------------------------------------------------


def lattice_index(vectors: Iterable[Sequence[int]]) -> float | int:
    """Index in Z^2 of the sublattice spanned by ``vectors`` (``math.inf`` if rank < 2).

    The index is the gcd of all 2x2 minors, i.e. the product of the
    Smith invariants of the generator matrix.
    """
    vs = [tuple(int(x) for x in v) for v in vectors]
    if any(len(v) != 2 for v in vs):
        raise ValueError("lattice_index expects vectors in Z^2")
    g = 0
    for i in range(len(vs)):
        for j in range(i + 1, len(vs)):
            (a, b), (c, d) = vs[i], vs[j]
            g = math.gcd(g, a * d - b * c)
    return g if g else math.inf


def solve2(m: Sequence[Sequence[int]], rhs: Sequence[int]) -> tuple[Fraction, Fraction] | None:
    """Solve the 2x2 system ``m @ x = rhs`` over Q (``None`` if singular)."""
    (a, b), (c, d) = m
    det = a * d - b * c
    if det == 0:
        return None
    return (Fraction(d * rhs[0] - b * rhs[1], det), Fraction(a * rhs[1] - c * rhs[0], det))


def mat_mul(a, b):
    return tuple(
        tuple(sum(a[i][k] * b[k][j] for k in range(2)) for j in range(2)) for i in range(2)
    )


def mat_vec(m, v):
    return (m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1])


def mat_inv_unimodular(m):
    (a, b), (c, d) = m
    det = a * d - b * c
    if det not in (1, -1):
        raise ValueError(f"matrix {m} is not unimodular")
    return ((d * det, -b * det), (-c * det, a * det))


IDENTITY2 = ((1, 0), (0, 1))


_NAMED = {
    "free2": lambda: BackendSpec.free(("x", "y")),
    "free3": lambda: BackendSpec.free(("x", "y", "w")),
    "z2": lambda: BackendSpec.abelian(("x", "y")),
    "free2xz": lambda: BackendSpec.product(("x", "y"), "z"),
}


def named_backend(name: str) -> BackendSpec:
    """Shorthand backends used on the command line (``free2``, ``z2``, ...)."""
    try:
        return _NAMED[name]()
    except KeyError:
        raise ParseError(f"unknown backend {name!r}; choose from {sorted(_NAMED)}") from None
