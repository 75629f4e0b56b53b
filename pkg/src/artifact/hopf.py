"""Approximated trees and the deformed Butcher-Connes-Kreimer structure.

The space H is spanned by forests of trees carrying a root order r (with
the projection r+1 >= deg), together with monomials lambda^m.  The space
H+ restricts to integral-rooted trees with a root pair (r, m), m <= r+1,
and has no monomial factors.  The coaction H -> H (x) H+ cuts integral
edges and Taylor-shifts the stump; the coproduct on H+ and its antipode
turn characters on H+ into a group under convolution.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial
from typing import Callable, Hashable, Iterable

from .trees import DecoratedTree, canonical_key, deg_tree, edge_count


@dataclass(frozen=True)
class ApproxTree:
    """Decorated tree with a root order r; zero unless r+1 >= deg."""

    tree: DecoratedTree
    order: int

    def is_valid(self) -> bool:
        return self.order >= -1 and self.order + 1 >= deg_tree(self.tree)

    def sort_key(self):
        return (canonical_key(self.tree), self.order)

    def __str__(self) -> str:
        return f"{self.tree}@{self.order}"

    __repr__ = __str__


@dataclass(frozen=True)
class PlusTree:
    """Integral-rooted tree with root pair (r, m), m <= r+1."""

    tree: DecoratedTree
    order: int
    shift: int

    def is_valid(self) -> bool:
        return (self.tree.edge.in_plus()
                and self.order >= -1
                and self.order + 1 >= deg_tree(self.tree)
                and 0 <= self.shift <= self.order + 1)

    def sort_key(self):
        return (canonical_key(self.tree), self.order, self.shift)

    def __str__(self) -> str:
        return f"{self.tree}@({self.order},{self.shift})"

    __repr__ = __str__


@dataclass(frozen=True)
class HElem:
    """Basis element of H: lambda^lam times a forest of approximated trees."""

    lam: int = 0
    trees: tuple[ApproxTree, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "trees",
                           tuple(sorted(self.trees, key=ApproxTree.sort_key)))

    def is_unit(self) -> bool:
        return self.lam == 0 and not self.trees

    def __str__(self) -> str:
        parts = []
        if self.lam:
            parts.append(f"lam^{self.lam}" if self.lam > 1 else "lam")
        parts.extend(str(t) for t in self.trees)
        return " ".join(parts) if parts else "1"

    __repr__ = __str__


PlusForest = tuple[PlusTree, ...]


def plus_forest(*trees: PlusTree) -> PlusForest:
    return tuple(sorted(trees, key=PlusTree.sort_key))


def h_mul(a: HElem, b: HElem) -> HElem:
    return HElem(a.lam + b.lam, a.trees + b.trees)


def forest_mul(a: PlusForest, b: PlusForest) -> PlusForest:
    return plus_forest(*(a + b))


class LinComb:
    """Finite linear combination over exact rationals; zero terms dropped."""

    __slots__ = ("terms",)

    def __init__(self, terms: dict | None = None):
        self.terms: dict[Hashable, Fraction] = {}
        if terms:
            for k, c in terms.items():
                self.add(k, c)

    @classmethod
    def single(cls, key: Hashable, coeff=Fraction(1)) -> "LinComb":
        out = cls()
        out.add(key, coeff)
        return out

    def add(self, key: Hashable, coeff) -> None:
        c = self.terms.get(key, Fraction(0)) + coeff
        if c:
            self.terms[key] = c
        else:
            self.terms.pop(key, None)

    def items(self):
        return self.terms.items()

    def is_zero(self) -> bool:
        return not self.terms

    def scale(self, c) -> "LinComb":
        if not c:
            return LinComb()
        return LinComb({k: v * c for k, v in self.terms.items()})

    def map_keys(self, f: Callable[[Hashable], Hashable]) -> "LinComb":
        out = LinComb()
        for k, c in self.terms.items():
            out.add(f(k), c)
        return out

    def __add__(self, other: "LinComb") -> "LinComb":
        out = LinComb(self.terms)
        for k, c in other.terms.items():
            out.add(k, c)
        return out

    def __sub__(self, other: "LinComb") -> "LinComb":
        return self + other.scale(Fraction(-1))

    def __eq__(self, other) -> bool:
        return isinstance(other, LinComb) and self.terms == other.terms

    def __hash__(self):
        raise TypeError("LinComb is mutable")

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        return " + ".join(f"{c} * {_key_str(k)}"
                          for k, c in sorted(self.terms.items(),
                                             key=lambda kv: _key_str(kv[0])))

    __repr__ = __str__


def _key_str(key) -> str:
    if (isinstance(key, tuple) and len(key) == 2
            and not any(isinstance(el, (ApproxTree, PlusTree)) for el in key)):
        return f"{_key_str(key[0])} (x) {_key_str(key[1])}"
    if isinstance(key, tuple):
        return " ".join(str(t) for t in key) if key else "1"
    return str(key)


def tensor_lines(lc: LinComb) -> list[str]:
    """Canonical `coeff * left (x) right` lines for golden comparisons."""
    lines = [f"{c} * {_key_str(k)}" for k, c in lc.items()]
    return sorted(lines)


# ------------------------------------------------------------------ D^r


def d_r(F: DecoratedTree | Iterable[DecoratedTree] | None, r: int) -> LinComb:
    """Set the root order of every tree to r, projecting per r+1 >= deg."""
    if F is None:
        F = ()
    if isinstance(F, DecoratedTree):
        F = (F,)
    trees = tuple(ApproxTree(t, r) for t in F)
    if not trees:
        return LinComb.single(HElem(), 1) if r >= -1 else LinComb()
    if any(not t.is_valid() for t in trees):
        return LinComb()
    return LinComb.single(HElem(0, trees), 1)


def d_hat(T: DecoratedTree, r: int, m: int) -> LinComb:
    """Root pair (r, m) version of d_r on a single integral-rooted tree."""
    pt = PlusTree(T, r, m)
    return LinComb.single((pt,), 1) if pt.is_valid() else LinComb()


# ------------------------------------------------------------- coaction


def _tensor_mul_h(a: LinComb, b: LinComb) -> LinComb:
    out = LinComb()
    for (l1, r1), c1 in a.items():
        for (l2, r2), c2 in b.items():
            out.add((h_mul(l1, l2), forest_mul(r1, r2)), c1 * c2)
    return out


_COACTION_CACHE: dict[ApproxTree, LinComb] = {}


def _coaction_forest(children: tuple[DecoratedTree, ...], r: int) -> LinComb:
    if not children:
        if r >= -1:
            return LinComb.single((HElem(), ()), 1)
        return LinComb()
    acc = LinComb.single((HElem(), ()), 1)
    for c in children:
        acc = _tensor_mul_h(acc, _coaction_tree(ApproxTree(c, r)))
    return acc


def _coaction_tree(a: ApproxTree) -> LinComb:
    cached = _COACTION_CACHE.get(a)
    if cached is not None:
        return cached
    out = LinComb()
    if a.is_valid():
        t, r = a.tree, a.order
        inner_r = r - t.power - (1 if t.edge.in_plus() else 0)
        for (left, right), c in _coaction_forest(t.children, inner_r).items():
            grafted = ApproxTree(
                DecoratedTree(t.edge, t.freq, t.power + left.lam,
                              tuple(x.tree for x in left.trees)), r)
            if grafted.is_valid():
                out.add((HElem(0, (grafted,)), right), c)
        if t.edge.in_plus():
            for m in range(r + 2):
                out.add((HElem(m, ()), (PlusTree(t, r, m),)),
                        Fraction(1, factorial(m)))
    _COACTION_CACHE[a] = out
    return out


def coaction(x: HElem | ApproxTree | LinComb) -> LinComb:
    """Delta: H -> H (x) H+, cutting at integral edges only."""
    if isinstance(x, ApproxTree):
        x = HElem(0, (x,))
    if isinstance(x, HElem):
        acc = LinComb.single((HElem(x.lam, ()), ()), 1)
        for t in x.trees:
            acc = _tensor_mul_h(acc, _coaction_tree(t))
        return acc
    out = LinComb()
    for k, c in x.items():
        out = out + coaction(k).scale(c)
    return out


# ------------------------------------------------------- coproduct on H+


def _tensor_mul_plus(a: LinComb, b: LinComb) -> LinComb:
    out = LinComb()
    for (l1, r1), c1 in a.items():
        for (l2, r2), c2 in b.items():
            out.add((forest_mul(l1, l2), forest_mul(r1, r2)), c1 * c2)
    return out


_COPRODUCT_CACHE: dict[PlusTree, LinComb] = {}


def _coproduct_tree(p: PlusTree) -> LinComb:
    cached = _COPRODUCT_CACHE.get(p)
    if cached is not None:
        return cached
    out = LinComb()
    if p.is_valid():
        t = p.tree
        for (left, right), c in _coaction_forest(
                t.children, p.order - t.power - 1).items():
            grafted = PlusTree(
                DecoratedTree(t.edge, t.freq, t.power + left.lam,
                              tuple(x.tree for x in left.trees)),
                p.order, p.shift)
            if grafted.is_valid():
                out.add(((grafted,), right), c)
        out.add(((), (p,)), 1)
    _COPRODUCT_CACHE[p] = out
    return out


def coproduct_plus(x: PlusTree | PlusForest | LinComb) -> LinComb:
    """Delta+: H+ -> H+ (x) H+ (no Taylor shift at the trunk)."""
    if isinstance(x, PlusTree):
        x = (x,)
    if isinstance(x, tuple):
        acc = LinComb.single(((), ()), 1)
        for p in x:
            acc = _tensor_mul_plus(acc, _coproduct_tree(p))
        return acc
    out = LinComb()
    for k, c in x.items():
        out = out + coproduct_plus(k).scale(c)
    return out


def counit_plus(f: PlusForest) -> Fraction:
    """The counit 1*: nonzero on the empty forest only."""
    return Fraction(1) if not f else Fraction(0)


# -------------------------------------------------------------- antipode


def _forest_mul_lc(a: LinComb, b: LinComb) -> LinComb:
    out = LinComb()
    for f1, c1 in a.items():
        for f2, c2 in b.items():
            out.add(forest_mul(f1, f2), c1 * c2)
    return out


_ANTIPODE_CACHE: dict[PlusTree, LinComb] = {}


def _antipode_tree(p: PlusTree) -> LinComb:
    cached = _ANTIPODE_CACHE.get(p)
    if cached is not None:
        return cached
    out = LinComb()
    if p.is_valid():
        t = p.tree
        # A X = -M(graft (x) A) Delta D^{r-l-1}(children); the right legs
        # have strictly fewer edges, so the recursion terminates
        for (left, right), c in _coaction_forest(
                t.children, p.order - t.power - 1).items():
            grafted = PlusTree(
                DecoratedTree(t.edge, t.freq, t.power + left.lam,
                              tuple(x.tree for x in left.trees)),
                p.order, p.shift)
            if not grafted.is_valid():
                continue
            term = _forest_mul_lc(LinComb.single((grafted,), 1),
                                  antipode(right))
            out = out + term.scale(-c)
    _ANTIPODE_CACHE[p] = out
    return out


def antipode(x: PlusTree | PlusForest | LinComb) -> LinComb:
    """The antipode on H+, multiplicative over forests; A(1) = 1."""
    if isinstance(x, PlusTree):
        x = (x,)
    if isinstance(x, tuple):
        acc = LinComb.single((), 1)
        for p in x:
            acc = _forest_mul_lc(acc, _antipode_tree(p))
        return acc
    out = LinComb()
    for k, c in x.items():
        out = out + antipode(k).scale(c)
    return out


def reduced_coproduct(p: PlusTree) -> LinComb:
    """Delta+ minus the two primitive terms X (x) 1 and 1 (x) X."""
    out = coproduct_plus(p)
    out.add(((p,), ()), Fraction(-1))
    out.add(((), (p,)), Fraction(-1))
    return out


def convolve(f: Callable, g: Callable, x: PlusForest) -> object:
    """(f * g)(x) = M(f (x) g) Delta+ x for scalar-valued characters."""
    total = None
    for (l, r), c in coproduct_plus(x).items():
        v = f(l) * g(r) * c
        total = v if total is None else total + v
    return 0 if total is None else total
