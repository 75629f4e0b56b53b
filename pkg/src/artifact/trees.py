"""Decorated trees, rule-driven generation, and the frequency maps.

A planted tree is stored as its trunk edge decoration plus the node directly
below the root, which carries a monomial power, a frequency, and a canonically
sorted tuple of planted subtrees.  All symbolic layers (Hopf algebra,
characters, emitter) operate on these values.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .freq_algebra import (
    QC, FreqLinear, FreqPoly, p_dom, p_low,
)


@dataclass(frozen=True, order=True)
class EdgeDecor:
    """Edge decoration: operator id and conjugation bit."""

    op: str          # "t1" (no integral) or "t2" (Duhamel integral)
    conj: int        # p in {0, 1}

    def flipped(self) -> "EdgeDecor":
        return EdgeDecor(self.op, 1 - self.conj)

    def in_plus(self) -> bool:
        return self.op == "t2"

    def __str__(self) -> str:
        return f"{self.op},{self.conj}"


@dataclass(frozen=True)
class DecoratedTree:
    """Planted decorated tree I_(t,p)(lambda_f^n children...)."""

    edge: EdgeDecor
    freq: FreqLinear
    power: int = 0
    children: tuple["DecoratedTree", ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "children",
                           tuple(sorted(self.children, key=canonical_key)))

    def is_leaf(self) -> bool:
        return not self.children

    def __str__(self) -> str:
        lam = f"^{self.power}" if self.power else ""
        inner = " ".join(str(c) for c in self.children)
        body = f"{self.freq}{lam}" + (f"; {inner}" if inner else "")
        return f"I[{self.edge}]({body})"

    __repr__ = __str__


Forest = tuple[DecoratedTree, ...]


def forest(*trees: DecoratedTree) -> Forest:
    return tuple(sorted(trees, key=canonical_key))


def canonical_key(T: DecoratedTree):
    return (T.edge, tuple(canonical_key(c) for c in T.children),
            T.power, T.freq)


def shape_key(T: DecoratedTree):
    """Key of the edge-decorated shape: frequencies and powers erased."""
    return (T.edge, tuple(sorted(shape_key(c) for c in T.children)))


def edge_count(T: DecoratedTree) -> int:
    return 1 + sum(edge_count(c) for c in T.children)


def validate(T: DecoratedTree) -> bool:
    """Check the signed frequency-sum constraint at every inner node."""
    if T.is_leaf():
        return True
    s = FreqLinear()
    for c in T.children:
        s = s + (c.freq.scale(-1) if c.edge.conj else c.freq)
    own = T.freq.scale(-1) if T.edge.conj else T.freq
    return own == s and all(validate(c) for c in T.children)


def conjugate(T: DecoratedTree) -> DecoratedTree:
    return DecoratedTree(T.edge.flipped(), T.freq, T.power,
                         tuple(conjugate(c) for c in T.children))


def conjugate_forest(F: Forest) -> Forest:
    return forest(*(conjugate(T) for T in F))


def symmetry_factor(T: DecoratedTree) -> int:
    """Automorphism count of the edge-decorated shape (n, f ignored)."""
    groups: dict[object, list[DecoratedTree]] = {}
    for c in T.children:
        groups.setdefault(shape_key(c), []).append(c)
    out = 1
    for members in groups.values():
        beta = len(members)
        out *= symmetry_factor(members[0]) ** beta
        for j in range(2, beta + 1):
            out *= j
    return out


def deg_tree(T: DecoratedTree) -> int:
    """deg recursion: node power + 1 per t2 edge, max over products."""
    sub = max((deg_tree(c) for c in T.children), default=0)
    return T.power + (1 if T.edge.in_plus() else 0) + sub


def n_plus(T: DecoratedTree) -> int:
    return (1 if T.edge.in_plus() else 0) + sum(n_plus(c) for c in T.children)


def leaves(T: DecoratedTree) -> list[DecoratedTree]:
    if T.is_leaf():
        return [T]
    out: list[DecoratedTree] = []
    for c in T.children:
        out.extend(leaves(c))
    return out


# ------------------------------------------------------------------ rules


@dataclass(frozen=True)
class EquationSpec:
    """Dispersion, nonlinearity, and prefactor data for one equation.

    ``dispersion`` is the univariate template P_t1(l) in symbol index 0;
    the t2 template is its negative.  ``nonlinearity`` maps (N, M) child
    multiplicities to the rational coefficient of v^N vbar^M in p(v, vbar).
    ``prefactor`` is the remaining scalar of the Duhamel term (the -i and
    |grad|^alpha(k) are applied separately), ``alpha`` the order of the
    outer derivative, ``token`` an optional opaque multiplier name applied
    at every integral node (Klein-Gordon C).
    """

    name: str
    dispersion: FreqPoly
    nonlinearity: Mapping[tuple[int, int], Fraction]
    alpha: int = 0
    prefactor: QC = QC(Fraction(1))
    token: str | None = None
    integrate_full: bool = False   # exact full-oscillation mode (KdV)
    dispersion_degree: int = 2     # degree of P_t1 in k (atoms for emission)

    def p_edge(self, e: EdgeDecor, k: FreqLinear) -> FreqPoly:
        """P_(t,p)(k) = (-1)^p P_t((-1)^p k), with P_t2 = -P_t1."""
        arg = k.scale(-1) if e.conj else k
        P = self.dispersion.substitute_linear(arg)
        if e.op == "t2":
            P = -P
        if e.conj:
            P = -P
        return P

    def node_coefficient(self, n_plain: int, n_conj: int, conj: int) -> Fraction:
        """Exact-arity derivative d_v^N d_vbar^M p at one integral node.

        ``n_plain`` counts children whose parity matches the node's; at a
        conjugated node those carry vbar values, which lands on the same
        (N, M) term of the (real-coefficient) nonlinearity table.
        """
        c = self.nonlinearity.get((n_plain, n_conj))
        if c is None:
            raise RuleViolation(
                f"{self.name}: no nonlinearity term of arity ({n_plain},{n_conj})")
        fact = Fraction(1)
        for j in range(1, n_plain + 1):
            fact *= j
        for j in range(1, n_conj + 1):
            fact *= j
        return c * fact

    def child_tuples(self) -> list[tuple[int, int]]:
        return sorted(self.nonlinearity.keys())


class RuleViolation(ValueError):
    pass


def nls_spec() -> EquationSpec:
    return EquationSpec(
        name="nls",
        dispersion=FreqPoly.symbol(0, 2).scale(-1),   # P_t1(l) = -l^2
        nonlinearity={(2, 1): Fraction(1)},           # p = v^2 vbar
        alpha=0,
        dispersion_degree=2,
    )


def kdv_spec() -> EquationSpec:
    return EquationSpec(
        name="kdv",
        dispersion=FreqPoly.symbol(0, 3).scale(-1),   # P_t1(l) = -l^3
        nonlinearity={(2, 0): Fraction(1)},           # p = (1/2) v^2; 1/2 below
        alpha=1,
        prefactor=QC.of(Fraction(1, 2)),
        integrate_full=True,
        dispersion_degree=3,
    )


def kg_spec() -> EquationSpec:
    # P_t1(l) = 1/eps^2 + B(l); p = (1/8) C (v+vbar)^3
    disp = FreqPoly.eps_term(1, 2) + FreqPoly.token("B", FreqLinear.symbol(0))
    nonlin = {(3 - m, m): Fraction(1, 8) * _binom(3, m) for m in range(4)}
    return EquationSpec(
        name="kg",
        dispersion=disp,
        nonlinearity=nonlin,
        alpha=0,
        token="C",
        dispersion_degree=0,
    )


def _binom(n: int, k: int) -> Fraction:
    out = Fraction(1)
    for j in range(k):
        out *= Fraction(n - j, j + 1)
    return out


def spec_by_name(name: str) -> EquationSpec:
    try:
        return {"nls": nls_spec, "kdv": kdv_spec, "kg": kg_spec}[name]()
    except KeyError:
        raise RuleViolation(f"unknown equation {name!r}") from None


# ----------------------------------------------------------- generation


@dataclass(frozen=True)
class TreeShape:
    """A generated t2-planted shape with symbolic leaf frequencies."""

    tree: DecoratedTree        # planted (t2, 0) tree, or None for the unit
    n_leaves: int

    def root_freq(self) -> FreqLinear:
        return self.tree.freq


def _grow(spec: EquationSpec, depth: int, conj: int) -> list[DecoratedTree]:
    """All t2-planted trees (edge (t2, conj)) with <= depth Duhamel levels.

    Frequencies are placeholders (reassigned canonically afterwards);
    leaves carry fresh negative indices so shapes stay distinguishable.
    """
    if depth == 0:
        return []
    out: list[DecoratedTree] = []
    for (n_plain, n_conj) in spec.child_tuples():
        # each child slot: a leaf, or a chain into a deeper t2 subtree
        plain_opts = [None] + _grow(spec, depth - 1, conj)
        conj_opts = [None] + _grow(spec, depth - 1, 1 - conj)

        def branches(options, count, acc, chosen):
            if count == 0:
                yield list(chosen)
                return
            for idx in range(len(options)):
                # combinations with repetition, order-free
                yield from branches(options[idx:], count - 1, acc,
                                    chosen + [options[idx]])

        for plain_sel in branches(plain_opts, n_plain, None, []):
            for conj_sel in branches(conj_opts, n_conj, None, []):
                children: list[DecoratedTree] = []
                for sub in plain_sel:
                    children.append(_wrap_child(sub, conj))
                for sub in conj_sel:
                    children.append(_wrap_child(sub, 1 - conj, flip=True))
                out.append(DecoratedTree(EdgeDecor("t2", conj), FreqLinear(),
                                         0, tuple(children)))
    # dedupe by shape
    seen: dict[object, DecoratedTree] = {}
    for T in out:
        seen.setdefault(shape_key(T), T)
    return list(seen.values())


def _wrap_child(sub: DecoratedTree | None, conj: int, flip: bool = False) -> DecoratedTree:
    e = EdgeDecor("t1", conj)
    if sub is None:
        return DecoratedTree(e, FreqLinear())
    return DecoratedTree(e, FreqLinear(), 0, (sub,))


def assign_frequencies(T: DecoratedTree, start: int = 1) -> tuple[DecoratedTree, int]:
    """Assign fresh leaf symbols in canonical traversal order and derive
    inner frequencies from the signed-sum constraint."""

    counter = [start]

    def rec(node: DecoratedTree) -> tuple[DecoratedTree, FreqLinear]:
        def order_key(c: DecoratedTree):
            # branches first, then rule-conjugated children (parity
            # differing from this node), then plain
            return (-edge_count(c), -(c.edge.conj != node.edge.conj),
                    canonical_key(c))
        if node.is_leaf():
            k = FreqLinear.symbol(counter[0])
            counter[0] += 1
            signed = k.scale(-1) if node.edge.conj else k
            return DecoratedTree(node.edge, k, node.power), signed
        new_children = []
        total = FreqLinear()
        for c in sorted(node.children, key=order_key):
            nc, s = rec(c)
            new_children.append(nc)
            total = total + s
        freq = total.scale(-1) if node.edge.conj else total
        return DecoratedTree(node.edge, freq, node.power,
                             tuple(new_children)), total

    new_tree, _ = rec(T)
    return new_tree, counter[0] - start


def generate_trees(spec: EquationSpec, r: int) -> list[DecoratedTree | None]:
    """The scheme's tree set: unit plus all shapes with n_plus <= r+1.

    Duhamel iteration depth r+1 suffices since every extra level adds a
    t2 edge.  Returns None for the unit followed by decorated shapes with
    canonical symbolic frequencies.
    """
    shapes = [T for T in _grow(spec, r + 1, 0) if n_plus(T) <= r + 1]
    out: list[DecoratedTree | None] = [None]
    decorated = [assign_frequencies(T)[0] for T in shapes]
    decorated.sort(key=lambda T: (edge_count(T), canonical_key(T)))
    out.extend(decorated)
    return out


def plant_root(spec: EquationSpec, T: DecoratedTree | None,
               k: FreqLinear | None = None) -> DecoratedTree:
    """Wrap a t2 shape (or the unit) under the entry edge I_(t1,0)(lambda_k .)."""
    if T is None:
        if k is None:
            k = FreqLinear.symbol(1)
        return DecoratedTree(EdgeDecor("t1", 0), k)
    return DecoratedTree(EdgeDecor("t1", 0), T.freq, 0, (T,))


# ----------------------------------------------------------- upsilon


@dataclass(frozen=True)
class UpsilonMonomial:
    """Integer/rational coefficient times a product of v-hat factors."""

    coeff: Fraction
    factors: tuple[tuple[int, int], ...]  # (leaf symbol index, conj bit)

    def __str__(self) -> str:
        body = "*".join(("conj(v%d)" % i if c else "v%d" % i)
                        for i, c in self.factors)
        return f"{self.coeff}*{body}" if self.coeff != 1 else body


def upsilon(T: DecoratedTree, spec: EquationSpec) -> UpsilonMonomial:
    """Elementary-differential coefficient of a t2-planted tree."""

    coeff = Fraction(1)
    factors: list[tuple[int, int]] = []

    def rec(node: DecoratedTree):
        nonlocal coeff
        if node.is_leaf():
            idx = node.freq.coeffs[0][0]
            factors.append((idx, node.edge.conj))
            return
        if node.edge.op == "t2":
            n_plain = sum(1 for c in node.children if c.edge.conj == node.edge.conj)
            n_conj = len(node.children) - n_plain
            coeff *= spec.node_coefficient(n_plain, n_conj, node.edge.conj)
        for c in node.children:
            rec(c)

    rec(T)
    return UpsilonMonomial(coeff, tuple(sorted(factors)))


def upsilon_over_s(T: DecoratedTree, spec: EquationSpec) -> UpsilonMonomial:
    u = upsilon(T, spec)
    return UpsilonMonomial(u.coeff / symmetry_factor(T), u.factors)


# ------------------------------------------------------- frequency maps


def f_dom(F: Forest | DecoratedTree,
          spec: EquationSpec | None = None) -> FreqPoly:
    """Dominant frequency of a forest: projection applied at t2 edges."""
    if isinstance(F, DecoratedTree):
        F = (F,)
    out = FreqPoly.zero()
    for T in F:
        out = out + _f_dom_tree(T, spec)
    return out


def _f_dom_tree(T: DecoratedTree, spec: EquationSpec | None = None) -> FreqPoly:
    spec = spec or _current_spec(T)
    inner = FreqPoly.zero()
    for c in T.children:
        inner = inner + _f_dom_tree(c, spec)
    P = spec.p_edge(T.edge, T.freq) + inner
    return p_dom(P) if T.edge.in_plus() else P


def f_low(T: DecoratedTree, spec: EquationSpec | None = None) -> FreqPoly:
    """Low part at the trunk: (id - p_dom) of the full accumulated phase."""
    spec = spec or _current_spec(T)
    if not T.edge.in_plus():
        raise RuleViolation("f_low is defined for integral-rooted trees")
    inner = FreqPoly.zero()
    for c in T.children:
        inner = inner + _f_dom_tree(c, spec)
    return p_low(spec.p_edge(T.edge, T.freq) + inner)


def full_phase(T: DecoratedTree, spec: EquationSpec) -> FreqPoly:
    """P_(t,p)(k) + F_dom(children) at the trunk, before projection."""
    inner = FreqPoly.zero()
    for c in T.children:
        inner = inner + _f_dom_tree(c, spec)
    return spec.p_edge(T.edge, T.freq) + inner


_SPEC_REGISTRY: dict[str, EquationSpec] = {}


def use_spec(spec: EquationSpec) -> EquationSpec:
    """Register the ambient equation for bare f_dom/f_low calls."""
    _SPEC_REGISTRY["current"] = spec
    return spec


def _current_spec(T: DecoratedTree) -> EquationSpec:
    spec = _SPEC_REGISTRY.get("current")
    if spec is None:
        raise RuleViolation("no ambient EquationSpec set; call use_spec")
    return spec


# ------------------------------------------------------- named corpora


def nls_trees() -> dict[str, DecoratedTree]:
    """The cubic-Schroedinger shapes with the conventional leaf numbering."""
    spec = nls_spec()
    out: dict[str, DecoratedTree] = {}
    gen = [T for T in generate_trees(spec, 1) if T is not None]
    t1 = [T for T in gen if edge_count(T) == 4][0]
    big = [T for T in gen if edge_count(T) == 8]
    out["T1"] = t1
    for T in big:
        # T2 chains through a plain branch, T3 through the conjugated one
        branch = [c for c in T.children if not c.is_leaf()][0]
        out["T2" if branch.edge.conj == 0 else "T3"] = T
    return out


def kdv_trees() -> dict[str, DecoratedTree]:
    spec = kdv_spec()
    gen = [T for T in generate_trees(spec, 1) if T is not None]
    out = {}
    for T in gen:
        out["T1" if edge_count(T) == 3 else "T2"] = T
    return out


def kg_trees() -> dict[str, DecoratedTree]:
    spec = kg_spec()
    gen = [T for T in generate_trees(spec, 0) if T is not None]
    out = {}
    for T in gen:
        m = sum(1 for c in T.children if c.edge.conj)
        out[f"T{m + 1}"] = T
    return out
