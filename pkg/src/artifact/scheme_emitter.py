"""Scheme assembly: Fourier-side resonance schemes, their physical-space
operator ASTs, and a catalogue of hand-written reference schemes.

A Fourier scheme is a sum over interaction patterns of entire coefficient
functions of the leaf frequencies (polynomials, oscillations e^{i tau P},
and psi_j integrals), so it evaluates correctly on every mode including
resonant ones.  The physical map rewrites each coefficient as nested
diagonal multipliers acting on pointwise products of the initial field,
which is exactly the structure the FFT evaluates efficiently.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial
from typing import Iterable, Mapping

from .freq_algebra import (
    MONE, QC, FreqLinear, FreqPoly, Monomial, factor_linear_forms, p_dom,
    poly_deg, poly_eval, try_divide,
)
from .oscillatory import _integrate_term, psi_fn
from .trees import (
    DecoratedTree, EdgeDecor, EquationSpec, deg_tree, generate_trees,
    plant_root, upsilon_over_s,
)

SLOT = FreqLinear.symbol(0)


class EmissionUnsupported(RuntimeError):
    """Raised when an inner integral cannot be kept in entire form."""


class NonNestedDenominators(RuntimeError):
    """Raised when a coefficient does not split over nested mode subsets."""


class UnknownScheme(KeyError):
    pass


# ---------------------------------------------------- Fourier-side terms


@dataclass(frozen=True)
class PhiFactor:
    """One entire factor int_0^tau xi^q e^{i xi arg} d xi
    = tau^{q+1} psi_q(i tau arg)."""

    q: int
    arg: FreqPoly

    def eval(self, tau: float, assignment: Mapping[int, float],
             eps: float = 1.0, token_eval=None) -> complex:
        z = 1j * tau * poly_eval(self.arg, assignment, eps, token_eval)
        return (tau ** (self.q + 1)) * psi_fn(self.q, z)


@dataclass(frozen=True)
class EmitTerm:
    """coeff * tau^p * poly(k)/den(k) * e^{i tau phase(k)} * phi factors.

    Denominators only appear when an inner phi factor had to be expanded
    under an outer integral; top-level trunk integrals stay in entire
    phi form.
    """

    coeff: QC = QC(Fraction(1))
    tau_power: int = 0
    phase: FreqPoly = FreqPoly.zero()
    poly: FreqPoly = FreqPoly.const(1)
    phis: tuple[PhiFactor, ...] = ()
    den: tuple[tuple[FreqPoly, int], ...] = ()

    def scale(self, c: QC | Fraction | int) -> "EmitTerm":
        return EmitTerm(self.coeff * QC.of(c), self.tau_power, self.phase,
                        self.poly, self.phis, self.den)

    def times(self, other: "EmitTerm") -> "EmitTerm":
        return EmitTerm(self.coeff * other.coeff,
                        self.tau_power + other.tau_power,
                        self.phase + other.phase,
                        self.poly * other.poly,
                        tuple(sorted(self.phis + other.phis,
                                     key=lambda f: (f.q, str(f.arg)))),
                        _merge_den(self.den, other.den))

    def eval(self, tau: float, assignment: Mapping[int, float],
             eps: float = 1.0, token_eval=None) -> complex:
        import cmath
        v = self.coeff.to_complex() * tau ** self.tau_power
        v *= poly_eval(self.poly, assignment, eps, token_eval)
        for f, p in self.den:
            d = poly_eval(f, assignment, eps, token_eval)
            if d == 0:
                raise ZeroDivisionError(f"denominator {f} vanishes")
            v /= d ** p
        v *= cmath.exp(1j * tau * poly_eval(self.phase, assignment, eps,
                                            token_eval))
        for f in self.phis:
            v *= f.eval(tau, assignment, eps, token_eval)
        return v

    def relabel(self, perm: Mapping[int, int]) -> "EmitTerm":
        return EmitTerm(self.coeff, self.tau_power, self.phase.relabel(perm),
                        self.poly.relabel(perm),
                        tuple(PhiFactor(f.q, f.arg.relabel(perm))
                              for f in self.phis),
                        tuple(sorted(((f.relabel(perm), p)
                                      for f, p in self.den),
                                     key=lambda fp: (str(fp[0]), fp[1]))))


def _merge_den(a: tuple[tuple[FreqPoly, int], ...],
               b: tuple[tuple[FreqPoly, int], ...]):
    acc: dict[FreqPoly, int] = {}
    for f, p in a + b:
        acc[f] = acc.get(f, 0) + p
    return tuple(sorted(acc.items(), key=lambda fp: (str(fp[0]), fp[1])))


def _normalise(t: EmitTerm) -> EmitTerm:
    """Fold the scalar of a single-monomial numerator into the coefficient."""
    if len(t.poly.terms) == 1:
        (m, c), = t.poly.terms.items()
        return EmitTerm(t.coeff * c, t.tau_power, t.phase,
                        FreqPoly({m: QC.of(1)}), t.phis, t.den)
    return t


def _combine(terms: Iterable[EmitTerm]) -> tuple[EmitTerm, ...]:
    acc: dict[tuple, EmitTerm] = {}
    for t in map(_normalise, terms):
        key = (t.tau_power, t.phase, t.poly, t.phis, t.den)
        if key in acc:
            old = acc[key]
            acc[key] = EmitTerm(old.coeff + t.coeff, t.tau_power, t.phase,
                                t.poly, t.phis, t.den)
        else:
            acc[key] = t
    return tuple(t for t in acc.values() if not t.coeff.is_zero())


@dataclass(frozen=True)
class SchemeEntry:
    """One interaction pattern: coeff * prod v-hat factors * sum of terms.

    ``factors`` lists (leaf symbol index, conj bit); the output frequency
    is the signed sum (conjugated factors count negatively).
    """

    coeff: Fraction
    factors: tuple[tuple[int, int], ...]
    terms: tuple[EmitTerm, ...]
    tree: DecoratedTree | None = None

    def signs(self) -> dict[int, int]:
        return {i: (-1 if c else 1) for i, c in self.factors}


@dataclass(frozen=True)
class FourierScheme:
    equation: str
    r: int
    n: int
    entries: tuple[SchemeEntry, ...]


# ------------------------------------------------------------- emission


def _taylor_terms(P: FreqPoly, orders: range, extra_q: int) -> list[EmitTerm]:
    out = []
    iP = P.scale(QC(im=Fraction(1)))
    power = FreqPoly.const(1)
    for ell in range(orders.stop):
        if ell in orders:
            out.append(EmitTerm(
                QC.of(Fraction(1, factorial(ell) * (ell + extra_q + 1))),
                ell + extra_q + 1, FreqPoly.zero(), power))
        power = power * iP
    return out


def _g_factors(l_low: FreqPoly, ell: int, mode: str) -> list[EmitTerm]:
    """Stable replacements for the Taylor coefficient (i L_low)^ell/ell!.

    The first-derivative coefficient is replaced by the exact difference
    quotient (e^{i tau L_low} - 1)/tau, which equals the phi_1-filtered
    variant identically; higher coefficients stay plain Taylor.
    """
    if ell == 0:
        return [EmitTerm()]
    if l_low.is_zero():
        return []
    plain = EmitTerm(QC.of(Fraction(1, factorial(ell))), 0, FreqPoly.zero(),
                     l_low.scale(QC(im=Fraction(1))).pow(ell))
    if mode == "taylor" or ell > 1:
        return [plain]
    return [EmitTerm(QC.of(1), -1, l_low),
            EmitTerm(QC.of(-1), -1)]


def _k_emit(q: int, P: FreqPoly, k: FreqLinear, edge: EdgeDecor, r: int,
            n: int, spec: EquationSpec, mode: str) -> list[EmitTerm]:
    """Emit -i|grad|^alpha(k) int_0^tau xi^q e^{i xi (P_edge + P)} dxi
    in the dominant/low splitting used by the approximating character."""
    full = spec.p_edge(edge, k) + P
    l_dom = p_dom(full)
    l_low = full - l_dom
    factored = None
    if spec.integrate_full and l_dom.is_zero() and not full.is_zero():
        l_dom, l_low = full, FreqPoly.zero()
        factored = factor_linear_forms(l_dom)
    d_dom, d_low = poly_deg(l_dom), poly_deg(l_low)
    if not l_dom.has_eps() and factored is None \
            and n >= (r + 1) * d_dom + spec.alpha:
        body = _taylor_terms(full, range(r - q + 1), q)
    else:
        body = []
        for ell in range(r - q + 1):
            exact = (l_dom.has_eps() or factored is not None
                     or (r - q - ell + 1) * d_dom + ell * d_low
                     + spec.alpha > n)
            if exact:
                base = [EmitTerm(QC.of(1), 0, FreqPoly.zero(),
                                 FreqPoly.const(1),
                                 (PhiFactor(ell + q, l_dom),))]
            else:
                base = _taylor_terms(l_dom, range(r - q - ell + 1), ell + q)
            for g in _g_factors(l_low, ell, mode):
                body.extend(b.times(g) for b in base)
    c = QC(im=Fraction(-1)) * spec.prefactor
    if edge.conj:
        c = c.conj()
    num = FreqPoly.from_linear(k).pow(spec.alpha).scale(c)
    if spec.token is not None:
        num = num * FreqPoly.token(spec.token, k)
    pref = EmitTerm(QC.of(1), 0, FreqPoly.zero(), num)
    return [t.times(pref) for t in body]


def _emit_tree(t: DecoratedTree, r: int, n: int, spec: EquationSpec,
               mode: str) -> list[EmitTerm]:
    if r < -1 or deg_tree(t) > r + 1:
        return []
    inner_r = r - t.power - (1 if t.edge.in_plus() else 0)
    inner = [EmitTerm()]
    for c in t.children:
        sub = _emit_tree(c, inner_r, n, spec, mode)
        inner = [a.times(b) for a in inner for b in sub]
    if not t.edge.in_plus():
        kept = EmitTerm(QC.of(1), t.power, spec.p_edge(t.edge, t.freq))
        return [kept.times(b) for b in inner]
    out: list[EmitTerm] = []
    for raw in inner:
        for b in _expand_inner_phis(raw):
            q = t.power + b.tau_power
            if q < 0 or q > r:
                continue
            shell = EmitTerm(b.coeff, 0, FreqPoly.zero(), b.poly, (), b.den)
            out.extend(kt.times(shell)
                       for kt in _k_emit(q, b.phase, t.freq, t.edge, r, n,
                                         spec, mode))
    return out


def _expand_inner_phis(t: EmitTerm) -> list[EmitTerm]:
    """Rewrite phi factors as explicit oscillations over denominators.

    Needed when an inner integral feeds an outer one: the integrator
    works on xi^q e^{i xi P} integrands, not on entire phi forms.
    """
    if not t.phis:
        return [t]
    out = [EmitTerm(t.coeff, t.tau_power, t.phase, t.poly, (), t.den)]
    for f in t.phis:
        pieces = []
        expanded = _integrate_term(f.q, f.arg, factor_linear_forms(f.arg))
        for phase, tp in expanded.terms.items():
            for q, coeff in tp.items():
                co = coeff.simplified()
                pieces.append(EmitTerm(QC.of(1), q, phase, co.num, (),
                                       co.den))
        out = [a.times(b) for a in out for b in pieces]
    return out


def build_scheme(spec: EquationSpec, r: int, n: int,
                 stabilisation: str = "filter") -> FourierScheme:
    """Assemble the order-r, regularity-n scheme for one equation.

    Generates the tree set, evaluates the per-tree coefficient functions,
    and merges patterns with identical conjugation structure (after a
    canonical leaf relabelling) into single entries.
    """
    entries: list[SchemeEntry] = []
    free = EmitTerm(QC.of(1), 0,
                    spec.p_edge(EdgeDecor("t1", 0), FreqLinear.symbol(1)))
    entries.append(SchemeEntry(Fraction(1), ((1, 0),), (free,), None))
    for T in generate_trees(spec, r):
        if T is None:
            continue
        ups = upsilon_over_s(T, spec)
        planted = plant_root(spec, T)
        terms = _combine(_emit_tree(planted, r, n, spec, stabilisation))
        entries.append(SchemeEntry(Fraction(ups.coeff), ups.factors, terms, T))
    return FourierScheme(spec.name, r, n, tuple(_merge(entries)))


def _canonical_perm(factors: tuple[tuple[int, int], ...]) -> dict[int, int]:
    conj = sorted(i for i, c in factors if c)
    plain = sorted(i for i, c in factors if not c)
    perm = {}
    for new, old in enumerate(conj + plain, start=1):
        perm[old] = new
    return perm


def _merge(entries: list[SchemeEntry]) -> list[SchemeEntry]:
    groups: dict[tuple, list[SchemeEntry]] = {}
    for e in entries:
        key = (len(e.factors), sum(c for _, c in e.factors))
        groups.setdefault(key, []).append(e)
    out = []
    for group in groups.values():
        if len(group) == 1:
            out.append(group[0])
            continue
        merged: list[EmitTerm] = []
        tree = None
        for e in group:
            perm = _canonical_perm(e.factors)
            merged.extend(t.relabel(perm).scale(QC.of(e.coeff))
                          for t in e.terms)
            tree = tree or e.tree
        n_conj = sum(c for _, c in group[0].factors)
        n_all = len(group[0].factors)
        factors = tuple((i, 1) for i in range(1, n_conj + 1)) \
            + tuple((i, 0) for i in range(n_conj + 1, n_all + 1))
        out.append(SchemeEntry(Fraction(1), factors, _combine(merged), None))
    out.sort(key=lambda e: (len(e.factors), e.factors))
    return out


# ----------------------------------------- Fourier-side sparse evaluation


def fourier_apply(fs: FourierScheme, modes: Mapping[int, complex],
                  tau: float, eps: float = 1.0,
                  token_eval=None) -> dict[int, complex]:
    """Apply the scheme to a sparse mode dictionary by direct summation.

    Exact convolution oracle: iterates every tuple of active modes, so it
    is only meant for small mode sets in tests.
    """
    from itertools import product

    active = sorted(modes)
    out: dict[int, complex] = {}
    for entry in fs.entries:
        idxs = [i for i, _ in entry.factors]
        conj = {i: c for i, c in entry.factors}
        for combo in product(active, repeat=len(idxs)):
            assignment = dict(zip(idxs, (float(k) for k in combo)))
            amp = complex(entry.coeff)
            k_out = 0
            for i, k in zip(idxs, combo):
                v = modes[k]
                amp *= v.conjugate() if conj[i] else v
                k_out += -k if conj[i] else k
            s = sum(t.eval(tau, assignment, eps, token_eval)
                    for t in entry.terms)
            out[k_out] = out.get(k_out, 0j) + amp * s
    return out


# --------------------------------------------------- physical-space AST


@dataclass(frozen=True)
class Field:
    """The initial field v (or its conjugate) in physical space."""

    conj: bool = False


@dataclass(frozen=True)
class Mult:
    """Diagonal Fourier multiplier m(K) applied to a factor subset.

    ``kind`` selects the function of iota = i*tau*poly(K): exp -> e^iota,
    phi1/phi2 -> classical entire phi functions, psi<j> -> psi_j, poly ->
    poly(K) itself (no tau), inv -> 1/poly(K) with vanishing modes zeroed,
    sinc -> sin(tau*poly(K))/(tau*poly(K)).
    """

    kind: str
    poly: FreqPoly
    child: "Expr"


@dataclass(frozen=True)
class Prod:
    children: tuple["Expr", ...]


@dataclass(frozen=True)
class Scalar:
    re: Fraction
    im: Fraction
    tau_power: int
    child: "Expr"


@dataclass(frozen=True)
class Sum:
    children: tuple["Expr", ...]


Expr = Field | Mult | Prod | Scalar | Sum


def expr_to_json(e: Expr) -> dict:
    if isinstance(e, Field):
        return {"node": "field", "conj": e.conj}
    if isinstance(e, Mult):
        return {"node": "mult", "kind": e.kind, "poly": str(e.poly),
                "child": expr_to_json(e.child)}
    if isinstance(e, Prod):
        return {"node": "product",
                "children": [expr_to_json(c) for c in e.children]}
    if isinstance(e, Scalar):
        return {"node": "scalar", "re": str(e.re), "im": str(e.im),
                "tau_power": e.tau_power, "child": expr_to_json(e.child)}
    if isinstance(e, Sum):
        return {"node": "sum",
                "children": [expr_to_json(c) for c in e.children]}
    raise TypeError(type(e))


# ------------------------------------------- subset decomposition helpers


def _subset_form(V: frozenset[int], signs: Mapping[int, int]) -> FreqLinear:
    return FreqLinear.of({i: signs[i] for i in V})


def _candidate_subsets(entry: SchemeEntry) -> list[frozenset[int]]:
    idxs = [i for i, _ in entry.factors]
    cands = {frozenset([i]) for i in idxs}
    cands.add(frozenset(idxs))

    def walk(t: DecoratedTree) -> frozenset[int]:
        if t.is_leaf():
            return frozenset(t.freq.indices())
        got = frozenset().union(*(walk(c) for c in t.children))
        cands.add(got)
        return got

    if entry.tree is not None:
        walk(entry.tree)
    # largest first: coefficients attach to the output mode when possible,
    # which keeps poly/inv pairs cancellable
    return sorted(cands, key=lambda V: (-len(V), sorted(V)))


def _solve_rational(columns: list[FreqPoly], target: FreqPoly):
    """One exact rational solution x of sum x_j col_j = target, or None."""
    monos: list[Monomial] = sorted(
        {m for p in columns for m in p.terms} | set(target.terms),
        key=lambda m: (m.powers, m.eps_power, m.tokens))
    rows = []
    for m in monos:
        row = []
        for p in columns:
            c = p.terms.get(m, QC())
            if c.im != 0:
                return None
            row.append(Fraction(c.re))
        t = target.terms.get(m, QC())
        rows.append((row, Fraction(t.re), Fraction(t.im)))
    ncols = len(columns)
    # Gaussian elimination on the shared matrix, two right-hand sides
    mat = [list(r) + [bre, bim] for r, bre, bim in rows]
    pivots = []
    rank_row = 0
    for col in range(ncols):
        piv = next((i for i in range(rank_row, len(mat)) if mat[i][col]), None)
        if piv is None:
            continue
        mat[rank_row], mat[piv] = mat[piv], mat[rank_row]
        pr = mat[rank_row]
        pr[:] = [v / pr[col] for v in pr]
        for i in range(len(mat)):
            if i != rank_row and mat[i][col]:
                f = mat[i][col]
                mat[i] = [a - f * b for a, b in zip(mat[i], pr)]
        pivots.append(col)
        rank_row += 1
    for i in range(rank_row, len(mat)):
        if mat[i][ncols] or mat[i][ncols + 1]:
            return None
    x = [QC() for _ in range(ncols)]
    for row, col in zip(range(rank_row), pivots):
        x[col] = QC(mat[row][ncols], mat[row][ncols + 1])
    return x


def _decompose_power_poly(P: FreqPoly, cands: list[frozenset[int]],
                          signs: Mapping[int, int]
                          ) -> dict[frozenset[int], FreqPoly]:
    """Write a pure-power polynomial as a sum of slot polynomials q_V(K_V)."""
    if P.is_zero():
        return {}
    degree = max(m.total_degree() for m in P.terms)
    columns, labels = [], []
    for V in cands:
        base = FreqPoly.from_linear(_subset_form(V, signs))
        power = base
        for d in range(1, degree + 1):
            columns.append(power)
            labels.append((V, d))
            power = power * base
    x = _solve_rational(columns, P)
    if x is None:
        raise NonNestedDenominators(
            f"polynomial {P} does not split over nested mode subsets")
    out: dict[frozenset[int], FreqPoly] = {}
    for (V, d), c in zip(labels, x):
        if not c.is_zero():
            out[V] = out.get(V, FreqPoly.zero()) \
                + FreqPoly.symbol(0, d).scale(c)
    return out


def _split_phase(P: FreqPoly, cands, signs, root: frozenset[int]
                 ) -> dict[frozenset[int], FreqPoly]:
    """Phase -> per-subset exponent arguments (eps terms go to the root)."""
    out: dict[frozenset[int], FreqPoly] = {}
    pure = FreqPoly.zero()
    for m, c in P.terms.items():
        piece = FreqPoly({m: c})
        if m.tokens:
            if m.powers or m.eps_power:
                raise NonNestedDenominators(f"mixed token monomial {m}")
            V = _token_subset(m, cands, signs)
            slot = FreqPoly({Monomial((), 0, tuple(sorted(
                (name, SLOT) for name, _ in m.tokens))): c})
            out[V] = out.get(V, FreqPoly.zero()) + slot
        elif m.eps_power:
            out[root] = out.get(root, FreqPoly.zero()) + piece
        else:
            pure = pure + piece
    for V, q in _decompose_power_poly(pure, cands, signs).items():
        out[V] = out.get(V, FreqPoly.zero()) + q
    return out


def _token_subset(m: Monomial, cands, signs) -> frozenset[int]:
    args = {arg for _, arg in m.tokens}
    for V in cands:
        form = _subset_form(V, signs)
        if all(arg in (form, -form) for arg in args):
            return V
    raise NonNestedDenominators(f"token argument outside mode subsets: {m}")


def _single_subset_poly(P: FreqPoly, cands, signs):
    """P as a slot polynomial of one K_V, or None."""
    idxs = P.symbol_indices()
    for V in cands:
        if idxs and not idxs <= V:
            continue
        form = FreqPoly.from_linear(_subset_form(V, signs))
        degree = max((m.total_degree() for m in P.terms), default=0)
        columns = []
        power = form
        for d in range(1, degree + 1):
            columns.append(power)
            power = power * form
        const = FreqPoly({Monomial((), m.eps_power, ()): c
                          for m, c in P.terms.items()
                          if not m.powers and not m.tokens})
        x = _solve_rational(columns, P - const)
        if x is None:
            continue
        slot = const
        for d, c in enumerate(x, start=1):
            if not c.is_zero():
                slot = slot + FreqPoly.symbol(0, d).scale(c)
        return V, slot
    return None


# ---------------------------------------------------------- physical map


@dataclass
class _FlatTerm:
    """One physical term under assembly: scalar, tau power, and per-subset
    multiplier stacks (applied innermost first)."""

    coeff: QC
    tau_power: int
    mults: dict[frozenset[int], list[tuple[str, FreqPoly]]]

    def clone(self) -> "_FlatTerm":
        return _FlatTerm(self.coeff, self.tau_power,
                         {V: list(ms) for V, ms in self.mults.items()})

    def push(self, V, kind, poly):
        self.mults.setdefault(V, []).append((kind, poly))


def _expand_phi(flat: _FlatTerm, phi: PhiFactor, cands, signs,
                root) -> list[_FlatTerm]:
    hit = _single_subset_poly(phi.arg, cands, signs)
    if hit is not None:
        V, slot = hit
        out = flat.clone()
        out.tau_power += phi.q + 1
        if slot.is_zero():
            out.coeff = out.coeff * QC.of(Fraction(1, phi.q + 1))
        else:
            out.push(V, f"psi{phi.q}", slot)
        return [out]
    factored = factor_linear_forms(phi.arg)
    if factored is None:
        raise NonNestedDenominators(
            f"oscillation argument {phi.arg} neither nests nor factors")
    pieces = []
    for phase, tp in _integrate_term(phi.q, phi.arg, factored).terms.items():
        for q, coeff in tp.items():
            piece = flat.clone()
            piece.tau_power += q
            pieces.extend(_apply_rational(piece, coeff, phase, cands,
                                          signs, root))
    return pieces


def _apply_rational(flat: _FlatTerm, coeff, phase: FreqPoly, cands, signs,
                    root) -> list[_FlatTerm]:
    """Multiply by a rational coefficient and an extra oscillation."""
    coeff = coeff.simplified()
    for f, mult in coeff.den:
        hit = _single_subset_poly(f, cands, signs)
        if hit is None:
            raise NonNestedDenominators(f"denominator {f} not nested")
        V, slot = hit
        flat.push(V, "inv", slot.pow(mult))
    for V, arg in _split_phase(phase, cands, signs, root).items():
        flat.push(V, "exp", arg)
    return _apply_numerator(flat, coeff.num, cands, signs, root)


def _apply_numerator(flat: _FlatTerm, num: FreqPoly, cands, signs,
                     root) -> list[_FlatTerm]:
    token_sets = {m.tokens for m in num.terms}
    if len(token_sets) == 1 and next(iter(token_sets), ()):
        tokens = next(iter(token_sets))
        for name, arg in tokens:
            V = _token_subset(Monomial((), 0, ((name, arg),)), cands, signs)
            flat.push(V, "poly", FreqPoly.token(name, SLOT))
        num = FreqPoly({Monomial(m.powers, m.eps_power): c
                        for m, c in num.terms.items()})
    const = QC()
    pure = FreqPoly.zero()
    eps_part = FreqPoly.zero()
    for m, c in num.terms.items():
        if m.tokens:
            raise NonNestedDenominators(f"mixed token numerator {num}")
        if m.eps_power:
            eps_part = eps_part + FreqPoly({m: c})
        elif not m.powers:
            const = const + c
        else:
            pure = pure + FreqPoly({m: c})
    comps = _decompose_power_poly(pure, cands, signs)
    out = []
    if not const.is_zero():
        t = flat.clone()
        t.coeff = t.coeff * const
        out.append(t)
    if not eps_part.is_zero():
        if any(m.powers for m in eps_part.terms):
            raise NonNestedDenominators(f"mixed eps numerator {num}")
        t = flat.clone()
        t.push(root, "poly", eps_part)
        out.append(t)
    for V, slot in comps.items():
        t = flat.clone()
        t.push(V, "poly", slot)
        out.append(t)
    return out


def _cancel_stack(mults: list[tuple[str, FreqPoly]]
                  ) -> tuple[list[tuple[str, FreqPoly]], QC]:
    """Cancel numerator slot polynomials against inverse multipliers.

    Removes removable singularities introduced by splitting an entire
    coefficient into numerator and denominator pieces on one subset.
    """
    num = FreqPoly.const(1)
    den = FreqPoly.const(1)
    rest = []
    for kind, poly in mults:
        if kind == "poly" and not poly.has_tokens() and not poly.has_eps():
            num = num * poly
        elif kind == "inv":
            den = den * poly
        else:
            rest.append((kind, poly))
    q = try_divide(num, den)
    if q is None:
        out = rest
        if num != FreqPoly.const(1):
            out = out + [("poly", num)]
        if den != FreqPoly.const(1):
            out = out + [("inv", den)]
        return out, QC.of(1)
    scalar = QC.of(1)
    if len(q.terms) == 1 and MONE in q.terms:
        return rest, q.terms[MONE]
    return rest + [("poly", q)], scalar


def _assemble(flat: _FlatTerm, entry: SchemeEntry,
              root: frozenset[int]) -> Expr:
    conj = {i: bool(c) for i, c in entry.factors}
    for V, ms in list(flat.mults.items()):
        cleaned, extra = _cancel_stack(ms)
        flat.coeff = flat.coeff * extra
        if cleaned:
            flat.mults[V] = cleaned
        else:
            del flat.mults[V]
    used = [V for V in flat.mults if V != root]

    def build(V: frozenset[int]) -> Expr:
        subs = [W for W in used if W < V]
        maximal = [W for W in subs
                   if not any(W < X for X in subs if X != W)]
        covered: set[int] = set()
        for W in maximal:
            if covered & W:
                raise NonNestedDenominators("overlapping mode subsets")
            covered |= W
        children: list[Expr] = [build(W) for W in
                                sorted(maximal, key=lambda W: sorted(W))]
        children += [Field(conj[i]) for i in sorted(V - covered)]
        node = children[0] if len(children) == 1 else Prod(tuple(children))
        for kind, poly in flat.mults.get(V, []):
            node = Mult(kind, poly, node)
        return node

    node = build(root)
    c = flat.coeff
    if c == QC.of(1) and flat.tau_power == 0:
        return node
    return Scalar(c.re, c.im, flat.tau_power, node)


def to_physical(fs: FourierScheme) -> Expr:
    """Rewrite a Fourier scheme as a physical-space operator AST."""
    out: list[Expr] = []
    for entry in fs.entries:
        signs = entry.signs()
        cands = _candidate_subsets(entry)
        root = frozenset(i for i, _ in entry.factors)
        for term in entry.terms:
            seed = _FlatTerm(term.coeff * QC.of(entry.coeff),
                             term.tau_power, {})
            for f, mult in term.den:
                hit = _single_subset_poly(f, cands, signs)
                if hit is None:
                    raise NonNestedDenominators(f"denominator {f} not nested")
                V, slot = hit
                seed.push(V, "inv", slot.pow(mult))
            for V, arg in _split_phase(term.phase, cands, signs,
                                       root).items():
                seed.push(V, "exp", arg)
            flats = _apply_numerator(seed, term.poly, cands, signs, root)
            for phi in term.phis:
                flats = [piece for f in flats
                         for piece in _expand_phi(f, phi, cands, signs,
                                                  root)]
            out.extend(_assemble(f, entry, root) for f in flats)
    return Sum(tuple(out))


# ------------------------------------------------------ reference schemes


def _k2() -> FreqPoly:
    return FreqPoly.symbol(0, 2)


def _scal(re, im, p, child) -> Expr:
    return Scalar(Fraction(re), Fraction(im), p, child)


def _nls_free(child: Expr) -> Expr:
    return Mult("exp", -_k2(), child)


def _nls1low() -> Expr:
    cubic = Prod((Field(), Field(), Mult("phi1", _k2().scale(2), Field(True))))
    return Sum((_nls_free(Field()),
                _scal(0, -1, 1, _nls_free(cubic))))


def _nls1class() -> Expr:
    return Sum((_nls_free(Field()),
                _scal(0, -1, 1, _nls_free(Prod((Field(), Field(),
                                                Field(True)))))))


def _nls2low() -> Expr:
    two = _k2().scale(2)
    t2a = _nls_free(Prod((Field(), Field(),
                          Mult("phi1", two, Field(True)))))
    t2b = _nls_free(Prod((Field(), Field(),
                          Mult("psi1", two, Field(True)))))
    t3 = Prod((_nls_free(Field()), _nls_free(Field()),
               Mult("psi1", two, _nls_free(Field(True)))))
    t4 = _nls_free(Prod((Field(), Field(), Field(), Field(True),
                         Field(True))))
    return Sum((_nls_free(Field()),
                _scal(0, -1, 1, t2a), _scal(0, 1, 1, t2b),
                _scal(0, -1, 1, t3), _scal(Fraction(-1, 2), 0, 2, t4)))


def _nls2mid() -> Expr:
    two = _k2().scale(2)
    t2a = _nls_free(Prod((Field(), Field(),
                          Mult("phi1", two, Field(True)))))
    t2b = _nls_free(Prod((Field(), Field(), Field(True))))
    t3 = Prod((_nls_free(Field()), _nls_free(Field()),
               _nls_free(Field(True))))
    t4 = _nls_free(Prod((Field(), Field(), Field(), Field(True),
                         Field(True))))
    return Sum((_nls_free(Field()),
                _scal(0, -1, 1, t2a), _scal(0, Fraction(1, 2), 1, t2b),
                _scal(0, Fraction(-1, 2), 1, t3),
                _scal(Fraction(-1, 2), 0, 2, t4)))


def _nls2smooth(psi: str = "one") -> Expr:
    def filt(child: Expr) -> Expr:
        return child if psi == "one" else Mult("phi1", -_k2(), child)
    cubic = Prod((Field(), Field(), Field(True)))
    lap = -_k2()
    out = [_nls_free(Field()),
           _scal(0, -1, 1, _nls_free(filt(cubic))),
           _scal(Fraction(-1, 2), 0, 2,
                 _nls_free(filt(Mult("poly", lap, cubic)))),
           _scal(Fraction(-1, 2), 0, 2,
                 _nls_free(filt(Prod((Field(), Field(),
                                      Mult("poly", lap, Field(True))))))),
           _scal(1, 0, 2,
                 _nls_free(filt(Prod((Field(), Field(True),
                                      Mult("poly", lap, Field())))))),
           _scal(Fraction(-1, 2), 0, 2,
                 _nls_free(filt(Prod((Field(), Field(), Field(),
                                      Field(True), Field(True))))))]
    return Sum(tuple(out))


def _kdv_free(child: Expr) -> Expr:
    return Mult("exp", FreqPoly.symbol(0, 3).scale(-1), child)


def _inv_dx(child: Expr) -> Expr:
    return Mult("inv", FreqPoly.from_linear(SLOT).scale(QC(im=Fraction(1))),
                child)


def _dx(child: Expr) -> Expr:
    return Mult("poly", FreqPoly.from_linear(SLOT).scale(QC(im=Fraction(1))),
                child)


def _kdv1() -> Expr:
    flowed = _kdv_free(_inv_dx(Field()))
    plain = _inv_dx(Field())
    return Sum((_kdv_free(Field()),
                _scal(Fraction(1, 6), 0, 0, Prod((flowed, flowed))),
                _scal(Fraction(-1, 6), 0, 0,
                      _kdv_free(Prod((plain, plain))))))


def _kdv2(psi: str = "sinc") -> Expr:
    # admissible filters: Psi(0) = 1 and |tau Psi k^2| <= 1; the sinc
    # symbol sin(tau k^2)/(tau k^2) is also real-even, so the stepper
    # keeps real data real
    inner = _dx(Prod((Field(), Field())))
    body = _dx(Prod((Field(), inner)))
    if psi == "sinc":
        body = Mult("sinc", _k2(), body)
    elif psi == "phi1":
        body = Mult("phi1", -_k2(), body)
    correction = _scal(Fraction(1, 4), 0, 2, _kdv_free(body))
    base = _kdv1()
    return Sum(base.children + (correction,))


def _kg_disp() -> FreqPoly:
    return FreqPoly.eps_term(1, 2) + FreqPoly.token("B", SLOT)


def _kg_free(child: Expr) -> Expr:
    return Mult("exp", _kg_disp(), child)


def _kg_c(child: Expr) -> Expr:
    return Mult("poly", FreqPoly.token("C", SLOT), child)


def _kg_res1() -> Expr:
    def branch(c_im: Fraction, eps_c: int, fields: tuple[Expr, ...]) -> Expr:
        body: Expr = Prod(fields)
        if eps_c:
            body = Mult("phi1", FreqPoly.eps_term(eps_c, 2), body)
        return _scal(0, c_im, 1, _kg_free(_kg_c(body)))
    u, ub = Field(), Field(True)
    return Sum((
        _kg_free(Field()),
        branch(Fraction(-1, 8), 2, (u, u, u)),
        branch(Fraction(-3, 8), 0, (u, u, ub)),
        branch(Fraction(-3, 8), -2, (u, ub, ub)),
        branch(Fraction(-1, 8), -4, (ub, ub, ub)),
    ))


def _kg_simp1() -> Expr:
    s = Sum((Field(), Field(True)))
    return Sum((_kg_free(Field()),
                _scal(0, Fraction(-1, 8), 1,
                      _kg_free(_kg_c(Prod((s, s, s)))))))


def _kdv_exp1() -> Expr:
    return Sum((_kdv_free(Field()),
                _scal(Fraction(-1, 2), 0, 1,
                      _kdv_free(_dx(Prod((Field(), Field())))))))


_CATALOGUE = {
    "nls_res1": _nls1low,
    "nls_classic1": _nls1class,
    "nls_exp1": _nls1class,
    "nls_res2_low": _nls2low,
    "nls_res2_mid": _nls2mid,
    "nls_res2_smooth": _nls2smooth,
    "kdv_res1": _kdv1,
    "kdv_res2": _kdv2,
    "kdv_exp1": _kdv_exp1,
    "kg_res1": _kg_res1,
    "kg_simp1": _kg_simp1,
}


def reference_scheme(name: str, **opts) -> Expr:
    """Hand-transcribed operator AST for a catalogued scheme."""
    try:
        return _CATALOGUE[name](**opts)
    except KeyError:
        raise UnknownScheme(name) from None


def scheme_names() -> tuple[str, ...]:
    return tuple(sorted(_CATALOGUE))
