"""Exact arithmetic for frequency polynomials.

Frequencies are formal scalar symbols ``k1, k2, ...``.  Polynomials carry
Gaussian-rational coefficients, an optional power of ``1/eps`` per monomial,
and opaque bounded-multiplier tokens such as ``B(k1+k2)`` whose argument is a
signed linear combination of symbols.  The central nonstandard operation is
the dominant-part projection ``p_dom`` which extracts the resonant portion
``a*(sum_i e_i k_i)^m`` of a polynomial.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product as iproduct
from typing import Callable, Iterable, Mapping, Union

RationalLike = Union[int, Fraction]


@dataclass(frozen=True)
class QC:
    """Gaussian rational: exact complex number with Fraction parts."""

    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    @staticmethod
    def of(x: "QC" | RationalLike) -> "QC":
        if isinstance(x, QC):
            return x
        return QC(Fraction(x), Fraction(0))

    @staticmethod
    def i_pow(p: int) -> "QC":
        """Return i**p exactly."""
        p %= 4
        return (QC(Fraction(1)), QC(im=Fraction(1)),
                QC(Fraction(-1)), QC(im=Fraction(-1)))[p]

    def __add__(self, other: "QC" | RationalLike) -> "QC":
        o = QC.of(other)
        return QC(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self) -> "QC":
        return QC(-self.re, -self.im)

    def __sub__(self, other: "QC" | RationalLike) -> "QC":
        return self + (-QC.of(other))

    def __mul__(self, other: "QC" | RationalLike) -> "QC":
        o = QC.of(other)
        return QC(self.re * o.re - self.im * o.im,
                  self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, other: "QC" | RationalLike) -> "QC":
        o = QC.of(other)
        d = o.re * o.re + o.im * o.im
        if d == 0:
            raise ZeroDivisionError("division by zero QC")
        return QC((self.re * o.re + self.im * o.im) / d,
                  (self.im * o.re - self.re * o.im) / d)

    def conj(self) -> "QC":
        return QC(self.re, -self.im)

    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0

    def to_complex(self) -> complex:
        return complex(self.re) + 1j * complex(self.im)

    def __str__(self) -> str:
        if self.im == 0:
            return str(self.re)
        if self.re == 0:
            return f"{self.im}*i"
        sign = "+" if self.im > 0 else "-"
        return f"({self.re}{sign}{abs(self.im)}*i)"


ONE = QC(Fraction(1))
MINUS_I = QC(im=Fraction(-1))


@dataclass(frozen=True)
class FreqSymbol:
    """A formal frequency symbol k_i."""

    index: int

    def __str__(self) -> str:
        return f"k{self.index}" if self.index > 0 else "k"


@dataclass(frozen=True, order=True)
class FreqLinear:
    """Signed integer linear combination of frequency symbols.

    Coefficients are nonzero integers; tree decorations keep them in
    {-1, +1} but intermediate sums may be general.
    """

    coeffs: tuple[tuple[int, int], ...] = ()  # sorted (index, coeff)

    @staticmethod
    def of(mapping: Mapping[int, int] | Iterable[tuple[int, int]]) -> "FreqLinear":
        items = dict(mapping)
        return FreqLinear(tuple(sorted((i, c) for i, c in items.items() if c)))

    @staticmethod
    def symbol(index: int) -> "FreqLinear":
        return FreqLinear(((index, 1),))

    def __add__(self, other: "FreqLinear") -> "FreqLinear":
        acc = dict(self.coeffs)
        for i, c in other.coeffs:
            acc[i] = acc.get(i, 0) + c
        return FreqLinear.of(acc)

    def __neg__(self) -> "FreqLinear":
        return FreqLinear(tuple((i, -c) for i, c in self.coeffs))

    def __sub__(self, other: "FreqLinear") -> "FreqLinear":
        return self + (-other)

    def scale(self, a: int) -> "FreqLinear":
        if a == 0:
            return FreqLinear()
        return FreqLinear(tuple((i, a * c) for i, c in self.coeffs))

    def is_zero(self) -> bool:
        return not self.coeffs

    def indices(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.coeffs)

    def relabel(self, perm: Mapping[int, int]) -> "FreqLinear":
        return FreqLinear.of({perm.get(i, i): c for i, c in self.coeffs})

    def eval(self, assignment: Mapping[int, float]) -> float:
        return sum(c * assignment[i] for i, c in self.coeffs)

    def __str__(self) -> str:
        if not self.coeffs:
            return "0"
        parts = []
        for i, c in self.coeffs:
            s = str(FreqSymbol(i)) if abs(c) == 1 else f"{abs(c)}*{FreqSymbol(i)}"
            parts.append(("-" if c < 0 else ("+" if parts else "")) + s)
        return "".join(parts)


@dataclass(frozen=True)
class Monomial:
    """One monomial: k-powers, an optional 1/eps power, opaque tokens."""

    powers: tuple[tuple[int, int], ...] = ()  # sorted (symbol index, exponent>0)
    eps_power: int = 0                        # power sigma of 1/eps^sigma
    tokens: tuple[tuple[str, FreqLinear], ...] = ()  # sorted opaque factors

    def degree(self) -> int:
        """Per-symbol degree: max exponent over the k-symbols."""
        return max((e for _, e in self.powers), default=0)

    def total_degree(self) -> int:
        return sum(e for _, e in self.powers)

    def mul(self, other: "Monomial") -> "Monomial":
        acc = dict(self.powers)
        for i, e in other.powers:
            acc[i] = acc.get(i, 0) + e
        return Monomial(tuple(sorted(acc.items())),
                        self.eps_power + other.eps_power,
                        tuple(sorted(self.tokens + other.tokens)))

    def __str__(self) -> str:
        parts = []
        for i, e in self.powers:
            parts.append(str(FreqSymbol(i)) + (f"^{e}" if e > 1 else ""))
        if self.eps_power:
            parts.append("eps^-%d" % self.eps_power)
        for name, arg in self.tokens:
            parts.append(f"{name}({arg})")
        return "*".join(parts) if parts else "1"


MONE = Monomial()


def _even_arg(arg: FreqLinear) -> FreqLinear:
    """Canonical sign for token arguments (tokens are even symbols)."""
    if arg.coeffs and arg.coeffs[0][1] < 0:
        return -arg
    return arg


class FreqPoly:
    """Multivariate polynomial with exact QC coefficients.

    Immutable; canonical form has no zero coefficients and sorted monomials.
    """

    __slots__ = ("terms", "_key")

    def __init__(self, terms: Mapping[Monomial, QC] | None = None):
        clean = {m: c for m, c in (terms or {}).items() if not c.is_zero()}
        object.__setattr__(self, "terms", clean)
        object.__setattr__(self, "_key", tuple(sorted(
            ((m.powers, m.eps_power, m.tokens), (c.re, c.im))
            for m, c in clean.items())))

    def __setattr__(self, *a):  # pragma: no cover - immutability guard
        raise AttributeError("FreqPoly is immutable")

    # -- constructors -------------------------------------------------
    @staticmethod
    def zero() -> "FreqPoly":
        return FreqPoly()

    @staticmethod
    def const(c: QC | RationalLike) -> "FreqPoly":
        return FreqPoly({MONE: QC.of(c)})

    @staticmethod
    def from_linear(lin: FreqLinear) -> "FreqPoly":
        return FreqPoly({Monomial(((i, 1),)): QC.of(c) for i, c in lin.coeffs})

    @staticmethod
    def symbol(index: int, exp: int = 1) -> "FreqPoly":
        return FreqPoly({Monomial(((index, exp),)): ONE})

    @staticmethod
    def eps_term(c: QC | RationalLike, sigma: int) -> "FreqPoly":
        return FreqPoly({Monomial((), sigma): QC.of(c)})

    @staticmethod
    def token(name: str, arg: FreqLinear, c: QC | RationalLike = 1) -> "FreqPoly":
        return FreqPoly({Monomial((), 0, ((name, _even_arg(arg)),)): QC.of(c)})

    # -- ring operations ----------------------------------------------
    def __add__(self, other: "FreqPoly") -> "FreqPoly":
        acc = dict(self.terms)
        for m, c in other.terms.items():
            acc[m] = acc.get(m, QC()) + c
        return FreqPoly(acc)

    def __neg__(self) -> "FreqPoly":
        return FreqPoly({m: -c for m, c in self.terms.items()})

    def __sub__(self, other: "FreqPoly") -> "FreqPoly":
        return self + (-other)

    def __mul__(self, other: "FreqPoly") -> "FreqPoly":
        acc: dict[Monomial, QC] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = m1.mul(m2)
                acc[m] = acc.get(m, QC()) + c1 * c2
        return FreqPoly(acc)

    def scale(self, c: QC | RationalLike) -> "FreqPoly":
        c = QC.of(c)
        return FreqPoly({m: c * v for m, v in self.terms.items()})

    def pow(self, n: int) -> "FreqPoly":
        out = FreqPoly.const(1)
        for _ in range(n):
            out = out * self
        return out

    def conj(self) -> "FreqPoly":
        return FreqPoly({m: c.conj() for m, c in self.terms.items()})

    def is_zero(self) -> bool:
        return not self.terms

    def has_eps(self) -> bool:
        return any(m.eps_power for m in self.terms)

    def has_tokens(self) -> bool:
        return any(m.tokens for m in self.terms)

    def substitute_linear(self, lin: FreqLinear) -> "FreqPoly":
        """Substitute the single symbol of a univariate template by ``lin``.

        Used for instantiating dispersion templates P_t(l) at a node
        frequency.  The template must be univariate in symbol index 0.
        """
        base = FreqPoly.from_linear(lin)
        out = FreqPoly.zero()
        for m, c in self.terms.items():
            toks = []
            for name, arg in m.tokens:
                new = FreqLinear()
                for i, cc in arg.coeffs:
                    part = lin if i == 0 else FreqLinear.symbol(i)
                    new = new + part.scale(cc)
                toks.append((name, _even_arg(new)))
            piece = FreqPoly({Monomial((), m.eps_power, tuple(sorted(toks))): c})
            for i, e in m.powers:
                if i != 0:
                    raise ValueError("template must be univariate in k")
                piece = piece * base.pow(e)
            out = out + piece
        return out

    def substitute_tokens(self, fn: Callable[[str, FreqLinear], "FreqPoly"]) -> "FreqPoly":
        out = FreqPoly.zero()
        for m, c in self.terms.items():
            piece = FreqPoly({Monomial(m.powers, m.eps_power): c})
            for name, arg in m.tokens:
                piece = piece * fn(name, arg)
            out = out + piece
        return out

    def relabel(self, perm: Mapping[int, int]) -> "FreqPoly":
        acc: dict[Monomial, QC] = {}
        for m, c in self.terms.items():
            pw: dict[int, int] = {}
            for i, e in m.powers:
                j = perm.get(i, i)
                pw[j] = pw.get(j, 0) + e
            nm = Monomial(tuple(sorted(pw.items())), m.eps_power,
                          tuple(sorted((n, _even_arg(a.relabel(perm)))
                                       for n, a in m.tokens)))
            acc[nm] = acc.get(nm, QC()) + c
        return FreqPoly(acc)

    def symbol_indices(self) -> set[int]:
        out: set[int] = set()
        for m in self.terms:
            out.update(i for i, _ in m.powers)
            for _, arg in m.tokens:
                out.update(arg.indices())
        return out

    # -- comparison ----------------------------------------------------
    def __eq__(self, other: object) -> bool:
        return isinstance(other, FreqPoly) and self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        syms = sorted(self.symbol_indices())

        def sort_key(item):
            m, _ = item
            d = dict(m.powers)
            return (-m.total_degree(), -m.eps_power,
                    tuple(-d.get(i, 0) for i in syms), m.tokens)
        parts = []
        for m, c in sorted(self.terms.items(), key=sort_key):
            coeff = str(c)
            mono = str(m)
            if mono == "1":
                body = coeff
            elif coeff == "1":
                body = mono
            elif coeff == "-1":
                body = "-" + mono
            else:
                body = f"{coeff}*{mono}"
            if parts and not body.startswith("-"):
                parts.append("+ " + body)
            elif parts:
                parts.append("- " + body[1:])
            else:
                parts.append(body)
        return " ".join(parts)

    __repr__ = __str__


class UnassignedSymbol(KeyError):
    pass


class UnevaluableMonomial(ValueError):
    pass


def poly_deg(P: FreqPoly) -> int:
    """Per-symbol degree: max over monomials of the max k-exponent."""
    return max((m.degree() for m in P.terms), default=0)


def _dominant_candidates(pure: dict[int, QC], m: int):
    """Yield (a, signs) candidates for a*(sum e_i k_i)^m from pure powers."""
    idxs = sorted(pure)
    vals = [pure[i] for i in idxs]
    if any(v.im != 0 or v.re.denominator != 1 for v in vals):
        return
    ints = [int(v.re) for v in vals]
    if len(set(map(abs, ints))) != 1:
        return
    if m % 2 == 1:
        # signs are forced by the coefficients; canonicalise lowest index +1
        a = ints[0]
        signs = [c // a for c in ints]
        if all(abs(s) == 1 for s in signs):
            yield a, dict(zip(idxs, signs))
    else:
        # even power: coefficients are all a; signs are free up to the
        # canonical lowest-index +1, so enumerate
        if len(set(ints)) != 1:
            return
        a = ints[0]
        for rest in iproduct((1, -1), repeat=len(idxs) - 1):
            yield a, dict(zip(idxs, (1,) + rest))


def p_dom(P: FreqPoly) -> FreqPoly:
    """Dominant-part projection.

    Returns ``a*(sum_i e_i k_i)^m`` when the top per-symbol-degree monomials
    are matching pure powers ``a*e_i^m*k_i^m``; any ``1/eps`` terms dominate
    everything and are returned alone; otherwise 0.
    """
    eps_terms = {m: c for m, c in P.terms.items() if m.eps_power > 0}
    if eps_terms:
        return FreqPoly(eps_terms)
    m = poly_deg(P)
    if m == 0:
        return FreqPoly.zero()
    top = {mo: c for mo, c in P.terms.items() if mo.degree() == m}
    pure: dict[int, QC] = {}
    for mo, c in top.items():
        if mo.tokens or mo.eps_power or len(mo.powers) != 1:
            return FreqPoly.zero()
        (idx, exp), = mo.powers
        if exp != m:
            return FreqPoly.zero()
        pure[idx] = c
    best: FreqPoly | None = None
    best_size: Fraction | None = None
    for a, signs in _dominant_candidates(pure, m):
        lin = FreqLinear.of(signs)
        cand = FreqPoly.from_linear(lin).pow(m).scale(a)
        rem = P - cand
        if poly_deg(rem) >= m:
            continue
        size = sum((abs(c.re) + abs(c.im) for c in rem.terms.values()),
                   Fraction(0))
        if best_size is None or size < best_size:
            best, best_size = cand, size
    return best if best is not None else FreqPoly.zero()


def p_low(P: FreqPoly) -> FreqPoly:
    """Complement of the dominant projection: P - p_dom(P)."""
    return P - p_dom(P)


def poly_eval(P: FreqPoly,
              assignment: Mapping[int, float],
              eps: float = 1.0,
              token_eval: Callable[[str, float], float] | None = None) -> complex:
    """Numerically evaluate a polynomial at scalar frequencies."""
    total = 0j
    for m, c in P.terms.items():
        val = c.to_complex()
        for i, e in m.powers:
            if i not in assignment:
                raise UnassignedSymbol(i)
            val *= assignment[i] ** e
        if m.eps_power:
            val *= eps ** (-m.eps_power)
        for name, arg in m.tokens:
            if token_eval is None:
                raise UnevaluableMonomial(f"token {name} needs token_eval")
            val *= token_eval(name, arg.eval(assignment))
        total += val
    return total


def try_divide(P: FreqPoly, D: FreqPoly) -> FreqPoly | None:
    """Exact multivariate division P / D, or None when not divisible.

    Plain lex long division; sufficient for cancelling dominant-part
    factors (signed linear forms and their powers) out of numerators.
    """
    if D.is_zero():
        raise ZeroDivisionError
    syms = sorted(P.symbol_indices() | D.symbol_indices())

    def expvec(mo: Monomial) -> tuple[int, ...]:
        d = dict(mo.powers)
        return tuple(d.get(i, 0) for i in syms)

    def lead(poly: FreqPoly):
        best = None
        for mo in poly.terms:
            if mo.eps_power or mo.tokens:
                return None
            v = (mo.total_degree(), expvec(mo))  # graded lex order
            if best is None or v > best[0]:
                best = (v, mo)
        return best[1] if best else None

    quot: dict[Monomial, QC] = {}
    rem = P
    dlead = lead(D)
    if dlead is None:
        return None
    for _ in range(1000):
        if rem.is_zero():
            return FreqPoly(quot)
        rlead = lead(rem)
        if rlead is None:
            return None
        dp = dict(dlead.powers)
        qp: dict[int, int] = {}
        ok = True
        for i, e in rlead.powers:
            d = e - dp.pop(i, 0)
            if d < 0:
                ok = False
                break
            if d:
                qp[i] = d
        if not ok or dp:
            return None
        qm = Monomial(tuple(sorted(qp.items())))
        qc = rem.terms[rlead] / D.terms[dlead]
        quot[qm] = quot.get(qm, QC()) + qc
        rem = rem - FreqPoly({qm: qc}) * D
    return None


def factor_linear_forms(P: FreqPoly) -> tuple[QC, list[FreqLinear]] | None:
    """Try to factor P as c * prod of signed linear forms in its symbols.

    Candidates are the single symbols and the signed subset sums that
    actually divide; returns None when a non-constant remainder survives.
    """
    idxs = sorted(P.symbol_indices())
    cands: list[FreqLinear] = [FreqLinear.symbol(i) for i in idxs]
    for size in (2, 3):
        if len(idxs) < size:
            break
        from itertools import combinations
        for combo in combinations(idxs, size):
            for signs in iproduct((1, -1), repeat=size - 1):
                cands.append(FreqLinear.of(dict(zip(combo, (1,) + signs))))
    factors: list[FreqLinear] = []
    cur = P
    progress = True
    while progress and not cur.is_zero() and poly_deg(cur) > 0:
        progress = False
        for lin in cands:
            q = try_divide(cur, FreqPoly.from_linear(lin))
            if q is not None:
                factors.append(lin)
                cur = q
                progress = True
                break
    if poly_deg(cur) != 0 or len(cur.terms) != 1:
        return None
    (mo, c), = cur.terms.items()
    if mo.powers or mo.tokens or mo.eps_power:
        return None
    return c, factors


class RationalFreq:
    """Exact rational function: FreqPoly numerator over unexpanded factors.

    Denominator factors are kept as (polynomial, power) pairs; each factor
    is a dominant-part image, a signed linear form, or an eps power, which
    is what the physical-space mapping needs unexpanded.
    """

    __slots__ = ("num", "den", "_key")

    def __init__(self, num: FreqPoly,
                 den: Iterable[tuple[FreqPoly, int]] = ()):
        den_acc: dict[FreqPoly, int] = {}
        for f, p in den:
            if f.is_zero():
                raise ZeroDivisionError("zero denominator factor")
            if p:
                den_acc[f] = den_acc.get(f, 0) + p
        if num.is_zero():
            den_acc = {}
        den_t = tuple(sorted(den_acc.items(), key=lambda fp: (str(fp[0]), fp[1])))
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den_t)
        object.__setattr__(self, "_key", None)

    def __setattr__(self, *a):  # pragma: no cover
        raise AttributeError("RationalFreq is immutable")

    @staticmethod
    def of(c: QC | RationalLike) -> "RationalFreq":
        return RationalFreq(FreqPoly.const(QC.of(c)))

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def den_poly(self) -> FreqPoly:
        out = FreqPoly.const(1)
        for f, p in self.den:
            out = out * f.pow(p)
        return out

    def __neg__(self) -> "RationalFreq":
        return RationalFreq(-self.num, self.den)

    def __add__(self, other: "RationalFreq") -> "RationalFreq":
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        merged: dict[FreqPoly, int] = dict(self.den)
        for f, p in other.den:
            merged[f] = max(merged.get(f, 0), p)
        def lift(num: FreqPoly, den: tuple[tuple[FreqPoly, int], ...]) -> FreqPoly:
            have = dict(den)
            out = num
            for f, p in merged.items():
                extra = p - have.get(f, 0)
                if extra:
                    out = out * f.pow(extra)
            return out
        return RationalFreq(lift(self.num, self.den) + lift(other.num, other.den),
                            tuple(merged.items()))

    def __sub__(self, other: "RationalFreq") -> "RationalFreq":
        return self + (-other)

    def __mul__(self, other: "RationalFreq") -> "RationalFreq":
        return RationalFreq(self.num * other.num, self.den + other.den)

    def scale(self, c: QC | RationalLike) -> "RationalFreq":
        return RationalFreq(self.num.scale(c), self.den)

    def simplified(self) -> "RationalFreq":
        """Cancel denominator factors that exactly divide the numerator."""
        num = self.num
        den: list[tuple[FreqPoly, int]] = []
        for f, p in self.den:
            while p > 0:
                q = try_divide(num, f)
                if q is None:
                    break
                num, p = q, p - 1
            if p:
                den.append((f, p))
        return RationalFreq(num, den)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RationalFreq):
            return NotImplemented
        # cross-multiplied exact comparison
        return (self.num * other.den_poly() - other.num * self.den_poly()).is_zero()

    def __hash__(self) -> int:  # canonical-enough hash: expand
        s = self.simplified()
        return hash((s.num, tuple(s.den)))

    def eval(self, assignment: Mapping[int, float], eps: float = 1.0,
             token_eval=None) -> complex:
        v = poly_eval(self.num, assignment, eps, token_eval)
        for f, p in self.den:
            d = poly_eval(f, assignment, eps, token_eval)
            if d == 0:
                raise ZeroDivisionError(f"denominator {f} vanishes")
            v /= d ** p
        return v

    def conj(self) -> "RationalFreq":
        return RationalFreq(self.num.conj(), tuple((f.conj(), p) for f, p in self.den))

    def __str__(self) -> str:
        if not self.den:
            return str(self.num)
        dens = "*".join(f"({f})" + (f"^{p}" if p > 1 else "")
                        for f, p in self.den)
        return f"({self.num}) / ({dens})"

    __repr__ = __str__
