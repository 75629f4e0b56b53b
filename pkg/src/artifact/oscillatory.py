"""Oscillatory sums, exact phase integration, and the resonance-aware
Taylor operator.

Values live in the space of finite sums sum_j Q_j(tau) e^{i tau P_j(k)}
with rational-function coefficients Q_j.  Integration of xi^q e^{i xi L}
is exact (integration by parts), with the inverse powers of L kept as
unexpanded denominator factors so they can be mapped back to physical
space.  The K operator approximates one Duhamel integral, keeping the
dominant oscillation and Taylor-expanding the rest to the scheme order,
with the branch choice driven by the regularity parameter n.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial
from typing import Mapping

from .freq_algebra import (
    QC, FreqLinear, FreqPoly, RationalFreq, factor_linear_forms, p_dom,
    poly_deg, poly_eval,
)
from .trees import EdgeDecor, EquationSpec

ONE_RF = RationalFreq.of(1)


class OscFn:
    """Canonical sum of tau-polynomials times oscillations e^{i tau P}."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[FreqPoly, Mapping[int, RationalFreq]] | None = None):
        clean: dict[FreqPoly, dict[int, RationalFreq]] = {}
        for phase, tp in (terms or {}).items():
            keep = {q: c for q, c in tp.items() if not c.is_zero()}
            if keep:
                clean[phase] = keep
        self.terms = clean

    # -- constructors --------------------------------------------------
    @staticmethod
    def zero() -> "OscFn":
        return OscFn()

    @staticmethod
    def monomial(coeff, q: int = 0,
                 phase: FreqPoly = FreqPoly.zero()) -> "OscFn":
        if not isinstance(coeff, RationalFreq):
            coeff = RationalFreq(FreqPoly.const(QC.of(coeff)))
        return OscFn({phase: {q: coeff}})

    @staticmethod
    def const(c) -> "OscFn":
        return OscFn.monomial(c, 0)

    @staticmethod
    def unit() -> "OscFn":
        return OscFn.const(1)

    # -- algebra -------------------------------------------------------
    def __add__(self, other: "OscFn") -> "OscFn":
        acc = {p: dict(tp) for p, tp in self.terms.items()}
        for p, tp in other.terms.items():
            slot = acc.setdefault(p, {})
            for q, c in tp.items():
                slot[q] = slot[q] + c if q in slot else c
        return OscFn(acc)

    def __sub__(self, other: "OscFn") -> "OscFn":
        return self + other.scale(-1)

    def __mul__(self, other: "OscFn") -> "OscFn":
        acc: dict[FreqPoly, dict[int, RationalFreq]] = {}
        for p1, tp1 in self.terms.items():
            for p2, tp2 in other.terms.items():
                phase = p1 + p2
                slot = acc.setdefault(phase, {})
                for q1, c1 in tp1.items():
                    for q2, c2 in tp2.items():
                        q = q1 + q2
                        c = c1 * c2
                        slot[q] = slot[q] + c if q in slot else c
        return OscFn(acc)

    def scale(self, c) -> "OscFn":
        if isinstance(c, RationalFreq):
            return OscFn({p: {q: v * c for q, v in tp.items()}
                          for p, tp in self.terms.items()})
        return OscFn({p: {q: v.scale(QC.of(c)) for q, v in tp.items()}
                      for p, tp in self.terms.items()})

    def times_poly(self, P: FreqPoly) -> "OscFn":
        return self.scale(RationalFreq(P))

    def shift_tau(self, j: int) -> "OscFn":
        return OscFn({p: {q + j: c for q, c in tp.items()}
                      for p, tp in self.terms.items()})

    def conj(self) -> "OscFn":
        return OscFn({(-p.conj()): {q: c.conj() for q, c in tp.items()}
                      for p, tp in self.terms.items()})

    def is_zero(self) -> bool:
        return not self.terms

    # -- projections ---------------------------------------------------
    def q_project(self) -> "OscFn":
        """Keep the non-oscillatory (zero phase) part only."""
        z = FreqPoly.zero()
        return OscFn({z: self.terms[z]}) if z in self.terms else OscFn()

    def osc_part(self) -> "OscFn":
        return self - self.q_project()

    def coeff(self, phase: FreqPoly, q: int) -> RationalFreq:
        return self.terms.get(phase, {}).get(q, RationalFreq(FreqPoly.zero()))

    def tau_coefficients(self, q: int) -> dict[FreqPoly, RationalFreq]:
        return {p: tp[q] for p, tp in self.terms.items() if q in tp}

    # -- evaluation ----------------------------------------------------
    def eval(self, tau: float, assignment: Mapping[int, float],
             eps: float = 1.0, token_eval=None) -> complex:
        import cmath
        total = 0j
        for phase, tp in self.terms.items():
            osc = cmath.exp(1j * tau * poly_eval(phase, assignment, eps,
                                                 token_eval))
            for q, c in tp.items():
                total += osc * (tau ** q) * c.eval(assignment, eps, token_eval)
        return total

    # -- comparison ----------------------------------------------------
    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OscFn):
            return NotImplemented
        phases = set(self.terms) | set(other.terms)
        for p in phases:
            a, b = self.terms.get(p, {}), other.terms.get(p, {})
            for q in set(a) | set(b):
                if not (self.coeff(p, q) - other.coeff(p, q)).is_zero():
                    return False
        return True

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for phase in sorted(self.terms, key=str):
            tp = self.terms[phase]
            body = " + ".join(f"({tp[q]})*tau^{q}" if q else f"({tp[q]})"
                              for q in sorted(tp))
            if phase.is_zero():
                parts.append(f"[{body}]")
            else:
                parts.append(f"[({body}) * exp(i*tau*({phase}))]")
        return " + ".join(parts)

    __repr__ = __str__


def q_project(G: OscFn) -> OscFn:
    return G.q_project()


@dataclass(frozen=True)
class PhiForm:
    """Entire-function form tau^p psi_j(i tau L) of an exact integral.

    psi_j(z) = int_0^1 s^j e^{zs} ds, so psi_0 is the standard phi_1.
    """

    tau_power: int
    index: int
    arg: FreqPoly

    def eval(self, tau: float, assignment: Mapping[int, float],
             eps: float = 1.0, token_eval=None) -> complex:
        z = 1j * tau * poly_eval(self.arg, assignment, eps, token_eval)
        return (tau ** self.tau_power) * psi_fn(self.index, z)


# ------------------------------------------------- entire phi functions

_SERIES_CUTOFF = 0.25
_SERIES_DEGREE = 30


def phi_fn(j: int, z: complex) -> complex:
    """phi_0 = e^z, phi_{j+1}(z) = (phi_j(z) - 1/j!)/z, entire in z."""
    if j == 0:
        import cmath
        return cmath.exp(z)
    if abs(z) < _SERIES_CUTOFF:
        return sum(z ** m / factorial(m + j) for m in range(_SERIES_DEGREE + 1))
    return (phi_fn(j - 1, z) - 1.0 / factorial(j - 1)) / z


def psi_fn(j: int, z: complex) -> complex:
    """psi_j(z) = int_0^1 s^j e^{zs} ds, entire in z."""
    if abs(z) < _SERIES_CUTOFF:
        return sum(z ** m / (factorial(m) * (m + j + 1))
                   for m in range(_SERIES_DEGREE + 1))
    import cmath
    if j == 0:
        return (cmath.exp(z) - 1.0) / z
    return (cmath.exp(z) - j * psi_fn(j - 1, z)) / z


# ------------------------------------------------------ exact integrals


def _inverse_power(L: FreqPoly, power: int,
                   factored: tuple[QC, list[FreqLinear]] | None) -> RationalFreq:
    """1/(iL)^power as an exact rational with unexpanded denominators."""
    c = QC.i_pow(-power % 4)  # (1/i)^power = (-i)^power
    if factored is None:
        return RationalFreq(FreqPoly.const(c), ((L, power),))
    scalar, forms = factored
    num = FreqPoly.const(c / QC.of(1))
    for _ in range(power):
        num = num.scale(QC.of(1) / scalar)
    return RationalFreq(num,
                        tuple((FreqPoly.from_linear(f), power) for f in forms))


def _integrate_term(q: int, L: FreqPoly,
                    factored: tuple[QC, list[FreqLinear]] | None = None) -> OscFn:
    """int_0^tau xi^q e^{i xi L} d xi, exact."""
    if L.is_zero():
        return OscFn.monomial(Fraction(1, q + 1), q + 1)
    out = OscFn.zero()
    # by parts: e^{i tau L} sum_j (-1)^j q!/(q-j)! tau^{q-j}/(iL)^{j+1}
    #           - (-1)^q q!/(iL)^{q+1}
    for j in range(q + 1):
        c = _inverse_power(L, j + 1, factored).scale(
            Fraction(factorial(q), factorial(q - j)) * (-1) ** j)
        out = out + OscFn.monomial(c, q - j, L)
    out = out + OscFn.monomial(
        _inverse_power(L, q + 1, factored).scale(
            Fraction(factorial(q)) * (-1) ** (q + 1)), 0)
    return out


def integrate_exact(q: int, L: FreqPoly) -> tuple[OscFn, PhiForm]:
    """Both representations of int_0^tau xi^q e^{i xi L} d xi."""
    return _integrate_term(q, L), PhiForm(q + 1, q, L)


def integrate(G: OscFn) -> OscFn:
    """Exact term-by-term integration int_0^tau G(xi) d xi."""
    out = OscFn.zero()
    for phase, tp in G.terms.items():
        for q, c in tp.items():
            out = out + _integrate_term(q, phase).scale(c)
    return out


# ------------------------------------------------------- the K operator


def _grad_power(k: FreqLinear, alpha: int) -> FreqPoly:
    return FreqPoly.from_linear(k).pow(alpha)


def _duhamel_prefactor(k: FreqLinear, o2: EdgeDecor,
                       spec: EquationSpec) -> RationalFreq:
    """-i |grad|^alpha(k) times the equation prefactor, conjugated on
    conjugate edges, with the bounded-multiplier token if any."""
    c = QC(im=Fraction(-1)) * spec.prefactor
    if o2.conj:
        c = c.conj()
    num = _grad_power(k, spec.alpha).scale(c)
    if spec.token is not None:
        num = num * FreqPoly.token(spec.token, k)
    return RationalFreq(num)


def _taylor_sum(P: FreqPoly, orders: range, extra_q: int) -> OscFn:
    """sum over l in orders of (iP)^l/l! tau^{l+extra_q+1}/(l+extra_q+1)."""
    out = OscFn.zero()
    iP = P.scale(QC(im=Fraction(1)))
    power = FreqPoly.const(1)
    for ell in range(orders.stop):
        if ell in orders:
            c = RationalFreq(power).scale(
                Fraction(1, factorial(ell) * (ell + extra_q + 1)))
            out = out + OscFn.monomial(c, ell + extra_q + 1)
        power = power * iP
    return out


def k_op(G: OscFn, k: FreqLinear, o2: EdgeDecor, r: int, n: int,
         spec: EquationSpec) -> OscFn:
    """Approximate -i|grad|^alpha(k) int_0^tau e^{i xi P_o2(k)} G(xi) d xi.

    Applied linearly over the terms of G; each term xi^q e^{i xi P} is
    expanded per the dominant/low split of P_o2(k) + P, the regularity n
    selecting between full Taylor, exact dominant integration, and
    Taylor-expanded dominant part.  Terms with q > r vanish.
    """
    pref = _duhamel_prefactor(k, o2, spec)
    out = OscFn.zero()
    for phase, tp in G.terms.items():
        for q, coeff in tp.items():
            if r < q:
                continue
            out = out + _k_op_term(q, phase, k, o2, r, n, spec).scale(coeff)
    return out.scale(pref)


def _k_op_term(q: int, P: FreqPoly, k: FreqLinear, o2: EdgeDecor, r: int,
               n: int, spec: EquationSpec) -> OscFn:
    full = spec.p_edge(o2, k) + P
    l_dom = p_dom(full)
    l_low = full - l_dom
    factored = None
    if spec.integrate_full and l_dom.is_zero() and not full.is_zero():
        # exact mode: fold the whole oscillation into the dominant slot
        l_dom, l_low = full, FreqPoly.zero()
        factored = factor_linear_forms(l_dom)
    d_dom = poly_deg(l_dom)
    d_low = poly_deg(l_low)
    if not l_dom.has_eps() and factored is None \
            and n >= (r + 1) * d_dom + spec.alpha:
        return _taylor_sum(full, range(r - q + 1), q)
    out = OscFn.zero()
    i_low = l_low.scale(QC(im=Fraction(1)))
    g_coeff = FreqPoly.const(1)
    for ell in range(r - q + 1):
        exact = (l_dom.has_eps() or factored is not None
                 or (r - q - ell + 1) * d_dom + ell * d_low + spec.alpha > n)
        if exact:
            psi = _integrate_term(ell + q, l_dom, factored)
        else:
            psi = _taylor_sum(l_dom, range(r - q - ell + 1), ell + q)
        out = out + psi.scale(
            RationalFreq(g_coeff).scale(Fraction(1, factorial(ell))))
        g_coeff = g_coeff * i_low
    return out


# -------------------------------------------- stabilised g expansions


@dataclass(frozen=True)
class GCoeff:
    """One replacement factor: poly * tau^shift * e^{i tau exp_arg}
    * phi_1(i tau filter_arg), absent parts being 1."""

    poly: FreqPoly
    tau_shift: int = 0
    exp_arg: FreqPoly | None = None
    filter_arg: FreqPoly | None = None

    def eval(self, tau: float, assignment: Mapping[int, float],
             eps: float = 1.0, token_eval=None) -> complex:
        import cmath
        v = poly_eval(self.poly, assignment, eps, token_eval)
        v *= tau ** self.tau_shift
        if self.exp_arg is not None:
            v *= cmath.exp(1j * tau * poly_eval(self.exp_arg, assignment,
                                                eps, token_eval))
        if self.filter_arg is not None:
            v *= phi_fn(1, 1j * tau * poly_eval(self.filter_arg, assignment,
                                                eps, token_eval))
        return v


def _plain_coeff(l_low: FreqPoly, ell: int) -> list[GCoeff]:
    P = l_low.scale(QC(im=Fraction(1))).pow(ell).scale(
        Fraction(1, factorial(ell)))
    return [GCoeff(P)] if not P.is_zero() else []


def stabilized_g_expansion(l_low: FreqPoly, ell: int, order: int,
                           mode: str) -> list[GCoeff]:
    """Stable replacements for the Taylor coefficient (iL_low)^ell/ell!.

    finite_difference mode uses central difference quotients of
    g(xi) = e^{i xi L_low} at 0 and +-tau; filter mode keeps the Taylor
    coefficient but damps the first derivative with phi_1(i tau L_low).
    Exact for constant g, and identical to plain Taylor when L_low = 0.
    """
    if l_low.is_zero() or ell == 0:
        return _plain_coeff(l_low, ell)
    one = FreqPoly.const(1)
    if mode == "filter":
        if ell == 1:
            return [GCoeff(l_low.scale(QC(im=Fraction(1))), 0, None, l_low)]
        return _plain_coeff(l_low, ell)
    if mode != "finite_difference":
        raise ValueError(f"unknown stabilisation mode {mode!r}")
    if order == 1:
        if ell == 1:
            # g'(0) ~ (g(tau) - g(0))/tau
            return [GCoeff(one, -1, l_low), GCoeff(-one, -1)]
        return _plain_coeff(l_low, ell)
    if order == 2:
        if ell == 1:
            # g'(0) ~ (g(tau) - g(-tau))/(2 tau)
            h = one.scale(Fraction(1, 2))
            return [GCoeff(h, -1, l_low), GCoeff(-h, -1, -l_low)]
        if ell == 2:
            # g''(0)/2 ~ (g(tau) - 2 g(0) + g(-tau))/(2 tau^2)
            h = one.scale(Fraction(1, 2))
            return [GCoeff(h, -2, l_low), GCoeff(-one, -2),
                    GCoeff(h, -2, -l_low)]
        return _plain_coeff(l_low, ell)
    raise ValueError("stabilisation implemented for orders 1 and 2")
