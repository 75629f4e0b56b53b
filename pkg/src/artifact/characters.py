"""Characters on decorated forests: the exact iterated integrals, their
order/regularity approximation, the single-oscillation projection, the
tau-coefficient character, and the local error operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial
from typing import Iterable

from artifact.freq_algebra import (
    FreqLinear, FreqPoly, RationalFreq, factor_linear_forms, p_dom, poly_deg,
)
from artifact.hopf import (
    ApproxTree, HElem, LinComb, PlusTree, antipode, coaction, d_r,
)
from artifact.oscillatory import (
    OscFn, _duhamel_prefactor, integrate, k_op,
)
from artifact.trees import DecoratedTree, EquationSpec, f_low, full_phase


@dataclass
class CharContext:
    """Fixed equation, regularity n, and order r for one derivation."""

    spec: EquationSpec
    n: int
    r: int = 0
    _pi: dict = field(default_factory=dict, repr=False, compare=False)
    _hat: dict = field(default_factory=dict, repr=False, compare=False)
    _a: dict = field(default_factory=dict, repr=False, compare=False)


# -------------------------------------------------- the exact character


def pi_exact(x: DecoratedTree | Iterable[DecoratedTree],
             spec: EquationSpec) -> OscFn:
    """Exact evaluation of the iterated Duhamel integrals of a forest.

    Kept edges contribute tau^l e^{i tau P(k)}; integral edges contribute
    the closed-form primitive of the children product times the Duhamel
    prefactor.  All integrals are exact in the P/Q representation.
    """
    if not isinstance(x, DecoratedTree):
        out = OscFn.unit()
        for t in x:
            out = out * pi_exact(t, spec)
        return out
    inner = pi_exact(x.children, spec)
    phase = spec.p_edge(x.edge, x.freq)
    if not x.edge.in_plus():
        return OscFn.monomial(1, x.power, phase) * inner
    integrand = OscFn.monomial(1, x.power, phase) * inner
    return integrate(integrand).scale(
        _duhamel_prefactor(x.freq, x.edge, spec))


# ------------------------------------------- the approximating character


def pi_n(x, ctx: CharContext) -> OscFn:
    """Order/regularity approximation of the exact character.

    Multiplicative; monomials map to tau powers; kept edges reproduce the
    free flow exactly; integral edges apply the dominant-part integrator.
    """
    if isinstance(x, LinComb):
        out = OscFn.zero()
        for key, c in x.items():
            out = out + pi_n(key, ctx).scale(c)
        return out
    if isinstance(x, HElem):
        out = OscFn.monomial(1, x.lam)
        for a in x.trees:
            out = out * pi_n(a, ctx)
        return out
    assert isinstance(x, ApproxTree)
    if x in ctx._pi:
        return ctx._pi[x]
    if not x.is_valid():
        return OscFn.zero()
    t, r = x.tree, x.order
    if not t.edge.in_plus():
        inner = pi_n(d_r(t.children, r - t.power), ctx)
        out = OscFn.monomial(1, t.power, spec_phase(ctx, t)) * inner
    else:
        inner = pi_n(d_r(t.children, r - t.power - 1), ctx)
        G = OscFn.monomial(1, t.power) * inner
        out = k_op(G, t.freq, t.edge, r, ctx.n, ctx.spec)
    ctx._pi[x] = out
    return out


def spec_phase(ctx: CharContext, t: DecoratedTree) -> FreqPoly:
    return ctx.spec.p_edge(t.edge, t.freq)


def hat_pi_n(x, ctx: CharContext) -> OscFn:
    """Same recursion as the approximation, but every integral edge keeps
    only the oscillatory part of the integrator output."""
    if isinstance(x, LinComb):
        out = OscFn.zero()
        for key, c in x.items():
            out = out + hat_pi_n(key, ctx).scale(c)
        return out
    if isinstance(x, HElem):
        out = OscFn.monomial(1, x.lam)
        for a in x.trees:
            out = out * hat_pi_n(a, ctx)
        return out
    assert isinstance(x, ApproxTree)
    if x in ctx._hat:
        return ctx._hat[x]
    if not x.is_valid():
        return OscFn.zero()
    t, r = x.tree, x.order
    if not t.edge.in_plus():
        inner = hat_pi_n(d_r(t.children, r - t.power), ctx)
        out = OscFn.monomial(1, t.power, spec_phase(ctx, t)) * inner
    else:
        inner = hat_pi_n(d_r(t.children, r - t.power - 1), ctx)
        G = OscFn.monomial(1, t.power) * inner
        out = k_op(G, t.freq, t.edge, r, ctx.n, ctx.spec).osc_part()
    ctx._hat[x] = out
    return out


# ---------------------------------------------- the coefficient character


def a_n(x, ctx: CharContext) -> RationalFreq:
    """m! times the tau^m coefficient of the non-oscillatory part of the
    approximation of the underlying order-r tree; multiplicative."""
    if isinstance(x, LinComb):
        out = RationalFreq(FreqPoly.zero())
        for key, c in x.items():
            out = out + a_n(key, ctx).scale(c)
        return out
    if isinstance(x, tuple):
        out = RationalFreq(FreqPoly.const(1))
        for p in x:
            out = out * a_n(p, ctx)
        return out
    assert isinstance(x, PlusTree)
    key = x
    if key in ctx._a:
        return ctx._a[key]
    flat = pi_n(ApproxTree(x.tree, x.order), ctx)
    c = flat.coeff(FreqPoly.zero(), x.shift).scale(Fraction(factorial(x.shift)))
    ctx._a[key] = c
    return c


def a_n_antipode(forest: tuple, ctx: CharContext) -> RationalFreq:
    """The convolution inverse of the coefficient character."""
    out = RationalFreq(FreqPoly.zero())
    for g, c in antipode(forest).items():
        out = out + a_n(g, ctx).scale(c)
    return out


# ------------------------------------------------- Birkhoff factorisation


def birkhoff_right(x: ApproxTree, ctx: CharContext) -> OscFn:
    """(hat Pi (x) A) applied to the coaction of x."""
    out = OscFn.zero()
    for (left, right), c in coaction(x).items():
        scalar = a_n(right, ctx).scale(c)
        if scalar.num.is_zero():
            continue
        out = out + hat_pi_n(left, ctx).scale(scalar)
    return out


def birkhoff_inverse_right(x: ApproxTree, ctx: CharContext) -> OscFn:
    """(Pi (x) A compose antipode) applied to the coaction of x."""
    out = OscFn.zero()
    for (left, right), c in coaction(x).items():
        scalar = a_n_antipode(right, ctx).scale(c)
        if scalar.num.is_zero():
            continue
        out = out + pi_n(left, ctx).scale(scalar)
    return out


def check_birkhoff(x: ApproxTree, ctx: CharContext) -> bool:
    """Exact symbolic equality of both factorisations."""
    return (pi_n(x, ctx) == birkhoff_right(x, ctx)
            and hat_pi_n(x, ctx) == birkhoff_inverse_right(x, ctx))


# ---------------------------------------------------- local error degree


class LocalErrorDiagnostic(RuntimeError):
    """Raised when a coaction leg carries a non-constant coefficient
    numerator, outside the validity of the simplified degree recursion."""


def _k_power(e: int) -> FreqPoly:
    return FreqPoly.symbol(0, e) if e > 0 else FreqPoly.const(1)


def _exact_mode(tree: DecoratedTree, spec: EquationSpec) -> bool:
    """True when the whole phase is integrated exactly via factorisation."""
    if not spec.integrate_full:
        return False
    full = full_phase(tree, spec)
    return not full.is_zero() and p_dom(full).is_zero() \
        and factor_linear_forms(full) is not None


def local_error_degree(T, n: int, r: int, ctx: CharContext) -> FreqPoly:
    """Degree-tracking polynomial in one symbol for the neglected
    lower-order interactions of the order-r approximation of T."""
    if r < 0:
        return FreqPoly.const(1)
    if not isinstance(T, DecoratedTree):
        out = FreqPoly.zero()
        for t in T:
            out = out + local_error_degree(t, n, r, ctx)
        return out if not out.is_zero() else FreqPoly.const(1)
    spec = ctx.spec
    ell = T.power
    if not T.edge.in_plus():
        return local_error_degree(T.children, n, r - ell, ctx)
    out = _k_power(spec.alpha) * local_error_degree(
        T.children, n, r - ell - 1, ctx)
    if r - ell < 0:
        return out
    exact = _exact_mode(T, spec)
    for (left, right), _ in coaction_of_children(T, r - ell - 1).items():
        if right:
            _check_leg(right, ctx)
        if exact:
            nbar = (r - ell + 1) * (1 + spec.alpha)
        else:
            replant = DecoratedTree(T.edge, T.freq, ell + left.lam,
                                    tuple(a.tree for a in left.trees))
            low = f_low(replant, spec)
            nbar = max(n, poly_deg(low) * (r - ell + 1) + spec.alpha)
        out = out + _k_power(nbar)
    return out


def coaction_of_children(T: DecoratedTree, r: int) -> LinComb:
    return coaction(d_r(T.children, r))


def _check_leg(forest: tuple, ctx: CharContext) -> None:
    for p in forest:
        val = a_n(p, ctx).simplified()
        if val.num.symbol_indices():
            raise LocalErrorDiagnostic(
                "coaction leg with non-constant coefficient numerator: "
                f"{p} -> {val}")
