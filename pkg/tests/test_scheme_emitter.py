"""Scheme assembly: structural pins, Taylor-mode agreement with the
approximating character, sparse Fourier evaluation against the FFT
stepper, physical-rewrite limits, and the reference catalogue."""

from __future__ import annotations

import cmath
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from artifact.characters import CharContext, pi_n
from artifact.hopf import ApproxTree
from artifact.freq_algebra import FreqPoly
from artifact.oscillatory import phi_fn
from artifact.scheme_emitter import (
    Field, Mult, NonNestedDenominators, Prod, Scalar, Sum, UnknownScheme,
    _emit_tree, _g_factors, build_scheme, expr_to_json, fourier_apply,
    reference_scheme, scheme_names, to_physical,
)
from artifact.solvers import Grid, ast_stepper, kg_token_tables, to_modes
from artifact.trees import generate_trees, plant_root, spec_by_name

FREQS = {1: 2.0, 2: 3.0, 3: 5.0, 4: -7.0, 5: 11.0}
TAUS = (0.1, 0.037)


def _kg_tokens(eps: float):
    def ev(name: str, x: float) -> complex:
        if name == "B":
            return (math.sqrt(1.0 + (eps * x) ** 2) - 1.0) / eps ** 2
        return 1.0 / math.sqrt(1.0 + (eps * x) ** 2)
    return ev


# ------------------------------------------------------------ structure


def test_first_order_cubic_structure():
    fs = build_scheme(spec_by_name("nls"), 0, 1)
    assert fs.equation == "nls" and (fs.r, fs.n) == (0, 1)
    assert len(fs.entries) == 2
    ident, cubic = fs.entries
    assert ident.factors == ((1, 0),)
    assert len(ident.terms) == 1
    assert len(cubic.factors) == 3
    assert sum(c for _, c in cubic.factors) == 1
    assert len(cubic.terms) == 1
    assert cubic.terms[0].phis  # dominant part integrated exactly


def test_second_order_merges_to_three_patterns():
    fs = build_scheme(spec_by_name("nls"), 1, 2)
    assert len(fs.entries) == 3
    sizes = sorted(len(e.factors) for e in fs.entries)
    assert sizes == [1, 3, 5]
    quintic = next(e for e in fs.entries if len(e.factors) == 5)
    assert sum(c for _, c in quintic.factors) == 2
    assert len(quintic.terms) == 1
    t = quintic.terms[0]
    assert t.tau_power == 2
    assert abs(complex(quintic.coeff) * t.coeff.to_complex() + 0.5) < 1e-15


def test_difference_quotient_equals_filtered_taylor_coefficient():
    # (e^{i tau L} - 1)/tau == i L phi_1(i tau L) for the ell=1 coefficient
    l_low = FreqPoly.symbol(1, 1).scale(3)
    pair = _g_factors(l_low, 1, "filter")
    assert len(pair) == 2
    for tau in TAUS:
        got = sum(t.eval(tau, FREQS) for t in pair)
        L = 3.0 * FREQS[1]
        want = 1j * L * phi_fn(1, 1j * tau * L)
        assert abs(got - want) < 1e-13
    assert len(_g_factors(l_low, 1, "taylor")) == 1
    assert _g_factors(FreqPoly.zero(), 1, "filter") == []


# --------------------------------- Taylor mode vs approximating character


@pytest.mark.parametrize("eq,r,n", [
    ("nls", 0, 1), ("nls", 1, 2), ("nls", 1, 3), ("nls", 1, 4),
    ("kdv", 0, 0), ("kdv", 1, 0), ("kdv", 1, 3), ("kg", 0, 0),
])
def test_taylor_emission_matches_character(eq, r, n):
    spec = spec_by_name(eq)
    eps = 0.5
    tok = _kg_tokens(eps) if eq == "kg" else None
    ctx = CharContext(spec, n, r)
    for T in generate_trees(spec, r):
        if T is None:
            continue
        planted = plant_root(spec, T)
        terms = _emit_tree(planted, r, n, spec, "taylor")
        oracle = pi_n(ApproxTree(planted, r), ctx)
        for tau in TAUS:
            want = oracle.eval(tau, FREQS, eps=eps, token_eval=tok)
            got = sum(t.eval(tau, FREQS, eps=eps, token_eval=tok)
                      for t in terms)
            assert abs(got - want) <= 1e-9 * max(1.0, abs(want))


# ------------------------------------------- Fourier vs physical parity


def test_sparse_fourier_matches_fft_stepper():
    grid = Grid.make(32)
    fs = build_scheme(spec_by_name("nls"), 1, 2)
    step = ast_stepper(to_physical(fs), grid)
    rng = np.random.default_rng(7)
    modes = {-2: complex(*rng.normal(size=2)),
             1: complex(*rng.normal(size=2)),
             3: complex(*rng.normal(size=2))}
    vhat = np.zeros(grid.M, dtype=complex)
    for k, v in modes.items():
        vhat[k % grid.M] = v
    tau = 0.05
    out_fft = step(vhat, tau)
    out_sparse = fourier_apply(fs, modes, tau)
    for k in range(-grid.M // 2 + 1, grid.M // 2):
        want = out_sparse.get(k, 0j)
        assert abs(out_fft[k % grid.M] - want) < 1e-10


def test_emitted_matches_reference_on_random_field():
    cases = [("nls", 0, 1, "nls_res1", 1.0),
             ("kdv", 0, 0, "kdv_res1", 1.0),
             ("kg", 0, 0, "kg_res1", 0.1)]
    rng = np.random.default_rng(3)
    for eq, r, n, name, eps in cases:
        grid = Grid.make(32)
        tokens = kg_token_tables(grid, eps) if eq == "kg" else None
        fs = build_scheme(spec_by_name(eq), r, n)
        emitted = ast_stepper(to_physical(fs), grid, eps, tokens)
        ref = ast_stepper(reference_scheme(name), grid, eps, tokens)
        u = rng.normal(size=grid.M)
        vhat = to_modes(u if eq == "kdv" else u + 1j * rng.normal(size=grid.M))
        a, b = emitted(vhat.copy(), 0.02), ref(vhat.copy(), 0.02)
        assert np.max(np.abs(a - b)) < 1e-12, (eq, name)


# ---------------------------------------------------- rewrite boundaries


def test_non_laminar_phase_is_rejected():
    # the cubic trunk oscillation factors as (k1+k2)(k1+k3)(k2+k3), which
    # no nesting of mode subsets can realise with diagonal multipliers
    fs = build_scheme(spec_by_name("kdv"), 1, 0)
    with pytest.raises(NonNestedDenominators):
        to_physical(fs)


def test_expr_json_is_serialisable():
    expr = to_physical(build_scheme(spec_by_name("nls"), 0, 1))
    doc = expr_to_json(expr)
    assert doc["node"] == "sum"
    text = json.dumps(doc, sort_keys=True)
    assert json.loads(text) == doc
    leaf = expr_to_json(Field(True))
    assert leaf == {"node": "field", "conj": True}


# ------------------------------------------------------------- catalogue


def test_catalogue_names():
    names = scheme_names()
    for want in ("nls_res1", "nls_classic1", "nls_res2_low", "nls_res2_mid",
                 "nls_res2_smooth", "kdv_res1", "kdv_res2", "kdv_exp1",
                 "kg_res1", "kg_simp1"):
        assert want in names
    with pytest.raises(UnknownScheme):
        reference_scheme("no_such_scheme")


def test_smooth_scheme_filter_option():
    plain = reference_scheme("nls_res2_smooth")
    filtered = reference_scheme("nls_res2_smooth", psi="phi1")
    assert plain != filtered

    def count_phi1(e) -> int:
        if isinstance(e, (Sum, Prod)):
            return sum(count_phi1(c) for c in e.children)
        if isinstance(e, (Scalar, Mult)):
            extra = 1 if isinstance(e, Mult) and e.kind == "phi1" else 0
            return extra + count_phi1(e.child)
        return 0

    assert count_phi1(plain) == 0
    assert count_phi1(filtered) > 0
