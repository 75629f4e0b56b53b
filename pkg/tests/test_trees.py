"""Tree generation, symmetry factors, Upsilon, and frequency maps."""

from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.freq_algebra import FreqLinear, FreqPoly
from artifact.trees import (
    DecoratedTree, EdgeDecor, conjugate, deg_tree, edge_count, f_dom, f_low,
    generate_trees, kdv_spec, kdv_trees, kg_spec, kg_trees, n_plus, nls_spec,
    nls_trees, symmetry_factor, upsilon, upsilon_over_s, validate,
)


def lin(**kw) -> FreqLinear:
    return FreqLinear.of({int(k[1:]): v for k, v in kw.items()})


def sym(i: int, e: int = 1) -> FreqPoly:
    return FreqPoly.symbol(i, e)


@pytest.fixture(scope="module")
def nls():
    return nls_trees()


@pytest.fixture(scope="module")
def kdv():
    return kdv_trees()


# ------------------------------------------------------------ validation

def test_validate_t1(nls):
    T1 = nls["T1"]
    assert validate(T1)
    assert T1.freq == lin(k1=-1, k2=1, k3=1)
    # breaking the inner frequency breaks validation
    bad = DecoratedTree(T1.edge, lin(k1=1, k2=1, k3=1), 0, T1.children)
    assert not validate(bad)


def test_validate_single_leaf():
    leaf = DecoratedTree(EdgeDecor("t1", 0), lin(k1=1))
    assert validate(leaf)


def test_quintic_root_freqs(nls):
    assert nls["T2"].freq == lin(k1=-1, k2=1, k3=1, k4=-1, k5=1)
    assert nls["T3"].freq == lin(k1=1, k2=-1, k3=-1, k4=1, k5=1)


# ----------------------------------------------------------- conjugation

def test_conjugate_involution(nls):
    for T in nls.values():
        assert conjugate(conjugate(T)) == T
        assert validate(conjugate(T))


def test_conjugate_leaf():
    leaf = DecoratedTree(EdgeDecor("t1", 0), lin(k1=1))
    assert conjugate(leaf).edge == EdgeDecor("t1", 1)


# ------------------------------------------------------ symmetry factors

def test_symmetry_factors(nls, kdv):
    assert symmetry_factor(nls["T1"]) == 2
    assert symmetry_factor(nls["T2"]) == 2
    assert symmetry_factor(nls["T3"]) == 4
    assert symmetry_factor(kdv["T1"]) == 2
    assert symmetry_factor(kdv["T2"]) == 2


# --------------------------------------------------------------- upsilon

def test_upsilon_nls(nls):
    spec = nls_spec()
    u1 = upsilon(nls["T1"], spec)
    assert u1.coeff == 2
    assert u1.factors == ((1, 1), (2, 0), (3, 0))
    u2 = upsilon(nls["T2"], spec)
    assert u2.coeff == 4
    assert u2.factors == ((1, 1), (2, 0), (3, 0), (4, 1), (5, 0))
    u3 = upsilon(nls["T3"], spec)
    assert u3.coeff == 4
    r1 = upsilon_over_s(nls["T1"], spec)
    assert r1.coeff == 1


def test_upsilon_kg():
    spec = kg_spec()
    trees = kg_trees()
    # (1/8) * 3! = 3/4 at every node; S in {6, 2, 2, 6}
    assert upsilon(trees["T1"], spec).coeff == Fraction(3, 4)
    assert upsilon_over_s(trees["T1"], spec).coeff == Fraction(1, 8)
    assert upsilon_over_s(trees["T2"], spec).coeff == Fraction(3, 8)
    assert upsilon_over_s(trees["T3"], spec).coeff == Fraction(3, 8)
    assert upsilon_over_s(trees["T4"], spec).coeff == Fraction(1, 8)


# ------------------------------------------------------------ generation

def test_generate_counts():
    assert len(generate_trees(nls_spec(), 0)) == 2
    assert len(generate_trees(nls_spec(), 1)) == 4
    assert len(generate_trees(kdv_spec(), 1)) == 3
    assert len(generate_trees(kg_spec(), 0)) == 5


def test_generated_trees_validate():
    for spec in (nls_spec(), kdv_spec(), kg_spec()):
        for T in generate_trees(spec, 1):
            if T is not None:
                assert validate(T)


def test_root_freq_is_signed_leaf_sum(nls):
    for T in nls.values():
        total = FreqLinear()
        for leaf_tree in _leaves(T):
            s = leaf_tree.freq
            total = total + (s.scale(-1) if leaf_tree.edge.conj else s)
        assert total == T.freq


def _leaves(T):
    if T.is_leaf():
        return [T]
    out = []
    for c in T.children:
        out.extend(_leaves(c))
    return out


# ---------------------------------------------------------- deg / n_plus

def test_deg_and_nplus(nls, kdv):
    assert deg_tree(nls["T1"]) == 1 and n_plus(nls["T1"]) == 1
    assert deg_tree(nls["T2"]) == 2 and n_plus(nls["T2"]) == 2
    assert deg_tree(nls["T3"]) == 2
    assert deg_tree(kdv["T2"]) == 2
    lam = DecoratedTree(nls["T1"].edge, nls["T1"].freq, 2, nls["T1"].children)
    assert deg_tree(lam) == 3


# -------------------------------------------------------- frequency maps

def test_f_dom_f_low_nls(nls):
    spec = nls_spec()
    expected_low = (-(sym(1) * (sym(2) + sym(3))).scale(2)
                    + (sym(2) * sym(3)).scale(2))
    assert f_dom(nls["T1"], spec) == sym(1, 2).scale(2)
    assert f_low(nls["T1"], spec) == expected_low


def test_f_dom_f_low_kdv(kdv):
    spec = kdv_spec()
    assert f_dom(kdv["T1"], spec).is_zero()
    expected = (sym(1, 2) * sym(2)).scale(3) + (sym(1) * sym(2, 2)).scale(3)
    assert f_low(kdv["T1"], spec) == expected


def test_f_dom_quintic(nls):
    spec = nls_spec()
    assert f_dom(nls["T2"], spec) == \
        FreqPoly.from_linear(lin(k1=1, k4=1)).pow(2).scale(2)
    # T3 couples the two conjugated inner leaves instead
    assert f_dom(nls["T3"], spec) == \
        FreqPoly.from_linear(lin(k2=1, k3=1)).pow(2).scale(2)


def test_f_dom_unit_and_additive(nls):
    spec = nls_spec()
    assert f_dom((), spec).is_zero()
    pair = (nls["T1"], nls["T1"])
    assert f_dom(pair, spec) == f_dom(nls["T1"], spec).scale(2)


def test_f_dom_kg():
    spec = kg_spec()
    trees = kg_trees()
    # all-plain cubic: dominant part is 2/eps^2
    assert f_dom(trees["T1"], spec) == FreqPoly.eps_term(2, 2)
    # one conjugated leaf: eps terms cancel, no dominant part
    assert f_dom(trees["T2"], spec).is_zero()
    assert f_dom(trees["T3"], spec) == FreqPoly.eps_term(-2, 2)
    assert f_dom(trees["T4"], spec) == FreqPoly.eps_term(-4, 2)
