"""End-to-end acceptance checks: algebraic laws, worked values, scheme
equivalences, and desk-scale convergence reproduction.

Each test is one pass/fail line for one criterion; runtime budgets are
asserted alongside the numerical tolerances.
"""

from __future__ import annotations

import cmath
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import quad

from artifact.characters import (
    CharContext, a_n, check_birkhoff, hat_pi_n, pi_exact, pi_n,
)
from artifact.freq_algebra import FreqLinear, FreqPoly, QC, RationalFreq
from artifact.hopf import (
    ApproxTree, HElem, LinComb, PlusTree, antipode, coaction,
    coproduct_plus, counit_plus, forest_mul,
)
from artifact.oscillatory import OscFn, integrate_exact
from artifact.scheme_emitter import (
    build_scheme, reference_scheme, to_physical,
)
from artifact.solvers import (
    Grid, ast_stepper, converge, kg_token_tables, read_csv, to_modes,
    write_csv,
)
from artifact.trees import (
    DecoratedTree, EdgeDecor, edge_count, f_dom, f_low, kdv_spec, kdv_trees,
    kg_spec, kg_trees, nls_spec, nls_trees, spec_by_name, symmetry_factor,
    upsilon_over_s,
)

TAUS = np.geomspace(1e-3, 1e-1, 7)


def lin(**kw) -> FreqLinear:
    return FreqLinear.of({int(k[1:]): v for k, v in kw.items()})


def sym(i: int, e: int = 1) -> FreqPoly:
    return FreqPoly.symbol(i, e)


def planted(T: DecoratedTree) -> DecoratedTree:
    return DecoratedTree(EdgeDecor("t1", 0), T.freq, 0, (T,))


def rat(c, *dens) -> RationalFreq:
    return RationalFreq(FreqPoly.const(c), tuple((d, 1) for d in dens))


@pytest.fixture(scope="module")
def nls():
    return nls_trees()


@pytest.fixture(scope="module")
def kdv():
    return kdv_trees()


# ------------------------------------------------------ Hopf algebra laws


def test_hopf_laws_exact_on_corpora(nls, kdv):
    t0 = time.monotonic()
    ats: list[ApproxTree] = []
    pts: list[PlusTree] = []
    for pool in (nls, kdv):
        for T in pool.values():
            for cand in (T, planted(T)):
                for r in (0, 1):
                    a = ApproxTree(cand, r)
                    if a.is_valid():
                        ats.append(a)
            for r in (0, 1):
                for m in range(r + 2):
                    p = PlusTree(T, r, m)
                    if p.is_valid():
                        pts.append(p)
    assert max(edge_count(a.tree) for a in ats) >= 7

    for a in ats:
        # comodule coassociativity
        left = LinComb()
        right = LinComb()
        for (l, r), c in coaction(a).items():
            for (l2, r2), c2 in coaction(l).items():
                left.add((l2, r2, r), c * c2)
            for (x, y), c2 in coproduct_plus(r).items():
                right.add((l, x, y), c * c2)
        assert left == right, str(a)
        # counit law
        out = LinComb()
        for (l, r), c in coaction(a).items():
            out.add(l, c * counit_plus(r))
        assert out == LinComb.single(HElem(0, (a,)), 1)

    for p in pts:
        # coassociativity of the rooted coproduct
        lhs = LinComb()
        rhs = LinComb()
        for (l, r), c in coproduct_plus(p).items():
            for (x, y), c2 in coproduct_plus(l).items():
                lhs.add((x, y, r), c * c2)
            for (x, y), c2 in coproduct_plus(r).items():
                rhs.add((l, x, y), c * c2)
        assert lhs == rhs, str(p)
        # antipode annihilates nonempty forests on both sides
        for side in (0, 1):
            acc = LinComb()
            for (l, r), c in coproduct_plus((p,)).items():
                tgt = r if side == 0 else l
                oth = l if side == 0 else r
                for g, c2 in antipode(tgt).items():
                    acc.add(forest_mul(oth, g) if side == 0
                            else forest_mul(g, oth), c * c2)
            assert acc.is_zero(), str(p)
    assert time.monotonic() - t0 < 30.0


# -------------------------------------------------- worked-example values


def test_worked_example_fidelity(nls, kdv):
    t0 = time.monotonic()
    spec = nls_spec()

    # symmetry factors and normalised elementary differentials
    assert symmetry_factor(nls["T1"]) == 2
    assert symmetry_factor(nls["T2"]) == 2
    assert symmetry_factor(nls["T3"]) == 4
    assert symmetry_factor(kdv["T1"]) == 2
    assert upsilon_over_s(nls["T1"], spec).coeff == 1
    assert upsilon_over_s(nls["T2"], spec).coeff == 2
    assert upsilon_over_s(nls["T3"], spec).coeff == 1
    kg = kg_trees()
    assert upsilon_over_s(kg["T1"], kg_spec()).coeff == Fraction(1, 8)
    assert upsilon_over_s(kg["T2"], kg_spec()).coeff == Fraction(3, 8)

    # dominant and lower-order frequency interactions
    two_ksq = sym(1, 2).scale(2)
    assert f_dom(nls["T1"], spec) == two_ksq
    assert f_low(nls["T1"], spec) == \
        -(sym(1) * (sym(2) + sym(3))).scale(2) + (sym(2) * sym(3)).scale(2)
    assert f_dom(kdv["T1"], kdv_spec()).is_zero()
    assert f_low(kdv["T1"], kdv_spec()) == \
        (sym(1, 2) * sym(2)).scale(3) + (sym(1) * sym(2, 2)).scale(3)
    assert f_dom(kg["T1"], kg_spec()) == FreqPoly.eps_term(2, 2)
    assert f_dom(kg["T2"], kg_spec()).is_zero()

    # approximating, oscillation-isolating, and coefficient characters
    ctx1 = CharContext(spec, 1, 0)
    ctx2 = CharContext(spec, 2, 0)
    low_exact = integrate_exact(0, two_ksq)[0].scale(QC(im=Fraction(-1)))
    assert pi_n(ApproxTree(nls["T1"], 0), ctx1) == low_exact
    assert pi_n(ApproxTree(nls["T1"], 0), ctx2) == \
        OscFn.monomial(QC(im=Fraction(-1)), 1)
    assert pi_n(ApproxTree(nls["T2"], 1), CharContext(spec, 2, 1)) == \
        OscFn.monomial(Fraction(-1, 2), 2)
    assert pi_n(ApproxTree(nls["T3"], 1), CharContext(spec, 2, 1)) == \
        OscFn.monomial(Fraction(1, 2), 2)
    assert hat_pi_n(ApproxTree(nls["T1"], 0), ctx1) == \
        OscFn.monomial(rat(Fraction(-1), two_ksq), 0, two_ksq)
    assert hat_pi_n(ApproxTree(nls["T1"], 0), ctx2).is_zero()
    assert a_n(PlusTree(nls["T1"], 0, 0), ctx1) == rat(1, two_ksq)
    assert a_n(PlusTree(nls["T1"], 0, 1), ctx2) == \
        RationalFreq(FreqPoly.const(QC(im=Fraction(-1))))
    assert a_n(PlusTree(nls["T2"], 1, 2), CharContext(spec, 2, 1)) == rat(-1)

    # first-order rooted quadratic scheme coefficients
    kspec = kdv_spec()
    T = kdv["T1"]
    out = pi_n(ApproxTree(planted(T), 0), CharContext(kspec, 1, 0))
    k3 = FreqPoly.from_linear(T.freq).pow(3)
    c = rat(Fraction(1, 6), sym(1), sym(2))
    assert out == (OscFn.monomial(c, 0, k3.scale(-1))
                   - OscFn.monomial(c, 0, -sym(1, 3) - sym(2, 3)))
    assert time.monotonic() - t0 < 5.0


# --------------------------------------------------- Birkhoff factorisation


def test_birkhoff_identity(nls):
    t0 = time.monotonic()
    spec = nls_spec()
    targets = [ApproxTree(nls["T1"], 0), ApproxTree(nls["T1"], 1),
               ApproxTree(nls["T2"], 1), ApproxTree(nls["T3"], 1)]
    for a in targets:
        assert a.is_valid()
        for n in (1, 2, 3, 4):
            assert check_birkhoff(a, CharContext(spec, n, a.order)), \
                (str(a), n)
    assert time.monotonic() - t0 < 10.0


# ----------------------------------------------------- local error order


def test_local_error_order_and_quadrature(nls, kdv):
    t0 = time.monotonic()
    envs = {
        ("nls", "T1"): {1: 2.0, 2: 5.0, 3: 3.0},
        ("nls", "T2"): {1: 1.0, 2: -1.0, 3: -1.0, 4: 1.0, 5: -1.0},
        ("nls", "T3"): {1: 1.0, 2: -1.0, 3: -1.0, 4: 1.0, 5: 1.0},
        ("kdv", "T1"): {1: 2.0, 2: 3.0},
        ("kdv", "T2"): {1: 2.0, 2: 3.0, 3: 5.0},
    }
    for pool, spec in ((nls, nls_spec()), (kdv, kdv_spec())):
        for key, T in pool.items():
            env = envs[(spec.name, key)]
            exact = pi_exact(T, spec)
            for r in (0, 1):
                a = ApproxTree(T, r)
                if not a.is_valid():
                    continue
                approx = pi_n(a, CharContext(spec, 1, r))
                errs = [abs(exact.eval(t, env) - approx.eval(t, env))
                        + 1e-300 for t in TAUS]
                if max(errs) < 1e-14:
                    continue
                slope = np.polyfit(np.log(TAUS), np.log(errs), 1)[0]
                assert slope >= r + 1.8, (str(T), r, slope)

    # the exact character against adaptive quadrature
    spec = nls_spec()
    env = {1: 2.0, 2: 1.0, 3: 3.0}
    tau = 0.05
    k = -env[1] + env[2] + env[3]
    phase = k ** 2 + env[1] ** 2 - env[2] ** 2 - env[3] ** 2
    inner = quad(lambda s: cmath.exp(1j * s * phase).real, 0, tau)[0] \
        + 1j * quad(lambda s: cmath.exp(1j * s * phase).imag, 0, tau)[0]
    ref = cmath.exp(-1j * tau * k * k) * (-1j) * inner
    assert abs(pi_exact(planted(nls["T1"]), spec).eval(tau, env) - ref) \
        < 1e-10

    env5 = {1: 2.0, 2: 1.0, 3: 3.0, 4: 5.0, 5: 7.0}
    kin = -env5[1] + env5[2] + env5[3]
    pin = kin ** 2 + env5[1] ** 2 - env5[2] ** 2 - env5[3] ** 2
    kout = kin - env5[4] + env5[5]
    pout = kout ** 2 + env5[4] ** 2 - kin ** 2 - env5[5] ** 2

    def nested(s):
        v = quad(lambda x: cmath.exp(1j * x * pin).real, 0, s)[0] \
            + 1j * quad(lambda x: cmath.exp(1j * x * pin).imag, 0, s)[0]
        return -1j * v * cmath.exp(1j * s * pout)

    ref5 = -1j * (quad(lambda s: nested(s).real, 0, tau, limit=200)[0]
                  + 1j * quad(lambda s: nested(s).imag, 0, tau,
                              limit=200)[0])
    assert abs(pi_exact(nls["T2"], spec).eval(tau, env5) - ref5) < 1e-10
    assert time.monotonic() - t0 < 60.0


# ------------------------------------------- emitted scheme equivalences


def test_emitted_matches_reference_catalogue():
    t0 = time.monotonic()
    cases = [("nls", 0, 1, "nls_res1", {}, 1.0),
             ("nls", 1, 2, "nls_res2_low", {}, 1.0),
             ("nls", 1, 3, "nls_res2_mid", {}, 1.0),
             ("nls", 1, 4, "nls_res2_smooth", {"psi": "one"}, 1.0),
             ("nls", 1, 5, "nls_res2_smooth", {"psi": "one"}, 1.0),
             ("kdv", 0, 0, "kdv_res1", {}, 1.0),
             ("kg", 0, 0, "kg_res1", {}, 0.1)]
    rng = np.random.default_rng(11)
    grid = Grid.make(64)
    for eq, r, n, name, kw, eps in cases:
        tokens = kg_token_tables(grid, eps) if eq == "kg" else None
        fs = build_scheme(spec_by_name(eq), r, n)
        emitted = ast_stepper(to_physical(fs), grid, eps, tokens)
        ref = ast_stepper(reference_scheme(name, **kw), grid, eps, tokens)
        u = rng.normal(size=grid.M)
        vhat = to_modes(u if eq in ("kdv", "kg")
                        else u + 1j * rng.normal(size=grid.M))
        for tau in (0.02, 0.005):
            a = emitted(vhat.copy(), tau)
            b = ref(vhat.copy(), tau)
            assert np.max(np.abs(a - b)) < 1e-10, (eq, r, n, name)
    assert time.monotonic() - t0 < 30.0


# ----------------------------------------- convergence at desk resolution


def test_convergence_a_nls_second_order():
    t0 = time.monotonic()
    res = converge("nls", ["nls_res2_mid", "strang"], TAUS, 0.1, 256,
                   None, 1)
    assert abs(res.slopes["nls_res2_mid"] - 2.0) <= 0.25, res.slopes
    assert abs(res.slopes["strang"] - 2.0) <= 0.25, res.slopes

    rough = converge("nls", ["nls_res2_low", "strang"],
                     np.geomspace(3e-4, 3e-2, 7), 0.1, 256, 2.0, 1,
                     amplitude=3.0)
    s_res = rough.slopes["nls_res2_low"]
    s_str = rough.slopes["strang"]
    assert abs(s_res - 2.0) <= 0.3, rough.slopes
    assert s_res - s_str >= 0.3, rough.slopes
    assert time.monotonic() - t0 < 360.0


def test_convergence_b_nls_first_order():
    t0 = time.monotonic()
    res = converge("nls", ["nls_res1", "lie"], TAUS, 0.1, 256, 1.0, 1,
                   reference="nls_res2_low", hs_exponent=1.0)
    s_res = res.slopes["nls_res1:hs"]
    s_lie = res.slopes["lie:hs"]
    assert abs(s_res - 1.0) <= 0.3, res.slopes
    assert s_lie <= s_res - 0.2, res.slopes
    assert time.monotonic() - t0 < 180.0


def test_convergence_c_kdv_second_order():
    t0 = time.monotonic()
    res = converge("kdv", ["kdv_res2"], np.geomspace(3e-4, 3e-2, 7), 0.1,
                   256, None, 1)
    assert abs(res.slopes["kdv_res2"] - 2.0) <= 0.25, res.slopes
    assert time.monotonic() - t0 < 180.0


def test_convergence_d_kg_uniform_in_eps():
    t0 = time.monotonic()
    ratios = {}
    for eps in (1.0, 0.1, 0.01):
        res = converge("kg", ["kg_res1", "kg_simp1"], TAUS, 0.1, 256,
                       None, 1, eps=eps)
        assert abs(res.slopes["kg_res1"] - 1.0) <= 0.3, (eps, res.slopes)
        by_tau = {}
        for row in res.rows:
            by_tau.setdefault(row.tau, {})[row.scheme] = row.error_l2
        ratios[eps] = [d["kg_simp1"] / d["kg_res1"]
                       for d in by_tau.values() if len(d) == 2]
    # the simplified scheme loses accuracy in the oscillatory regime
    assert min(ratios[0.01]) > 4.0, ratios
    assert max(ratios[1.0]) < 3.0, ratios
    assert time.monotonic() - t0 < 240.0


# ------------------------------------------------------ Taylor degeneration


def test_taylor_degeneration_to_classical_integrator():
    grid = Grid.make(64)
    vhat = np.zeros(grid.M, dtype=complex)
    vhat[3] = 0.7 - 0.2j
    ref = ast_stepper(reference_scheme("nls_res2_smooth", psi="one"), grid)
    for n in (4, 5, 6):
        fs = build_scheme(spec_by_name("nls"), 1, n)
        emitted = ast_stepper(to_physical(fs), grid)
        for tau in (0.05, 0.01):
            a = emitted(vhat.copy(), tau)
            b = ref(vhat.copy(), tau)
            assert np.max(np.abs(a - b)) < 1e-12, (n, tau)


# ------------------------------------------------------- figure rendering


def test_figures_two_panel_from_sweep_csvs(tmp_path):
    figures = pytest.importorskip("figures")
    taus = np.geomspace(1e-3, 1e-1, 5)
    smooth = converge("nls", ["nls_res2_mid", "strang"], taus, 0.02, 64,
                      None, 1)
    rough = converge("nls", ["nls_res2_low", "strang"], taus, 0.02, 64,
                     2.0, 1)
    paths = []
    for name, res in (("smooth", smooth), ("rough", rough)):
        path = str(tmp_path / f"{name}.csv")
        write_csv(path, res)
        paths.append(path)
    out = str(tmp_path / "pair.png")
    spec = figures.FigureSpec(csv_paths=tuple(paths), output=out,
                              titles=("smooth data", "rough data"))
    annotations = figures.render(spec)
    assert (tmp_path / "pair.png").stat().st_size > 0
    for path, res in zip(paths, (smooth, rough)):
        _, slopes, _ = read_csv(path)
        want = {k: v for k, v in slopes.items() if ":" not in k}
        assert annotations[path] == want
