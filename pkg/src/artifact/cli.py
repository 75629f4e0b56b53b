"""Command-line entry point: tree listings, scheme derivation, invariant
verification, single runs, and convergence sweeps with CSV output."""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

import numpy as np

from .characters import CharContext, check_birkhoff, local_error_degree, pi_n
from .freq_algebra import FreqPoly, poly_eval, try_divide
from .hopf import (
    ApproxTree, HElem, LinComb, PlusTree, antipode, coaction, coproduct_plus,
    counit_plus, forest_mul,
)
from .oscillatory import _integrate_term, phi_fn, psi_fn
from .scheme_emitter import (
    NonNestedDenominators, UnknownScheme, _emit_tree, build_scheme,
    expr_to_json, fourier_apply, reference_scheme, scheme_names, to_physical,
)
from .solvers import (
    BlowUp, Grid, State, ast_stepper, converge, error_norm, make_initial_data,
    make_stepper, run, save_state, to_modes, write_csv,
)
from .trees import (
    EquationSpec, f_dom, f_low, generate_trees, plant_root, spec_by_name,
    symmetry_factor, upsilon_over_s,
)

EXIT_OK, EXIT_FAIL, EXIT_BLOWUP = 0, 1, 2

_DEFAULTS = {
    "eq": "nls", "order": 0, "regularity": 2, "scheme": None, "s": None,
    "M": 256, "tau": 0.01, "taus": None, "Tend": 0.1, "eps": 1.0,
    "seed": 0, "out": None, "format": "text",
}


class CliError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # invalid flags exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise CliError(message)


def parse_taus(text: str) -> list[float]:
    """Either 'geometric(a,b,n)' or a comma-separated list."""
    text = text.strip()
    if text.startswith("geometric(") and text.endswith(")"):
        a, b, n = text[len("geometric("):-1].split(",")
        return [float(t) for t in np.geomspace(float(a), float(b), int(n))]
    return [float(t) for t in text.split(",")]


def _load_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"bad config line: {line!r}")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def _merge(args: argparse.Namespace) -> argparse.Namespace:
    """Precedence: explicit flag > config file entry > built-in default."""
    config = _load_config(getattr(args, "config", None))
    casts = {"order": int, "regularity": int, "M": int, "seed": int,
             "s": float, "tau": float, "Tend": float, "eps": float}
    for key, default in _DEFAULTS.items():
        if not hasattr(args, key):
            continue
        if getattr(args, key) is None:
            if key in config:
                raw = config[key]
                setattr(args, key, casts.get(key, str)(raw))
            else:
                setattr(args, key, default)
    return args


def resolve_scheme(eq: str, name: str, s: float | None) -> str:
    """Map a short scheme label to a catalogue or built-in stepper name."""
    builtin = {"lie", "strang", "kdv_exp2", "emitted"}
    if name in builtin or name in scheme_names():
        return name
    full = f"{eq}_{name}"
    if full in scheme_names():
        return full
    if name == "res2" and eq == "nls":
        if s is None or s >= 4:
            return "nls_res2_smooth" if s is not None else "nls_res2_mid"
        return "nls_res2_low" if s < 3 else "nls_res2_mid"
    raise UnknownScheme(name)


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ----------------------------------------------------------------- trees


def _sorted_trees(spec: EquationSpec, r: int):
    from .trees import edge_count
    shapes = [T for T in generate_trees(spec, r) if T is not None]
    shapes.sort(key=lambda T: (edge_count(T), symmetry_factor(T), str(T)))
    return shapes


def cmd_trees(args) -> int:
    spec = spec_by_name(args.eq)
    r, n = args.order, args.regularity
    ctx = CharContext(spec, n, r)
    lines = [f"# {args.eq} trees, order {r}, regularity {n}"]
    lines.append("T0: identity  S=1  ups=1")
    for i, T in enumerate(_sorted_trees(spec, r), start=1):
        lines.append(f"T{i}: {T}  S={symmetry_factor(T)}")
        lines.append(f"    ups/S = {upsilon_over_s(T, spec)}")
        lines.append(f"    f_dom = {f_dom(T, spec)}")
        lines.append(f"    f_low = {f_low(T, spec)}")
        lines.append(f"    Lr_low = {local_error_degree(T, n, r, ctx)}")
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- derive


def _term_text(t) -> str:
    bits = [f"coeff={t.coeff}", f"tau^{t.tau_power}"]
    if not t.phase.is_zero():
        bits.append(f"exp[{t.phase}]")
    if t.poly != FreqPoly.const(1):
        bits.append(f"poly[{t.poly}]")
    for f in t.phis:
        bits.append(f"int[xi^{f.q} exp[{f.arg}]]")
    for d, p in t.den:
        bits.append(f"den[({d})^{p}]")
    return " ".join(bits)


def cmd_derive(args) -> int:
    if args.eq == "kg" and args.order > 0:
        raise CliError("kg derivation is first-order only")
    spec = spec_by_name(args.eq)
    fs = build_scheme(spec, args.order, args.regularity)
    note = None
    try:
        physical = to_physical(fs)
    except NonNestedDenominators as exc:
        physical, note = None, str(exc)
    if args.format == "json":
        doc = {
            "equation": fs.equation, "order": fs.r, "regularity": fs.n,
            "entries": [{
                "coeff": str(e.coeff),
                "factors": [list(f) for f in e.factors],
                "terms": [_term_text(t) for t in e.terms],
            } for e in fs.entries],
            "physical": None if physical is None else expr_to_json(physical),
            "note": note,
        }
        _emit(args, json.dumps(doc, sort_keys=True, indent=1) + "\n")
    else:
        lines = [f"# {fs.equation} scheme, order {fs.r}, regularity {fs.n}"]
        for e in fs.entries:
            facs = " ".join(("conj(v%d)" % i if c else "v%d" % i)
                            for i, c in e.factors)
            lines.append(f"entry coeff={e.coeff} factors[{facs}]")
            for t in e.terms:
                lines.append(f"  {_term_text(t)}")
        if physical is None:
            lines.append(f"physical: unavailable ({note})")
        else:
            lines.append("physical:")
            lines.append(json.dumps(expr_to_json(physical), sort_keys=True))
        _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- verify

Check = tuple[str, bool, str]


def _verify_freq_algebra() -> list[Check]:
    rng = np.random.default_rng(0)

    def rand_poly():
        out = FreqPoly.zero()
        for _ in range(3):
            i, e = int(rng.integers(1, 4)), int(rng.integers(1, 3))
            out = out + FreqPoly.symbol(i, e).scale(int(rng.integers(-3, 4)))
        return out

    ok_ring = all(
        (p + q) * r == p * r + q * r and p * q == q * p
        for p, q, r in [(rand_poly(), rand_poly(), rand_poly())
                        for _ in range(10)])
    ok_div = all(try_divide(p * q, q) == p
                 for p, q in [(rand_poly(), rand_poly() + FreqPoly.const(1))
                              for _ in range(10)])
    ok_conj = all(p.conj().conj() == p for p in [rand_poly()
                                                 for _ in range(5)])
    perm = {1: 2, 2: 3, 3: 1}
    inv = {2: 1, 3: 2, 1: 3}
    ok_rel = all(p.relabel(perm).relabel(inv) == p
                 for p in [rand_poly() for _ in range(5)])
    return [("ring laws", ok_ring, "distributivity/commutativity"),
            ("exact division", ok_div, "try_divide(p*q, q) == p"),
            ("conjugation involution", ok_conj, ""),
            ("relabel inverse", ok_rel, "")]


def _verify_trees() -> list[Check]:
    nls = spec_by_name("nls")
    kdv = spec_by_name("kdv")
    n0 = [T for T in generate_trees(nls, 0) if T is not None]
    n1 = [T for T in generate_trees(nls, 1) if T is not None]
    k1 = [T for T in generate_trees(kdv, 1) if T is not None]
    ok_counts = len(n0) == 1 and len(n1) == 3
    ok_sym = sorted(symmetry_factor(T) for T in n1) == [2, 2, 4]
    from .trees import validate
    ok_valid = all(validate(T) for T in n1 + k1)
    ok_ups = all(len(upsilon_over_s(T, nls).factors) in (3, 5) for T in n1)
    return [("generation counts", ok_counts, "1 cubic, 3 at second order"),
            ("symmetry factors", ok_sym, "S in {2,2,4}"),
            ("tree validity", ok_valid, ""),
            ("coefficient arity", ok_ups, "cubic or quintic")]


def _hopf_corpus():
    nls = spec_by_name("nls")
    out = []
    for T in generate_trees(nls, 1):
        if T is None:
            continue
        for cand in (T, plant_root(nls, T)):
            for r in (0, 1):
                a = ApproxTree(cand, r)
                if a.is_valid():
                    out.append(a)
    return out


def _verify_hopf() -> list[Check]:
    ats = _hopf_corpus()
    ok_counit = True
    ok_comodule = True
    for a in ats:
        acc = LinComb()
        for (l, r), c in coaction(a).items():
            acc.add(l, c * counit_plus(r))
        ok_counit &= acc == LinComb.single(HElem(0, (a,)), 1)
        lhs, rhs = LinComb(), LinComb()
        for (l, r), c in coaction(a).items():
            for (l2, r2), c2 in coaction(l).items():
                lhs.add((l2, r2, r), c * c2)
            for (x, y), c2 in coproduct_plus(r).items():
                rhs.add((l, x, y), c * c2)
        ok_comodule &= lhs == rhs
    pts = [PlusTree(a.tree, a.order, m) for a in ats[:4] for m in (0, 1)]
    pts = [p for p in pts if p.is_valid()]
    ok_antipode = True
    for p in pts:
        acc = LinComb()
        for (l, r), c in coproduct_plus((p,)).items():
            for g, c2 in antipode(r).items():
                acc.add(forest_mul(l, g), c * c2)
        ok_antipode &= acc.is_zero()
    return [("counit law", ok_counit, "(id x eps) Delta = id"),
            ("comodule law", ok_comodule, "(D x id) D = (id x D+) D"),
            ("antipode law", ok_antipode, "m (id x A) D+ = eta eps")]


def _verify_oscillatory() -> list[Check]:
    from scipy.integrate import quad
    env = {1: 2.0, 2: -3.0}
    ok_int = True
    for q in (0, 1, 2):
        for L in (FreqPoly.zero(), FreqPoly.symbol(1, 2),
                  FreqPoly.symbol(1, 1) * FreqPoly.symbol(2, 1)):
            got = _integrate_term(q, L).eval(0.3, env)
            Lv = poly_eval(L, env).real
            re = quad(lambda x: x ** q * np.cos(x * Lv), 0, 0.3)[0]
            im = quad(lambda x: x ** q * np.sin(x * Lv), 0, 0.3)[0]
            ok_int &= abs(got - (re + 1j * im)) < 1e-12
    zs = [0.0, 0.1j, 3.0j, -2.0 + 1.0j]
    from math import factorial
    ok_phi = all(abs(phi_fn(j + 1, z) * z - phi_fn(j, z)
                     + 1.0 / factorial(j)) < 1e-12
                 for j in range(3) for z in zs)
    ok_psi = all(abs(psi_fn(j, z) * z - np.exp(z) + j * psi_fn(j - 1, z))
                 < 1e-12 for j in (1, 2) for z in zs)
    return [("exact primitives", ok_int, "quadrature cross-check"),
            ("phi recurrence", ok_phi, ""),
            ("psi recurrence", ok_psi, "")]


def _verify_characters() -> list[Check]:
    nls = spec_by_name("nls")
    T1 = next(T for T in generate_trees(nls, 0) if T is not None)
    planted = plant_root(nls, T1)
    ok_birkhoff = all(
        check_birkhoff(ApproxTree(planted, r), CharContext(nls, n, r))
        for r in (0, 1) for n in (1, 2))
    return [("Birkhoff factorisation", ok_birkhoff, "cubic chain, n in 1,2")]


def _verify_scheme_emitter() -> list[Check]:
    env = {1: 2.0, 2: 3.0, 3: 5.0, 4: -7.0, 5: 11.0}
    nls = spec_by_name("nls")
    ctx = CharContext(nls, 1, 0)
    T1 = next(T for T in generate_trees(nls, 0) if T is not None)
    planted = plant_root(nls, T1)
    terms = _emit_tree(planted, 0, 1, nls, "taylor")
    want = pi_n(ApproxTree(planted, 0), ctx).eval(0.1, env)
    got = sum(t.eval(0.1, env) for t in terms)
    ok_taylor = abs(got - want) < 1e-10
    grid = Grid.make(32)
    rng = np.random.default_rng(1)
    ok_parity = True
    for eq, r, n, name in (("nls", 0, 1, "nls_res1"),
                           ("kdv", 0, 0, "kdv_res1")):
        fs = build_scheme(spec_by_name(eq), r, n)
        em = ast_stepper(to_physical(fs), grid)
        rf = ast_stepper(reference_scheme(name), grid)
        u = rng.normal(size=32) + (0 if eq == "kdv"
                                   else 1j * rng.normal(size=32))
        vhat = to_modes(u)
        ok_parity &= float(np.max(np.abs(em(vhat, 0.02)
                                         - rf(vhat, 0.02)))) < 1e-10
    fs = build_scheme(nls, 1, 2)
    step = ast_stepper(to_physical(fs), grid)
    modes = {-2: 0.4 + 0.1j, 1: -0.3 + 0.2j, 3: 0.1 - 0.5j}
    vhat = np.zeros(32, dtype=complex)
    for k, v in modes.items():
        vhat[k % 32] = v
    sp = fourier_apply(fs, modes, 0.05)
    out = step(vhat, 0.05)
    ok_sparse = all(abs(out[k % 32] - sp.get(k, 0j)) < 1e-10
                    for k in range(-15, 16))
    return [("emission vs character", ok_taylor, "Taylor mode"),
            ("physical parity", ok_parity, "catalogue agreement"),
            ("sparse evaluation", ok_sparse, "FFT vs direct summation")]


_SUITES = {
    "freq-algebra": _verify_freq_algebra,
    "trees": _verify_trees,
    "hopf": _verify_hopf,
    "oscillatory": _verify_oscillatory,
    "characters": _verify_characters,
    "scheme-emitter": _verify_scheme_emitter,
}


def cmd_verify(args) -> int:
    names = list(_SUITES) if args.all else args.suites
    if not names:
        raise CliError("give suite names or --all")
    bad = [n for n in names if n not in _SUITES]
    if bad:
        raise CliError(f"unknown suites: {', '.join(bad)}")
    failures = 0
    lines = []
    for name in names:
        for check, ok, detail in _SUITES[name]():
            status = "PASS" if ok else "FAIL"
            failures += 0 if ok else 1
            suffix = f"  ({detail})" if detail else ""
            lines.append(f"{status}  {name}: {check}{suffix}")
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK if failures == 0 else EXIT_FAIL


# ----------------------------------------------------------------- solve


def cmd_solve(args) -> int:
    if args.scheme is None:
        raise CliError("solve needs --scheme")
    name = resolve_scheme(args.eq, args.scheme, args.s)
    grid = Grid.make(args.M)
    stepper = make_stepper(name, args.eq, grid, args.eps,
                           args.order, args.regularity)
    vhat = make_initial_data(grid, args.s, args.seed, real=args.eq == "kdv")
    steps = max(1, round(args.Tend / args.tau))
    tau = args.Tend / steps
    try:
        vhat = run(stepper, vhat, tau, steps)
    except BlowUp as exc:
        sys.stderr.write(f"blow-up: {exc}\n")
        return EXIT_BLOWUP
    if args.out:
        save_state(args.out, State(grid, vhat, args.Tend))
    zero = np.zeros_like(vhat)
    sys.stdout.write(
        f"{args.eq} {name} tau={tau:.6e} steps={steps} "
        f"l2={error_norm(vhat, zero, grid, 'l2'):.10e} "
        f"h1={error_norm(vhat, zero, grid, 'hs', 1.0):.10e}\n")
    return EXIT_OK


# -------------------------------------------------------------- converge


def cmd_converge(args) -> int:
    if args.scheme is None:
        raise CliError("converge needs --scheme")
    if args.taus is None:
        raise CliError("converge needs --taus")
    schemes = [resolve_scheme(args.eq, s.strip(), args.s)
               for s in args.scheme.split(",")]
    taus = parse_taus(args.taus)
    result = converge(args.eq, schemes, taus, args.Tend, args.M, args.s,
                      args.seed, eps=args.eps, order=args.order,
                      regularity=args.regularity)
    if args.out:
        write_csv(args.out, result)
    else:
        import tempfile
        with tempfile.NamedTemporaryFile("r", suffix=".csv") as tmp:
            write_csv(tmp.name, result)
            sys.stdout.write(open(tmp.name).read())
    for name, slope in result.slopes.items():
        sys.stderr.write(f"slope {name} {slope:.4f}\n")
    if any("blow-up" in note for note in result.notes):
        return EXIT_BLOWUP
    return EXIT_OK


# ------------------------------------------------------------------ main


def _build_parser() -> _Parser:
    parser = _Parser(prog="artifact",
                     description="Resonance-based integrator workbench: "
                                 "derive schemes, verify algebraic "
                                 "invariants, run solvers, and sweep "
                                 "convergence.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(p, *names):
        for name in names:
            if name == "eq":
                p.add_argument("--eq", choices=("nls", "kdv", "kg"))
            elif name == "order":
                p.add_argument("--order", type=int)
            elif name == "regularity":
                p.add_argument("--regularity", type=int)
            elif name == "scheme":
                p.add_argument("--scheme")
            elif name == "s":
                p.add_argument("--s", type=float)
            elif name == "M":
                p.add_argument("--M", type=int)
            elif name == "tau":
                p.add_argument("--tau", type=float)
            elif name == "taus":
                p.add_argument("--taus")
            elif name == "Tend":
                p.add_argument("--Tend", type=float)
            elif name == "eps":
                p.add_argument("--eps", type=float)
            elif name == "seed":
                p.add_argument("--seed", type=int)
            elif name == "out":
                p.add_argument("--out")
            elif name == "format":
                p.add_argument("--format", choices=("text", "json", "csv"))
        p.add_argument("--config", help="key=value defaults file")

    p = sub.add_parser("trees", help="list decorated trees with invariants")
    add(p, "eq", "order", "regularity", "out")
    p.set_defaults(fn=cmd_trees)

    p = sub.add_parser("derive", help="build and print a scheme")
    add(p, "eq", "order", "regularity", "format", "out")
    p.set_defaults(fn=cmd_derive)

    p = sub.add_parser("verify", help="run module invariant suites")
    p.add_argument("suites", nargs="*")
    p.add_argument("--all", action="store_true")
    add(p, "out")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("solve", help="run one scheme to T end")
    add(p, "eq", "scheme", "order", "regularity", "s", "M", "tau", "Tend",
        "eps", "seed", "out")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("converge", help="error-vs-step sweep, CSV output")
    add(p, "eq", "scheme", "order", "regularity", "s", "M", "taus", "Tend",
        "eps", "seed", "out")
    p.set_defaults(fn=cmd_converge)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = _merge(parser.parse_args(argv))
        return args.fn(args)
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_FAIL
    except (UnknownScheme, NonNestedDenominators, ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
