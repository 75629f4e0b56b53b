"""Periodic pseudo-spectral solvers.

Evaluates physical-space scheme ASTs with the FFT (diagonal multipliers in
Fourier, products pointwise in space), provides splitting baselines, random
low-regularity initial data, Sobolev error norms, and a convergence driver
that writes slope-annotated CSV files.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .freq_algebra import FreqPoly
from .scheme_emitter import (
    Expr, Field, FourierScheme, Mult, Prod, Scalar, Sum, UnknownScheme,
    build_scheme, reference_scheme, to_physical,
)
from .trees import spec_by_name

_PHI_CUTOFF = 0.25
_PHI_DEGREE = 30


class BlowUp(RuntimeError):
    """Raised when a time step produces non-finite values."""


# ---------------------------------------------------------------- grid


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [0, 2pi) with FFT-ordered integer modes."""

    M: int
    x: np.ndarray
    k: np.ndarray

    @staticmethod
    def make(M: int) -> "Grid":
        if M < 8 or M & (M - 1):
            raise ValueError("M must be a power of two >= 8")
        x = 2.0 * np.pi * np.arange(M) / M
        k = np.fft.fftfreq(M, d=1.0 / M)
        return Grid(M, x, k)


def to_modes(u: np.ndarray) -> np.ndarray:
    return np.fft.fft(u) / len(u)


def to_phys(vhat: np.ndarray) -> np.ndarray:
    return np.fft.ifft(vhat * len(vhat))


@dataclass
class State:
    """Field on a grid: Fourier coefficients are primary, physical values
    derived on demand."""

    grid: Grid
    vhat: np.ndarray
    t: float = 0.0

    def physical(self) -> np.ndarray:
        return to_phys(self.vhat)


@dataclass
class RunConfig:
    equation: str
    scheme: str
    tau: float
    T_end: float
    M: int = 256
    eps: float = 1.0
    s: float | None = None
    seed: int = 0
    order: int | None = None
    regularity: int | None = None


_SNAP_MAGIC = b"SPECSNAP"


def save_state(path: str, state: State) -> None:
    """Raw snapshot: 32-byte header (magic, M, time) + complex64 modes."""
    import struct
    with open(path, "wb") as fh:
        fh.write(struct.pack("<8sqd8x", _SNAP_MAGIC, state.grid.M, state.t))
        fh.write(state.vhat.astype("<c8").tobytes())


def load_state(path: str) -> State:
    import struct
    with open(path, "rb") as fh:
        magic, M, t = struct.unpack("<8sqd8x", fh.read(32))
        if magic != _SNAP_MAGIC:
            raise ValueError("not a state snapshot")
        vhat = np.frombuffer(fh.read(), dtype="<c8").astype(complex)
    return State(Grid.make(int(M)), vhat, t)


# ------------------------------------------------- entire phi functions


def phi_vec(j: int, z: np.ndarray) -> np.ndarray:
    """Vectorised phi_j with a series branch near the origin."""
    z = np.asarray(z, dtype=complex)
    if j == 0:
        return np.exp(z)
    small = np.abs(z) < _PHI_CUTOFF
    series = np.zeros_like(z)
    term = np.ones_like(z) / math.factorial(j)
    zs = np.where(small, z, 0.0)
    power = np.ones_like(z)
    for m in range(_PHI_DEGREE + 1):
        series = series + power / math.factorial(m + j)
        power = power * zs
    zsafe = np.where(small, 1.0, z)
    direct = (phi_vec(j - 1, np.where(small, 0.0, z))
              - 1.0 / math.factorial(j - 1)) / zsafe
    return np.where(small, series, direct)


def psi_vec(j: int, z: np.ndarray) -> np.ndarray:
    """Vectorised psi_j(z) = int_0^1 s^j e^{zs} ds."""
    z = np.asarray(z, dtype=complex)
    if j == 0:
        return phi_vec(1, z)
    small = np.abs(z) < _PHI_CUTOFF
    series = np.zeros_like(z)
    zs = np.where(small, z, 0.0)
    power = np.ones_like(z)
    for m in range(_PHI_DEGREE + 1):
        series = series + power / (math.factorial(m) * (m + j + 1))
        power = power * zs
    zsafe = np.where(small, 1.0, z)
    zbig = np.where(small, 0.0, z)
    direct = (np.exp(zbig) - j * psi_vec(j - 1, zbig)) / zsafe
    return np.where(small, series, direct)


# -------------------------------------------------- multiplier assembly

TokenTable = Mapping[str, np.ndarray]


def _slot_values(poly: FreqPoly, k: np.ndarray, eps: float,
                 tokens: TokenTable | None) -> np.ndarray:
    """Evaluate a one-slot polynomial (symbol 0 = the factor's mode)."""
    out = np.zeros_like(k, dtype=complex)
    for m, c in poly.terms.items():
        val = np.full_like(out, c.to_complex())
        for i, e in m.powers:
            if i != 0:
                raise ValueError("multiplier polynomial must be one-slot")
            val = val * k ** e
        if m.eps_power:
            val = val * eps ** (-m.eps_power)
        for name, arg in m.tokens:
            if tokens is None or name not in tokens:
                raise ValueError(f"no table for token {name}")
            val = val * tokens[name]
        out = out + val
    return out


def _apply_kind(kind: str, pk: np.ndarray, tau: float) -> np.ndarray:
    if kind == "exp":
        return np.exp(1j * tau * pk)
    if kind == "poly":
        return pk
    if kind == "inv":
        safe = np.where(pk == 0, 1.0, pk)
        return np.where(pk == 0, 0.0, 1.0 / safe)
    if kind == "sinc":
        z = tau * pk
        safe = np.where(z == 0, 1.0, z)
        return np.where(z == 0, 1.0, np.sin(safe) / safe)
    if kind.startswith("phi"):
        return phi_vec(int(kind[3:]), 1j * tau * pk)
    if kind.startswith("psi"):
        return psi_vec(int(kind[3:]), 1j * tau * pk)
    raise ValueError(f"unknown multiplier kind {kind!r}")


def compile_expr(expr: Expr, grid: Grid, eps: float = 1.0,
                 tokens: TokenTable | None = None
                 ) -> Callable[[np.ndarray, float], np.ndarray]:
    """Compile an AST into a physical-space evaluator u -> output.

    Slot polynomials are evaluated on the mode vector once; only the
    tau-dependent multiplier functions are recomputed per step.
    """
    if isinstance(expr, Field):
        if expr.conj:
            return lambda u, tau: np.conj(u)
        return lambda u, tau: u
    if isinstance(expr, Prod):
        parts = [compile_expr(c, grid, eps, tokens) for c in expr.children]
        def run_prod(u, tau):
            out = parts[0](u, tau)
            for p in parts[1:]:
                out = out * p(u, tau)
            return out
        return run_prod
    if isinstance(expr, Sum):
        parts = [compile_expr(c, grid, eps, tokens) for c in expr.children]
        return lambda u, tau: sum(p(u, tau) for p in parts)
    if isinstance(expr, Scalar):
        c = complex(expr.re) + 1j * complex(expr.im)
        p = expr.tau_power
        child = compile_expr(expr.child, grid, eps, tokens)
        return lambda u, tau: c * tau ** p * child(u, tau)
    if isinstance(expr, Mult):
        pk = _slot_values(expr.poly, grid.k, eps, tokens)
        kind = expr.kind
        child = compile_expr(expr.child, grid, eps, tokens)
        def run_mult(u, tau):
            w = to_modes(child(u, tau))
            return to_phys(_apply_kind(kind, pk, tau) * w)
        return run_mult
    raise TypeError(type(expr))


# ------------------------------------------------------------- steppers

Stepper = Callable[[np.ndarray, float], np.ndarray]


def _checked(step: Stepper) -> Stepper:
    def run(vhat: np.ndarray, tau: float) -> np.ndarray:
        out = step(vhat, tau)
        if not np.all(np.isfinite(out)):
            raise BlowUp("non-finite modes after step")
        return out
    return run


def ast_stepper(expr: Expr, grid: Grid, eps: float = 1.0,
                tokens: TokenTable | None = None,
                dealias: bool = False) -> Stepper:
    fn = compile_expr(expr, grid, eps, tokens)
    mask = np.abs(grid.k) < grid.M / 3.0
    def step(vhat: np.ndarray, tau: float) -> np.ndarray:
        out = to_modes(fn(to_phys(vhat), tau))
        return out * mask if dealias else out
    return _checked(step)


def _lie_nls(grid: Grid) -> Stepper:
    k2 = grid.k ** 2
    def step(vhat, tau):
        u = to_phys(vhat)
        u = np.exp(-1j * tau * np.abs(u) ** 2) * u
        return np.exp(-1j * tau * k2) * to_modes(u)
    return _checked(step)


def _strang_nls(grid: Grid) -> Stepper:
    k2 = grid.k ** 2
    def step(vhat, tau):
        vhat = np.exp(-1j * tau / 2 * k2) * vhat
        u = to_phys(vhat)
        u = np.exp(-1j * tau * np.abs(u) ** 2) * u
        return np.exp(-1j * tau / 2 * k2) * to_modes(u)
    return _checked(step)


def _kdv_exp2(grid: Grid) -> Stepper:
    """Two-stage exponential integrator (exponential midpoint/ETD2)."""
    k = grid.k
    L = -1j * k ** 3
    def nonlin(vhat):
        u = to_phys(vhat)
        return -0.5j * k * to_modes(u * u)
    def step(vhat, tau):
        e = np.exp(tau * L)
        p1 = phi_vec(1, tau * L)
        p2 = phi_vec(2, tau * L)
        n0 = nonlin(vhat)
        a = e * vhat + tau * p1 * n0
        return e * vhat + tau * p1 * n0 + tau * p2 * (nonlin(a) - n0)
    return _checked(step)


def kg_token_tables(grid: Grid, eps: float) -> dict[str, np.ndarray]:
    """Relativistic multiplier tables: both are bounded uniformly in eps.

    B(k) = (sqrt(1 + eps^2 k^2) - 1)/eps^2 <= k^2/2 and C(k) <= 1.
    """
    k = grid.k
    B = (np.sqrt(1.0 + (eps * k) ** 2) - 1.0) / eps ** 2
    C = 1.0 / np.sqrt(1.0 + (eps * k) ** 2)
    return {"B": B, "C": C}


def make_stepper(name: str, equation: str, grid: Grid,
                 eps: float = 1.0, order: int | None = None,
                 regularity: int | None = None) -> Stepper:
    """Stepper by catalogue name, or emitted:<r>:<n> for built schemes."""
    tokens = kg_token_tables(grid, eps) if equation == "kg" else None
    if name == "lie" and equation == "nls":
        return _lie_nls(grid)
    if name == "strang" and equation == "nls":
        return _strang_nls(grid)
    if name == "kdv_exp2" and equation == "kdv":
        return _kdv_exp2(grid)
    if name == "emitted":
        if order is None or regularity is None:
            raise ValueError("emitted scheme needs order and regularity")
        fs = build_scheme(spec_by_name(equation), order, regularity)
        return ast_stepper(to_physical(fs), grid, eps, tokens)
    return ast_stepper(reference_scheme(name), grid, eps, tokens)


# ----------------------------------------------------------- initial data


def make_initial_data(grid: Grid, s: float | None, seed: int,
                      real: bool = False) -> np.ndarray:
    """Random H^s data with v-hat_k ~ Z_k (1+|k|)^{-(s+0.51)}, unit L2.

    s = None gives deterministic smooth Gaussian data e^{-k^2/4}.  Real
    data (for the KdV flow) is Hermitian-symmetrised with zero mean.
    """
    k = grid.k
    if s is None:
        vhat = np.exp(-(k ** 2) / 4.0).astype(complex)
        if real:
            vhat[0] = 0.0
    else:
        rng = np.random.default_rng(seed)
        z = (rng.uniform(-1.0, 1.0, grid.M)
             + 1j * rng.uniform(-1.0, 1.0, grid.M))
        vhat = z * (1.0 + np.abs(k)) ** (-(s + 0.51))
        vhat[grid.M // 2] = 0.0
        if real:
            vhat[0] = 0.0
            half = np.arange(1, grid.M // 2)
            vhat[-half] = np.conj(vhat[half])
    norm = np.sqrt(np.sum(np.abs(vhat) ** 2))
    return vhat / norm


def error_norm(vhat: np.ndarray, ref: np.ndarray, grid: Grid,
               kind: str = "l2", s: float = 1.0) -> float:
    d = np.abs(vhat - ref) ** 2
    if kind == "l2":
        return float(np.sqrt(np.sum(d)))
    if kind == "hs":
        w = (1.0 + np.abs(grid.k)) ** (2 * s)
        return float(np.sqrt(np.sum(w * d)))
    raise ValueError(f"unknown norm {kind!r}")


# --------------------------------------------------------------- running


def run(stepper: Stepper, vhat: np.ndarray, tau: float,
        steps: int) -> np.ndarray:
    for _ in range(steps):
        vhat = stepper(vhat, tau)
    return vhat


def realness_defect(vhat: np.ndarray) -> float:
    """Max deviation of the mode vector from Hermitian symmetry."""
    u = to_phys(vhat)
    return float(np.max(np.abs(u.imag)))


@dataclass
class ConvergenceRow:
    tau: float
    error_l2: float
    error_hs: float
    scheme: str
    equation: str
    s: str
    M: int
    seed: int


@dataclass
class ConvergenceResult:
    rows: list[ConvergenceRow]
    slopes: dict[str, float]  # per scheme, least-squares log-log slope
    notes: list[str]


def fit_slope(taus: Sequence[float], errs: Sequence[float]) -> float:
    mask = [i for i, e in enumerate(errs) if e > 1e-15]
    if len(mask) < 2:
        return float("nan")
    lt = np.log([taus[i] for i in mask])
    le = np.log([errs[i] for i in mask])
    return float(np.polyfit(lt, le, 1)[0])


def converge(equation: str, schemes: Sequence[str], taus: Sequence[float],
             T: float, M: int, s: float | None, seed: int,
             eps: float = 1.0, reference: str | None = None,
             order: int | None = None, regularity: int | None = None,
             hs_exponent: float = 1.0,
             amplitude: float = 1.0) -> ConvergenceResult:
    """Errors at time T against a fine reference run.

    The reference is computed with the named reference scheme (default:
    the first scheme) at step min(taus)/50.  The amplitude rescales the
    unit-norm initial data to tune the nonlinearity strength.
    """
    grid = Grid.make(M)
    real = equation == "kdv"
    v0 = make_initial_data(grid, s, seed, real=real) * amplitude
    ref_name = reference or schemes[0]
    tau_ref = min(taus) / 50.0
    n_ref = max(1, round(T / tau_ref))
    ref_step = make_stepper(ref_name, equation, grid, eps, order, regularity)
    vref = run(ref_step, v0.copy(), T / n_ref, n_ref)
    rows: list[ConvergenceRow] = []
    notes: list[str] = []
    slopes: dict[str, float] = {}
    s_label = "inf" if s is None else str(s)
    for name in schemes:
        stepper = make_stepper(name, equation, grid, eps, order, regularity)
        errs_l2, errs_hs, used_taus = [], [], []
        for tau in taus:
            n = max(1, round(T / tau))
            tau_eff = T / n
            if name == "kg_simp1" and tau_eff > eps ** 2 / 4:
                notes.append(f"{name}: tau={tau_eff:.3e} exceeds eps^2/4"
                             f"={eps ** 2 / 4:.3e}")
            try:
                v = run(stepper, v0.copy(), tau_eff, n)
            except BlowUp:
                notes.append(f"{name}: blow-up at tau={tau_eff:.3e}")
                continue
            el2 = error_norm(v, vref, grid, "l2")
            ehs = error_norm(v, vref, grid, "hs", hs_exponent)
            rows.append(ConvergenceRow(tau_eff, el2, ehs, name, equation,
                                       s_label, M, seed))
            errs_l2.append(el2)
            errs_hs.append(ehs)
            used_taus.append(tau_eff)
        slopes[name] = fit_slope(used_taus, errs_l2)
        slopes[name + ":hs"] = fit_slope(used_taus, errs_hs)
    return ConvergenceResult(rows, slopes, notes)


CSV_FIELDS = ("tau", "error_l2", "error_hs", "scheme", "equation", "s",
              "M", "seed")


def write_csv(path: str, result: ConvergenceResult) -> None:
    """CSV with one row per (scheme, tau) and '#'-prefixed metadata rows
    carrying the fitted slopes and any stability notes."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_FIELDS) + "\n")
        w = csv.writer(fh)
        for row in result.rows:
            w.writerow([f"{row.tau:.10e}", f"{row.error_l2:.10e}",
                        f"{row.error_hs:.10e}", row.scheme, row.equation,
                        row.s, row.M, row.seed])
        for name, slope in result.slopes.items():
            fh.write(f"# slope,{name},{slope:.4f}\n")
        for note in result.notes:
            fh.write(f"# note,{note}\n")


def read_csv(path: str) -> tuple[list[dict], dict[str, float], list[str]]:
    rows, slopes, notes = [], {}, []
    with open(path) as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].strip().split(",")
                if parts[0] == "slope":
                    slopes[parts[1]] = float(parts[2])
                else:
                    notes.append(",".join(parts[1:]))
                continue
            if header is None:
                header = line.split(",")
                continue
            vals = line.split(",")
            rows.append(dict(zip(header, vals)))
    return rows, slopes, notes
