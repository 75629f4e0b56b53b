"""Command-line interface: listings, derivation output, verification
suites, runs, sweeps, exit codes, and config precedence."""

from __future__ import annotations

import json
import re

import numpy as np
import pytest

from artifact.cli import main, parse_taus, resolve_scheme
from artifact.scheme_emitter import UnknownScheme
from artifact.solvers import load_state


def run_cli(capsys, *argv) -> tuple[int, str, str]:
    rc = main(list(argv))
    cap = capsys.readouterr()
    return rc, cap.out, cap.err


# ----------------------------------------------------------------- trees


def test_trees_listing_symmetry_factors(capsys):
    rc, out, _ = run_cli(capsys, "trees", "--eq", "nls", "--order", "1")
    assert rc == 0
    svals = [int(m) for m in re.findall(r"S=(\d+)", out)]
    assert svals == [1, 2, 2, 4]
    assert out.count("f_dom") == 3 and out.count("Lr_low") == 3


def test_trees_first_order_single_shape(capsys):
    rc, out, _ = run_cli(capsys, "trees", "--eq", "nls", "--order", "0")
    assert rc == 0
    assert [int(m) for m in re.findall(r"S=(\d+)", out)] == [1, 2]


# ---------------------------------------------------------------- derive


def test_derive_kdv_first_order_structure(capsys):
    rc, out, _ = run_cli(capsys, "derive", "--eq", "kdv", "--order", "0")
    assert rc == 0
    # free flow, quadratic interaction, inverse-derivative multipliers
    assert "factors[v1 v2]" in out
    assert '"kind": "inv"' in out and '"poly": "k"' in out
    assert '"re": "1/6"' in out and '"re": "-1/6"' in out


def test_derive_json_round_trips(capsys):
    rc, out, _ = run_cli(capsys, "derive", "--eq", "nls", "--order", "0",
                         "--regularity", "1", "--format", "json")
    assert rc == 0
    doc = json.loads(out)
    assert doc["equation"] == "nls" and doc["order"] == 0
    assert doc["physical"]["node"] == "sum"
    assert len(doc["entries"]) == 2


def test_derive_reports_non_nested_physical(capsys):
    rc, out, _ = run_cli(capsys, "derive", "--eq", "kdv", "--order", "1")
    assert rc == 0
    assert "physical: unavailable" in out


def test_derive_deterministic(capsys):
    args = ("derive", "--eq", "nls", "--order", "1", "--regularity", "2",
            "--format", "json")
    _, first, _ = run_cli(capsys, *args)
    _, second, _ = run_cli(capsys, *args)
    assert first == second


def test_derive_kg_higher_order_rejected(capsys):
    rc, _, err = run_cli(capsys, "derive", "--eq", "kg", "--order", "1")
    assert rc == 1
    assert "first-order" in err


# ---------------------------------------------------------------- verify


def test_verify_all_passes(capsys):
    rc, out, _ = run_cli(capsys, "verify", "--all")
    assert rc == 0
    lines = [ln for ln in out.splitlines() if ln]
    assert all(ln.startswith("PASS") for ln in lines)
    for module in ("freq-algebra", "trees", "hopf", "oscillatory",
                   "characters", "scheme-emitter"):
        assert any(f"{module}:" in ln for ln in lines)


def test_verify_named_subset(capsys):
    rc, out, _ = run_cli(capsys, "verify", "hopf")
    assert rc == 0
    assert "hopf:" in out and "freq-algebra" not in out


def test_verify_unknown_suite(capsys):
    rc, _, err = run_cli(capsys, "verify", "nope")
    assert rc == 1
    assert "unknown suites" in err


# ----------------------------------------------------------------- solve


def test_solve_writes_snapshot(tmp_path, capsys):
    out_path = str(tmp_path / "state.bin")
    rc, out, _ = run_cli(capsys, "solve", "--eq", "nls", "--scheme", "res1",
                         "--M", "32", "--tau", "0.01", "--Tend", "0.05",
                         "--out", out_path)
    assert rc == 0
    assert "steps=5" in out
    st = load_state(out_path)
    assert st.grid.M == 32 and st.t == 0.05


def test_solve_blow_up_exit_code(capsys):
    with np.errstate(all="ignore"):
        rc, _, err = run_cli(capsys, "solve", "--eq", "nls", "--scheme",
                             "classic1", "--M", "32", "--tau", "10",
                             "--Tend", "10000")
    assert rc == 2
    assert "blow-up" in err


def test_solve_requires_scheme(capsys):
    rc, _, err = run_cli(capsys, "solve", "--eq", "nls")
    assert rc == 1
    assert "scheme" in err


# -------------------------------------------------------------- converge


def test_converge_row_count_and_determinism(tmp_path, capsys):
    args = ("converge", "--eq", "nls", "--scheme", "res2", "--s", "2",
            "--M", "32", "--Tend", "0.02",
            "--taus", "geometric(1e-3,1e-1,9)")
    rc, first, err = run_cli(capsys, *args)
    assert rc == 0
    data_rows = [ln for ln in first.splitlines()
                 if ln and not ln.startswith(("#", "tau,"))]
    assert len(data_rows) == 9
    assert all(",nls_res2_low,nls," in ln for ln in data_rows)
    assert "slope nls_res2_low" in err
    rc, second, _ = run_cli(capsys, *args)
    assert first == second


def test_converge_needs_taus(capsys):
    rc, _, err = run_cli(capsys, "converge", "--eq", "nls",
                         "--scheme", "res1")
    assert rc == 1
    assert "taus" in err


def test_bad_flag_value_exits_one(capsys):
    rc, _, _ = run_cli(capsys, "converge", "--eq", "heat",
                       "--scheme", "res1", "--taus", "1e-2")
    assert rc == 1


# ----------------------------------------------------------------- config


def test_config_file_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("eq = kdv\norder = 1\n")
    rc, out, _ = run_cli(capsys, "trees", "--config", str(cfg),
                         "--order", "0")
    assert rc == 0
    assert "# kdv trees, order 0" in out  # flag beats config, config beats default


# ---------------------------------------------------------------- helpers


def test_parse_taus():
    got = parse_taus("geometric(1e-3,1e-1,3)")
    assert np.allclose(got, [1e-3, 1e-2, 1e-1])
    assert parse_taus("0.5, 0.25") == [0.5, 0.25]


def test_resolve_scheme():
    assert resolve_scheme("nls", "res1", None) == "nls_res1"
    assert resolve_scheme("kdv", "res2", None) == "kdv_res2"
    assert resolve_scheme("nls", "res2", 2.0) == "nls_res2_low"
    assert resolve_scheme("nls", "res2", None) == "nls_res2_mid"
    assert resolve_scheme("nls", "res2", 5.0) == "nls_res2_smooth"
    assert resolve_scheme("nls", "strang", None) == "strang"
    with pytest.raises(UnknownScheme):
        resolve_scheme("nls", "bogus", None)
