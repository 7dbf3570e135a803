import io
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from helpers import CORPUS, GOLDEN
from qert import bb84, cli
from qert.ert import RuntimeExpr
from qert.operators import Observable, PartialDensityMatrix, StateSpaceLayout

GOLDEN_CLI = GOLDEN / "cli"


def run(*argv, env_seed=None, monkeypatch=None):
    out = io.StringIO()
    if env_seed is not None:
        monkeypatch.setenv("QERT_SEED", str(env_seed))
    try:
        code = cli.main([str(a) for a in argv], out)
    except SystemExit as e:
        code = e.code
    return code, out.getvalue()


def run_json(*argv, **kw):
    code, text = run(*argv, "--json", **kw)
    return code, json.loads(text)


def stable(report):
    report = dict(report)
    report.pop("wall_time", None)
    report.pop("version", None)
    return report


@pytest.fixture
def geo_invariant(tmp_path):
    inv = RuntimeExpr(1.0, ((6.0, Observable(np.diag([0.0, 1.0]), ("q",))),))
    path = tmp_path / "inv.json"
    path.write_text(json.dumps(inv.to_json()))
    return path


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv("QERT_SEED", raising=False)


# -- golden reports, one per exit code

GOLDEN_CASES = {
    "analyze_skip": (("analyze", CORPUS / "skip.qgcl"), 0),
    "analyze_geometric": (("analyze", CORPUS / "geometric.qgcl"), 0),
    "analyze_diverge": (("analyze", CORPUS / "diverge.qgcl", "--max-unroll", "50"), 3),
    "analyze_undeclared": (("analyze", GOLDEN / "diagnostics" / "undeclared.qgcl"), 2),
    "bb84_m3_dim3": (("bb84", "--m", "3", "--dim", "3"), 2),
    "simulate_skip": (("simulate", CORPUS / "skip.qgcl", "--trials", "10"), 0),
}


def _rounded(x):
    if isinstance(x, float):
        return round(x, 9)
    if isinstance(x, dict):
        return {k: _rounded(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_rounded(v) for v in x]
    return x


@pytest.mark.parametrize("name", sorted(GOLDEN_CASES))
def test_golden_reports(name):
    argv, code = GOLDEN_CASES[name]
    got_code, report = run_json(*argv)
    assert got_code == code
    expected = json.loads((GOLDEN_CLI / f"{name}.json").read_text())
    assert _rounded(stable(report)) == expected


def test_golden_values():
    # the frozen reports carry the hand-derived numbers
    assert json.loads((GOLDEN_CLI / "analyze_skip.json").read_text())["value"] == 1.0
    assert abs(json.loads((GOLDEN_CLI / "analyze_geometric.json").read_text())["value"] - 6.0) < 1e-8
    sim = json.loads((GOLDEN_CLI / "simulate_skip.json").read_text())
    assert sim["mean"] == 1.0 and sim["std_error"] == 0.0


def test_bb84_failure_exits_4(monkeypatch):
    monkeypatch.setattr(bb84, "closed_form", lambda m, cost=None: 16.0)
    code, report = run_json("bb84", "--m", "1", "--trials", "0")
    assert code == 4 and not report["passed"]
    assert {c["name"] for c in report["checks"] if not c["passed"]} == {"backward", "forward"}


# -- analyze

def test_analyze_text():
    code, text = run("analyze", CORPUS / "skip.qgcl")
    assert code == 0 and "backward: 1.0" in text and "converged" in text


def test_analyze_diverge_reports_lower_bound():
    code, report = run_json("analyze", CORPUS / "diverge.qgcl", "--max-unroll", "20")
    assert code == 3 and not report["converged"]
    assert report["evaluators"]["backward"]["lower_bound"]
    assert report["value"] == pytest.approx(40.0)


def test_analyze_affine():
    code, report = run_json("analyze", CORPUS / "teleport.qgcl", "--mode", "affine")
    assert code == 0 and report["value"] == pytest.approx(10.0)
    assert run("analyze", CORPUS / "geometric.qgcl", "--mode", "affine")[0] == 2


def test_analyze_with_cost_file(tmp_path):
    cost = tmp_path / "cost.json"
    cost.write_text(json.dumps({"skip": 2.5}))
    code, report = run_json("analyze", CORPUS / "skip.qgcl", "--cost", cost)
    assert code == 0 and report["value"] == 2.5


def test_missing_cost_label_is_invalid(tmp_path):
    cost = tmp_path / "cost.json"
    cost.write_text(json.dumps({"skip": 1, "default": None}))
    code, _ = run("analyze", CORPUS / "geometric.qgcl", "--cost", cost)
    assert code == 2


@pytest.mark.parametrize("argv", [
    ("analyze", "/nonexistent.qgcl"),
    ("analyze", CORPUS / "skip.qgcl", "--epsilon", "0"),
    ("analyze", CORPUS / "skip.qgcl", "--mode", "nope"),
    ("simulate", CORPUS / "skip.qgcl", "--trials", "0"),
    ("bb84", "--m", "0"),
    ("frobnicate",),
])
def test_invalid_input_exits_2(argv):
    assert run(*argv)[0] == 2


def test_syntax_error_json_diagnostics(tmp_path):
    bad = tmp_path / "bad.qgcl"
    bad.write_text("q := ;")
    code, report = run_json("parse", bad)
    assert code == 2 and report["diagnostics"][0]["code"] == "E_PARSE"


# -- states

def test_state_variants(tmp_path):
    prog = CORPUS / "teleport.qgcl"
    for state in ("zero", "|1,0,0>", "s=1"):
        code, report = run_json("analyze", prog, "--state", state)
        assert code == 0 and report["value"] == pytest.approx(10.0)
    lay = StateSpaceLayout((("s", 2), ("a", 2), ("b", 2)))
    rho = np.asarray(PartialDensityMatrix.basis(lay, {"s": 1}).matrix) * 0.5
    path = tmp_path / "rho.json"
    path.write_text(json.dumps({"matrix": cli._matrix_to_json(rho)}))
    code, report = run_json("analyze", prog, "--state", path)
    # six unconditional steps and the first measurement cost 1 each whatever the trace;
    # the branch, the second measurement and its branch are weighted by the mass 1/2
    assert code == 0 and report["value"] == pytest.approx(6 + 1 + 0.5 * 3)


def test_parse_state_values():
    lay = StateSpaceLayout((("k", 3), ("q", 2)))
    rho = cli.parse_state("k=2", lay)
    assert rho.matrix[4, 4] == 1
    rho = cli.parse_state("|1, 1>", lay)
    assert rho.matrix[3, 3] == 1


@pytest.mark.parametrize("state", ["|0>", "k=3", "x=0", "k=a", "/nonexistent.json"])
def test_bad_states(state):
    lay = StateSpaceLayout((("k", 3), ("q", 2)))
    with pytest.raises(cli.UsageError):
        cli.parse_state(state, lay)


def test_state_must_be_positive(tmp_path):
    path = tmp_path / "rho.json"
    path.write_text(json.dumps({"matrix": cli._matrix_to_json(np.diag([1.5, -0.5]))}))
    assert run("analyze", CORPUS / "skip.qgcl", "--state", path)[0] == 2


# -- check-invariant

def test_check_invariant_verified(geo_invariant):
    code, report = run_json("check-invariant", CORPUS / "geometric.qgcl", "--invariant", geo_invariant)
    assert code == 0 and report["status"] == "verified" and report["witness"] is None


def test_check_invariant_refuted_with_witness(tmp_path):
    path = tmp_path / "zero.json"
    path.write_text((CORPUS / "zero_invariant.json").read_text())
    code, report = run_json("check-invariant", CORPUS / "geometric.qgcl", "--invariant", path)
    assert code == 0 and report["status"] == "refuted"
    w = cli._matrix_from_json(report["witness"])
    assert w.shape == (2, 2) and np.trace(w).real <= 1 + 1e-9


def test_check_invariant_bb84(tmp_path):
    inst = bb84.build(1, 3)
    path = tmp_path / "inv.json"
    path.write_text(json.dumps(bb84.appendix_invariant(inst).to_json()))
    code, report = run_json("check-invariant", CORPUS / "bb84_m1_d3.qgcl", "--invariant", path)
    assert code == 0 and report["status"] == "verified" and abs(report["margin"]) < 1e-8


def test_check_invariant_nested_loop_downgrades(tmp_path, geo_invariant):
    prog = tmp_path / "nested.qgcl"
    prog.write_text("var q : bool;\nwhile M_std[q] = 1 do q := |0>; while M_std[q] = 1 do skip od od")
    code, report = run_json("check-invariant", prog, "--invariant", geo_invariant)
    assert code == 0 and report["mode"] == "sample" and report["warnings"]
    assert report["status"] in ("refuted", "unknown")


def test_check_invariant_needs_a_loop(geo_invariant):
    assert run("check-invariant", CORPUS / "skip.qgcl", "--invariant", geo_invariant)[0] == 2


# -- simulate

def test_simulate_histogram(tmp_path):
    out = tmp_path / "hist.csv"
    code, report = run_json("simulate", CORPUS / "geometric.qgcl", "--trials", "500", "--histogram", out)
    assert code == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "cost,count"
    assert sum(int(r.split(",")[1]) for r in rows[1:]) == 500
    assert sum(n for _, n in report["histogram"]) == 500


def test_simulate_diverge_warns():
    code, report = run_json("simulate", CORPUS / "diverge.qgcl", "--trials", "20", "--max-steps", "100")
    assert code == 0 and report["truncated_trials"] == 20 and report["warnings"]


def test_seed_env_overrides_flag(monkeypatch):
    args = ("simulate", CORPUS / "geometric.qgcl", "--trials", "200")
    _, a = run_json(*args, "--seed", "5")
    _, b = run_json(*args, "--seed", "999", env_seed=5, monkeypatch=monkeypatch)
    assert b["seed"] == 5 and stable(a) == stable(b)


def test_bad_env_seed(monkeypatch):
    monkeypatch.setenv("QERT_SEED", "abc")
    assert run("simulate", CORPUS / "skip.qgcl")[0] == 2


# -- bb84

def test_bb84_m1(tmp_path):
    emitted = tmp_path / "bb84.qgcl"
    code, report = run_json("bb84", "--m", "1", "--trials", "2000", "--emit", emitted)
    assert code == 0 and report["passed"] and report["closed_form"] == 15
    assert emitted.read_text() == bb84.source(1, 3)


def test_parse_dump():
    code, report = run_json("parse", CORPUS / "geometric.qgcl", "--check")
    assert code == 0 and "while M_std[q] = 1 do" in report["ast"]


# -- determinism across processes

def _cli_json(argv, seed):
    env = dict(os.environ, QERT_SEED=str(seed))
    res = subprocess.run([sys.executable, "-m", "qert.cli", *map(str, argv), "--json"],
                         capture_output=True, text=True, env=env, check=False)
    report = json.loads(res.stdout)
    report.pop("wall_time", None)
    return res.returncode, json.dumps(report, indent=2, sort_keys=True)


def test_byte_identical_reports():
    argv = ("simulate", CORPUS / "coin_case.qgcl", "--trials", "300")
    first = _cli_json(argv, 7)
    assert first == _cli_json(argv, 7)
    assert first != _cli_json(argv, 8)
