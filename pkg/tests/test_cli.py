import csv
import json
from pathlib import Path

import pytest
import tomli_w
from click.testing import CliRunner

import translab
from translab.cli import main

EXAMPLES = Path(translab.__file__).parent / "data" / "examples"

CASE = {
    "problem": {"F_plus": {"kind": "pucci_minus", "lambda": 1.0, "lambda_cap": 2.0},
                "F_minus": {"kind": "pucci_plus", "lambda": 1.0, "lambda_cap": 2.0},
                "f_plus": "x1^2-x2", "f_minus": "1+x1*x2", "g": "1+0.5*x1", "boundary": "x1^2+0.3*x2"},
    "grid": {"cells": 16},
    "verify": [{"check": "viscosity"}, {"check": "bracket"}, {"check": "abp", "contact": True}],
}


def write(path: Path, data: dict) -> Path:
    path.write_bytes(tomli_w.dumps(data).encode())
    return path


def run(*args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


def case(name, **over):
    data = json.loads(json.dumps(CASE))
    data["name"] = name
    for key, value in over.items():
        table, _, leaf = key.rpartition(".")
        target = data
        for part in filter(None, table.split(".")):
            target = target.setdefault(part, {})
        target[leaf] = value
    return data


def test_closed_form_example(tmp_path):
    res = run("solve", EXAMPLES / "closed_form.toml", "--output-root", tmp_path)
    assert res.exit_code == 0, res.output
    rep = json.loads((tmp_path / "closed_form" / "report.json").read_text())
    assert rep["status"] == "passed" and rep["max_jump_err"] <= 1e-10
    with open(tmp_path / "closed_form" / "solution.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x1", "x2", "side", "u"]
    assert len(rows) == 1 + 65 * 65
    with open(tmp_path / "closed_form" / "residual_history.csv") as fh:
        assert next(csv.reader(fh)) == ["sweep", "residual"]


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("TRANSLAB_OUTPUT_ROOT", str(tmp_path / "env"))
    p = write(tmp_path / "c.toml", case("envcase"))
    assert run("solve", p).exit_code == 0
    assert (tmp_path / "env" / "envcase" / "report.json").exists()


@pytest.mark.parametrize("over", [{"grid.cells": 15}, {"grid.bogus": 1}, {"problem.g": "1 +"}])
def test_config_errors_exit_1(tmp_path, over):
    p = write(tmp_path / "c.toml", case("bad", **over))
    res = run("solve", p, "--output-root", tmp_path)
    assert res.exit_code == 1
    assert "config error" in res.output


def test_toml_syntax_error_reports_line(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("name = 'x'\n\n[grid\ncells = 16\n")
    res = run("solve", p, "--output-root", tmp_path)
    assert res.exit_code == 1
    assert "line 3" in res.output


def test_missing_file_exit_1(tmp_path):
    assert run("solve", tmp_path / "nope.toml", "--output-root", tmp_path).exit_code == 1


def test_nonconverged_exit_3(tmp_path):
    p = write(tmp_path / "c.toml", case("slow", **{"solve.max_sweeps": 1, "solve.init": "zero",
                                                   "solve.method": "sweep"}))
    res = run("solve", p, "--output-root", tmp_path)
    assert res.exit_code == 3
    assert json.loads((tmp_path / "slow" / "report.json").read_text())["status"] == "nonconverged"


def test_failed_hard_check_exit_2(tmp_path):
    p = write(tmp_path / "c.toml", case("wrong", verify=[{"check": "error", "max_err": 1e-10}],
                                        reference={"exact": "0"}))
    res = run("solve", p, "--output-root", tmp_path)
    assert res.exit_code == 2
    rep = json.loads((tmp_path / "wrong" / "report.json").read_text())
    assert rep["failed_checks"] == ["error"]


def test_soft_check_does_not_fail(tmp_path):
    p = write(tmp_path / "c.toml", case("soft", verify=[{"check": "error", "max_err": 1e-10, "hard": False}],
                                        reference={"exact": "0"}))
    assert run("solve", p, "--output-root", tmp_path).exit_code == 0


def test_refine_closed_form_is_exact(tmp_path):
    res = run("refine", EXAMPLES / "closed_form.toml", "--levels", "8,16,32", "--output-root", tmp_path)
    assert res.exit_code == 0, res.output
    rep = json.loads((tmp_path / "closed_form" / "refinement" / "report.json").read_text())
    assert rep["error_order"] == "exact" and rep["jump_error_order"] == "exact"
    with open(tmp_path / "closed_form" / "refinement" / "refinement.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["cells", "h", "error", "jump_error"] and len(rows) == 4


def test_refine_needs_three_levels(tmp_path):
    res = run("refine", EXAMPLES / "closed_form.toml", "--levels", "8,16", "--output-root", tmp_path)
    assert res.exit_code == 1


def test_envelope_demo(tmp_path):
    res = run("envelope-demo", EXAMPLES / "envelope.toml", "--output-root", tmp_path)
    assert res.exit_code == 0, res.output
    (out,) = list(tmp_path.glob("*/envelope"))
    with open(out / "envelope.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["x1", "x2", "u", "upper", "lower", "convex", "contact"]
    rep = json.loads((out / "report.json").read_text())
    assert rep["exit_code"] == 0


@pytest.mark.parametrize("name", ["smooth_flat", "curved", "pucci_random"])
def test_examples_pass(tmp_path, name):
    assert run("solve", EXAMPLES / f"{name}.toml", "--output-root", tmp_path).exit_code == 0


def test_empty_manifest(tmp_path):
    m = write(tmp_path / "m.toml", {"name": "empty"})
    res = run("suite", m, "--output-root", tmp_path / "out")
    assert res.exit_code == 0
    summary = json.loads((tmp_path / "out" / "empty" / "suite_summary.json").read_text())
    assert summary["cases"] == [] and summary["comparisons"] == [] and summary["unexpected"] == []


def small_suite(root: Path, bad_pair: bool = False) -> Path:
    write(root / "a.toml", case("a"))
    write(root / "b.toml", case("b", **{"problem.g": "1.5+0.5*x1", "problem.F_plus.kind": "pucci_plus"}))
    lo = case("lo", **{"problem.boundary": "x1^2+0.3*x2-0.2", "problem.g": "1.2+0.5*x1"})
    write(root / "lo.toml", lo)
    comps = [{"name": "pair", "sub": "lo.toml", "super": "a.toml"}]
    if bad_pair:
        comps.append({"name": "reversed", "sub": "a.toml", "super": "lo.toml"})
    return write(root / "m.toml", {"name": "small", "seed": 5,
                                   "case": [{"config": "a.toml"}, {"config": "b.toml"}],
                                   "comparison": comps})


def test_suite_flags_violated_pair(tmp_path):
    m = small_suite(tmp_path, bad_pair=True)
    res = run("suite", m, "--output-root", tmp_path / "out")
    assert res.exit_code == 2
    summary = json.loads((tmp_path / "out" / "small" / "suite_summary.json").read_text())
    assert summary["unexpected"] == ["reversed"]
    assert "reversed" in res.output


def test_suite_expected_failure_is_success(tmp_path):
    small_suite(tmp_path, bad_pair=True)
    raw = {"name": "small", "case": [{"config": "a.toml"}],
           "comparison": [{"name": "reversed", "sub": "a.toml", "super": "lo.toml", "expect": "fail"}]}
    m = write(tmp_path / "m2.toml", raw)
    assert run("suite", m, "--output-root", tmp_path / "out").exit_code == 0


def test_suite_summary_schema(tmp_path):
    m = small_suite(tmp_path)
    assert run("suite", m, "--output-root", tmp_path / "out").exit_code == 0
    s = json.loads((tmp_path / "out" / "small" / "suite_summary.json").read_text())
    assert set(s) == {"schema_version", "suite", "seed", "cases", "comparisons", "constants", "unexpected",
                      "exit_code"}
    assert s["schema_version"] == 1 and s["seed"] == 5
    assert set(s["cases"][0]) >= {"name", "exit_code", "expect", "as_expected"}
    assert set(s["comparisons"][0]) >= {"name", "expect", "as_expected", "violation", "tol", "converged", "passed"}
    assert set(s["constants"]) >= {"abp_C", "abp_C_contact", "abp_coverage", "mu_suite", "mu_max"}
    rep = json.loads((tmp_path / "out" / "small" / "a" / "report.json").read_text())
    assert set(rep) >= {"schema_version", "name", "seed", "grid", "problem", "solve", "checks", "status",
                        "max_jump_err", "exit_code"}


def _tree(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_suite_outputs_byte_identical(tmp_path):
    m = small_suite(tmp_path)
    trees = []
    for k, jobs in enumerate((1, 1, 2)):
        out = tmp_path / f"out{k}"
        assert run("suite", m, "--output-root", out, "--jobs", jobs).exit_code == 0
        trees.append(_tree(out))
    assert trees[0] == trees[1] == trees[2]
    assert len(trees[0]) > 5
