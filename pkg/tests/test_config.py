import numpy as np
import pytest
import tomli_w

from translab.config import (ConfigError, build_operator, case_from_dict, expand_data, load_case, load_manifest,
                             mollified_indicator, random_polynomial)
from translab.expr import Expression

BASE = {
    "name": "c",
    "problem": {"F_plus": {"kind": "laplacian"}, "F_minus": {"kind": "laplacian"},
                "f": 0.0, "g": 1.0, "boundary": "x1"},
}


def with_(path, value):
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in BASE.items()}
    table = raw
    for key in path[:-1]:
        table = table.setdefault(key, {})
    table[path[-1]] = value
    return raw


def test_minimal_case():
    cfg = case_from_dict(BASE)
    assert cfg.cells == 32 and cfg.radius == 1
    assert cfg.problem.n == 2 and cfg.problem.iface.is_flat


@pytest.mark.parametrize("path,value", [
    (("bogus",), 1),
    (("problem", "bogus"), 1),
    (("grid", "bogus"), 1),
    (("solve", "bogus"), 1),
    (("problem", "psi"), {"coeffs": [0, 0, 0.1], "extra": 1}),
    (("problem", "domain"), {"n": 2, "radius": 1}),
    (("problem", "F_plus"), {"kind": "laplacian", "lam": 1}),
    (("problem", "g"), {"random": "polynomial", "deg": 2}),
    (("reference",), {"exact": "x1", "other": 1}),
])
def test_unknown_keys_rejected(path, value):
    with pytest.raises(ConfigError, match="unknown"):
        case_from_dict(with_(path, value))


@pytest.mark.parametrize("cells", [7, 6, 0, 33])
def test_bad_cells(cells):
    with pytest.raises(ConfigError, match="cells"):
        case_from_dict(with_(("grid", "cells"), cells))


def test_bad_stencil_radius():
    with pytest.raises(ConfigError, match="stencil_radius"):
        case_from_dict(with_(("grid", "stencil_radius"), 3))


@pytest.mark.parametrize("spec", [
    {"kind": "nope"},
    {"kind": "pucci_minus", "lambda": 2.0, "lambda_cap": 1.0},
    {"kind": "linear", "matrix": [[1.0, 2.0], [0.0, 1.0]]},
    "laplacian",
])
def test_bad_operators(spec):
    with pytest.raises(ConfigError):
        build_operator(spec, 2, "[problem.F_plus]")


def test_operator_kinds():
    # the Laplacian is the linear operator with the identity matrix
    for spec, kind in (({"kind": "laplacian"}, "linear"),
                       ({"kind": "pucci_minus", "lambda": 1, "lambda_cap": 2}, "pucci_minus"),
                       ({"kind": "pucci_plus", "lambda": 1, "lambda_cap": 2}, "pucci_plus"),
                       ({"kind": "linear", "matrix": [[1.0, 0.1], [0.1, 1.0]]}, "linear")):
        assert build_operator(spec, 2, "op").kind == kind


def test_f_conflict_and_bad_expression():
    raw = with_(("problem", "f_plus"), 1.0)
    with pytest.raises(ConfigError):
        case_from_dict(raw)
    with pytest.raises(ConfigError, match="bad expression"):
        case_from_dict(with_(("problem", "g"), "1 +"))


def test_random_data_deterministic():
    spec = {"random": "polynomial", "degree": 2, "scale": 0.5}
    a = expand_data(spec, 2, 11, "f_plus")
    assert a == expand_data(spec, 2, 11, "f_plus")
    assert a != expand_data(spec, 2, 12, "f_plus")
    assert a != expand_data(spec, 2, 11, "f_minus")
    assert a == expand_data({**spec, "stream": "f_plus"}, 2, 11, "other")


def test_random_data_sign():
    X = np.random.default_rng(0).uniform(-1, 1, (200, 2))
    for sign, test in (("nonneg", lambda v: v >= 0), ("nonpos", lambda v: v <= 0)):
        expr = expand_data({"random": "polynomial", "sign": sign}, 2, 3, "g")
        assert np.all(test(Expression(expr, 2)(X)))
    with pytest.raises(ConfigError):
        expand_data({"random": "polynomial", "sign": "up"}, 2, 3, "g")
    with pytest.raises(ConfigError):
        expand_data({"random": "walk"}, 2, 3, "g")
    with pytest.raises(ConfigError):
        expand_data([1, 2], 2, 3, "g")


def test_random_polynomial_and_bump():
    rng = np.random.default_rng(0)
    e = Expression(random_polynomial(rng, 3, 2, 1.0), 3)
    assert np.all(np.isfinite(e(np.zeros((1, 3)))))
    bump = Expression(mollified_indicator([0.0, 0.0], 0.3, 2.0), 2)
    assert bump(np.array([[0.0, 0.0]]))[0] == pytest.approx(2.0, rel=1e-3)
    assert bump(np.array([[0.9, 0.0]]))[0] == pytest.approx(0.0, abs=1e-3)


def test_seed_override():
    raw = with_(("problem", "g"), {"random": "polynomial"})
    a = case_from_dict(raw, seed=1)
    b = case_from_dict(raw, seed=2)
    assert a.seed == 1 and b.seed == 2
    X = np.array([[0.3, 0.2]])
    assert a.problem.g(X)[0] != b.problem.g(X)[0]


def test_load_toml_errors(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("name = 'x'\n[problem\n")
    with pytest.raises(ConfigError, match="line 2"):
        load_case(p)
    with pytest.raises(ConfigError):
        load_case(tmp_path / "missing.toml")


def _write(path, data):
    path.write_bytes(tomli_w.dumps(data).encode())


def test_manifest(tmp_path):
    _write(tmp_path / "a.toml", BASE)
    _write(tmp_path / "m.toml", {"name": "m", "case": [{"config": "a.toml"}, {"config": "a.toml", "name": "b"}],
                                 "comparison": [{"name": "p", "sub": "a.toml", "super": "a.toml"}]})
    m = load_manifest(tmp_path / "m.toml")
    assert [c.name for c, _ in m.cases] == ["c", "b"]
    assert m.comparisons[0]["tol_factor"] == 10.0


@pytest.mark.parametrize("manifest", [
    {"case": [{"config": "a.toml"}, {"config": "a.toml"}]},
    {"case": [{"config": "a.toml"}], "comparison": [{"name": "c", "sub": "a.toml", "super": "a.toml"}]},
    {"case": [{"config": "a.toml", "expect": "maybe"}]},
    {"case": [{"config": "a.toml", "weight": 1}]},
    {"cases": []},
])
def test_manifest_errors(tmp_path, manifest):
    _write(tmp_path / "a.toml", BASE)
    _write(tmp_path / "m.toml", manifest)
    with pytest.raises(ConfigError):
        load_manifest(tmp_path / "m.toml")
