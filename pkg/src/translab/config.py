"""Case and suite configuration files (TOML).

A case file has the tables ``[problem]``, ``[grid]``, ``[solve]``, an optional
``[reference]`` and a list ``[[verify]]`` of checks. Unknown keys are errors.
Data fields accept a number, an expression string, or an inline table
``{random = "polynomial" | "bump", ...}`` expanded deterministically from the
case seed.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .expr import Expression, ExpressionError
from .geometry import DomainSpec, GeometryError, InterfaceGraph
from .grid import TransmissionProblem
from .operators import EllipticOperator, InvalidInput, bellman_min, blend, laplacian, linear, pucci_minus, pucci_plus
from .solve import SolveParams

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


CASE_KEYS = {"name", "seed", "output", "problem", "grid", "solve", "verify", "reference", "envelope"}
PROBLEM_KEYS = {"domain", "psi", "F_plus", "F_minus", "f_plus", "f_minus", "f", "g", "boundary"}
OPERATOR_KEYS = {"kind", "lambda", "lambda_cap", "matrix", "members", "plus", "minus", "weight"}
GRID_KEYS = {"cells", "stencil_radius"}
DOMAIN_KEYS = {"n", "shape"}
PSI_KEYS = {"coeffs"}
SOLVE_KEYS = {"tolerance", "max_sweeps", "order", "damping", "method", "init"}
REFERENCE_KEYS = {"exact"}
ENVELOPE_KEYS = {"field", "epsilon", "rho", "cells"}
RANDOM_KEYS = {"random", "degree", "scale", "center", "width", "height", "sign", "stream"}
CHECKS = {
    "normal_jump": {"max_err"},
    "error": {"max_err"},
    "abp": {"inner_radius", "contact", "C"},
    "max_principle": {"tol"},
    "oscillation": {"radius", "C", "max_mu"},
    "regularity": {"order", "alpha_min", "alpha_max", "window", "jump_factor"},
    "viscosity": {"tol", "side"},
    "c2": {"tol", "frame"},
    "bracket": {"tol"},
}
CHECK_COMMON = {"check", "hard"}


def _unknown(table: dict, allowed: set, where: str):
    extra = sorted(set(table) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _need(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing key '{key}' in {where}")
    return table[key]


# -- random data ---------------------------------------------------------------


def random_polynomial(rng: np.random.Generator, n: int, degree: int = 2, scale: float = 1.0) -> str:
    """Expression string of a polynomial with coefficients uniform in [-scale, scale]."""
    terms = []
    for total in range(degree + 1):
        for powers in _monomials(n, total):
            c = float(rng.uniform(-scale, scale))
            mono = "*".join(f"x{i + 1}^{p}" if p > 1 else f"x{i + 1}" for i, p in enumerate(powers) if p > 0)
            terms.append(f"({c!r})" + (f"*{mono}" if mono else ""))
    return " + ".join(terms)


def _monomials(n: int, total: int):
    if n == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _monomials(n - 1, total - first):
            yield (first,) + rest


def mollified_indicator(center, width: float, height: float = 1.0, sharpness: float = 0.05) -> str:
    """Smoothed indicator of the ball |x - center| < width (a tanh profile)."""
    dist = "+".join(f"(x{i + 1}-({float(c)!r}))^2" for i, c in enumerate(center))
    return f"{float(height)!r}*0.5*(1-tanh((sqrt({dist})-{float(width)!r})/{float(sharpness)!r}))"


def expand_data(spec, n: int, seed: int, key: str):
    """Resolve a data field; random tables use a stream derived from (seed, key)."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return float(spec)
    if isinstance(spec, str):
        try:
            Expression(spec, n)
        except ExpressionError as exc:
            raise ConfigError(f"bad expression for '{key}': {exc}") from exc
        return spec
    if isinstance(spec, dict):
        _unknown(spec, RANDOM_KEYS, f"random data '{key}'")
        stream = spec.get("stream", key)
        rng = np.random.default_rng([int(seed), *[ord(ch) for ch in str(stream)]])
        kind = _need(spec, "random", f"random data '{key}'")
        if kind == "polynomial":
            expr = random_polynomial(rng, n, int(spec.get("degree", 2)), float(spec.get("scale", 1.0)))
        elif kind == "bump":
            center = spec.get("center")
            if center is None:
                center = rng.uniform(-0.5, 0.5, size=n).tolist()
            expr = mollified_indicator(center, float(spec.get("width", 0.3)), float(spec.get("height", 1.0)))
        else:
            raise ConfigError(f"unknown random data kind {kind!r} for '{key}'")
        sign = spec.get("sign")
        if sign == "nonneg":
            expr = f"abs({expr})"
        elif sign == "nonpos":
            expr = f"-abs({expr})"
        elif sign is not None:
            raise ConfigError(f"sign must be 'nonneg' or 'nonpos' for '{key}'")
        return expr
    raise ConfigError(f"data field '{key}' must be a number, expression string or random table")


# -- operators -----------------------------------------------------------------


def build_operator(spec, n: int, where: str) -> EllipticOperator:
    if not isinstance(spec, dict):
        raise ConfigError(f"{where} must be a table")
    _unknown(spec, OPERATOR_KEYS, where)
    kind = _need(spec, "kind", where)
    lam = spec.get("lambda")
    lam_cap = spec.get("lambda_cap")
    try:
        if kind == "laplacian":
            op = laplacian(n)
            if lam is not None or lam_cap is not None:
                op = linear(np.eye(n), lam, lam_cap)
            return op
        if kind == "linear":
            return linear(np.asarray(_need(spec, "matrix", where), dtype=float), lam, lam_cap)
        if kind in ("pucci_minus", "pucci_plus"):
            fn = pucci_minus if kind == "pucci_minus" else pucci_plus
            return fn(float(_need(spec, "lambda", where)), float(_need(spec, "lambda_cap", where)))
        if kind == "bellman_min":
            members = [np.asarray(m, dtype=float) for m in _need(spec, "members", where)]
            return bellman_min(members, float(_need(spec, "lambda", where)), float(_need(spec, "lambda_cap", where)))
        if kind == "blend":
            plus = build_operator(_need(spec, "plus", where), n, f"{where}.plus")
            minus = build_operator(_need(spec, "minus", where), n, f"{where}.minus")
            return blend(plus, minus, _need(spec, "weight", where))
    except (InvalidInput, ExpressionError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: unknown operator kind {kind!r}")


# -- case configs ------------------------------------------------------------------


@dataclass
class CaseConfig:
    name: str
    seed: int
    problem: TransmissionProblem | None
    cells: int
    radius: int
    params: SolveParams
    checks: list = field(default_factory=list)
    exact: str | None = None
    envelope: dict | None = None
    output: str | None = None
    source: Path | None = None
    raw: dict = field(default_factory=dict)


def _solve_params(spec: dict) -> SolveParams:
    _unknown(spec, SOLVE_KEYS, "[solve]")
    kw = {}
    if "tolerance" in spec:
        kw["tolerance"] = float(spec["tolerance"])
    if "max_sweeps" in spec:
        kw["max_sweeps"] = int(spec["max_sweeps"])
    if "order" in spec:
        kw["sweep_order"] = str(spec["order"])
    if "damping" in spec:
        kw["damping"] = float(spec["damping"])
    if "method" in spec:
        kw["method"] = str(spec["method"])
    if "init" in spec:
        kw["init"] = str(spec["init"])
    try:
        return SolveParams(**kw)
    except ValueError as exc:
        raise ConfigError(f"[solve]: {exc}") from exc


def _problem(spec: dict, seed: int) -> TransmissionProblem:
    _unknown(spec, PROBLEM_KEYS, "[problem]")
    dom = spec.get("domain", {})
    psi = spec.get("psi", {})
    for table, keys, where in ((dom, DOMAIN_KEYS, "[problem.domain]"), (psi, PSI_KEYS, "[problem.psi]")):
        if not isinstance(table, dict):
            raise ConfigError(f"{where} must be a table")
        _unknown(table, keys, where)
    n = int(dom.get("n", 2))
    try:
        domain = DomainSpec(n, str(dom.get("shape", "unit_square")))
        iface = InterfaceGraph(n, psi.get("coeffs"))
    except (GeometryError, ValueError) as exc:
        raise ConfigError(f"[problem]: {exc}") from exc
    if "f" in spec and ("f_plus" in spec or "f_minus" in spec):
        raise ConfigError("[problem]: give either 'f' or 'f_plus'/'f_minus'")
    f_common = spec.get("f", 0.0)
    data = {
        key: expand_data(spec.get(key, f_common if key.startswith("f_") else 0.0), n, seed, key)
        for key in ("f_plus", "f_minus", "g", "boundary")
    }
    Fp = build_operator(_need(spec, "F_plus", "[problem]"), n, "[problem.F_plus]")
    Fm = build_operator(spec.get("F_minus", spec["F_plus"]), n, "[problem.F_minus]")
    try:
        return TransmissionProblem(Fp, Fm, data["f_plus"], data["f_minus"], data["g"], iface, data["boundary"], domain)
    except (ValueError, ExpressionError) as exc:
        raise ConfigError(f"[problem]: {exc}") from exc


def _checks(items) -> list[dict]:
    if not isinstance(items, list):
        raise ConfigError("[[verify]] must be an array of tables")
    out = []
    for k, item in enumerate(items):
        where = f"[[verify]] #{k + 1}"
        if not isinstance(item, dict):
            raise ConfigError(f"{where} must be a table")
        name = _need(item, "check", where)
        if name not in CHECKS:
            raise ConfigError(f"{where}: unknown check {name!r} (known: {', '.join(sorted(CHECKS))})")
        _unknown(item, CHECKS[name] | CHECK_COMMON, where)
        out.append(dict(item))
    return out


def case_from_dict(raw: dict, source: Path | None = None, seed: int | None = None) -> CaseConfig:
    _unknown(raw, CASE_KEYS, "case")
    name = str(raw.get("name") or (source.stem if source else "case"))
    case_seed = int(raw.get("seed", 0) if seed is None else seed)
    grid = raw.get("grid", {})
    _unknown(grid, GRID_KEYS, "[grid]")
    cells = int(grid.get("cells", 32))
    if cells < 8 or cells % 2:
        raise ConfigError(f"[grid] cells must be an even integer >= 8, got {cells}")
    radius = int(grid.get("stencil_radius", 1))
    if radius not in (0, 1, 2):
        raise ConfigError(f"[grid] stencil_radius must be 0, 1 or 2, got {radius}")
    params = _solve_params(raw.get("solve", {}))
    problem = _problem(raw["problem"], case_seed) if "problem" in raw else None
    ref = raw.get("reference", {})
    _unknown(ref, REFERENCE_KEYS, "[reference]")
    exact = ref.get("exact")
    if exact is not None:
        n = problem.n if problem else 2
        expand_data(exact, n, case_seed, "exact")
    env = raw.get("envelope")
    if env is not None:
        _unknown(env, ENVELOPE_KEYS, "[envelope]")
        if problem is None:
            _need(env, "field", "[envelope]")
        env = dict(env)
        if "field" in env:
            env["field"] = expand_data(env["field"], 2, case_seed, "field")
    if problem is None and env is None:
        raise ConfigError("case needs a [problem] or an [envelope] table")
    return CaseConfig(name, case_seed, problem, cells, radius, params, _checks(raw.get("verify", [])),
                      exact, env, raw.get("output"), source, raw)


def load_toml(path) -> dict:
    p = Path(path)
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{p}: {exc.strerror}") from exc


def load_case(path, seed: int | None = None) -> CaseConfig:
    return case_from_dict(load_toml(path), Path(path), seed)


# -- suite manifests -------------------------------------------------------------

MANIFEST_KEYS = {"name", "seed", "case", "comparison", "constants"}
CASE_ENTRY_KEYS = {"config", "name", "expect", "seed"}
COMPARISON_KEYS = {"name", "sub", "super", "expect", "tol_factor"}


@dataclass
class SuiteManifest:
    name: str
    seed: int
    cases: list
    comparisons: list
    constants: dict
    root: Path


def load_manifest(path) -> SuiteManifest:
    p = Path(path)
    raw = load_toml(p)
    _unknown(raw, MANIFEST_KEYS, "manifest")
    seed = int(raw.get("seed", 0))
    root = p.parent
    cases, names = [], set()
    for k, item in enumerate(raw.get("case", [])):
        where = f"[[case]] #{k + 1}"
        _unknown(item, CASE_ENTRY_KEYS, where)
        cfg_path = root / _need(item, "config", where)
        cfg = load_case(cfg_path, item.get("seed"))
        name = str(item.get("name", cfg.name))
        cfg.name = name
        expect = item.get("expect", "pass")
        if expect not in ("pass", "fail"):
            raise ConfigError(f"{where}: expect must be 'pass' or 'fail'")
        cases.append((cfg, expect))
        if name in names:
            raise ConfigError(f"duplicate case name {name!r}")
        names.add(name)
    comps = []
    for k, item in enumerate(raw.get("comparison", [])):
        where = f"[[comparison]] #{k + 1}"
        _unknown(item, COMPARISON_KEYS, where)
        name = str(_need(item, "name", where))
        if name in names:
            raise ConfigError(f"duplicate case name {name!r}")
        names.add(name)
        sub = load_case(root / _need(item, "sub", where))
        sup = load_case(root / _need(item, "super", where))
        expect = item.get("expect", "pass")
        if expect not in ("pass", "fail"):
            raise ConfigError(f"{where}: expect must be 'pass' or 'fail'")
        comps.append({"name": name, "sub": sub, "super": sup, "expect": expect,
                      "tol_factor": float(item.get("tol_factor", 10.0))})
    return SuiteManifest(str(raw.get("name", p.stem)), seed, cases, comps, dict(raw.get("constants", {})), root)
