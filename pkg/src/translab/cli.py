"""Command line front end: single runs, refinement studies, suites and envelope demos.

Exit codes: 0 success, 1 configuration error, 2 a hard check failed,
3 the solver did not converge.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import SCHEMA_VERSION, CaseConfig, ConfigError, load_case, load_manifest
from .envelopes import EnvelopeParams, contact_set, convex_envelope, lower_envelope_xprime, upper_envelope_xprime
from .expr import Expression
from .grid import INTERFACE, OUTSIDE, GridField, SchemeInapplicable, build_grid, make_scheme
from .solve import SolveError, solve
from . import verify as V

OUTPUT_ENV = "TRANSLAB_OUTPUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_NONCONVERGED = 0, 1, 2, 3


def resolve_output_root(override: str | None = None) -> Path:
    return Path(override or os.environ.get(OUTPUT_ENV, "runs"))


def _num(x: float) -> str:
    return "%.17g" % x


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def write_json(path: Path, data: dict):
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def write_solution_csv(path: Path, field: GridField, sides: np.ndarray):
    grid = field.grid
    active = np.nonzero(grid.kind != OUTSIDE)[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(grid.n)] + ["side", "u"])
        for i in active:
            w.writerow([_num(v) for v in grid.coords[i]] + [int(sides[i]), _num(field.values[i])])


def write_history_csv(path: Path, history, sweeps):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sweep", "residual"])
        for k, r in zip(sweeps, history):
            w.writerow([k, _num(r)])


def _sides(grid) -> np.ndarray:
    """+1 plus side, -1 minus side, 0 interface; boundary nodes by geometry."""
    s = np.where(grid.iface.signed_height(grid.coords) >= 0, 1, -1)
    s[grid.kind == INTERFACE] = 0
    return s


# -- checks --------------------------------------------------------------------------


def run_check(spec: dict, cfg: CaseConfig, grid, scheme, rep) -> dict:
    name = spec["check"]
    problem = cfg.problem
    u = rep.field
    out = {"check": name, "hard": bool(spec.get("hard", True))}
    try:
        if name == "normal_jump":
            jr = V.measure_normal_jump(problem, u)
            lim = float(spec.get("max_err", 1e-8))
            out.update(max_err=jr.max_err, limit=lim, passed=jr.max_err <= lim)
        elif name == "error":
            if cfg.exact is None:
                raise ConfigError("check 'error' needs [reference] exact")
            act = grid.kind != OUTSIDE
            err = float(np.max(np.abs(u.values[act] - Expression(cfg.exact, grid.n)(grid.coords[act]))))
            lim = float(spec.get("max_err", 1e-8))
            out.update(max_err=err, limit=lim, passed=err <= lim)
        elif name == "abp":
            ar = V.check_abp(problem, u, spec.get("inner_radius"), bool(spec.get("contact", False)))
            out.update(ar.as_dict())
            ok = True
            if "C" in spec:
                C = float(spec["C"])
                ok = ar.covered(C)
                if ar.contact_restricted is not None:
                    ok = ok and ar.covered(C, restricted=True)
            if ar.contact_restricted is not None:
                ok = ok and all(ar.contact_restricted[k] <= ar.rhs_parts[k] + 1e-15 for k in ar.rhs_parts)
            out["passed"] = bool(ok)
        elif name == "max_principle":
            mp = V.check_maximum_principle(problem, u, float(spec.get("tol", 1e-8)))
            out.update(min_u=mp.min_u, tol=mp.tol, passed=mp.passed)
        elif name == "oscillation":
            orp = V.measure_oscillation_decay(problem, u, None, float(spec.get("radius", 1.0)), float(spec.get("C", 0.0)))
            lim = float(spec.get("max_mu", 1.0))
            out.update(osc_inner=orp.osc_inner, osc_outer=orp.osc_outer, data_term=orp.data_term,
                       mu_hat=orp.mu_hat, C=orp.C, radius=orp.radius, passed=orp.mu_hat < lim)
        elif name == "regularity":
            order = int(spec.get("order", 1))
            window = tuple(spec["window"]) if "window" in spec else None
            fit = V.fit_regularity_exponent(u, None, order, window)
            out.update(alpha_hat=fit.alpha_hat, slope=fit.slope, fit_r2=fit.fit_r2, fit_tol=fit.fit_tol,
                       scales=fit.scales, osc_residual=fit.osc_residual, resolution_limited=fit.resolution_limited)
            ok = float(spec.get("alpha_min", -math.inf)) <= fit.alpha_hat <= float(spec.get("alpha_max", math.inf))
            if order >= 1:
                jumps = V.fitted_normal_jumps(fit)
                lim = V.jump_limit(fit)
                g0 = float(problem.g_on_interface(np.zeros((1, grid.n)))[0])
                out.update(normal_jumps=jumps, jump_limit=lim, g0=g0)
                if "jump_factor" in spec:
                    ok = ok and abs(lim - g0) <= float(spec["jump_factor"]) * fit.fit_tol
            out["passed"] = bool(ok)
        elif name == "viscosity":
            tol = float(spec.get("tol", 10.0 * rep.tolerance))
            sides = [spec["side"]] if "side" in spec else ["sub", "super"]
            counts = {}
            for side in sides:
                counts[side] = len(V.check_viscosity_inequalities(u, problem, tol, side, scheme))
            out.update(tol=tol, violations=counts, passed=all(c == 0 for c in counts.values()))
        elif name == "c2":
            fit = V.fit_regularity_exponent(u, None, 2)
            c2 = V.check_c2_matrix_relations(fit, problem, None, spec.get("tol"),
                                             scheme if spec.get("frame", True) else None)
            out.update(residuals=c2.residuals, tolerances=c2.tolerances, passed=c2.passed)
        elif name == "bracket":
            if rep.underline_u is None:
                raise ConfigError("check 'bracket' needs solve.init = 'barrier'")
            tol = float(spec.get("tol", 10.0 * rep.tolerance))
            lo = float(np.max(rep.underline_u.values - u.values))
            hi = float(np.max(u.values - rep.overline_u.values))
            out.update(below=lo, above=hi, tol=tol, passed=lo <= tol and hi <= tol)
    except (V.HypothesisError, V.ResolutionError) as exc:
        out.update(passed=False, error=f"{type(exc).__name__}: {exc}")
    return out


# -- single case ------------------------------------------------------------------


def run_case(cfg: CaseConfig, out_dir: Path) -> tuple[int, dict]:
    """Solve one case, run its checks and write the artifacts; returns (exit code, report)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {"schema_version": SCHEMA_VERSION, "name": cfg.name, "seed": cfg.seed, "version": __version__}
    if cfg.problem is None:
        raise ConfigError("case has no [problem] table")
    grid = build_grid(cfg.problem.domain, cfg.problem.iface, cfg.cells)
    scheme = make_scheme(grid.n, cfg.radius)
    report["grid"] = grid.describe()
    report["problem"] = cfg.problem.describe()
    try:
        rep = solve(cfg.problem, grid, scheme, cfg.params)
    except SchemeInapplicable as exc:
        raise ConfigError(f"scheme not applicable: {exc}") from exc
    except SolveError as exc:
        report.update(status="nonconverged", exit_code=EXIT_NONCONVERGED, message=str(exc))
        write_json(out_dir / "report.json", report)
        return EXIT_NONCONVERGED, report
    report["solve"] = rep.summary()
    write_solution_csv(out_dir / "solution.csv", rep.field, _sides(grid))
    write_history_csv(out_dir / "residual_history.csv", rep.residual_history,
                      rep.extra.get("history_sweeps", range(len(rep.residual_history))))
    report["max_jump_err"] = V.measure_normal_jump(cfg.problem, rep.field).max_err
    if not rep.converged:
        report.update(status="nonconverged", exit_code=EXIT_NONCONVERGED, checks=[])
        write_json(out_dir / "report.json", report)
        return EXIT_NONCONVERGED, report
    checks = [run_check(spec, cfg, grid, scheme, rep) for spec in cfg.checks]
    report["checks"] = checks
    failed = [c["check"] for c in checks if c["hard"] and not c["passed"]]
    code = EXIT_CHECK if failed else EXIT_OK
    report.update(status="failed" if failed else "passed", failed_checks=failed, exit_code=code)
    write_json(out_dir / "report.json", report)
    return code, report


# -- refinement ------------------------------------------------------------------------


def run_refinement(cfg: CaseConfig, levels: list[int], out_dir: Path) -> tuple[int, dict]:
    """Errors against the analytic reference (or the finest level) and fitted orders."""
    if len(levels) < 3:
        raise ConfigError("refinement needs at least 3 levels")
    levels = sorted(levels)
    out_dir.mkdir(parents=True, exist_ok=True)
    fields = []
    for cells in levels:
        grid = build_grid(cfg.problem.domain, cfg.problem.iface, cells)
        rep = solve(cfg.problem, grid, make_scheme(grid.n, cfg.radius), cfg.params)
        if not rep.converged:
            return EXIT_NONCONVERGED, {"status": "nonconverged", "cells": cells}
        fields.append(rep.field)
    rows = []
    finest = fields[-1]
    used = fields if cfg.exact is not None else fields[:-1]
    for f in used:
        g = f.grid
        act = np.nonzero(g.kind != OUTSIDE)[0]
        if cfg.exact is not None:
            ref = Expression(cfg.exact, g.n)(g.coords[act])
        else:
            step = finest.grid.cells // g.cells
            ref = finest.array()[tuple(slice(None, None, step) for _ in range(g.n))].reshape(-1)[act]
        err = float(np.max(np.abs(f.values[act] - ref)))
        jerr = V.measure_normal_jump(cfg.problem, f).max_err
        rows.append({"cells": g.cells, "h": g.h, "error": err, "jump_error": jerr})
    table = {"reference": "analytic" if cfg.exact is not None else "finest", "rows": rows}
    for key in ("error", "jump_error"):
        table[f"{key}_order"] = _order([r["h"] for r in rows], [r[key] for r in rows])
    with open(out_dir / "refinement.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cells", "h", "error", "jump_error"])
        for r in rows:
            w.writerow([r["cells"], _num(r["h"]), _num(r["error"]), _num(r["jump_error"])])
    report = {"schema_version": SCHEMA_VERSION, "name": cfg.name, "levels": levels, **table, "exit_code": 0}
    write_json(out_dir / "report.json", report)
    return EXIT_OK, report


EXACT_FLOOR = 1e-10


def _order(hs, errs, exact_floor: float = EXACT_FLOOR):
    """Least-squares slope of log(err) against log(h); 'exact' when every error is below the floor.

    The floor sits above the round-off of a direct solve, which grows like h^-2.
    """
    errs = np.asarray(errs, dtype=float)
    if np.all(errs <= exact_floor):
        return "exact"
    if np.any(errs <= 0):
        return "exact"
    if len(errs) < 2:
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


# -- suites --------------------------------------------------------------------------


def _case_job(args):
    cfg, out_dir = args
    try:
        code, rep = run_case(cfg, out_dir)
    except ConfigError as exc:
        return cfg.name, EXIT_CONFIG, {"error": str(exc)}
    except Exception as exc:  # a crashing case is recorded and the suite continues
        return cfg.name, EXIT_CONFIG, {"error": f"{type(exc).__name__}: {exc}"}
    return cfg.name, code, rep


def _comparison_job(args):
    comp, out_dir = args
    sub, sup = comp["sub"], comp["super"]
    try:
        grid = build_grid(sub.problem.domain, sub.problem.iface, sub.cells)
        cr = V.check_comparison(sub.problem, sup.problem, grid, make_scheme(grid.n, sub.radius), sub.params)
        tol = comp["tol_factor"] * max(cr.tol / 10.0, 0.0)
        res = {"violation": cr.violation, "tol": tol, "converged": cr.converged,
               "passed": bool(cr.converged and cr.violation <= tol)}
    except V.HypothesisError as exc:
        res = {"passed": False, "error": f"HypothesisError: {exc}"}
    except Exception as exc:
        res = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "report.json", {"schema_version": SCHEMA_VERSION, "name": comp["name"], **res})
    return comp["name"], res


def _suite_constants(results: dict) -> dict:
    """Aggregate fitted constants; re-evaluate ABP coverage and mu with the suite C."""
    abps = [(name, c) for name, rep in results.items() for c in rep.get("checks", []) if c["check"] == "abp"]

    def rhs(parts, C):
        return parts["boundary_sup"] + C * (parts["g_max"] + parts["f_minus_Ln"] + parts["f_plus_Ln"])

    def fitted(key):
        vals = [c[key] for _, c in abps if c.get(key) is not None]
        return max((float(v) for v in vals), default=0.0) if vals else None

    C = fitted("fitted_C") or 0.0
    Cc = fitted("fitted_C_contact")
    cover = {}
    for name, c in abps:
        r = rhs(c["rhs_parts"], C)
        entry = {"lhs": c["lhs"], "rhs": r, "covered": c["lhs"] <= r + 1e-12}
        if c.get("contact_restricted"):
            rp = c["contact_restricted"]
            rc = rhs(rp, Cc) if math.isfinite(Cc) else math.inf
            entry.update(rhs_contact=rc, covered_contact=c["lhs"] <= rc + 1e-12,
                         contact_le=rhs(rp, C) <= r + 1e-15, rhs_contact_same_C=rhs(rp, C))
        cover[name] = entry
    mus = {}
    for name, rep in results.items():
        for c in rep.get("checks", []):
            if c["check"] == "oscillation" and c["osc_outer"] > 0:
                mus[name] = (c["osc_inner"] - C * c["data_term"]) / c["osc_outer"]
    return {"abp_C": C, "abp_C_contact": Cc, "abp_coverage": cover, "mu_suite": mus,
            "mu_max": max(mus.values()) if mus else None}


def run_suite(manifest_path, out_root: Path, jobs: int = 1) -> tuple[int, dict]:
    man = load_manifest(manifest_path)
    base = out_root / man.name
    case_jobs = [(cfg, base / cfg.name) for cfg, _ in man.cases]
    comp_jobs = [(comp, base / comp["name"]) for comp in man.comparisons]
    if jobs > 1 and len(case_jobs) + len(comp_jobs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            case_out = list(ex.map(_case_job, case_jobs))
            comp_out = list(ex.map(_comparison_job, comp_jobs))
    else:
        case_out = [_case_job(j) for j in case_jobs]
        comp_out = [_comparison_job(j) for j in comp_jobs]
    expect = {cfg.name: e for cfg, e in man.cases}
    cases, results, bad = [], {}, []
    for name, code, rep in case_out:
        results[name] = rep
        ok = (code == EXIT_OK) == (expect[name] == "pass")
        cases.append({"name": name, "exit_code": code, "expect": expect[name], "as_expected": ok,
                      **({"error": rep["error"]} if "error" in rep else {})})
        if not ok:
            bad.append((name, code))
    comps = []
    for (name, res), comp in zip(comp_out, man.comparisons):
        ok = res["passed"] == (comp["expect"] == "pass")
        comps.append({"name": name, "expect": comp["expect"], "as_expected": ok, **res})
        if not ok:
            bad.append((name, EXIT_CHECK))
    constants = _suite_constants(results)
    codes = [c for _, c in bad]
    if not codes:
        code = EXIT_OK
    elif EXIT_CONFIG in codes:
        code = EXIT_CONFIG
    elif EXIT_NONCONVERGED in codes:
        code = EXIT_NONCONVERGED
    else:
        code = EXIT_CHECK
    summary = {"schema_version": SCHEMA_VERSION, "suite": man.name, "seed": man.seed, "cases": cases,
               "comparisons": comps, "constants": constants, "unexpected": [n for n, _ in bad], "exit_code": code}
    base.mkdir(parents=True, exist_ok=True)
    write_json(base / "suite_summary.json", summary)
    return code, summary


# -- envelope demo -------------------------------------------------------------------


def run_envelope_demo(cfg: CaseConfig, out_dir: Path) -> tuple[int, dict]:
    """Tangential envelopes and the convex envelope of a field; law checks in report.json."""
    out_dir.mkdir(parents=True, exist_ok=True)
    env = cfg.envelope or {}
    eps = float(env.get("epsilon", 0.1))
    rho = float(env.get("rho", 1.0))
    if cfg.problem is not None and "field" not in env:
        grid = build_grid(cfg.problem.domain, cfg.problem.iface, cfg.cells)
        rep = solve(cfg.problem, grid, make_scheme(grid.n, cfg.radius), cfg.params)
        if not rep.converged:
            return EXIT_NONCONVERGED, {"status": "nonconverged"}
        u = rep.field
    else:
        from .geometry import DomainSpec, InterfaceGraph

        grid = build_grid(DomainSpec(2), InterfaceGraph(2), int(env.get("cells", cfg.cells)))
        u = GridField(grid, Expression(env["field"], 2)(grid.coords))
    up = upper_envelope_xprime(u, eps)
    lo = lower_envelope_xprime(u, eps)
    cvx = convex_envelope(u.array()).reshape(-1)
    touch = np.zeros(grid.N, dtype=int)
    touch[contact_set(u.values, cvx)] = 1
    # tangential Lipschitz and semiconvexity of the upper envelope along x1
    arr = up.array()
    lip = float(np.max(np.abs(np.diff(arr, axis=0)))) / grid.h
    d2 = (arr[2:] - 2 * arr[1:-1] + arr[:-2]) / grid.h**2
    params = EnvelopeParams(eps, rho)
    report = {
        "schema_version": SCHEMA_VERSION, "name": cfg.name, "epsilon": eps, "rho": rho,
        "upper_ge_u": bool(np.all(up.values >= u.values)), "lower_le_u": bool(np.all(lo.values <= u.values)),
        "lipschitz_x1": lip, "lipschitz_bound": params.lipschitz_bound, "r_eps": params.r_eps(u),
        "min_second_difference_x1": float(np.min(d2)), "semiconvexity_bound": -2.0 / eps,
        "contact_nodes": int(touch.sum()),
    }
    with open(out_dir / "envelope.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(grid.n)] + ["u", "upper", "lower", "convex", "contact"])
        for i in range(grid.N):
            w.writerow([_num(v) for v in grid.coords[i]]
                       + [_num(u.values[i]), _num(up.values[i]), _num(lo.values[i]), _num(cvx[i]), touch[i]])
    ok = report["upper_ge_u"] and report["lower_le_u"] and report["min_second_difference_x1"] >= -2.0 / eps - 1e-9
    report["exit_code"] = EXIT_OK if ok else EXIT_CHECK
    write_json(out_dir / "report.json", report)
    return report["exit_code"], report


# -- click front end -------------------------------------------------------------------


def _fail_config(exc: Exception):
    click.echo(f"config error: {exc}", err=True)
    raise SystemExit(EXIT_CONFIG)


@click.group()
@click.version_option(__version__)
def main():
    """Finite-difference laboratory for elliptic transmission problems."""


@main.command("solve")
@click.argument("config", type=click.Path())
@click.option("--output-root", default=None, help=f"Output root (default ${OUTPUT_ENV} or ./runs).")
@click.option("--seed", type=int, default=None, help="Override the case seed.")
def solve_cmd(config, output_root, seed):
    """Solve one case and run its checks."""
    try:
        cfg = load_case(config, seed)
        out = output_root_path(output_root, cfg)
        code, rep = run_case(cfg, out)
    except ConfigError as exc:
        _fail_config(exc)
    click.echo(f"{cfg.name}: {rep.get('status')} (exit {code}) -> {out}")
    raise SystemExit(code)


def output_root_path(override, cfg: CaseConfig) -> Path:
    return resolve_output_root(override) / (cfg.output or cfg.name)


@main.command("refine")
@click.argument("config", type=click.Path())
@click.option("--levels", required=True, help="Comma separated cell counts, e.g. 32,64,128.")
@click.option("--output-root", default=None)
def refine_cmd(config, levels, output_root):
    """Refinement study with fitted convergence orders."""
    try:
        cfg = load_case(config)
        lv = [int(v) for v in levels.split(",") if v.strip()]
        out = output_root_path(output_root, cfg) / "refinement"
        code, rep = run_refinement(cfg, lv, out)
    except ValueError as exc:
        _fail_config(exc)
    if code == EXIT_OK:
        click.echo(f"{cfg.name}: error order {rep['error_order']}, jump order {rep['jump_error_order']} -> {out}")
    raise SystemExit(code)


@main.command("suite")
@click.argument("manifest", type=click.Path())
@click.option("--output-root", default=None)
@click.option("--jobs", type=int, default=1, show_default=True, help="Concurrent cases.")
def suite_cmd(manifest, output_root, jobs):
    """Run a suite manifest and write suite_summary.json."""
    try:
        code, summary = run_suite(manifest, resolve_output_root(output_root), jobs)
    except ConfigError as exc:
        _fail_config(exc)
    n_ok = sum(c["as_expected"] for c in summary["cases"]) + sum(c["as_expected"] for c in summary["comparisons"])
    total = len(summary["cases"]) + len(summary["comparisons"])
    click.echo(f"{summary['suite']}: {n_ok}/{total} as expected (exit {code})")
    for name in summary["unexpected"]:
        click.echo(f"  unexpected: {name}")
    raise SystemExit(code)


@main.command("envelope-demo")
@click.argument("config", type=click.Path())
@click.option("--output-root", default=None)
def envelope_cmd(config, output_root):
    """Tangential and convex envelopes of a field or a solved case."""
    try:
        cfg = load_case(config)
        out = output_root_path(output_root, cfg) / "envelope"
        code, rep = run_envelope_demo(cfg, out)
    except ConfigError as exc:
        _fail_config(exc)
    click.echo(f"{cfg.name}: envelope demo (exit {code}) -> {out}")
    raise SystemExit(code)


if __name__ == "__main__":  # pragma: no cover
    main()
