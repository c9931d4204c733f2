import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import closed_form, closed_form_problem
from translab.geometry import DomainSpec, InterfaceGraph
from translab.grid import TransmissionProblem, assemble_residual, build_grid, make_scheme
from translab.operators import laplacian, linear, pucci_minus, pucci_plus
from translab.solve import SolveError, SolveParams, brute_force_solve, perron_barriers, solve
from translab.verify import check_viscosity_inequalities

D2 = DomainSpec(2)
PM, PP = pucci_minus(1, 2), pucci_plus(1, 2)


def mixed(f_plus="x1^2-x2", f_minus="1+x1*x2", g="1+0.5*x1", bdry="x1^2+0.3*x2", psi=None):
    ifc = InterfaceGraph(2, psi)
    return TransmissionProblem(PM, PP, f_plus, f_minus, g, ifc, bdry)


@pytest.mark.parametrize("method", ["direct", "sweep"])
def test_closed_form(method):
    g = build_grid(D2, InterfaceGraph(2), 16)
    rep = solve(closed_form_problem(), g, params=SolveParams(method=method, init="zero"))
    assert rep.converged
    assert np.max(np.abs(rep.field.values - closed_form(g.coords))) <= 1e-10


def test_closed_form_pucci_barrier_init():
    g = build_grid(D2, InterfaceGraph(2), 16)
    rep = solve(closed_form_problem(op=pucci_minus(1, 1)), g)
    assert rep.converged and rep.monotone
    assert np.max(np.abs(rep.field.values - closed_form(g.coords))) <= 1e-10


def test_linear_data_reproduced():
    g = build_grid(D2, InterfaceGraph(2), 16)
    pr = TransmissionProblem(PM, PP, 0.0, 0.0, 0.0, InterfaceGraph(2), "0.3 - 0.7*x1 + 0.4*x2")
    rep = solve(pr, g)
    assert rep.converged
    np.testing.assert_allclose(rep.field.values, 0.3 - 0.7 * g.coords[:, 0] + 0.4 * g.coords[:, 1], atol=1e-9)


def test_residual_history_and_assembly():
    g = build_grid(D2, InterfaceGraph(2), 16)
    pr = mixed()
    rep = solve(pr, g)
    assert rep.converged and rep.residual_history[-1] <= rep.tolerance
    assert len(rep.extra["history_sweeps"]) == len(rep.residual_history)
    assert rep.extra["history_sweeps"][-1] == rep.sweeps
    r = assemble_residual(pr, make_scheme(2, 1), rep.field)
    assert np.max(np.abs(r.values)) <= rep.tolerance


def test_sweep_order_independence():
    g = build_grid(D2, InterfaceGraph(2), 16)
    a = solve(mixed(), g, params=SolveParams(sweep_order="lexicographic"))
    b = solve(mixed(), g, params=SolveParams(sweep_order="red_black"))
    assert a.converged and b.converged
    assert np.max(np.abs(a.field.values - b.field.values)) <= 10 * max(a.tolerance, b.tolerance)


@pytest.mark.parametrize("psi", [None, [0, 0, 0.05]])
def test_brute_force_oracle(psi):
    g = build_grid(D2, InterfaceGraph(2, psi), 8)
    pr = mixed(psi=psi)
    bf = brute_force_solve(pr, g)
    rep = solve(pr, g, params=SolveParams(init="zero"))
    assert np.max(np.abs(bf.values - rep.field.values)) <= 1e-9


def test_brute_force_trivial_cases():
    g = build_grid(D2, InterfaceGraph(2), 8)
    assert np.all(brute_force_solve(TransmissionProblem(PM, PP), g).values == 0.0)
    bf = brute_force_solve(closed_form_problem(), g)
    assert np.max(np.abs(bf.values - closed_form(g.coords))) <= 1e-10
    with pytest.raises(SolveError):
        brute_force_solve(closed_form_problem(), build_grid(D2, InterfaceGraph(2), 16))


def test_perron_bracket_and_monotone():
    g = build_grid(D2, InterfaceGraph(2), 16)
    pr = mixed()
    rep = solve(pr, g)
    lo, hi = rep.underline_u.values, rep.overline_u.values
    u = rep.field.values
    tol = 10 * rep.tolerance
    assert np.all(lo <= hi + tol)
    assert np.all(lo <= u + tol) and np.all(u <= hi + tol)
    assert rep.monotone is True
    assert rep.extra["exceeded_upper_barrier"] is False
    assert not check_viscosity_inequalities(rep.underline_u, pr, 1e-8, "sub")
    assert not check_viscosity_inequalities(rep.overline_u, pr, 1e-8, "super")


def test_perron_barrier_signs():
    g = build_grid(D2, InterfaceGraph(2), 16)
    c = 1.5
    pr = TransmissionProblem(PM, PP, 0.0, 0.0, c)
    lo, hi = perron_barriers(pr, g)
    assert np.all(lo.values <= 1e-12) and np.all(hi.values >= -1e-12)
    centre = int(np.argmin(np.sum(g.coords**2, axis=1)))
    assert lo.values[centre] < 0


def test_zero_data_bracket_collapses():
    g = build_grid(D2, InterfaceGraph(2), 16)
    pr = TransmissionProblem(laplacian(2), laplacian(2), 0.0, 0.0, 0.0, InterfaceGraph(2), "x1^2-x2^2")
    lo, hi = perron_barriers(pr, g)
    np.testing.assert_allclose(lo.values, hi.values, atol=1e-9)


@pytest.mark.parametrize("op", [laplacian(2), linear([[1.5, 0.2], [0.2, 1.0]])])
def test_shared_linear_operator_barriers(op):
    g = build_grid(D2, InterfaceGraph(2), 16)
    pr = TransmissionProblem(op, op, "x1^2-x2", "1+x1*x2", "1+0.5*x1", InterfaceGraph(2), "x1^2+0.3*x2")
    lo, hi = perron_barriers(pr, g)
    assert check_viscosity_inequalities(lo, pr, 1e-8, "sub") == []
    assert check_viscosity_inequalities(hi, pr, 1e-8, "super") == []
    u = solve(pr, g, params=SolveParams(init="zero")).field.values
    assert np.all(lo.values <= u + 1e-9) and np.all(u <= hi.values + 1e-9)


def test_nonconvergence_report():
    g = build_grid(D2, InterfaceGraph(2), 16)
    with pytest.raises(SolveError):
        solve(mixed(), g, params=SolveParams(max_sweeps=1))  # barrier Dirichlet solve fails first
    rep = solve(mixed(), g, params=SolveParams(max_sweeps=1, init="zero"))
    assert not rep.converged
    assert rep.sweeps == 1 and len(rep.residual_history) == 2
    assert "max_sweeps" in rep.message


@pytest.mark.parametrize("kw", [{"damping": 0.0}, {"damping": 1.5}, {"tolerance": 0.0}, {"sweep_order": "spiral"},
                                {"init": "random"}, {"max_sweeps": 0}, {"method": "newton"}])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        SolveParams(**kw)


@settings(max_examples=8)
@given(st.floats(0, 1), st.floats(0, 0.5), st.floats(0, 0.5), st.integers(0, 1))
def test_discrete_comparison(df, dg, db, flip):
    """Larger f, larger g and smaller boundary data give a pointwise smaller solution."""
    g = build_grid(D2, InterfaceGraph(2), 8)
    ops = (PM, PP) if flip else (PP, PM)
    lo = TransmissionProblem(*ops, f"x1+{df}", f"x2+{df}", f"1+{dg}", InterfaceGraph(2), f"x1*x2-{db}")
    hi = TransmissionProblem(*ops, "x1", "x2", "1", InterfaceGraph(2), "x1*x2")
    a, b = solve(lo, g), solve(hi, g)
    assert np.all(a.field.values <= b.field.values + 10 * max(a.tolerance, b.tolerance))
