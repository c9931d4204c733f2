import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import frame_grid_pucci
from translab.operators import (InvalidInput, bellman_min, blend, check_uniform_ellipticity, eval_operator, laplacian,
                                linear, operator_distance, pucci_minus, pucci_plus, solve_normal_entry, sym_eigvals)

entries = st.floats(-10, 10, allow_nan=False)


def sym(n):
    return arrays(float, (n, n), elements=entries).map(lambda B: np.triu(B) + np.triu(B, 1).T)


def psd(n):
    return arrays(float, (n, n), elements=st.floats(-3, 3)).map(lambda B: B @ B.T)


PM, PP = pucci_minus(1, 2), pucci_plus(1, 2)
ALL_KINDS = [PM, PP, laplacian(2), linear([[1.5, 0.2], [0.2, 1.1]], 1, 2),
             bellman_min([np.eye(2), np.diag([1.0, 2.0]), [[1.5, 0.4], [0.4, 1.5]]], 1, 2.0),
             blend(PP, PM, 0.3)]


def test_examples():
    assert eval_operator(PM, np.eye(2)) == 2.0
    assert eval_operator(PP, np.diag([1.0, -1.0])) == 1.0
    for op in ALL_KINDS:
        assert eval_operator(op, np.zeros((2, 2)), 0.5) == 0.0


def test_invalid():
    with pytest.raises(InvalidInput):
        eval_operator(PM, [[np.nan, 0], [0, 1]])
    with pytest.raises(InvalidInput):
        eval_operator(PM, np.eye(4))
    with pytest.raises(InvalidInput):
        pucci_minus(2, 1)
    with pytest.raises(InvalidInput):
        eval_operator(linear(np.eye(3)), np.eye(2))
    with pytest.raises(InvalidInput):
        eval_operator(blend(PP, PM, "2"), np.eye(2), [0.0, 0.0])


@given(sym(3))
def test_eigvals_closed_form(M):
    np.testing.assert_allclose(sym_eigvals(M), np.linalg.eigvalsh(M), atol=1e-9 * (1 + np.abs(M).max()))


@given(sym(2))
def test_pucci_frame_oracle(M):
    for sign, op in ((-1, PM), (1, PP)):
        assert eval_operator(op, M) == pytest.approx(frame_grid_pucci(M, 1, 2, sign), abs=1e-6 * (1 + np.abs(M).max()))


@given(sym(3), st.floats(0.01, 100))
def test_homogeneity_duality(M, t):
    for op in (PM, PP):
        assert eval_operator(op, t * M) == pytest.approx(t * eval_operator(op, M), abs=1e-12 * t * (1 + np.abs(M).max()))
    assert eval_operator(PM, M) == pytest.approx(-eval_operator(PP, -M), abs=1e-12 * (1 + np.abs(M).max()))


@given(sym(2), psd(2))
def test_monotone_all_kinds(M, N):
    for op in ALL_KINDS:
        assert eval_operator(op, M + N, 0.5) >= eval_operator(op, M, 0.5) - 1e-12 * (1 + np.abs(M).max() + np.abs(N).max())


@given(sym(2), sym(2))
def test_concavity(M, N):
    for op in (PM, ALL_KINDS[4]):
        mid = eval_operator(op, 0.5 * (M + N))
        assert mid >= 0.5 * (eval_operator(op, M) + eval_operator(op, N)) - 1e-10 * (1 + np.abs(M).max() + np.abs(N).max())


def test_ellipticity_reports():
    assert check_uniform_ellipticity(PM, 1000).ok
    assert check_uniform_ellipticity(PP, 1000, n=3).ok
    assert check_uniform_ellipticity(linear(np.diag([1.0, 2.0]), 1, 2), 1000).ok
    bad = check_uniform_ellipticity(linear(np.diag([0.5, 2.0]), 1, 2), 1000)
    assert not bad.ok


def test_operator_distance():
    assert operator_distance(PM, PM).theta_hat == 0.0
    t = 0.3
    d = operator_distance(linear(np.eye(2), 1, 2), linear(np.diag([1, 1 + t]), 1, 2))
    assert d.theta_hat == pytest.approx(t, abs=1e-12)
    # |M+(M) - M-(M)| = (Lam - lam) * sum |e_i|, spectral norm max |e_i|; sup = n (Lam - lam) at M = I
    d = operator_distance(PP, PM, trials=2000)
    assert 1.9 <= d.theta_hat <= 2.0 + 1e-12
    assert d.theta_hat == 2.0  # identity is in the deterministic corpus


def test_distance_monotone_in_samples():
    a = operator_distance(PP, linear(np.diag([1.0, 2.0]), 1, 2), trials=50).theta_hat
    b = operator_distance(PP, linear(np.diag([1.0, 2.0]), 1, 2), trials=500).theta_hat
    assert b >= a >= 0


@given(sym(2), st.floats(-3, 3))
def test_solve_normal_entry(A, target):
    for op in (PM, PP, laplacian(2)):
        B = solve_normal_entry(op, A, target)
        assert eval_operator(op, B) == pytest.approx(target, abs=1e-9 * (1 + np.abs(A).max()))
        assert np.array_equal(B[0], np.asarray(A)[0])
