import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import supporting_plane_envelope
from translab.envelopes import (EnvelopeParams, contact_set, convex_envelope, lower_envelope_xprime,
                                upper_envelope_xprime)
from translab.geometry import DomainSpec, InterfaceGraph
from translab.grid import INTERFACE, GridField, TransmissionProblem, build_grid
from translab.operators import pucci_minus, pucci_plus
from translab.solve import solve

G2 = build_grid(DomainSpec(2), InterfaceGraph(2), 16)
G3 = build_grid(DomainSpec(3), InterfaceGraph(3), 8)

fields2 = arrays(float, G2.N, elements=st.floats(-1, 1))
eps_st = st.floats(0.01, 2.0)


def brute_upper(u: GridField, eps):
    g = u.grid
    X = g.coords
    out = np.empty(g.N)
    for k in range(g.N):
        same = np.nonzero(X[:, -1] == X[k, -1])[0]
        d = np.sum((X[same, :-1] - X[k, :-1]) ** 2, axis=1)
        out[k] = np.max(u.values[same] - d / eps)
    return out


def test_constant_and_spike():
    c = GridField(G2, np.full(G2.N, 0.7))
    assert np.all(upper_envelope_xprime(c, 0.3).values == 0.7)
    assert np.all(lower_envelope_xprime(c, 0.3).values == 0.7)
    spike = GridField(G2, (np.abs(G2.coords[:, 0]) < 1e-12).astype(float))
    want = np.maximum(1 - 4 * G2.coords[:, 0] ** 2, 0)
    np.testing.assert_allclose(upper_envelope_xprime(spike, 0.25).values, want, atol=1e-14)
    np.testing.assert_allclose(lower_envelope_xprime(GridField(G2, -spike.values), 0.25).values, -want, atol=1e-14)


@given(fields2, eps_st)
def test_matches_brute_force(v, eps):
    u = GridField(G2, v)
    np.testing.assert_allclose(upper_envelope_xprime(u, eps).values, brute_upper(u, eps), atol=1e-12)


def test_matches_brute_force_3d():
    u = GridField(G3, np.random.default_rng(0).normal(size=G3.N))
    np.testing.assert_allclose(upper_envelope_xprime(u, 0.3).values, brute_upper(u, 0.3), atol=1e-12)


@given(fields2, eps_st)
def test_order_and_duality(v, eps):
    u = GridField(G2, v)
    up, lo = upper_envelope_xprime(u, eps).values, lower_envelope_xprime(u, eps).values
    assert np.all(up >= v) and np.all(lo <= v)
    np.testing.assert_allclose(lower_envelope_xprime(GridField(G2, -v), eps).values, -up, atol=1e-14)


@given(fields2, eps_st, eps_st)
def test_monotone_in_eps(v, e1, e2):
    e1, e2 = sorted((e1, e2))
    u = GridField(G2, v)
    assert np.all(upper_envelope_xprime(u, e1).values <= upper_envelope_xprime(u, e2).values + 1e-14)


@given(fields2)
def test_exact_for_small_eps(v):
    osc = float(np.ptp(v))
    if osc == 0:
        return
    eps = 0.99 * G2.h**2 / (2 * osc)
    assert np.array_equal(upper_envelope_xprime(GridField(G2, v), eps).values, v)


@given(fields2, eps_st)
def test_lipschitz_and_semiconvexity(v, eps):
    up = upper_envelope_xprime(GridField(G2, v), eps).array()  # axis 0 is x1
    h = G2.h
    rho = 1.0
    assert np.max(np.abs(np.diff(up, axis=0))) / h <= 6 * rho / eps + 1e-9
    for k in range(1, 8):
        d2 = up[2 * k:] + up[:-2 * k] - 2 * up[k:-k]
        assert np.min(d2) >= -2 * (k * h) ** 2 / eps - 1e-12


def test_r_eps():
    u = GridField(G2, np.linspace(-2, 1, G2.N))
    p = EnvelopeParams(0.2, 0.5)
    assert p.r_eps(u) == pytest.approx(math.sqrt(2 * 0.2 * 2))
    assert p.lipschitz_bound == pytest.approx(15.0)
    with pytest.raises(ValueError):
        EnvelopeParams(0.0)


def test_convex_envelope_examples():
    x = np.linspace(-1, 1, 21)
    v = -np.abs(x)
    env = convex_envelope(v)
    np.testing.assert_allclose(env, -1.0, atol=1e-15)
    np.testing.assert_allclose(supporting_plane_envelope(x[:, None], v), env, atol=1e-10)
    assert contact_set(v, env).tolist() == [0, 20]
    convex = x**2
    np.testing.assert_array_equal(convex_envelope(convex), convex)
    assert contact_set(convex, convex_envelope(convex)).size == 21


def test_cone_patch_vs_oracle():
    t = np.linspace(-1, 1, 17)
    X, Y = np.meshgrid(t, t, indexing="ij")
    v = -np.maximum(0, 1 - np.sqrt(X**2 + Y**2))
    env = convex_envelope(v)
    pts = np.c_[X.ravel(), Y.ravel()]
    assert np.max(np.abs(env.ravel() - supporting_plane_envelope(pts, v.ravel()))) <= 1e-10


@settings(max_examples=25)
@given(arrays(float, (7, 7), elements=st.floats(-1, 1)))
def test_random_patch_vs_oracle(v):
    env = convex_envelope(v)
    t = np.linspace(-1, 1, 7)
    X, Y = np.meshgrid(t, t, indexing="ij")
    oracle = supporting_plane_envelope(np.c_[X.ravel(), Y.ravel()], v.ravel())
    assert np.max(np.abs(env.ravel() - oracle)) <= 1e-10
    assert np.all(env <= v + 1e-15)
    np.testing.assert_allclose(convex_envelope(env), env, atol=1e-12)


def test_interface_excluded_from_contact():
    g = build_grid(DomainSpec(2), InterfaceGraph(2), 16)
    pr = TransmissionProblem(pucci_minus(1, 2), pucci_plus(1, 2), "x1", "x2", "1+0.3*x1", InterfaceGraph(2), "x1^2-x2")
    u = solve(pr, g).field.values
    gmax = 1.3
    w = u - gmax * np.abs(g.coords[:, 1])
    touch = contact_set(w, convex_envelope(w.reshape(g.shape)).ravel())
    assert touch.size > 0
    assert not np.any(g.kind[touch] == INTERFACE)
