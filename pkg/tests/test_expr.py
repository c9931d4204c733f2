import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from translab.expr import ExpressionError, as_field, parse

PTS = np.array([[0.5, -0.25], [-1.0, 2.0], [0.0, 0.0]])


@pytest.mark.parametrize("src, fn", [
    ("1 + 2*3", lambda x, y: 7.0),
    ("2^3^2", lambda x, y: 512.0),
    ("2**3", lambda x, y: 8.0),
    ("-2^2", lambda x, y: -4.0),
    ("(1+x1)*x2", lambda x, y: (1 + x) * y),
    ("|x1 - x2|", lambda x, y: abs(x - y)),
    ("abs(x1)^0.5", lambda x, y: abs(x) ** 0.5),
    ("min(x1, x2, 0.1)", lambda x, y: min(x, y, 0.1)),
    ("max(x1, x2)", lambda x, y: max(x, y)),
    ("sqrt(x1^2 + x2^2)", lambda x, y: math.hypot(x, y)),
    ("exp(x1)*sin(pi*x2) + cos(x1) - tanh(x2)", lambda x, y: math.exp(x) * math.sin(math.pi * y) + math.cos(x) - math.tanh(y)),
    ("sign(x1) + log(e)", lambda x, y: float(np.sign(x)) + 1.0),
    ("1e-3 * x1 / 2", lambda x, y: 1e-3 * x / 2),
])
def test_values(src, fn):
    got = parse(src)(PTS)
    want = [fn(x, y) for x, y in PTS]
    np.testing.assert_allclose(got, want, rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("src", ["", "1 +", "(x1", "foo(x1)", "x1 x2", "2 *** 3", "sin()", "min(1)", "x0", "|x1", "1..2"])
def test_malformed(src):
    with pytest.raises(ExpressionError):
        parse(src)(PTS)


def test_dimension_mismatch():
    with pytest.raises(ExpressionError):
        parse("x3")(PTS)
    with pytest.raises(ExpressionError):
        parse("x3", n=2)


def test_non_finite():
    with pytest.raises(ExpressionError):
        parse("1/x1")(PTS)
    with pytest.raises(ExpressionError):
        parse("sqrt(x1)")(PTS)


def test_constant_broadcast():
    np.testing.assert_array_equal(parse("3")(PTS), [3.0, 3.0, 3.0])
    np.testing.assert_array_equal(as_field(2)(PTS), [2.0, 2.0, 2.0])
    with pytest.raises(ExpressionError):
        as_field(float("nan"))


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.floats(-3, 3), st.floats(-3, 3))
def test_linear_forms(x, a, b):
    got = parse(f"({a!r})*x1 + ({b!r})*x2")(np.array([x]))[0]
    assert got == pytest.approx(a * x[0] + b * x[1], abs=1e-12)
