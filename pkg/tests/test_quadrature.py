from fractions import Fraction
from math import factorial

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rmplate.quadrature import MAX_DEGREE, quadrature_rule, reference_points


def monomial_integral(p, q):
    """Exact ``int x^p y^q`` over the reference triangle."""
    return Fraction(factorial(p) * factorial(q), factorial(p + q + 2))


def apply(rule, p, q):
    bary, w = rule
    x, y = reference_points(bary).T
    return float(np.sum(w * x**p * y**q))


def test_degree1_is_centroid_rule():
    bary, w = quadrature_rule(1)
    assert bary.shape == (1, 3)
    np.testing.assert_allclose(bary[0], 1 / 3, atol=1e-15)
    assert abs(w.sum() - 0.5) < 1e-15


def test_xy_moment():
    assert abs(apply(quadrature_rule(2), 1, 1) - 1 / 24) < 1e-15


def test_x3y2_moment_against_symbolic_oracle():
    import sympy

    x, y = sympy.symbols("x y")
    exact = sympy.integrate(sympy.integrate(x**3 * y**2, (y, 0, 1 - x)), (x, 0, 1))
    assert exact == sympy.Rational(1, 420)
    assert abs(apply(quadrature_rule(5), 3, 2) - float(exact)) < 1e-15


@pytest.mark.parametrize("degree", range(1, MAX_DEGREE + 1))
def test_exactness_all_monomials(degree):
    rule = quadrature_rule(degree)
    for p in range(degree + 1):
        for q in range(degree + 1 - p):
            assert abs(apply(rule, p, q) - float(monomial_integral(p, q))) < 1e-14


@pytest.mark.parametrize("degree", range(1, MAX_DEGREE + 1))
def test_points_inside_and_weights_positive(degree):
    bary, w = quadrature_rule(degree)
    assert np.all(w > 0)
    assert np.all(bary > 0)
    np.testing.assert_allclose(bary.sum(axis=1), 1, atol=1e-15)
    assert abs(w.sum() - 0.5) < 1e-14


@pytest.mark.parametrize("bad", [0, 11, -2, 2.5, "3", True])
def test_unsupported_degree(bad):
    with pytest.raises(ValueError):
        quadrature_rule(bad)


def test_rule_arrays_are_read_only():
    bary, w = quadrature_rule(4)
    with pytest.raises(ValueError):
        w[0] = 0.0


@given(st.integers(1, MAX_DEGREE), st.integers(0, 10), st.integers(0, 10))
def test_property_exact_up_to_degree(degree, p, q):
    if p + q <= degree:
        assert abs(apply(quadrature_rule(degree), p, q) - float(monomial_integral(p, q))) < 1e-14


@pytest.mark.parametrize("refine", [1, 2, 3])
@pytest.mark.parametrize("degree", [1, 4, 10])
def test_composite_rule_keeps_exactness(degree, refine):
    rule = quadrature_rule(degree, refine)
    assert len(rule[1]) == 4**refine * len(quadrature_rule(degree)[1])
    assert abs(rule[1].sum() - 0.5) < 1e-14
    for p in range(degree + 1):
        for q in range(degree + 1 - p):
            assert abs(apply(rule, p, q) - float(monomial_integral(p, q))) < 1e-14


def test_composite_rule_converges_on_smooth_non_polynomial():
    # int over the reference triangle of exp(x + y) = 1 by direct integration
    vals = []
    for r in range(4):
        bary, w = quadrature_rule(2, r)
        x, y = reference_points(bary).T
        vals.append(abs(np.sum(w * np.exp(x + y)) - 1.0))
    assert vals[0] > vals[1] > vals[2] > vals[3]


@pytest.mark.parametrize("bad", [-1, 7, 1.0, True, None])
def test_unsupported_refine(bad):
    with pytest.raises(ValueError):
        quadrature_rule(3, bad)
