import math
from fractions import Fraction

import numpy as np
import pytest

from toricext.polynomial import Polynomial
from toricext.quadrature import (
    graded_rule,
    integrate_boundary_poly,
    integrate_numeric,
    integrate_poly,
    line_log_integral,
    poly_log_integral,
    smooth_rule,
)


def test_exact_monomials_square(square):
    q = Polynomial.monomial((2, 1))
    assert integrate_poly(square, q) == Fraction(1, 6)
    assert integrate_poly(square, Polynomial.constant(3, 2)) == 3


def test_exact_monomials_simplex(simplex):
    # int_simplex x^a y^b = a! b! / (a + b + 2)!
    assert integrate_poly(simplex, Polynomial.monomial((1, 1))) == Fraction(1, 24)
    assert integrate_poly(simplex, Polynomial.monomial((3, 0))) == Fraction(1, 20)


def test_exact_volume_octagon(octagon):
    assert integrate_poly(octagon, Polynomial.constant(1, 2)) == 20


def test_boundary_integrals_square(square):
    one = Polynomial.constant(1, 2)
    assert integrate_boundary_poly(square, one) == 4
    x = Polynomial.monomial((1, 0))
    assert integrate_boundary_poly(square, x) == 2


def test_boundary_integral_octagon_matches_length(octagon):
    one = Polynomial.constant(1, 2)
    assert integrate_boundary_poly(octagon, one) == octagon.boundary_volume()


def test_boundary_per_facet_sums(square):
    x = Polynomial.monomial((1, 0))
    parts = integrate_boundary_poly(square, x, per_facet=True)
    assert len(parts) == 4
    assert sum(parts) == 2


@pytest.mark.parametrize("exponent", [(0, 0), (3, 2), (5, 5), (1, 4)])
def test_smooth_rule_reproduces_exact_integrals(octagon, exponent):
    rule = smooth_rule(octagon, order=10, cells=2)
    q = Polynomial.monomial(exponent)
    exact = float(integrate_poly(octagon, q))
    got = rule.integrate_values(q.evaluate(rule.nodes))
    assert abs(got - exact) <= 1e-9 * (1.0 + abs(exact))


def test_graded_rule_handles_boundary_logs(interval):
    rule = graded_rule(interval, depth=40, order=10)
    got = rule.integrate(lambda x: np.log(x[:, 0]))
    assert abs(got - (-1.0)) < 1e-9


def test_line_log_integral_unit():
    # int_0^1 log(t) dt = -1
    assert abs(line_log_integral(0.0, 1.0, 1.0, 0.0) - (-1.0)) < 1e-14


def test_poly_log_square_closed_forms(square):
    one = Polynomial.constant(1, 2)
    # int_square log(x) = -1
    assert abs(poly_log_integral(square, one, (1, 0), 0) - (-1.0)) < 1e-12
    q = Polynomial({(1, 0): 1, (0, 1): 1})
    assert abs(poly_log_integral(square, q, (1, 0), 0) - (-0.75)) < 1e-12
    q2 = Polynomial({(1, 0): 1, (0, 1): 2})
    assert abs(poly_log_integral(square, q2, (1, 0), 0) - (-1.25)) < 1e-12


def test_poly_log_simplex_closed_forms(simplex):
    one = Polynomial.constant(1, 2)
    assert abs(poly_log_integral(simplex, one, (1, 0), 0) - (-0.75)) < 1e-12
    # l = 1 - x - y has the same integral by symmetry
    assert abs(poly_log_integral(simplex, one, (-1, -1), -1) - (-0.75)) < 1e-12


def _log_prim(lam, coeffs):
    """Antiderivative of (sum_m coeffs[m] lam^m) log(lam) at lam >= 0."""
    if lam == 0:
        return 0.0
    out = 0.0
    for m, c in enumerate(coeffs):
        out += c * lam ** (m + 1) / (m + 1) * (math.log(lam) - 1.0 / (m + 1))
    return out


def test_poly_log_octagon_against_hand_slicing(octagon):
    # Sweep l = x + y - 1 through the octagon.  Between vertex levels the
    # chord runs between two fixed edges; from the vertex list the chord
    # length divided by |(1,1)| times sqrt(2) (the level speed) is g(lam):
    #   lam in (0,2): ends (lam+1, 0) and (0, lam+1),        g = 1 + lam
    #   lam in (2,3): ends (lam+1, 0) and ((lam-2)/2, ...),  g = 2 + lam/2
    #   lam in (3,5): both ends on the corner cuts,          g = 7/2
    #   lam in (5,6): ends (5, lam-4) and ((lam-2)/2, ...),  g = 6 - lam/2
    #   lam in (6,7): ends (5, lam-4) and (lam-4, 5),        g = 9 - lam
    bands = [
        (0, 2, (1.0, 1.0)),
        (2, 3, (2.0, 0.5)),
        (3, 5, (3.5, 0.0)),
        (5, 6, (6.0, -0.5)),
        (6, 7, (9.0, -1.0)),
    ]
    want = sum(_log_prim(b, g) - _log_prim(a, g) for a, b, g in bands)
    one = Polynomial.constant(1, 2)
    got = poly_log_integral(octagon, one, (1, 1), 1)
    assert abs(got - want) < 1e-11

    # same sweep weighted by q = x, using the chord midpoint per band
    bands_x = [
        (0, 2, (0.5, 1.0, 0.5)),      # (1+lam) * (1+lam)/2
        (2, 3, (0.0, 1.5, 0.375)),    # (2+lam/2) * 3 lam/4
        (3, 5, (2.625, 1.75, 0.0)),   # 7/2 * (2 lam+3)/4
        (5, 6, (12.0, 0.5, -0.125)),  # (6-lam/2) * (lam+8)/4
        (6, 7, (4.5, 4.0, -0.5)),     # (9-lam) * (lam+1)/2
    ]
    want_x = sum(_log_prim(b, g) - _log_prim(a, g) for a, b, g in bands_x)
    got_x = poly_log_integral(octagon, Polynomial.monomial((1, 0)), (1, 1), 1)
    assert abs(got_x - want_x) < 1e-10 * (1.0 + abs(want_x))


def test_rule_integrate_matches_integrate_values(square):
    rule = smooth_rule(square, order=8)
    f = lambda x: np.exp(x[:, 0]) * x[:, 1]
    assert rule.integrate(f) == rule.integrate_values(f(rule.nodes))


def test_integrate_numeric_smooth(square):
    res = integrate_numeric(square, lambda x: np.exp(x[:, 0] + x[:, 1]), tol=1e-10)
    want = (math.e - 1.0) ** 2
    assert abs(float(res) - want) < 1e-9


def test_integrate_numeric_log_singularity(interval):
    res = integrate_numeric(interval, lambda x: np.log(x[:, 0]), tol=1e-9)
    assert abs(float(res) - (-1.0)) < 1e-8


def test_weights_positive_and_inside(octagon):
    rule = smooth_rule(octagon, order=6, cells=1)
    assert np.all(rule.weights > 0)
    lvals = octagon.facet_values(rule.nodes)
    assert np.all(lvals > 0)
    assert abs(rule.weights.sum() - 20.0) < 1e-10
