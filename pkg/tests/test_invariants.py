import json
from fractions import Fraction

import numpy as np
import pytest

from toricext.errors import SingularGram
from toricext.invariants import (
    canonical_report,
    crease_value,
    exact_solve,
    extremal_affine,
    futaki_character,
    futaki_linear,
    futaki_linear_exact,
    relative_df,
    sbar_fraction,
    stability_scan,
)
from toricext.kenergy import SymplecticPotential, TorusSubgroup
from toricext.polynomial import Polynomial
from toricext.polytope import AffineFunction, PLConvexFunction
from toricext.quadrature import integrate_poly


def test_average_scalar_values(interval, square, simplex, octagon):
    assert sbar_fraction(interval) == 4
    assert sbar_fraction(square) == 8
    assert sbar_fraction(simplex) == 12
    assert sbar_fraction(octagon) == Fraction(7, 5)


@pytest.mark.parametrize("name", ["interval", "square", "simplex"])
def test_extremal_affine_constant_cases(name, request):
    P = request.getfixturevalue(name)
    data = extremal_affine(P)
    assert all(g == 0 for g in data.A.grad)
    assert data.A.const == sbar_fraction(P)


def test_extremal_affine_octagon(octagon):
    data = extremal_affine(octagon)
    assert data.A.grad[0] == 0
    assert float(data.A.grad[1]) == pytest.approx(-0.08737225316899865, rel=1e-12)
    assert float(data.A.const) == pytest.approx(1.5958594675205053, rel=1e-12)


def test_extremal_affine_defining_property(octagon):
    # L_A vanishes on every affine test function, exactly
    data = extremal_affine(octagon)
    for f in (
        AffineFunction((0, 0), 1),
        AffineFunction((1, 0), 0),
        AffineFunction((0, 1), 0),
    ):
        assert futaki_linear_exact(octagon, data.A, f) == 0


def test_extremal_affine_symmetric_control(octagon_sym):
    data = extremal_affine(octagon_sym)
    assert data.A.grad == (0, 0)
    assert data.A.const == sbar_fraction(octagon_sym)


def _mean_zero_coordinate(P, i):
    e = [0] * P.n
    e[i] = 1
    bar = integrate_poly(P, Polynomial.monomial(tuple(e))) / P.volume()
    grad = [Fraction(0)] * P.n
    grad[i] = Fraction(1)
    return AffineFunction(tuple(grad), -bar)


def test_futaki_character_octagon_exact(octagon):
    csc = AffineFunction((Fraction(0), Fraction(0)), sbar_fraction(octagon))
    fy = _mean_zero_coordinate(octagon, 1)
    fx = _mean_zero_coordinate(octagon, 0)
    assert futaki_linear_exact(octagon, csc, fy) == Fraction(-83, 60)
    # mirror symmetry in x kills the x character
    assert futaki_linear_exact(octagon, csc, fx) == 0


def test_futaki_character_vanishes_with_symmetry(octagon_sym, square, simplex):
    for P in (octagon_sym, square, simplex):
        csc = AffineFunction((Fraction(0),) * P.n, sbar_fraction(P))
        for i in range(P.n):
            f = _mean_zero_coordinate(P, i)
            assert futaki_linear_exact(P, csc, f) == 0


def test_futaki_linear_is_linear_in_f(octagon):
    data = extremal_affine(octagon)
    f = PLConvexFunction.crease((1, 1), 5, n=2)
    v1 = futaki_linear(octagon, data.A, f)
    # doubling the crease function doubles the pairing
    zero = AffineFunction((0, 0), 0)
    f2 = PLConvexFunction([zero, AffineFunction((2, 2), -10)])
    v2 = futaki_linear(octagon, data.A, f2)
    assert v2 == pytest.approx(2 * v1, rel=1e-12, abs=1e-12)


def test_metric_futaki_character_is_metric_independent(octagon):
    G = TorusSubgroup.trivial()
    u0 = SymplecticPotential(octagon)
    p = Polynomial({(2, 0): 0.004, (0, 2): -0.003, (1, 1): 0.002}, 2)
    u1 = SymplecticPotential(octagon, p)
    fy = _mean_zero_coordinate(octagon, 1)
    v0 = futaki_character(octagon, u0, G, fy)
    v1 = futaki_character(octagon, u1, G, fy)
    assert v0 == pytest.approx(v1, abs=5e-8)
    # int f S(u) dmu = 2 int_bd f dsigma for affine f, twice the linear pairing
    assert v0 == pytest.approx(-83.0 / 30.0, abs=5e-6)


def test_relative_character_removes_affine_part(octagon):
    fy = _mean_zero_coordinate(octagon, 1)
    # the relative pairing subtracts the extremal affine, so coordinate
    # directions pair to zero
    assert abs(relative_df(octagon, fy)) < 1e-12


def test_crease_value_positive_on_stable_square(square):
    out = crease_value(square, (1, 1), 1)
    assert out is not None
    val, normalized, vol_f = out
    assert val > 0
    assert vol_f > 0
    assert normalized == pytest.approx(val / vol_f, rel=1e-12)


def test_stability_scan_square(square):
    rep = stability_scan(square, radius=2, offsets=8)
    assert rep.verdict == "stable-at-tested-grid"
    assert rep.worst > 0
    data = rep.to_json()
    assert set(data) >= {"verdict", "worst_normalized", "rows", "tol"}
    json.dumps(data)


def test_stability_scan_octagon(octagon):
    rep = stability_scan(octagon, radius=2, offsets=8)
    assert rep.verdict == "stable-at-tested-grid"
    assert rep.worst == pytest.approx(0.016710060773000367, rel=1e-9)


def test_exact_solve_rejects_singular():
    mat = [[Fraction(1), Fraction(2)], [Fraction(2), Fraction(4)]]
    with pytest.raises(SingularGram):
        exact_solve(mat, [Fraction(1), Fraction(0)])


def test_exact_solve_known_system():
    mat = [[Fraction(2), Fraction(1)], [Fraction(1), Fraction(3)]]
    sol = exact_solve(mat, [Fraction(5), Fraction(10)])
    assert sol == [Fraction(1), Fraction(3)]


def test_canonical_report_round_trip(octagon):
    rep = canonical_report(octagon)
    text = json.dumps(rep, sort_keys=True)
    back = json.loads(text)
    assert back["Sbar"] == pytest.approx(1.4)
    assert back["residual"] <= 1e-10
