import math

import numpy as np
import pytest

from toricext.kenergy import (
    SymplecticPotential,
    TorusSubgroup,
    abreu_scalar,
    chen_check,
    energy_report,
    extremal_field_potential,
    kenergy_gradient,
    log_det_integral,
    mabuchi_distance,
    modified_calabi,
    modified_kenergy,
    random_perturbation,
    session_rule,
)
from toricext.polynomial import Polynomial


def test_guillemin_scalar_is_constant(interval, square, simplex):
    for P, sbar in ((interval, 4.0), (square, 8.0), (simplex, 12.0)):
        u = SymplecticPotential(P)
        rule = session_rule(P)
        s = abreu_scalar(u, rule.nodes)
        assert np.max(np.abs(s - sbar)) < 1e-8


def test_scalar_integral_equals_boundary_measure(square, simplex, octagon, rng):
    # int_P S(u) dmu = 2 Vol(bd P) for every admissible potential
    for P in (square, simplex, octagon):
        rule = session_rule(P)
        target = 2.0 * float(P.boundary_volume())
        for _ in range(3):
            u = SymplecticPotential(P, random_perturbation(P, rng))
            got = rule.integrate_values(abreu_scalar(u, rule.nodes))
            assert abs(got - target) < 1e-7 * target


def test_random_perturbation_keeps_convexity(octagon, rng):
    rule = session_rule(octagon)
    for _ in range(5):
        u = SymplecticPotential(octagon, random_perturbation(octagon, rng))
        u.check_positive(rule)


def test_extremal_field_is_potential_independent(square, octagon, rng):
    cases = [
        (square, TorusSubgroup.full(2)),
        (octagon, TorusSubgroup(((0, 1),))),
    ]
    for P, G in cases:
        coeffs = []
        for _ in range(3):
            u = SymplecticPotential(P, random_perturbation(P, rng))
            a = extremal_field_potential(u, G)
            coeffs.append(
                np.array([float(c) for c in (*a.grad, a.const)])
            )
        spread = max(
            np.max(np.abs(coeffs[i] - coeffs[0])) for i in range(1, 3)
        )
        assert spread < 1e-6


def test_kenergy_gradient_matches_finite_differences(square, rng):
    G = TorusSubgroup.full(2)
    p = random_perturbation(square, rng)
    u = SymplecticPotential(square, p)
    f = Polynomial({(2, 0): 0.5, (1, 1): -0.25, (0, 2): 0.125}, 2)
    gval = kenergy_gradient(u, G, f)
    errs = []
    for t in (1e-3, 5e-4):
        ep = modified_kenergy(SymplecticPotential(square, p + f * t), G)
        em = modified_kenergy(SymplecticPotential(square, p + f * (-t)), G)
        errs.append(abs((ep - em) / (2 * t) - gval))
    order = math.log2(errs[0] / errs[1])
    assert order > 1.8
    assert errs[1] < 1e-6 * (1.0 + abs(gval))


def test_kenergy_convex_along_segments(simplex, rng):
    G = TorusSubgroup.full(2)
    p0 = random_perturbation(simplex, rng)
    p1 = random_perturbation(simplex, rng)
    ts = np.linspace(0.0, 1.0, 9)
    vals = [
        modified_kenergy(SymplecticPotential(simplex, p0 * (1 - t) + p1 * t), G)
        for t in ts
    ]
    second = np.diff(vals, 2)
    assert second.min() > -1e-9


def test_kenergy_invariant_under_affine_shifts(octagon, rng):
    G = TorusSubgroup.full(2)
    p = random_perturbation(octagon, rng)
    e0 = modified_kenergy(SymplecticPotential(octagon, p), G)
    shift = Polynomial.affine([0.03, -0.02], 0.5)
    e1 = modified_kenergy(SymplecticPotential(octagon, p + shift), G)
    assert e1 == pytest.approx(e0, rel=1e-9, abs=1e-9)


def test_calabi_vanishes_only_at_extremal(square, rng):
    G = TorusSubgroup.full(2)
    u0 = SymplecticPotential(square)
    assert modified_calabi(u0, G) < 1e-12
    u1 = SymplecticPotential(square, random_perturbation(square, rng))
    assert modified_calabi(u1, G) > 1e-6


def test_mabuchi_distance_square_pair(square):
    u0 = SymplecticPotential(square)
    u1 = SymplecticPotential(square, Polynomial({(1, 1): 1.0}, 2))
    # int (xy)^2 = 1/9 raw; subtracting the mean leaves 1/9 - 1/16
    assert mabuchi_distance(u0, u1, normalized=False) == pytest.approx(
        1.0 / 3.0, rel=1e-10
    )
    assert mabuchi_distance(u0, u1) == pytest.approx(
        math.sqrt(7.0) / 12.0, rel=1e-10
    )


def test_mabuchi_distance_is_symmetric(octagon, rng):
    u0 = SymplecticPotential(octagon, random_perturbation(octagon, rng))
    u1 = SymplecticPotential(octagon, random_perturbation(octagon, rng))
    assert mabuchi_distance(u0, u1) == pytest.approx(
        mabuchi_distance(u1, u0), rel=1e-12
    )


def test_chen_margin_nonnegative(square, octagon, rng):
    cases = [
        (square, TorusSubgroup.full(2)),
        (octagon, TorusSubgroup(((0, 1),))),
    ]
    for P, G in cases:
        for _ in range(5):
            u0 = SymplecticPotential(P, random_perturbation(P, rng))
            u1 = SymplecticPotential(P, random_perturbation(P, rng))
            assert chen_check(u0, u1, G) > -1e-9


def test_log_det_square_guillemin(square):
    u = SymplecticPotential(square)
    # each Hessian factor is 1/(2 x (1-x)); the integral is 4 - 2 log 2
    want = 4.0 - 2.0 * math.log(2.0)
    assert log_det_integral(u) == pytest.approx(want, rel=1e-12)


def test_energy_report_payload(octagon, rng):
    G = TorusSubgroup(((0, 1),))
    u = SymplecticPotential(octagon, random_perturbation(octagon, rng))
    rep = energy_report(u, G).to_json()
    assert rep["sbar"] == pytest.approx(1.4)
    assert rep["calabi"] >= 0
    assert "kenergy" in rep and "A_G" in rep


def test_torus_subgroup_validation():
    G = TorusSubgroup.full(2)
    assert G.directions == ((1, 0), (0, 1))
    assert TorusSubgroup.trivial().directions == ()
    with pytest.raises(ValueError):
        TorusSubgroup(((1, 0), (2, 0)))
    data = TorusSubgroup(((0, 1),)).to_json()
    assert TorusSubgroup.from_json(data).directions == ((0, 1),)
