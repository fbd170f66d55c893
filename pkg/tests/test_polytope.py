from fractions import Fraction

import numpy as np
import pytest

from toricext.errors import EmptyInterior, InvalidTruncation, NotDelzant, Unbounded
from toricext.polytope import (
    AffineFunction,
    DelzantPolytope,
    PLConvexFunction,
    blowup_polytope,
    build_polytope,
    interval,
    simplex_volume,
    standard_simplex,
    triangulate,
    unit_square,
)


def test_square_vertex_report(square):
    rep = square.vertex_report()
    assert rep["dimension"] == 2
    assert rep["volume"] == 1.0
    assert rep["boundary_volume"] == 4.0
    verts = {tuple(v) for v in rep["vertices"]}
    assert verts == {(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)}


def test_octagon_vertices_and_measures(octagon):
    want = (
        (0, 1), (1, 0), (4, 0), (5, 1),
        (5, 3), (3, 5), (2, 5), (0, 3),
    )
    got = tuple(tuple(int(c) for c in v) for v in octagon.vertices)
    assert got == want
    assert octagon.volume() == 20
    assert octagon.boundary_volume() == 14


def test_symmetric_octagon_measures(octagon_sym):
    assert octagon_sym.volume() == 23
    assert octagon_sym.boundary_volume() == 16
    assert len(octagon_sym.vertices) == 8


def test_interval_basics(interval):
    assert interval.n == 1
    assert interval.volume() == 1
    # the boundary measure of an interval counts its two endpoints
    assert interval.boundary_volume() == 2


def test_simplex_measures(simplex):
    assert simplex.volume() == Fraction(1, 2)
    assert simplex.boundary_volume() == 3


def test_redundant_facet_is_flagged():
    facets = [
        ((1, 0), 0),
        ((0, 1), 0),
        ((-1, 0), -1),
        ((0, -1), -1),
        ((1, 0), -1),  # x >= -1 never binds
    ]
    P = build_polytope(facets, label="padded-square")
    assert P.redundant_facets
    assert P.volume() == 1


def test_non_delzant_vertex_rejected():
    facets = [
        ((1, 0), 0),
        ((0, 1), 0),
        ((-1, -2), -1),
    ]
    with pytest.raises(NotDelzant):
        build_polytope(facets)


def test_nonprimitive_normal_rejected():
    facets = [
        ((2, 0), 0),
        ((0, 1), 0),
        ((-1, -1), -1),
    ]
    with pytest.raises(ValueError):
        build_polytope(facets)


def test_unbounded_and_empty_inputs():
    with pytest.raises(Unbounded):
        build_polytope([((1, 0), 0), ((0, 1), 0)])
    with pytest.raises(EmptyInterior):
        build_polytope(
            [
                ((1, 0), 1),
                ((-1, 0), 0),
                ((0, 1), 0),
                ((0, -1), -1),
            ]
        )


def test_blowup_overlapping_cuts_rejected():
    with pytest.raises(InvalidTruncation):
        blowup_polytope(3, 1, 1, 2)


@pytest.mark.parametrize("mode", ["vertex", "centroid"])
def test_triangulations_tile_the_polygon(octagon, mode):
    tris = triangulate(octagon, mode=mode)
    total = sum(simplex_volume(t) for t in tris)
    assert total == octagon.volume()
    if mode == "centroid":
        assert len(tris) == len(octagon.vertices)


def test_contains_and_centroid(octagon):
    c = octagon.centroid()
    assert octagon.contains(c, strict=True)
    v = octagon.vertices[0]
    assert octagon.contains(v)
    assert not octagon.contains(v, strict=True)
    assert not octagon.contains((-1, -1))


def test_facet_values_vectorized(square):
    x = np.array([[0.25, 0.5], [0.75, 0.1]])
    vals = square.facet_values(x)
    assert vals.shape == (2, 4)
    assert np.all(vals > 0)
    assert np.isclose(vals.min(axis=1)[1], 0.1)


def test_json_round_trip(octagon):
    data = octagon.to_json()
    Q = DelzantPolytope.from_json(data)
    assert Q.vertices == octagon.vertices
    assert Q.label == octagon.label
    assert Q.volume() == octagon.volume()


def test_affine_function_batches():
    f = AffineFunction((2, -1), 3)
    x = np.array([[0.0, 0.0], [1.0, 1.0], [0.5, 2.0]])
    np.testing.assert_allclose(f(x), [3.0, 4.0, 2.0])
    assert f.value_exact((Fraction(1, 2), Fraction(1, 4))) == Fraction(15, 4)


def test_pl_crease_max_form(square):
    f = PLConvexFunction.crease((1, 1), 1, n=2)
    x = np.array([[0.0, 0.0], [1.0, 1.0], [0.5, 0.5]])
    np.testing.assert_allclose(f(x), [0.0, 1.0, 0.0])
    assert f.value_exact((Fraction(3, 4), Fraction(3, 4))) == Fraction(1, 2)


def test_blowup_requires_positive_sizes():
    with pytest.raises(InvalidTruncation):
        blowup_polytope(5, 0, 1, 2)


def test_diameter(square, octagon):
    assert np.isclose(square.diameter(), np.sqrt(2.0))
    assert octagon.diameter() > 5.0
