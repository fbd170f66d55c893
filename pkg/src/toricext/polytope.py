"""Delzant polytopes from facet inequalities.

A polytope is stored by its inequalities l_i(x) = <x, nu_i> - c_i >= 0 with
primitive integer inward normals nu_i and rational offsets c_i.  Vertices are
derived, never input; all validation (boundedness, full dimension, the
unimodular-corner condition) runs in exact rational arithmetic.

Dimension is generic in the data model; vertex enumeration and everything
downstream is implemented for n = 1 and n = 2, which covers all shipped
examples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

from .errors import EmptyInterior, InvalidTruncation, NotDelzant, Unbounded


def _frac(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError("cannot interpret %r as a rational number" % (x,))


def _primitive_check(normal):
    if all(v == 0 for v in normal):
        raise ValueError("zero normal vector")
    g = 0
    for v in normal:
        g = math.gcd(g, abs(int(v)))
    return g


@dataclass(frozen=True)
class Facet:
    """One inequality <x, normal> - offset >= 0, with derived incidence data.

    ``lattice_scale`` converts Euclidean surface measure on the facet to the
    lattice boundary measure (it equals 1/|normal|).  For n = 2,
    ``lattice_length`` is the exact rational length of the edge in that
    measure.
    """

    normal: tuple
    offset: Fraction
    vertex_indices: tuple = ()
    lattice_scale: float = 0.0
    lattice_length: Fraction = Fraction(0)

    def value(self, point):
        return sum(n * x for n, x in zip(self.normal, point)) - self.offset


class DelzantPolytope:
    """Bounded lattice-smooth polytope; immutable after construction."""

    def __init__(self, n, facets, vertices, label="", redundant_facets=()):
        self.n = n
        self.facets = tuple(facets)
        self.vertices = tuple(tuple(v) for v in vertices)
        self.label = label
        self.redundant_facets = tuple(redundant_facets)
        self._volume = None
        self._boundary_volume = None

    # ---- basic geometry ----------------------------------------------

    def facet_values(self, x):
        """All l_i at points x of shape (m, n); returns shape (m, nfacets)."""
        import numpy as np

        x = np.asarray(x, dtype=float)
        normals = np.array([f.normal for f in self.facets], dtype=float)
        offsets = np.array([float(f.offset) for f in self.facets])
        return x @ normals.T - offsets

    def contains(self, point, strict=False):
        vals = [f.value([_frac(c) for c in point]) for f in self.facets]
        if strict:
            return all(v > 0 for v in vals)
        return all(v >= 0 for v in vals)

    def centroid(self):
        """Vertex average; interior for a full-dimensional convex polytope."""
        m = len(self.vertices)
        return tuple(
            sum(v[i] for v in self.vertices) / Fraction(m) for i in range(self.n)
        )

    def diameter(self):
        best = 0.0
        for p, q in combinations(self.vertices, 2):
            d = math.sqrt(sum((float(a) - float(b)) ** 2 for a, b in zip(p, q)))
            best = max(best, d)
        return best

    def volume(self):
        """Exact volume via the divergence theorem, Vol = -(1/n) sum c_i len_i."""
        if self._volume is None:
            if self.n == 1:
                a, b = sorted(v[0] for v in self.vertices)
                self._volume = b - a
            else:
                total = Fraction(0)
                for f in self.facets:
                    total += -f.offset * f.lattice_length
                self._volume = total / self.n
        return self._volume

    def boundary_volume(self):
        """Total lattice measure of the boundary (exact rational)."""
        if self._boundary_volume is None:
            if self.n == 1:
                self._boundary_volume = Fraction(2)
            else:
                self._boundary_volume = sum(
                    (f.lattice_length for f in self.facets), Fraction(0)
                )
        return self._boundary_volume

    def edges(self):
        """For n = 2: list of (start, end) vertex pairs per facet, CCW order."""
        if self.n != 2:
            raise ValueError("edges() is only defined for n = 2")
        out = []
        for f in self.facets:
            i, j = f.vertex_indices
            out.append((self.vertices[i], self.vertices[j]))
        return out

    # ---- serialization ------------------------------------------------

    def to_json(self):
        return {
            "facets": [
                {
                    "normal": [int(v) for v in f.normal],
                    "offset": _offset_json(f.offset),
                }
                for f in self.facets
            ],
            "label": self.label,
        }

    def vertex_report(self):
        return {
            "label": self.label,
            "dimension": self.n,
            "vertices": [[float(c) for c in v] for v in self.vertices],
            "volume": float(self.volume()),
            "boundary_volume": float(self.boundary_volume()),
        }

    @classmethod
    def from_json(cls, data):
        facets = [
            (tuple(item["normal"]), item["offset"]) for item in data["facets"]
        ]
        return build_polytope(facets, label=data.get("label", ""))

    def __repr__(self):
        return "DelzantPolytope(n=%d, facets=%d, label=%r)" % (
            self.n,
            len(self.facets),
            self.label,
        )


def _offset_json(c):
    f = float(c)
    if Fraction(f) == c:
        return f
    return str(c)


# ---- construction -----------------------------------------------------


def build_polytope(facets, label=""):
    """Build and validate a Delzant polytope from (normal, offset) pairs.

    Raises Unbounded, EmptyInterior, or NotDelzant.  Redundant inequalities
    are dropped from the facet list and reported on the result.
    """
    if not facets:
        raise ValueError("no facets given")
    n = len(facets[0][0])
    items = []
    for normal, offset in facets:
        normal = tuple(int(v) for v in normal)
        if len(normal) != n:
            raise ValueError("mixed normal dimensions")
        if _primitive_check(normal) != 1:
            raise ValueError("normal %r is not primitive" % (normal,))
        items.append((normal, _frac(offset)))
    deduped = []
    for it in items:
        if it not in deduped:
            deduped.append(it)
    items = deduped
    if len(items) < n + 1:
        raise Unbounded("need at least %d facets in dimension %d" % (n + 1, n))
    if n == 1:
        return _build_interval(items, label)
    if n != 2:
        raise NotImplementedError("vertex enumeration implemented for n <= 2")
    return _build_polygon(items, label)


def _build_interval(items, label):
    lo, hi = None, None
    for normal, offset in items:
        if normal[0] > 0:
            bound = offset / normal[0]
            lo = bound if lo is None else max(lo, bound)
        else:
            bound = offset / normal[0]
            hi = bound if hi is None else min(hi, bound)
    if lo is None or hi is None:
        raise Unbounded("interval misses a bound on one side")
    if lo >= hi:
        raise EmptyInterior("interval [%s, %s] has no interior" % (lo, hi))
    kept = []
    redundant = []
    seen = set()
    for normal, offset in items:
        at = offset / normal[0]
        tight = at == (lo if normal[0] > 0 else hi)
        if tight and (normal, at) not in seen:
            seen.add((normal, at))
            vidx = (0,) if normal[0] > 0 else (1,)
            kept.append(
                Facet(
                    normal=normal,
                    offset=offset,
                    vertex_indices=vidx,
                    lattice_scale=1.0,
                    lattice_length=Fraction(1),
                )
            )
        else:
            redundant.append((normal, offset))
    return DelzantPolytope(
        1, kept, [(lo,), (hi,)], label=label, redundant_facets=redundant
    )


def _recession_direction(normals):
    """A nonzero rational d with <nu, d> >= 0 for all normals, if one exists."""
    candidates = []
    for nu in normals:
        candidates.append((nu[1], -nu[0]))
        candidates.append((-nu[1], nu[0]))
    for d in candidates:
        if d == (0, 0):
            continue
        if all(nu[0] * d[0] + nu[1] * d[1] >= 0 for nu in normals):
            return d
    return None


def _build_polygon(items, label):
    normals = [it[0] for it in items]
    d = _recession_direction(normals)
    if d is not None:
        raise Unbounded("direction %r escapes to infinity" % (d,))

    # All pairwise intersections that satisfy every inequality.
    points = []
    for (n1, c1), (n2, c2) in combinations(items, 2):
        det = n1[0] * n2[1] - n1[1] * n2[0]
        if det == 0:
            continue
        x = Fraction(c1 * n2[1] - c2 * n1[1], det)
        y = Fraction(n1[0] * c2 - n2[0] * c1, det)
        ok = True
        for nu, c in items:
            if nu[0] * x + nu[1] * y - c < 0:
                ok = False
                break
        if ok and (x, y) not in points:
            points.append((x, y))
    if not points:
        raise EmptyInterior("inequalities have empty solution set")
    if len(points) < 3:
        raise EmptyInterior("solution set is not full-dimensional")

    cx = sum(p[0] for p in points) / len(points)
    cy = sum(p[1] for p in points) / len(points)
    for nu, c in items:
        if nu[0] * cx + nu[1] * cy - c == 0:
            raise EmptyInterior("solution set is not full-dimensional")

    verts = _ccw_order(points, (cx, cy))

    # Facet incidence in cyclic order.
    kept = []
    redundant = []
    m = len(verts)
    for nu, c in items:
        on = [i for i, v in enumerate(verts) if nu[0] * v[0] + nu[1] * v[1] == c]
        if len(on) < 2:
            redundant.append((nu, c))
            continue
        if len(on) > 2:
            raise NotDelzant(
                "facet %r touches %d vertices" % (nu, len(on)), vertex=None
            )
        i, j = on
        if j == i + 1:
            pair = (i, j)
        elif i == 0 and j == m - 1:
            pair = (j, i)
        else:
            raise NotDelzant("facet %r touches non-adjacent vertices" % (nu,))
        a, b = verts[pair[0]], verts[pair[1]]
        dx, dy = b[0] - a[0], b[1] - a[1]
        # Edge direction is primitive-tangent times the lattice length.
        tangent = (-nu[1], nu[0])
        if tangent[0]:
            length = dx / tangent[0]
        else:
            length = dy / tangent[1]
        kept.append(
            Facet(
                normal=nu,
                offset=c,
                vertex_indices=pair,
                lattice_scale=1.0 / math.sqrt(nu[0] ** 2 + nu[1] ** 2),
                lattice_length=abs(length),
            )
        )

    # Each vertex must lie on exactly two kept facets, with unimodular normals.
    for i, v in enumerate(verts):
        through = [f for f in kept if f.value(v) == 0]
        if len(through) != 2:
            raise NotDelzant(
                "vertex %s lies on %d facets" % (_pt(v), len(through)),
                vertex=v,
            )
        n1, n2 = through[0].normal, through[1].normal
        det = n1[0] * n2[1] - n1[1] * n2[0]
        if abs(det) != 1:
            raise NotDelzant(
                "normals %r, %r at vertex %s have determinant %d"
                % (n1, n2, _pt(v), det),
                vertex=v,
            )

    return DelzantPolytope(2, kept, verts, label=label, redundant_facets=redundant)


def _pt(v):
    return "(" + ", ".join(str(c) for c in v) + ")"


def _ccw_order(points, center):
    """Sort rational points counterclockwise around center, exactly."""

    cx, cy = center

    def half(p):
        dx, dy = p[0] - cx, p[1] - cy
        return 0 if (dy > 0 or (dy == 0 and dx > 0)) else 1

    import functools

    def cmp(p, q):
        hp, hq = half(p), half(q)
        if hp != hq:
            return -1 if hp < hq else 1
        px, py = p[0] - cx, p[1] - cy
        qx, qy = q[0] - cx, q[1] - cy
        cross = px * qy - py * qx
        if cross > 0:
            return -1
        if cross < 0:
            return 1
        return 0

    ordered = sorted(points, key=functools.cmp_to_key(cmp))
    start = min(range(len(ordered)), key=lambda i: ordered[i])
    return tuple(ordered[start:] + ordered[:start])


# ---- named constructions ----------------------------------------------


def interval(lo=0, hi=1, label="interval"):
    return build_polytope([((1,), lo), ((-1,), -_frac(hi))], label=label)


def unit_square(label="unit-square"):
    return build_polytope(
        [((1, 0), 0), ((0, 1), 0), ((-1, 0), -1), ((0, -1), -1)], label=label
    )


def standard_simplex(label="simplex"):
    return build_polytope(
        [((1, 0), 0), ((0, 1), 0), ((-1, -1), -1)], label=label
    )


def blowup_polytope(s, eps, a, b, label=None):
    """Square [0,s]^2 with the y=0 corners cut at depth eps^2*a and the
    y=s corners cut at depth eps^2*b.

    The cuts use the unique unimodular corner normals (+-1, +-1).  Raises
    InvalidTruncation when two cuts meet along an edge of the square or the
    side edges collapse.
    """
    s = _frac(s)
    da = _frac(eps) ** 2 * _frac(a)
    db = _frac(eps) ** 2 * _frac(b)
    if s <= 0 or da <= 0 or db <= 0:
        raise InvalidTruncation("side and cut depths must be positive")
    if 2 * da >= s or 2 * db >= s:
        raise InvalidTruncation(
            "cuts of depth %s/%s meet along an edge of the square of side %s"
            % (da, db, s)
        )
    if da + db >= s:
        raise InvalidTruncation(
            "cuts of depth %s and %s leave no side edge on the square of side %s"
            % (da, db, s)
        )
    if label is None:
        label = "blowup(s=%s, eps=%s, a=%s, b=%s)" % (s, eps, a, b)
    return build_polytope(
        [
            ((1, 0), 0),
            ((0, 1), 0),
            ((-1, 0), -s),
            ((0, -1), -s),
            ((1, 1), da),
            ((-1, 1), da - s),
            ((1, -1), db - s),
            ((-1, -1), db - 2 * s),
        ],
        label=label,
    )


# ---- triangulation ----------------------------------------------------


def triangulate(P, mode="vertex"):
    """Partition P into simplices with rational vertices.

    mode "vertex" fans from the first vertex (a square gives two triangles);
    mode "centroid" fans from the vertex average, which puts exactly one
    boundary edge on every simplex and is what the boundary-graded quadrature
    rules consume.
    """
    if P.n == 1:
        return [tuple(P.vertices)]
    verts = P.vertices
    m = len(verts)
    if mode == "vertex":
        apex = verts[0]
        return [
            (apex, verts[i], verts[i + 1]) for i in range(1, m - 1)
        ]
    if mode == "centroid":
        c = P.centroid()
        return [(c, verts[i], verts[(i + 1) % m]) for i in range(m)]
    raise ValueError("unknown triangulation mode %r" % (mode,))


def simplex_volume(tri):
    """Exact volume of a rational simplex (n = 1 or 2)."""
    if len(tri) == 2:
        return abs(tri[1][0] - tri[0][0])
    (ax, ay), (bx, by), (cx, cy) = tri
    return abs((bx - ax) * (cy - ay) - (by - ay) * (cx - ax)) / 2


# ---- affine and piecewise-linear functions ----------------------------


class AffineFunction:
    """f(x) = <grad, x> + const, evaluated exactly on exact input."""

    __slots__ = ("grad", "const")

    def __init__(self, grad, const=0):
        self.grad = tuple(grad)
        self.const = const

    def __call__(self, x):
        import numpy as np

        x = np.asarray(x, dtype=float)
        g = np.array([float(v) for v in self.grad])
        return x @ g + float(self.const)

    def value_exact(self, point):
        return sum(g * c for g, c in zip(self.grad, point)) + self.const

    def as_polynomial(self):
        from .polynomial import Polynomial

        return Polynomial.affine(list(self.grad), self.const)

    def __repr__(self):
        return "AffineFunction(grad=%r, const=%r)" % (list(self.grad), self.const)


class PLConvexFunction:
    """Pointwise maximum of affine pieces."""

    def __init__(self, pieces):
        self.pieces = tuple(pieces)
        if not self.pieces:
            raise ValueError("need at least one affine piece")

    def __call__(self, x):
        import numpy as np

        vals = np.stack([p(x) for p in self.pieces])
        return vals.max(axis=0)

    def value_exact(self, point):
        return max(p.value_exact(point) for p in self.pieces)

    @classmethod
    def crease(cls, normal, offset, n=None):
        """max(0, <normal, x> - offset), the basic degeneration datum."""
        n = n if n is not None else len(normal)
        zero = AffineFunction((0,) * n, 0)
        return cls([zero, AffineFunction(tuple(normal), -_frac(offset))])

    def redundant_pieces(self, P):
        """Indices of pieces that are nowhere maximal on the vertices of P."""
        out = []
        for i, piece in enumerate(self.pieces):
            if all(
                piece.value_exact(v) < self.value_exact(v) for v in P.vertices
            ):
                out.append(i)
        return out
