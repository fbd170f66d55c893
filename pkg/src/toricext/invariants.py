"""Canonical invariants computed from polytope data alone.

Everything here is exact: the average scalar curvature, the extremal affine
function (the unique affine A with L_A vanishing on affine functions), the
linear functional L_A(f) = int_bd f dsigma - (1/2) int_P A f dmu, and crease
scans for destabilizing toric degenerations.  Rational arithmetic end to end;
floats appear only in returned report values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import SingularGram
from .polynomial import Polynomial
from .polytope import AffineFunction, PLConvexFunction
from .quadrature import (
    integrate_boundary_poly,
    integrate_poly,
    integrate_poly_convex,
)

_EXTREMAL_CACHE = {}


def _frac(x):
    return x if isinstance(x, Fraction) else Fraction(x)


def average_scalar(P):
    """Sbar = 2 Vol(boundary, dsigma) / Vol(P)."""
    return float(sbar_fraction(P))


def sbar_fraction(P):
    return 2 * P.boundary_volume() / P.volume()


def exact_solve(mat, rhs):
    """Solve a small rational linear system by elimination.

    Raises SingularGram when no nonzero pivot exists.
    """
    n = len(rhs)
    a = [[_frac(v) for v in row] + [_frac(rhs[i])] for i, row in enumerate(mat)]
    for col in range(n):
        pivot = None
        for row in range(col, n):
            if a[row][col] != 0:
                pivot = row
                break
        if pivot is None:
            raise SingularGram("no pivot in column %d" % col)
        a[col], a[pivot] = a[pivot], a[col]
        inv = 1 / a[col][col]
        a[col] = [v * inv for v in a[col]]
        for row in range(n):
            if row != col and a[row][col] != 0:
                factor = a[row][col]
                a[row] = [v - factor * w for v, w in zip(a[row], a[col])]
    return [a[i][n] for i in range(n)]


def _affine_basis(P):
    out = [Polynomial.constant(1, P.n)]
    for i in range(P.n):
        e = [0] * P.n
        e[i] = 1
        out.append(Polynomial.monomial(e))
    return out


@dataclass
class ExtremalData:
    sbar: float
    A: AffineFunction
    residual: float
    gram: np.ndarray
    sbar_exact: Fraction = field(default=None, repr=False)

    def to_json(self):
        return {
            "Sbar": self.sbar,
            "A": {
                "grad": [float(g) for g in self.A.grad],
                "const": float(self.A.const),
            },
            "residual": self.residual,
        }


def extremal_affine(P):
    """The affine function A with L_A(g) = 0 for every affine g, solved
    exactly from the (n+1) x (n+1) Gram system."""
    if P in _EXTREMAL_CACHE:
        return _EXTREMAL_CACHE[P]
    basis = _affine_basis(P)
    gram = [
        [integrate_poly(P, gi * gj) for gj in basis] for gi in basis
    ]
    rhs = [2 * integrate_boundary_poly(P, gi) for gi in basis]
    coef = exact_solve(gram, rhs)
    A = AffineFunction(tuple(coef[1:]), coef[0])
    residual = max(
        abs(float(futaki_linear_exact(P, A, gi))) for gi in basis
    )
    data = ExtremalData(
        sbar=float(sbar_fraction(P)),
        A=A,
        residual=residual,
        gram=np.array([[float(v) for v in row] for row in gram]),
        sbar_exact=sbar_fraction(P),
    )
    _EXTREMAL_CACHE[P] = data
    return data


# ---- the linear functional L_A ---------------------------------------


def futaki_linear(P, A, f):
    """L_A(f) = int_bd f dsigma - (1/2) int_P A f dmu, exact."""
    return float(futaki_linear_exact(P, A, f))


def futaki_linear_exact(P, A, f):
    a_poly = A.as_polynomial() if isinstance(A, AffineFunction) else A
    if isinstance(f, AffineFunction):
        f = f.as_polynomial()
    if isinstance(f, Polynomial):
        bd = integrate_boundary_poly(P, f)
        bulk = integrate_poly(P, a_poly * f)
    elif isinstance(f, PLConvexFunction):
        bd = pl_boundary_integral(P, f)
        bulk = pl_bulk_integral(P, f, weight=a_poly)
    else:
        raise TypeError("unsupported test function %r" % type(f))
    return bd - Fraction(1, 2) * _frac(bulk)


def relative_df(P, f):
    """Relative Donaldson-Futaki value of the degeneration encoded by f,
    that is L_A(f) with A the extremal affine function of P."""
    return float(futaki_linear_exact(P, extremal_affine(P).A, f))


# ---- exact piecewise-linear integration ------------------------------


def clip_polygon(vertices, normal, offset):
    """Exact half-plane clip keeping <normal, x> - offset >= 0."""
    out = []
    m = len(vertices)
    offset = _frac(offset)

    def side(v):
        return normal[0] * v[0] + normal[1] * v[1] - offset

    for i in range(m):
        a, b = vertices[i], vertices[(i + 1) % m]
        sa, sb = side(a), side(b)
        if sa >= 0:
            out.append(a)
        if (sa > 0 and sb < 0) or (sa < 0 and sb > 0):
            t = sa / (sa - sb)
            out.append(
                (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
            )
    dedup = []
    for v in out:
        if not dedup or v != dedup[-1]:
            dedup.append(v)
    if len(dedup) > 1 and dedup[0] == dedup[-1]:
        dedup.pop()
    return dedup


def _piece_region(P, pieces, m):
    """Vertices of the subregion of P where piece m attains the maximum."""
    verts = list(P.vertices)
    gm = pieces[m]
    for j, gj in enumerate(pieces):
        if j == m:
            continue
        dn = tuple(a - b for a, b in zip(gm.grad, gj.grad))
        dc = gj.const - gm.const
        if all(v == 0 for v in dn):
            if _frac(dc) > 0 or (dc == 0 and j < m):
                return []
            continue
        verts = clip_polygon(verts, dn, _frac(dc))
        if len(verts) < 3:
            return []
    return verts


def pl_bulk_integral(P, f, weight=None):
    """Exact int_P max_m(f_m) * weight dmu for a PL convex f."""
    if P.n == 1:
        return _pl_bulk_1d(P, f, weight)
    total = Fraction(0)
    for m, piece in enumerate(f.pieces):
        region = _piece_region(P, f.pieces, m)
        if len(region) < 3:
            continue
        q = piece.as_polynomial()
        if weight is not None:
            q = q * weight
        total += integrate_poly_convex(region, q)
    return total


def _pl_bulk_1d(P, f, weight):
    lo = min(v[0] for v in P.vertices)
    hi = max(v[0] for v in P.vertices)
    cuts = {lo, hi}
    pieces = f.pieces
    for i in range(len(pieces)):
        for j in range(i + 1, len(pieces)):
            da = pieces[i].grad[0] - pieces[j].grad[0]
            db = pieces[j].const - pieces[i].const
            if da != 0:
                t = _frac(db) / _frac(da)
                if lo < t < hi:
                    cuts.add(t)
    total = Fraction(0)
    xs = sorted(cuts)
    for a, b in zip(xs[:-1], xs[1:]):
        mid = (a + b) / 2
        winner = max(pieces, key=lambda p: p.value_exact((mid,)))
        q = winner.as_polynomial()
        if weight is not None:
            q = q * weight
        anti = Fraction(0)
        for (e,), c in q.terms.items():
            anti += _frac(c) * (b ** (e + 1) - a ** (e + 1)) / (e + 1)
        total += anti
    return total


def pl_boundary_integral(P, f):
    """Exact int_bd max_m(f_m) dsigma via 1D upper envelopes per edge."""
    if P.n == 1:
        return sum(
            (_frac(f.value_exact(v)) for v in P.vertices), Fraction(0)
        )
    total = Fraction(0)
    for facet in P.facets:
        a = P.vertices[facet.vertex_indices[0]]
        b = P.vertices[facet.vertex_indices[1]]
        lines = []
        for piece in f.pieces:
            va = piece.value_exact(a)
            vb = piece.value_exact(b)
            lines.append((_frac(vb) - _frac(va), _frac(va)))
        cuts = {Fraction(0), Fraction(1)}
        for i in range(len(lines)):
            for j in range(i + 1, len(lines)):
                da = lines[i][0] - lines[j][0]
                if da != 0:
                    t = (lines[j][1] - lines[i][1]) / da
                    if 0 < t < 1:
                        cuts.add(t)
        xs = sorted(cuts)
        acc = Fraction(0)
        for t0, t1 in zip(xs[:-1], xs[1:]):
            mid = (t0 + t1) / 2
            slope, const = max(lines, key=lambda ln: ln[0] * mid + ln[1])
            acc += slope * (t1**2 - t0**2) / 2 + const * (t1 - t0)
        total += facet.lattice_length * acc
    return total


# ---- crease scan ------------------------------------------------------


@dataclass
class StabilityReport:
    rows: list
    verdict: str
    worst: float
    skipped: int
    tol: float

    def to_json(self):
        return {
            "verdict": self.verdict,
            "worst_normalized": self.worst,
            "skipped": self.skipped,
            "tol": self.tol,
            "rows": self.rows,
        }


def crease_value(P, normal, offset):
    """Normalized relative DF value of max(0, <normal,x> - offset).

    Returns (value, normalized, volume_weight) or None when the crease is
    identically zero on P.
    """
    f = PLConvexFunction.crease(normal, offset, n=P.n)
    vol_f = pl_bulk_integral(P, f)
    if vol_f == 0:
        return None
    val = futaki_linear_exact(P, extremal_affine(P).A, f)
    return float(val), float(val / vol_f), float(vol_f)


def _primitive_ball(radius):
    from math import gcd

    out = []
    r = int(radius)
    for n1 in range(-r, r + 1):
        for n2 in range(-r, r + 1):
            if (n1, n2) == (0, 0) or n1 * n1 + n2 * n2 > radius * radius:
                continue
            if gcd(abs(n1), abs(n2)) == 1:
                out.append((n1, n2))
    return out


def stability_scan(P, radius=3, offsets=24, tol=1e-8):
    """Evaluate the normalized relative DF value on a grid of creases.

    Normals run over the primitive lattice ball of the given radius; offsets
    sit at even quantiles of <normal, x> strictly between its extremes on P.
    """
    rows = []
    skipped = 0
    for nu in _primitive_ball(radius):
        vertex_vals = [
            sum(n * c for n, c in zip(nu, v)) for v in P.vertices
        ]
        vmin, vmax = min(vertex_vals), max(vertex_vals)
        for j in range(1, offsets + 1):
            c = vmin + Fraction(j, offsets + 1) * (vmax - vmin)
            got = crease_value(P, nu, c)
            if got is None:
                skipped += 1
                continue
            val, normalized, volf = got
            rows.append(
                {
                    "normal": list(nu),
                    "offset": float(c),
                    "value": val,
                    "normalized": normalized,
                }
            )
    worst = min((r["normalized"] for r in rows), default=0.0)
    verdict = "destabilizer-found" if worst < -tol else "stable-at-tested-grid"
    return StabilityReport(rows, verdict, worst, skipped, tol)


# ---- metric-dependent Futaki character --------------------------------


def futaki_character(P, u, G, f_V):
    """int_P f_V S^G(u) dmu with f_V mean-normalized; metric independence is
    what the cross-potential tests exercise."""
    from .kenergy import ReducedScalar, session_rule

    rule = session_rule(P)
    red = ReducedScalar(u, G, rule=rule)
    fvals = f_V(rule.nodes)
    fvals = fvals - rule.integrate_values(fvals) / float(P.volume())
    return rule.integrate_values(fvals * red.node_values())


def canonical_report(P, scan=None):
    """CLI-facing payload: Sbar, extremal A, residual, optional crease scan."""
    data = extremal_affine(P)
    out = data.to_json()
    if scan is not None:
        out["scan"] = scan.to_json()
    return out
