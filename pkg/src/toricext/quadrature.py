"""Integration over polytopes: exact for polynomials, numeric for the rest.

Exact integrals go through simplex decomposition and the factorial formula
for monomials over the standard simplex, all in rational arithmetic.  The
numeric side provides tensor Gauss rules (spectrally accurate for integrands
analytic up to the boundary) and boundary-graded rules with geometric
refinement toward the facets for integrands with log or small-power
singularities there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ToleranceNotMet
from .polynomial import Polynomial
from .polytope import triangulate

_FACTORIALS = [math.factorial(i) for i in range(80)]


# ---- exact integration ------------------------------------------------


def _simplex_monomial_integral(exponents):
    """Integral of s^a t^b ... over the unit simplex: prod a_i! / (sum + n)!."""
    n = len(exponents)
    num = 1
    for e in exponents:
        num *= _FACTORIALS[e]
    return Fraction(num, _FACTORIALS[sum(exponents) + n])


def integrate_poly(P, q):
    """Exact integral of the polynomial q over P with Lebesgue measure."""
    q = _as_poly(q, P.n)
    total = Fraction(0)
    for tri in triangulate(P, mode="vertex"):
        total += _integrate_poly_simplex(tri, q)
    return total


def _integrate_poly_simplex(tri, q):
    base = tri[0]
    n = len(base)
    cols = [
        [tri[j + 1][i] - base[i] for j in range(n)] for i in range(n)
    ]
    if n == 1:
        jac = abs(cols[0][0])
    else:
        jac = abs(cols[0][0] * cols[1][1] - cols[0][1] * cols[1][0])
    if jac == 0:
        return Fraction(0)
    mapped = q.substitute_affine(cols, list(base))
    total = Fraction(0)
    for e, c in mapped.terms.items():
        total += _frac(c) * _simplex_monomial_integral(e)
    return jac * total


def integrate_poly_convex(vertices, q):
    """Exact integral of q over the convex polygon with the given rational
    vertices (in boundary order); used for clipped regions."""
    if len(vertices) < 3:
        return Fraction(0)
    total = Fraction(0)
    for i in range(1, len(vertices) - 1):
        total += _integrate_poly_simplex(
            (vertices[0], vertices[i], vertices[i + 1]), q
        )
    return total


def integrate_boundary_poly(P, q, per_facet=False):
    """Exact integral of q over the boundary with the lattice measure.

    For n = 2 each facet contributes lattice_length * int_0^1 q(edge(t)) dt.
    For n = 1 the boundary is two unit-weight points.
    """
    q = _as_poly(q, P.n)
    pieces = []
    if P.n == 1:
        for f in P.facets:
            v = P.vertices[f.vertex_indices[0]]
            pieces.append(q.evaluate_exact(v))
    else:
        for f in P.facets:
            a = P.vertices[f.vertex_indices[0]]
            b = P.vertices[f.vertex_indices[1]]
            line = q.substitute_affine(
                [[b[0] - a[0]], [b[1] - a[1]]], [a[0], a[1]]
            )
            val = Fraction(0)
            for (e,), c in line.terms.items():
                val += _frac(c) / (e + 1)
            pieces.append(f.lattice_length * val)
    if per_facet:
        return pieces
    return sum(pieces, Fraction(0))


def _as_poly(q, n):
    if isinstance(q, Polynomial):
        return q
    if isinstance(q, (int, float, Fraction)):
        return Polynomial.constant(q, n)
    raise TypeError("expected a Polynomial, got %r" % type(q))


def _frac(c):
    return c if isinstance(c, Fraction) else Fraction(c)


# ---- closed-form helpers for log-affine integrals ---------------------


def line_log_integral(a, b, c, d):
    """int_0^1 (a t + b) log(c t + d) dt with c t + d >= 0 on [0, 1].

    Endpoints where c t + d vanishes are fine (the integrand extends by 0
    there against the polynomial weight).  Used for boundary traces of
    Guillemin-type potentials.
    """
    a, b, c, d = float(a), float(b), float(c), float(d)
    if abs(c) < 1e-300:
        if d <= 0:
            return 0.0
        return (a / 2 + b) * math.log(d)

    def prim(t):
        # antiderivative of (a t + b) log(c t + d)
        u = c * t + d
        if u <= 0:
            u = 0.0
        # polynomial part of the division (a t + b) = (a/c) u + (b - a d / c)
        alpha = a / c
        beta = b - a * d / c
        if u == 0.0:
            log_u = 0.0
            u_log_terms = 0.0
        else:
            log_u = math.log(u)
            u_log_terms = (alpha * u * u / 2 + beta * u) * log_u
        return (u_log_terms - alpha * u * u / 4 - beta * u) / c

    return prim(1.0) - prim(0.0)


def _mono_log_primitive(lam, m):
    """Antiderivative of lam^m log(lam), evaluated at lam >= 0."""
    lam = float(lam)
    if lam <= 0.0:
        return 0.0
    return lam ** (m + 1) / (m + 1) * (math.log(lam) - 1.0 / (m + 1))


def poly_log_integral(P, q, normal, offset):
    """int_P q(x) log(<normal, x> - offset) dmu in closed form.

    The affine form must be nonnegative on P.  Slicing P by its level sets
    lam gives chords whose endpoints move affinely in lam between vertex
    levels, which reduces everything to int poly(lam) log(lam) dlam pieces;
    only the final log evaluations leave rational arithmetic.
    """
    q = _as_poly(q, P.n)
    normal = tuple(normal)
    offset = _frac(offset)
    if P.n == 1:
        nu = normal[0]
        lam_vals = sorted(nu * v[0] - offset for v in P.vertices)
        lo, hi = lam_vals
        if lo < 0:
            raise ValueError("affine form is negative on part of P")
        # x = (lam + offset) / nu, dmu = dlam / |nu|
        comp = q.substitute([Polynomial.affine([Fraction(1, nu)], offset / nu)])
        total = 0.0
        for (e,), c in comp.terms.items():
            total += float(c) * (
                _mono_log_primitive(hi, e) - _mono_log_primitive(lo, e)
            )
        return total / abs(nu)

    levels = sorted(
        {sum(n * c for n, c in zip(normal, v)) - offset for v in P.vertices}
    )
    if levels[0] < 0:
        raise ValueError("affine form is negative on part of P")
    total = 0.0
    edges = [
        (P.vertices[f.vertex_indices[0]], P.vertices[f.vertex_indices[1]])
        for f in P.facets
    ]
    for lam_a, lam_b in zip(levels[:-1], levels[1:]):
        lam_m = (lam_a + lam_b) / 2
        crossings = []
        for p, r in edges:
            lp = sum(n * c for n, c in zip(normal, p)) - offset
            lr = sum(n * c for n, c in zip(normal, r)) - offset
            if (lp - lam_m) * (lr - lam_m) < 0:
                # point(lam) = p + (lam - lp)/(lr - lp) * (r - p)
                den = lr - lp
                alpha = tuple(
                    p[i] - lp * (r[i] - p[i]) / den for i in range(2)
                )
                beta = tuple((r[i] - p[i]) / den for i in range(2))
                crossings.append((alpha, beta))
        if len(crossings) != 2:
            continue
        (a1, b1), (a2, b2) = crossings
        # x(lam, t) = p1(lam) + t (p2 - p1)(lam); the area element is
        # |g(lam)| dlam dt with p2 - p1 = g * rot90(normal).
        images = []
        for i in range(2):
            images.append(
                Polynomial(
                    {
                        (0, 0): a1[i],
                        (1, 0): b1[i],
                        (0, 1): a2[i] - a1[i],
                        (1, 1): b2[i] - b1[i],
                    },
                    nvars=2,
                )
            )
        w = (-normal[1], normal[0])
        if w[0] != 0:
            g0 = (a2[0] - a1[0]) / w[0]
            g1 = (b2[0] - b1[0]) / w[0]
        else:
            g0 = (a2[1] - a1[1]) / w[1]
            g1 = (b2[1] - b1[1]) / w[1]
        if g0 + g1 * lam_m < 0:
            g0, g1 = -g0, -g1
        comp = q.substitute(images) * Polynomial({(0, 0): g0, (1, 0): g1}, nvars=2)
        for (e_lam, e_t), c in comp.terms.items():
            coeff = _frac(c) / (e_t + 1)
            total += float(coeff) * (
                _mono_log_primitive(lam_b, e_lam)
                - _mono_log_primitive(lam_a, e_lam)
            )
    return total


# ---- numeric rules ----------------------------------------------------


@dataclass
class QuadratureRule:
    """Nodes and positive weights on (part of) a polytope.

    ``order`` is the polynomial degree the rule integrates exactly, verified
    at build time against integrate_poly when the rule covers all of P.
    """

    nodes: np.ndarray
    weights: np.ndarray
    order: int
    meta: dict = field(default_factory=dict)

    def integrate(self, f):
        vals = np.asarray(f(self.nodes), dtype=float)
        return float(math.fsum(vals * self.weights))

    def integrate_values(self, vals):
        vals = np.asarray(vals, dtype=float)
        return float(math.fsum(vals * self.weights))

    def __len__(self):
        return len(self.weights)


def _gauss_01(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1.0) / 2.0, w / 2.0


def _triangle_map(tri):
    a = np.array([float(c) for c in tri[0]])
    b = np.array([float(c) for c in tri[1]])
    c = np.array([float(c) for c in tri[2]])
    return a, b - a, c - a


def smooth_rule(P, order=12, cells=1):
    """Tensor Gauss rule on P, subdivided into cells^2 patches per triangle.

    Spectrally accurate for integrands analytic on the closed polytope.  The
    triangle (a, b, c) is covered through the damped tensor map
    (s, t) -> a + s * (e1 + t * (e2 - e1)) whose Jacobian s keeps weights
    positive.
    """
    xs, ws = _gauss_01(order)
    nodes = []
    weights = []
    if P.n == 1:
        lo = float(min(v[0] for v in P.vertices))
        hi = float(max(v[0] for v in P.vertices))
        edges = np.linspace(lo, hi, cells + 1)
        for i in range(cells):
            h = edges[i + 1] - edges[i]
            nodes.append((edges[i] + h * xs)[:, None])
            weights.append(h * ws)
        rule = QuadratureRule(
            np.concatenate(nodes),
            np.concatenate(weights),
            order=2 * order - 1,
            meta={"kind": "smooth", "cells": cells},
        )
        _verify_rule(P, rule)
        return rule
    sub = np.linspace(0.0, 1.0, cells + 1)
    for tri in triangulate(P, mode="vertex"):
        a, e1, e2 = _triangle_map(tri)
        jac = abs(e1[0] * e2[1] - e1[1] * e2[0])
        if jac == 0:
            continue
        for i in range(cells):
            for j in range(cells):
                s = sub[i] + (sub[i + 1] - sub[i]) * xs
                t = sub[j] + (sub[j + 1] - sub[j]) * xs
                S, T = np.meshgrid(s, t, indexing="ij")
                WS, WT = np.meshgrid(ws, ws, indexing="ij")
                X = (
                    a[None, None, :]
                    + S[:, :, None] * (e1[None, None, :]
                    + T[:, :, None] * (e2 - e1)[None, None, :])
                )
                W = jac * WS * WT * S * (sub[i + 1] - sub[i]) * (
                    sub[j + 1] - sub[j]
                )
                nodes.append(X.reshape(-1, 2))
                weights.append(W.reshape(-1))
    rule = QuadratureRule(
        np.concatenate(nodes),
        np.concatenate(weights),
        order=order - 2,
        meta={"kind": "smooth", "cells": cells},
    )
    _verify_rule(P, rule)
    return rule


def graded_rule(P, depth=36, order=10, t_cells=1):
    """Rule with geometric refinement (ratio 1/2) toward every facet.

    Built on the centroid fan, where each triangle has exactly one boundary
    edge and distance to it is an affine coordinate r with the facet at
    r = 1.  Layers [1 - 2^-m, 1 - 2^-(m+1)] get a tensor Gauss patch each;
    the last sliver keeps the same rule, which is what makes log and
    small-power singularities along the facet converge geometrically.
    """
    xs, ws = _gauss_01(order)
    nodes = []
    weights = []
    if P.n == 1:
        lo = float(min(v[0] for v in P.vertices))
        hi = float(max(v[0] for v in P.vertices))
        mid = (lo + hi) / 2.0
        for a, b in ((mid, lo), (mid, hi)):
            cuts = [0.0] + [1.0 - 0.5 ** (m + 1) for m in range(depth)] + [1.0]
            for r0, r1 in zip(cuts[:-1], cuts[1:]):
                r = r0 + (r1 - r0) * xs
                x = a + (b - a) * r
                w = abs(b - a) * (r1 - r0) * ws
                nodes.append(x[:, None])
                weights.append(w)
        rule = QuadratureRule(
            np.concatenate(nodes),
            np.concatenate(weights),
            order=2 * order - 1,
            meta={"kind": "graded", "depth": depth},
        )
        _verify_rule(P, rule)
        return rule
    cuts = [0.0] + [1.0 - 0.5 ** (m + 1) for m in range(depth)] + [1.0]
    tsub = np.linspace(0.0, 1.0, t_cells + 1)
    for tri in triangulate(P, mode="centroid"):
        apex, e1, e2 = _triangle_map(tri)
        jac = abs(e1[0] * e2[1] - e1[1] * e2[0])
        if jac == 0:
            continue
        for r0, r1 in zip(cuts[:-1], cuts[1:]):
            for j in range(t_cells):
                r = r0 + (r1 - r0) * xs
                t = tsub[j] + (tsub[j + 1] - tsub[j]) * xs
                R, T = np.meshgrid(r, t, indexing="ij")
                WR, WT = np.meshgrid(ws, ws, indexing="ij")
                X = (
                    apex[None, None, :]
                    + R[:, :, None] * (e1[None, None, :]
                    + T[:, :, None] * (e2 - e1)[None, None, :])
                )
                W = (
                    jac
                    * WR
                    * WT
                    * R
                    * (r1 - r0)
                    * (tsub[j + 1] - tsub[j])
                )
                nodes.append(X.reshape(-1, 2))
                weights.append(W.reshape(-1))
    rule = QuadratureRule(
        np.concatenate(nodes),
        np.concatenate(weights),
        order=order - 2,
        meta={"kind": "graded", "depth": depth},
    )
    _verify_rule(P, rule)
    return rule


def _verify_rule(P, rule):
    """Check the rule against exact integrals on monomials up to its order."""
    deg = min(rule.order, 6)
    vol = float(P.volume())
    worst = 0.0
    for total in range(deg + 1):
        for ex in _exponents(P.n, total):
            exact = float(integrate_poly(P, Polynomial.monomial(ex)))
            got = rule.integrate(Polynomial.monomial(ex).evaluate)
            scale = max(abs(exact), vol)
            worst = max(worst, abs(got - exact) / scale)
    if worst > 1e-11:
        raise AssertionError(
            "quadrature rule failed its exactness check: residual %.3e" % worst
        )
    rule.meta["verify_residual"] = worst


def _exponents(n, total):
    if n == 1:
        return [(total,)]
    return [(i, total - i) for i in range(total + 1)]


@dataclass
class IntegralResult:
    value: float
    error: float
    converged: bool
    levels: int

    def __float__(self):
        return self.value


def integrate_numeric(P, f, tol=1e-9, relative=False, max_depth=40, strict=False):
    """Adaptive integral of f over P, allowing log singularities at the boundary.

    Refines a boundary-graded rule until two consecutive levels agree within
    tol.  Returns an IntegralResult; with strict=True a failure to converge
    raises ToleranceNotMet instead of returning the flagged best estimate.
    """
    prev = None
    value = None
    err = math.inf
    depth = 10
    levels = 0
    while depth <= max_depth:
        rule = graded_rule(P, depth=depth, order=10)
        value = rule.integrate(f)
        levels += 1
        if prev is not None:
            err = abs(value - prev)
            bound = tol * max(1.0, abs(value)) if relative else tol
            if err <= bound:
                return IntegralResult(value, err, True, levels)
        prev = value
        depth += 6
    if strict:
        raise ToleranceNotMet(
            "no convergence to %g after %d levels" % (tol, levels),
            value=value,
            error=err,
        )
    return IntegralResult(value, err, False, levels)
