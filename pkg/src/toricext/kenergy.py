"""Torus-invariant metrics on toric surfaces and their energies.

A metric is a symplectic potential u = (1/2) sum_i l_i log l_i + p with p a
polynomial perturbation.  This module evaluates Abreu's scalar curvature
S(u) = -sum_jk d_j d_k (Hess u)^{jk}, the reduced scalar curvature relative
to a torus subgroup, the modified K-energy and Calabi energy, the Mabuchi
distance, and the distance-times-Calabi bound on K-energy differences.

The K-energy primitive used here is
    E(u) = 2 int_bd u dsigma - int_P A_G u dmu - int_P log det Hess u dmu,
whose directional derivative at u in direction f is int_P (S(u) - A_G) f dmu.
A_G is frozen per (polytope, group) from the Guillemin potential, which is
legitimate because the extremal affine potential does not depend on the
metric (checked by the u-independence tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveDefinite, PolytopeMismatch
from .polynomial import Polynomial
from .polytope import AffineFunction
from .quadrature import (
    QuadratureRule,
    graded_rule,
    integrate_boundary_poly,
    integrate_poly,
    line_log_integral,
    poly_log_integral,
    smooth_rule,
)

_RULE_CACHE = {}
_CTX_CACHE = {}


def session_rule(P, order=20, cells=2):
    key = (P, "smooth", order, cells)
    if key not in _RULE_CACHE:
        _RULE_CACHE[key] = smooth_rule(P, order=order, cells=cells)
    return _RULE_CACHE[key]


def boundary_graded_rule(P, depth=40, order=12):
    key = (P, "graded", depth, order)
    if key not in _RULE_CACHE:
        _RULE_CACHE[key] = graded_rule(P, depth=depth, order=order)
    return _RULE_CACHE[key]


# ---- groups -----------------------------------------------------------


class TorusSubgroup:
    """Subtorus given by integer directions in the torus Lie algebra."""

    def __init__(self, directions):
        dirs = tuple(tuple(int(v) for v in d) for d in directions)
        if dirs:
            m = np.array(dirs, dtype=float)
            if np.linalg.matrix_rank(m) < len(dirs):
                raise ValueError("directions are linearly dependent")
        self.directions = dirs

    @classmethod
    def full(cls, n):
        return cls(tuple(tuple(1 if j == i else 0 for j in range(n)) for i in range(n)))

    @classmethod
    def trivial(cls):
        return cls(())

    def to_json(self):
        return {"directions": [list(d) for d in self.directions]}

    @classmethod
    def from_json(cls, data):
        return cls(data.get("directions", []))

    def __repr__(self):
        return "TorusSubgroup(%r)" % (list(self.directions),)


# ---- potentials -------------------------------------------------------


class SymplecticPotential:
    """Guillemin canonical term plus a smooth polynomial perturbation."""

    def __init__(self, P, perturbation=None):
        self.polytope = P
        if perturbation is None:
            perturbation = Polynomial.zero(P.n)
        if perturbation.nvars != P.n:
            raise ValueError("perturbation has wrong variable count")
        self.perturbation = perturbation
        self._normals = np.array([f.normal for f in P.facets], dtype=float)
        self._offsets = np.array([float(f.offset) for f in P.facets])
        self._derivs = self._poly_derivatives(perturbation, P.n)
        self._pd_checked = set()

    @staticmethod
    def _poly_derivatives(p, n):
        derivs = {(): p}
        frontier = [()]
        for _ in range(4):
            nxt = []
            for idx in frontier:
                for i in range(n):
                    key = tuple(sorted(idx + (i,)))
                    if key not in derivs:
                        derivs[key] = derivs[idx].partial(i)
                        nxt.append(key)
            frontier = nxt
        return derivs

    def _lvals(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x, x @ self._normals.T - self._offsets

    def value(self, x):
        x, l = self._lvals(x)
        safe = np.where(l > 0, l, 1.0)
        guill = 0.5 * np.sum(np.where(l > 0, l * np.log(safe), 0.0), axis=1)
        return guill + self.perturbation.evaluate(x)

    def grad(self, x):
        x, l = self._lvals(x)
        logl = np.log(l)
        g = 0.5 * (logl + 1.0) @ self._normals
        for i in range(self.polytope.n):
            g[:, i] += self._derivs[(i,)].evaluate(x)
        return g

    def hess(self, x):
        x, l = self._lvals(x)
        nu = self._normals
        h = 0.5 * np.einsum("mf,fj,fk->mjk", 1.0 / l, nu, nu)
        n = self.polytope.n
        for i in range(n):
            for j in range(i, n):
                v = self._derivs[tuple(sorted((i, j)))].evaluate(x)
                h[:, i, j] += v
                if i != j:
                    h[:, j, i] += v
        return h

    def third(self, x):
        x, l = self._lvals(x)
        nu = self._normals
        t = -0.5 * np.einsum("mf,fj,fk,fi->mjki", 1.0 / l**2, nu, nu, nu)
        n = self.polytope.n
        for idx in np.ndindex(*(n,) * 3):
            key = tuple(sorted(idx))
            if key in self._derivs and self._derivs[key].terms:
                t[(slice(None),) + idx] += self._derivs[key].evaluate(x)
        return t

    def fourth(self, x):
        x, l = self._lvals(x)
        nu = self._normals
        q = np.einsum("mf,fj,fk,fi,fr->mjkir", 1.0 / l**3, nu, nu, nu, nu)
        n = self.polytope.n
        for idx in np.ndindex(*(n,) * 4):
            key = tuple(sorted(idx))
            if key in self._derivs and self._derivs[key].terms:
                q[(slice(None),) + idx] += self._derivs[key].evaluate(x)
        return q

    def check_positive(self, rule):
        """Hessian positivity at the rule's nodes; cached per rule."""
        if id(rule) in self._pd_checked:
            return
        h = self.hess(rule.nodes)
        if self.polytope.n == 1:
            bad = h[:, 0, 0] <= 0
        else:
            det = h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] ** 2
            bad = (h[:, 0, 0] <= 0) | (det <= 0)
        if np.any(bad):
            at = rule.nodes[int(np.argmax(bad))]
            raise NotPositiveDefinite(
                "Hessian not positive definite at %s" % (tuple(at),), point=at
            )
        self._pd_checked.add(id(rule))

    def shifted(self, extra):
        """New potential with ``extra`` added to the perturbation."""
        return SymplecticPotential(self.polytope, self.perturbation + extra)

    def to_json(self):
        return {"perturbation": self.perturbation.to_terms()}

    @classmethod
    def from_json(cls, P, data):
        p = Polynomial.from_terms(data.get("perturbation", []), P.n)
        return cls(P, p)


# ---- scalar curvature -------------------------------------------------


def hessian_inverse(u, x):
    h = u.hess(x)
    if h.shape[1] == 1:
        return 1.0 / h
    det = h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] * h[:, 1, 0]
    inv = np.empty_like(h)
    inv[:, 0, 0] = h[:, 1, 1]
    inv[:, 1, 1] = h[:, 0, 0]
    inv[:, 0, 1] = -h[:, 0, 1]
    inv[:, 1, 0] = -h[:, 1, 0]
    return inv / det[:, None, None]


def abreu_scalar(u, x):
    """S(u) at interior points, by closed-form differentiation.

    Uses d_j d_k of the inverse Hessian written with third and fourth
    derivative tensors of u; no finite differences anywhere.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    l = u.polytope.facet_values(x)
    if np.any(l <= 0):
        raise NotPositiveDefinite(
            "point outside the open polytope", point=x[np.argmax(np.any(l <= 0, axis=1))]
        )
    hi = hessian_inverse(u, x)
    t = u.third(x)
    q = u.fourth(x)
    term_a = np.einsum(
        "mja,mabk,mbc,mcdj,mdk->m", hi, t, hi, t, hi, optimize=True
    )
    term_b = np.einsum(
        "mja,mabj,mbc,mcdk,mdk->m", hi, t, hi, t, hi, optimize=True
    )
    term_c = np.einsum("mja,mabjk,mbk->m", hi, q, hi, optimize=True)
    return -(term_a + term_b - term_c)


# ---- projections and reduced curvature --------------------------------


def _killing_basis(P, G):
    """Mean-zero potentials <w, x> - mean for the group directions."""
    vol = P.volume()
    basis = []
    for w in G.directions:
        lin = Polynomial.affine(list(w), 0)
        mean = integrate_poly(P, lin) / vol
        basis.append((np.array(w, dtype=float), float(mean), lin - mean))
    return basis


def project_killing(P, G, h, rule=None):
    """L2(P) projection of h onto the Killing potentials of G.

    Returns an AffineFunction (mean zero).  h may be a callable on points,
    a Polynomial, or an array of values on the given rule.
    """
    basis = _killing_basis(P, G)
    n = P.n
    if not basis:
        return AffineFunction((0.0,) * n, 0.0)
    gram = np.array(
        [
            [float(integrate_poly(P, bi[2] * bj[2])) for bj in basis]
            for bi in basis
        ]
    )
    rhs = np.empty(len(basis))
    for i, (w, mean, poly) in enumerate(basis):
        if isinstance(h, Polynomial):
            rhs[i] = float(integrate_poly(P, poly * h))
        else:
            rule = rule if rule is not None else session_rule(P)
            vals = h(rule.nodes) if callable(h) else np.asarray(h, dtype=float)
            rhs[i] = rule.integrate_values(vals * poly.evaluate(rule.nodes))
    coef = np.linalg.solve(gram, rhs)
    grad = np.zeros(n)
    const = 0.0
    for c, (w, mean, poly) in zip(coef, basis):
        grad += c * w
        const -= c * mean
    return AffineFunction(tuple(grad), const)


def average_scalar_value(P):
    """Sbar = 2 Vol(boundary) / Vol(P), exact rational."""
    return 2 * P.boundary_volume() / P.volume()


class ReducedScalar:
    """S(u) - Sbar - projection of S(u); callable on interior points."""

    def __init__(self, u, G, rule=None):
        self.u = u
        self.G = G
        P = u.polytope
        self.rule = rule if rule is not None else session_rule(P)
        u.check_positive(self.rule)
        self.sbar = float(average_scalar_value(P))
        svals = abreu_scalar(u, self.rule.nodes)
        self.projection = project_killing(P, G, svals, rule=self.rule)
        self._node_values = svals - self.sbar - self.projection(self.rule.nodes)

    def __call__(self, x):
        return (
            abreu_scalar(self.u, x)
            - self.sbar
            - self.projection(np.atleast_2d(np.asarray(x, dtype=float)))
        )

    def node_values(self):
        return self._node_values


def reduced_scalar(u, G, rule=None):
    return ReducedScalar(u, G, rule=rule)


def extremal_field_potential(u, G, rule=None):
    """A_G = Sbar + projection of S(u) onto the Killing potentials of G."""
    P = u.polytope
    rule = rule if rule is not None else session_rule(P)
    u.check_positive(rule)
    sbar = float(average_scalar_value(P))
    proj = project_killing(P, G, abreu_scalar(u, rule.nodes), rule=rule)
    return AffineFunction(proj.grad, sbar + proj.const)


# ---- energy context (per polytope and group) --------------------------


@dataclass
class EnergyContext:
    P: object
    G: object
    a_g: AffineFunction
    sbar: float
    boundary_guillemin: float
    ag_dot_guillemin: float
    log_l_integral: float

    def a_g_poly(self):
        return self.a_g.as_polynomial()


def energy_context(P, G):
    key = (P, G.directions)
    if key in _CTX_CACHE:
        return _CTX_CACHE[key]
    u0 = SymplecticPotential(P)
    rule = session_rule(P)
    a_g = extremal_field_potential(u0, G, rule=rule)
    sbar = float(average_scalar_value(P))

    bnd = _guillemin_boundary_integral(P)
    a_poly = a_g.as_polynomial()
    ag_u0 = 0.0
    log_l = 0.0
    for f in P.facets:
        l_poly = Polynomial.affine(list(f.normal), -f.offset)
        ag_u0 += 0.5 * poly_log_integral(P, a_poly * l_poly, f.normal, f.offset)
        log_l += poly_log_integral(P, 1, f.normal, f.offset)
    ctx = EnergyContext(P, G, a_g, sbar, bnd, ag_u0, log_l)
    _CTX_CACHE[key] = ctx
    return ctx


def _guillemin_boundary_integral(P):
    """Exact-in-closed-form int_bd u0 dsigma (1D log-affine primitives)."""
    if P.n == 1:
        verts = [v[0] for v in P.vertices]
        total = 0.0
        for v in verts:
            for f in P.facets:
                lv = float(f.value((v,)))
                if lv > 0:
                    total += 0.5 * lv * math.log(lv)
        return total
    total = 0.0
    for f in P.facets:
        a = P.vertices[f.vertex_indices[0]]
        b = P.vertices[f.vertex_indices[1]]
        for g in P.facets:
            if g is f:
                continue
            beta = float(g.value(a))
            alpha = float(g.value(b)) - beta
            total += float(f.lattice_length) * 0.5 * line_log_integral(
                alpha, beta, alpha, beta
            )
    return total


def _log_l_integral(P):
    return math.fsum(
        poly_log_integral(P, 1, f.normal, f.offset) for f in P.facets
    )


def _log_q(u, x):
    """log of det Hess u times the product of the facet forms.

    This combination extends analytically across the boundary, which is what
    lets a plain tensor rule integrate log det Hess accurately.
    """
    h = u.hess(x)
    if h.shape[1] == 1:
        det = h[:, 0, 0]
    else:
        det = h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] * h[:, 1, 0]
    l = u.polytope.facet_values(x)
    return np.log(det) + np.sum(np.log(l), axis=1)


def log_det_integral(u, ctx=None, rule=None):
    """int_P log det Hess u dmu via the regularized splitting."""
    P = u.polytope
    rule = rule if rule is not None else session_rule(P)
    u.check_positive(rule)
    smooth_part = rule.integrate_values(_log_q(u, rule.nodes))
    log_l = ctx.log_l_integral if ctx is not None else _log_l_integral(P)
    return smooth_part - log_l


def modified_kenergy(u, G):
    """Modified K-energy of u relative to G (additive constant fixed by the
    closed-form primitive)."""
    ctx = energy_context(u.polytope, G)
    P = u.polytope
    p = u.perturbation
    boundary = ctx.boundary_guillemin + float(integrate_boundary_poly(P, p))
    ag_u = ctx.ag_dot_guillemin + float(integrate_poly(P, ctx.a_g_poly() * p))
    return 2.0 * boundary - ag_u - log_det_integral(u, ctx=ctx)


def kenergy_gradient(u, G, f, rule=None):
    """Directional derivative of the K-energy at u in direction f.

    f may be a Polynomial or a callable; equals int_P (S(u) - A_G) f dmu.
    """
    ctx = energy_context(u.polytope, G)
    rule = rule if rule is not None else session_rule(u.polytope)
    fvals = f.evaluate(rule.nodes) if isinstance(f, Polynomial) else f(rule.nodes)
    svals = abreu_scalar(u, rule.nodes)
    return rule.integrate_values((svals - ctx.a_g(rule.nodes)) * fvals)


def modified_calabi(u, G, rule=None):
    """Ca^G(u) = int_P (S^G(u))^2 dmu."""
    red = ReducedScalar(u, G, rule=rule)
    return red.rule.integrate_values(red.node_values() ** 2)


@dataclass
class EnergyReport:
    kenergy: float
    calabi: float
    sbar: float
    a_g: AffineFunction
    diagnostics: dict

    def to_json(self):
        return {
            "kenergy": self.kenergy,
            "calabi": self.calabi,
            "sbar": self.sbar,
            "A_G": {
                "grad": [float(g) for g in self.a_g.grad],
                "const": float(self.a_g.const),
            },
            "diagnostics": self.diagnostics,
        }


def energy_report(u, G):
    ctx = energy_context(u.polytope, G)
    rule = session_rule(u.polytope)
    return EnergyReport(
        kenergy=modified_kenergy(u, G),
        calabi=modified_calabi(u, G),
        sbar=ctx.sbar,
        a_g=ctx.a_g,
        diagnostics={
            "rule_nodes": len(rule),
            "rule_residual": rule.meta.get("verify_residual", 0.0),
        },
    )


# ---- distance and the energy-difference bound -------------------------


def mabuchi_distance(u0, u1, normalized=True):
    """L2(P) distance between potentials on the same polytope.

    With normalized=True (the default) the mean of the difference is removed
    first, matching the constant-insensitivity of the energies.
    """
    if u0.polytope is not u1.polytope:
        raise PolytopeMismatch("potentials live on different polytopes")
    P = u0.polytope
    if isinstance(u0, SymplecticPotential) and isinstance(u1, SymplecticPotential):
        diff = u1.perturbation - u0.perturbation
        sq = float(integrate_poly(P, diff * diff))
        mean = float(integrate_poly(P, diff)) / float(P.volume())
    else:
        rule = session_rule(P)
        vals = u1.value(rule.nodes) - u0.value(rule.nodes)
        sq = rule.integrate_values(vals**2)
        mean = rule.integrate_values(vals) / float(P.volume())
    if normalized:
        sq = sq - mean * mean * float(P.volume())
    return math.sqrt(max(sq, 0.0))


def chen_check(u0, u1, G):
    """margin = d(u0,u1) sqrt(Ca^G(u1)) - (E^G(u1) - E^G(u0)); the bound
    says the margin is nonnegative."""
    if u0.polytope is not u1.polytope:
        raise PolytopeMismatch("potentials live on different polytopes")
    d = mabuchi_distance(u0, u1, normalized=True)
    ca = modified_calabi(u1, G)
    de = modified_kenergy(u1, G) - modified_kenergy(u0, G)
    return d * math.sqrt(max(ca, 0.0)) - de


def random_perturbation(P, rng, scale=None, degree=3):
    """Small random polynomial perturbation that keeps Guillemin + p convex.

    The default amplitude shrinks with the squared diameter so the same
    draw is safe on polytopes of any size.
    """
    if scale is None:
        scale = 0.15 / (1.0 + P.diameter()) ** 2
    terms = {}
    if P.n == 1:
        exps = [(d,) for d in range(2, degree + 2)]
    else:
        exps = [
            (i, d - i)
            for d in range(2, degree + 1)
            for i in range(d + 1)
        ]
    for e in exps:
        terms[e] = float(rng.normal(scale=scale))
    return Polynomial(terms, P.n)
