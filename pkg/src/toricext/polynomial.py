"""Sparse polynomials in a few variables, exact when the coefficients are exact.

Coefficients may be ints, Fractions, or floats.  All algebra (sums, products,
affine substitution, differentiation) preserves exactness, which is what the
quadrature module relies on for its closed-form integrals.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def _as_exponent(e):
    return tuple(int(v) for v in e)


class Polynomial:
    """Finitely supported map from exponent tuples to coefficients."""

    __slots__ = ("nvars", "terms")

    def __init__(self, terms=None, nvars=None):
        terms = dict(terms or {})
        clean = {}
        for e, c in terms.items():
            e = _as_exponent(e)
            if any(v < 0 for v in e):
                raise ValueError("negative exponent in %r" % (e,))
            if c != 0:
                clean[e] = clean.get(e, 0) + c
        clean = {e: c for e, c in clean.items() if c != 0}
        if nvars is None:
            if clean:
                nvars = len(next(iter(clean)))
            else:
                raise ValueError("nvars required for the zero polynomial")
        for e in clean:
            if len(e) != nvars:
                raise ValueError("mixed exponent lengths")
        self.nvars = int(nvars)
        self.terms = clean

    # ---- constructors -------------------------------------------------

    @classmethod
    def zero(cls, nvars):
        return cls({}, nvars=nvars)

    @classmethod
    def constant(cls, c, nvars):
        return cls({(0,) * nvars: c}, nvars=nvars)

    @classmethod
    def monomial(cls, exponent, coeff=1):
        e = _as_exponent(exponent)
        return cls({e: coeff}, nvars=len(e))

    @classmethod
    def affine(cls, grad, const=0):
        """<grad, x> + const as a polynomial."""
        n = len(grad)
        terms = {(0,) * n: const}
        for i, w in enumerate(grad):
            e = [0] * n
            e[i] = 1
            terms[tuple(e)] = w
        return cls(terms, nvars=n)

    # ---- algebra ------------------------------------------------------

    def __add__(self, other):
        other = self._coerce(other)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, 0) + c
        return Polynomial(terms, nvars=self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({e: -c for e, c in self.terms.items()}, nvars=self.nvars)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise ValueError("variable count mismatch")
            terms = {}
            for e1, c1 in self.terms.items():
                for e2, c2 in other.terms.items():
                    e = tuple(a + b for a, b in zip(e1, e2))
                    terms[e] = terms.get(e, 0) + c1 * c2
            return Polynomial(terms, nvars=self.nvars)
        return Polynomial(
            {e: c * other for e, c in self.terms.items()}, nvars=self.nvars
        )

    __rmul__ = __mul__

    def _coerce(self, other):
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise ValueError("variable count mismatch")
            return other
        return Polynomial.constant(other, self.nvars)

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __repr__(self):
        if not self.terms:
            return "Polynomial(0)"
        bits = []
        for e in sorted(self.terms):
            mono = "*".join(
                "x%d^%d" % (i, p) if p > 1 else "x%d" % i
                for i, p in enumerate(e)
                if p
            )
            bits.append("%s%s" % (self.terms[e], "*" + mono if mono else ""))
        return "Polynomial(%s)" % " + ".join(bits)

    # ---- calculus -----------------------------------------------------

    def degree(self):
        if not self.terms:
            return 0
        return max(sum(e) for e in self.terms)

    def partial(self, i):
        terms = {}
        for e, c in self.terms.items():
            if e[i] == 0:
                continue
            down = list(e)
            down[i] -= 1
            terms[tuple(down)] = c * e[i]
        return Polynomial(terms, nvars=self.nvars)

    def gradient(self):
        return [self.partial(i) for i in range(self.nvars)]

    def evaluate(self, x):
        """Evaluate at points; x has shape (m, nvars) or (nvars,)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = x[None, :] if single else x
        out = np.zeros(pts.shape[0])
        for e, c in self.terms.items():
            term = float(c) * np.ones(pts.shape[0])
            for i, p in enumerate(e):
                if p:
                    term *= pts[:, i] ** p
            out += term
        return out[0] if single else out

    def evaluate_exact(self, point):
        """Evaluate at one point with exact arithmetic."""
        total = 0
        for e, c in self.terms.items():
            v = c
            for i, p in enumerate(e):
                v *= point[i] ** p
            total += v
        return total

    def substitute_affine(self, matrix, shift):
        """Exact composition q(M s + b) as a polynomial in s.

        ``matrix`` is nvars x m, ``shift`` has length nvars.  Used to map
        integrands onto reference simplices.
        """
        images = []
        for i in range(self.nvars):
            images.append(Polynomial.affine(list(matrix[i]), shift[i]))
        return self.substitute(images)

    def substitute(self, images):
        """Exact composition q(images[0], ..., images[nvars-1]).

        Each image is a Polynomial in a common variable set.
        """
        if len(images) != self.nvars:
            raise ValueError("need one image polynomial per variable")
        m = images[0].nvars if images else 0
        out = Polynomial.zero(m)
        for e, c in self.terms.items():
            term = Polynomial.constant(c, m)
            for i, p in enumerate(e):
                for _ in range(p):
                    term = term * images[i]
            out = out + term
        return out

    # ---- serialization ------------------------------------------------

    def to_terms(self):
        """JSON-friendly term list, sorted for stable output."""
        return [
            {"exponent": list(e), "coeff": float(self.terms[e])}
            for e in sorted(self.terms)
        ]

    @classmethod
    def from_terms(cls, items, nvars):
        terms = {}
        for item in items:
            e = _as_exponent(item["exponent"])
            c = item["coeff"]
            if isinstance(c, str):
                c = Fraction(c)
            terms[e] = terms.get(e, 0) + c
        return cls(terms, nvars=nvars)
