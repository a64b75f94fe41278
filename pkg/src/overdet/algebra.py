"""Exact arithmetic in Q(i)[x1, ..., xn] and its fraction field.

Polynomials keep Gaussian-integer numerators over one shared positive
integer denominator, so the inner loops of multiplication only touch
Python ints.  Rational functions are kept in canonical form: numerator and
denominator coprime, and the lexicographically leading coefficient of the
denominator equal to 1.
"""

from __future__ import annotations

import re
import threading
from fractions import Fraction
from math import gcd
from numbers import Rational
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegreeOverflow, ParseError, PoleError, UnknownVariable

MAX_DEGREE = 32


class _Internal(threading.local):
    # >0 while inside gcd; intermediates there may exceed the degree bound
    depth = 0


_INTERNAL = _Internal()
POLE_RTOL = 1e-14


class GaussRat:
    """A Gaussian rational ``re + im*i`` with exact Fraction parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        if isinstance(re, GaussRat):
            re, im = re.re, re.im + Fraction(im)
        if isinstance(re, float) or isinstance(im, float):
            raise TypeError("GaussRat takes exact rationals, not floats")
        self.re = Fraction(re)
        self.im = Fraction(im)

    @classmethod
    def coerce(cls, value) -> "GaussRat":
        if isinstance(value, GaussRat):
            return value
        if isinstance(value, complex):
            raise TypeError("GaussRat takes exact rationals, not complex floats")
        return cls(value)

    def __add__(self, other):
        o = GaussRat.coerce(other)
        return GaussRat(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other):
        o = GaussRat.coerce(other)
        return GaussRat(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        return GaussRat.coerce(other) - self

    def __neg__(self):
        return GaussRat(-self.re, -self.im)

    def __mul__(self, other):
        o = GaussRat.coerce(other)
        return GaussRat(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = GaussRat.coerce(other)
        n = o.re * o.re + o.im * o.im
        if n == 0:
            raise ZeroDivisionError("division by zero Gaussian rational")
        return self * GaussRat(o.re / n, -o.im / n)

    def __rtruediv__(self, other):
        return GaussRat.coerce(other) / self

    def conjugate(self) -> "GaussRat":
        return GaussRat(self.re, -self.im)

    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0

    def __bool__(self):
        return not self.is_zero()

    def __eq__(self, other):
        if isinstance(other, (int, Rational)):
            other = GaussRat(other)
        if not isinstance(other, GaussRat):
            return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __repr__(self):
        return f"GaussRat({self.re}, {self.im})"

    def __str__(self):
        return format_scalar(self)


I = GaussRat(0, 1)


def _frac_str(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def format_scalar(c: GaussRat) -> str:
    if c.im == 0:
        return _frac_str(c.re)
    im = "i" if abs(c.im) == 1 else f"{_frac_str(abs(c.im))}i"
    if c.re == 0:
        return im if c.im > 0 else f"-{im}"
    return f"({_frac_str(c.re)}{'+' if c.im > 0 else '-'}{im})"


# ---------------------------------------------------------------------------
# polynomials


def _split_rational(c: GaussRat):
    """(re_num, im_num, den) with a shared positive denominator."""
    d = c.re.denominator * c.im.denominator // gcd(c.re.denominator, c.im.denominator)
    return c.re.numerator * (d // c.re.denominator), c.im.numerator * (d // c.im.denominator), d


class Poly:
    """Sparse polynomial in ``nvars`` real variables over Q(i). Immutable."""

    __slots__ = ("_nv", "_t", "_d", "_hash")

    def __init__(self, nvars: int, terms: Mapping[tuple, object] | None = None):
        t = {}
        den = 1
        items = []
        for exp, c in (terms or {}).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != nvars:
                raise ValueError(f"exponent {exp} does not have length {nvars}")
            if any(e < 0 for e in exp):
                raise ValueError(f"negative exponent in {exp}")
            c = GaussRat.coerce(c)
            if c.is_zero():
                continue
            r, i, d = _split_rational(c)
            items.append((exp, r, i, d))
            den = den * d // gcd(den, d)
        for exp, r, i, d in items:
            k = den // d
            pr, pi = t.get(exp, (0, 0))
            t[exp] = (pr + r * k, pi + i * k)
        self._init(nvars, t, den)

    def _init(self, nvars, t, den):
        t = {e: c for e, c in t.items() if c[0] or c[1]}
        if not t:
            den = 1
        else:
            g = den
            for r, i in t.values():
                g = gcd(g, r, i)
                if g == 1:
                    break
            if g > 1:
                den //= g
                t = {e: (r // g, i // g) for e, (r, i) in t.items()}
            for e in t:
                if e and max(e) > MAX_DEGREE and not _INTERNAL.depth:
                    raise DegreeOverflow(f"exponent {e} exceeds the per-variable bound {MAX_DEGREE}")
        self._nv = nvars
        self._t = t
        self._d = den
        self._hash = None

    @classmethod
    def _raw(cls, nvars, t, den) -> "Poly":
        p = cls.__new__(cls)
        p._init(nvars, t, den)
        return p

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> "Poly":
        return cls._raw(nvars, {}, 1)

    @classmethod
    def const(cls, nvars: int, value) -> "Poly":
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def var(cls, nvars: int, index: int) -> "Poly":
        """The coordinate ``x_index`` (1-based)."""
        if not 1 <= index <= nvars:
            raise ValueError(f"variable index {index} out of range 1..{nvars}")
        e = [0] * nvars
        e[index - 1] = 1
        return cls._raw(nvars, {tuple(e): (1, 0)}, 1)

    @classmethod
    def monomial(cls, exp: Sequence[int], coeff=1) -> "Poly":
        return cls(len(exp), {tuple(exp): coeff})

    # -- inspection --------------------------------------------------------

    @property
    def nvars(self) -> int:
        return self._nv

    @property
    def terms(self) -> dict:
        d = self._d
        return {e: GaussRat(Fraction(r, d), Fraction(i, d)) for e, (r, i) in self._t.items()}

    def coeff(self, exp) -> GaussRat:
        r, i = self._t.get(tuple(exp), (0, 0))
        return GaussRat(Fraction(r, self._d), Fraction(i, self._d))

    def __len__(self):
        return len(self._t)

    def is_zero(self) -> bool:
        return not self._t

    def is_constant(self) -> bool:
        return not self._t or (len(self._t) == 1 and not any(next(iter(self._t))))

    def constant_value(self) -> GaussRat:
        return self.coeff((0,) * self._nv)

    def is_real(self) -> bool:
        return all(i == 0 for _, i in self._t.values())

    def lead_exp(self) -> tuple:
        return max(self._t)

    def lead_coeff(self) -> GaussRat:
        return self.coeff(self.lead_exp())

    def degree(self, var: int | None = None) -> int:
        """Total degree, or the degree in ``x_var`` (1-based). -1 for zero."""
        if not self._t:
            return -1
        if var is None:
            return max(sum(e) for e in self._t)
        return max(e[var - 1] for e in self._t)

    def max_var(self) -> int:
        """Largest 1-based variable index occurring, 0 for constants."""
        best = 0
        for e in self._t:
            for k in range(self._nv, best, -1):
                if e[k - 1]:
                    best = k
                    break
        return best

    def coeff_magnitude(self) -> float:
        if not self._t:
            return 0.0
        return max(abs(complex(r, i)) for r, i in self._t.values()) / self._d

    # -- arithmetic --------------------------------------------------------

    def _check(self, other):
        if other._nv != self._nv:
            raise ValueError(f"nvars mismatch: {self._nv} vs {other._nv}")

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            self._check(other)
            return other
        return Poly.const(self._nv, other)

    def __add__(self, other):
        if isinstance(other, RatFun):
            return NotImplemented
        o = self._coerce(other)
        if not o._t:
            return self
        if not self._t:
            return o
        d = self._d * o._d // gcd(self._d, o._d)
        ka, kb = d // self._d, d // o._d
        t = {e: (r * ka, i * ka) for e, (r, i) in self._t.items()}
        for e, (r, i) in o._t.items():
            pr, pi = t.get(e, (0, 0))
            t[e] = (pr + r * kb, pi + i * kb)
        return Poly._raw(self._nv, t, d)

    __radd__ = __add__

    def __neg__(self):
        return Poly._raw(self._nv, {e: (-r, -i) for e, (r, i) in self._t.items()}, self._d)

    def __sub__(self, other):
        if isinstance(other, RatFun):
            return NotImplemented
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, RatFun):
            return NotImplemented
        if not isinstance(other, Poly):
            return self.scale(other)
        self._check(other)
        if not self._t or not other._t:
            return Poly.zero(self._nv)
        t: dict = {}
        get = t.get
        for ea, (ar, ai) in self._t.items():
            for eb, (br, bi) in other._t.items():
                e = tuple([x + y for x, y in zip(ea, eb)])
                pr, pi = get(e, (0, 0))
                t[e] = (pr + ar * br - ai * bi, pi + ar * bi + ai * br)
        return Poly._raw(self._nv, t, self._d * other._d)

    __rmul__ = __mul__

    def scale(self, c) -> "Poly":
        c = GaussRat.coerce(c)
        cr, ci, cd = _split_rational(c)
        t = {e: (r * cr - i * ci, r * ci + i * cr) for e, (r, i) in self._t.items()}
        return Poly._raw(self._nv, t, self._d * cd)

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("Poly powers must be non-negative integers")
        out = Poly.const(self._nv, 1)
        base = self
        while k:
            if k & 1:
                out = out * base
            k >>= 1
            if k:
                base = base * base
        return out

    def shift(self, var: int, k: int) -> "Poly":
        """Multiply by ``x_var**k``."""
        t = {}
        for e, c in self._t.items():
            e2 = list(e)
            e2[var - 1] += k
            t[tuple(e2)] = c
        return Poly._raw(self._nv, t, self._d)

    def derivative(self, var: int) -> "Poly":
        if not 1 <= var <= self._nv:
            raise ValueError(f"axis {var} out of range 1..{self._nv}")
        j = var - 1
        t = {}
        for e, (r, i) in self._t.items():
            k = e[j]
            if k:
                e2 = list(e)
                e2[j] = k - 1
                t[tuple(e2)] = (r * k, i * k)
        return Poly._raw(self._nv, t, self._d)

    def conjugate(self) -> "Poly":
        return Poly._raw(self._nv, {e: (r, -i) for e, (r, i) in self._t.items()}, self._d)

    def coeffs_in(self, var: int) -> dict:
        """Split as sum_k C_k * x_var**k; returns {k: C_k} with C_k free of x_var."""
        j = var - 1
        parts: dict = {}
        for e, c in self._t.items():
            k = e[j]
            e2 = e[:j] + (0,) + e[j + 1:]
            parts.setdefault(k, {})[e2] = c
        return {k: Poly._raw(self._nv, t, self._d) for k, t in parts.items()}

    def exact_div(self, other: "Poly") -> "Poly":
        """Quotient of an exact division; raises ArithmeticError otherwise."""
        self._check(other)
        if other.is_zero():
            raise ZeroDivisionError("polynomial division by zero")
        if other.is_constant():
            return self.scale(GaussRat(1) / other.constant_value())
        lb = other.lead_exp()
        inv = GaussRat(1) / other.lead_coeff()
        rem = self
        q_terms: dict = {}
        while not rem.is_zero():
            le = rem.lead_exp()
            de = tuple(a - b for a, b in zip(le, lb))
            if min(de) < 0:
                raise ArithmeticError("polynomial division is not exact")
            c = rem.coeff(le) * inv
            q_terms[de] = c
            rem = rem - Poly(self._nv, {de: c}) * other
        return Poly(self._nv, q_terms)

    def monic(self) -> "Poly":
        """Scale so the lexicographically leading coefficient is 1."""
        if self.is_zero():
            return self
        return self.scale(GaussRat(1) / self.lead_coeff())

    # -- evaluation --------------------------------------------------------

    def evaluate(self, x: Sequence[float]) -> complex:
        if len(x) != self._nv:
            raise ValueError(f"point has {len(x)} coordinates, expected {self._nv}")
        total = 0j
        for e, (r, i) in self._t.items():
            m = 1.0
            for xv, k in zip(x, e):
                if k:
                    m *= xv ** k
            total += complex(r, i) * m
        return total / self._d

    def evaluate_points(self, X: np.ndarray) -> np.ndarray:
        """Vectorised evaluation at the rows of ``X`` (shape ``(m, nvars)``)."""
        X = np.asarray(X, dtype=float).reshape(-1, self._nv)
        out = np.zeros(X.shape[0], dtype=complex)
        if not self._t:
            return out
        maxdeg = [max(e[k] for e in self._t) for k in range(self._nv)]
        powers = []
        for k in range(self._nv):
            p = [np.ones(X.shape[0])]
            for _ in range(maxdeg[k]):
                p.append(p[-1] * X[:, k])
            powers.append(p)
        for e in sorted(self._t):
            r, i = self._t[e]
            m = np.ones(X.shape[0])
            for k, ek in enumerate(e):
                if ek:
                    m = m * powers[k][ek]
            out += complex(r, i) * m
        return out / self._d

    # -- comparison --------------------------------------------------------

    def __eq__(self, other):
        if isinstance(other, Poly):
            return self._nv == other._nv and self._d == other._d and self._t == other._t
        if isinstance(other, RatFun):
            return NotImplemented
        try:
            return self == Poly.const(self._nv, other)
        except TypeError:
            return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self._nv, self._d, frozenset(self._t.items())))
        return self._hash

    def __repr__(self):
        return f"Poly({format_poly(self)!r})"


def _content(p: Poly, var: int) -> Poly:
    g = Poly.zero(p.nvars)
    for c in p.coeffs_in(var).values():
        g = poly_gcd(g, c)
        if g.is_constant():
            return Poly.const(p.nvars, 1)
    return g


def _prem(a: Poly, b: Poly, var: int) -> Poly:
    db = b.degree(var)
    lcb = b.coeffs_in(var)[db]
    r = a
    # the usual lcb**e normalisation is content in ``var`` and the caller
    # strips content anyway, so it is skipped
    while not r.is_zero() and r.degree(var) >= db:
        dr = r.degree(var)
        lcr = r.coeffs_in(var)[dr]
        r = r * lcb - (lcr * b).shift(var, dr - db)
    return r


def poly_gcd(a: Poly, b: Poly) -> Poly:
    """Greatest common divisor over Q(i), normalised to leading coefficient 1.

    Recursive content / primitive-part computation with a primitive
    pseudo-remainder sequence in the highest variable present.
    """
    _INTERNAL.depth += 1
    try:
        return _gcd(a, b)
    finally:
        _INTERNAL.depth -= 1


def _gcd(a: Poly, b: Poly) -> Poly:
    if a.is_zero():
        return b.monic()
    if b.is_zero():
        return a.monic()
    nv = a.nvars
    if a.is_constant() or b.is_constant():
        return Poly.const(nv, 1)
    va, vb = a.max_var(), b.max_var()
    v = max(va, vb)
    if va != v:
        return poly_gcd(a, _content(b, v))
    if vb != v:
        return poly_gcd(_content(a, v), b)
    ca, cb = _content(a, v), _content(b, v)
    pa, pb = a.exact_div(ca), b.exact_div(cb)
    c = poly_gcd(ca, cb)
    if pa.degree(v) < pb.degree(v):
        pa, pb = pb, pa
    while not pb.is_zero():
        r = _prem(pa, pb, v)
        pa = pb
        if r.is_zero():
            break
        pb = r.exact_div(_content(r, v)).monic()
    g = pa if pa.degree(v) > 0 else Poly.const(nv, 1)
    return (c * g).monic()


# ---------------------------------------------------------------------------
# rational functions


class RatFun:
    """Element of Q(i)(x1, ..., xn) in canonical form. Immutable."""

    __slots__ = ("num", "den", "_hash")

    def __init__(self, num, den=None, *, _canonical=False):
        if not isinstance(num, Poly):
            raise TypeError("RatFun numerator must be a Poly (use RatFun.const)")
        if den is None:
            den = Poly.const(num.nvars, 1)
        if den.nvars != num.nvars:
            raise ValueError("numerator and denominator have different nvars")
        if den.is_zero():
            raise ZeroDivisionError("zero denominator")
        if not _canonical:
            num, den = _canonicalize(num, den)
        self.num = num
        self.den = den
        self._hash = None

    @classmethod
    def const(cls, nvars: int, value=0) -> "RatFun":
        return cls(Poly.const(nvars, value))

    @classmethod
    def zero(cls, nvars: int) -> "RatFun":
        return cls(Poly.zero(nvars), Poly.const(nvars, 1), _canonical=True)

    @classmethod
    def one(cls, nvars: int) -> "RatFun":
        return cls.const(nvars, 1)

    @classmethod
    def var(cls, nvars: int, index: int) -> "RatFun":
        return cls(Poly.var(nvars, index), Poly.const(nvars, 1), _canonical=True)

    @property
    def nvars(self) -> int:
        return self.num.nvars

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_polynomial(self) -> bool:
        return self.den.is_constant()

    def is_constant(self) -> bool:
        return self.num.is_constant() and self.den.is_constant()

    def constant_value(self) -> GaussRat:
        if not self.is_constant():
            raise ValueError("not a constant")
        return self.num.constant_value() / self.den.constant_value()

    def is_real(self) -> bool:
        return self.num.is_real() and self.den.is_real()

    def _coerce(self, other) -> "RatFun":
        if isinstance(other, RatFun):
            if other.nvars != self.nvars:
                raise ValueError(f"nvars mismatch: {self.nvars} vs {other.nvars}")
            return other
        if isinstance(other, Poly):
            return RatFun(other)
        return RatFun.const(self.nvars, other)

    def __add__(self, other):
        o = self._coerce(other)
        if o.is_zero():
            return self
        if self.is_zero():
            return o
        if self.den == o.den:
            return RatFun(self.num + o.num, self.den)
        return RatFun(self.num * o.den + o.num * self.den, self.den * o.den)

    __radd__ = __add__

    def __neg__(self):
        return RatFun(-self.num, self.den, _canonical=True)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        if self.is_zero() or o.is_zero():
            return RatFun.zero(self.nvars)
        if self.den.is_constant() and o.den.is_constant():
            return RatFun(self.num * o.num, self.den * o.den)
        # cross-cancel before multiplying to keep sizes down
        g1 = poly_gcd(self.num, o.den)
        g2 = poly_gcd(o.num, self.den)
        n = self.num.exact_div(g1) * o.num.exact_div(g2)
        d = self.den.exact_div(g2) * o.den.exact_div(g1)
        return RatFun(n, d)

    __rmul__ = __mul__

    def inverse(self) -> "RatFun":
        if self.is_zero():
            raise ZeroDivisionError("inverse of zero rational function")
        return RatFun(self.den, self.num)

    def __truediv__(self, other):
        return self * self._coerce(other).inverse()

    def __rtruediv__(self, other):
        return self._coerce(other) * self.inverse()

    def __pow__(self, k: int):
        if k < 0:
            return self.inverse() ** (-k)
        return RatFun(self.num ** k, self.den ** k, _canonical=True) if k else RatFun.one(self.nvars)

    def derivative(self, var: int) -> "RatFun":
        dn = self.num.derivative(var)
        if self.den.is_constant():
            return RatFun(dn, self.den)
        dd = self.den.derivative(var)
        return RatFun(dn * self.den - self.num * dd, self.den * self.den)

    def conjugate(self) -> "RatFun":
        return RatFun(self.num.conjugate(), self.den.conjugate())

    def evaluate(self, x: Sequence[float]) -> complex:
        d = self.den.evaluate(x)
        if abs(d) < POLE_RTOL * (1.0 + self.den.coeff_magnitude()):
            raise PoleError(f"denominator vanishes at {list(x)}", point=list(x))
        return self.num.evaluate(x) / d

    def evaluate_points(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.nvars)
        n = self.num.evaluate_points(X)
        if self.den.is_constant():
            return n / complex(self.den.constant_value())
        d = self.den.evaluate_points(X)
        bad = np.abs(d) < POLE_RTOL * (1.0 + self.den.coeff_magnitude())
        if bad.any():
            k = int(np.argmax(bad))
            raise PoleError(f"denominator vanishes at {X[k].tolist()}", point=X[k].tolist())
        return n / d

    def __eq__(self, other):
        if not isinstance(other, RatFun):
            try:
                other = self._coerce(other)
            except (TypeError, ValueError):
                return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.num, self.den))
        return self._hash

    def __repr__(self):
        return f"RatFun({format_ratfun(self)!r})"


def _canonicalize(num: Poly, den: Poly):
    nv = num.nvars
    if num.is_zero():
        return num, Poly.const(nv, 1)
    if not den.is_constant() and not num.is_constant():
        g = poly_gcd(num, den)
        if not g.is_constant():
            num, den = num.exact_div(g), den.exact_div(g)
    lc = den.lead_coeff()
    if lc != GaussRat(1):
        inv = GaussRat(1) / lc
        num, den = num.scale(inv), den.scale(inv)
    return num, den


# ---------------------------------------------------------------------------
# printing and parsing


def default_varnames(nvars: int) -> list:
    return [f"x{k}" for k in range(1, nvars + 1)]


def _monomial_str(exp, varnames) -> str:
    parts = []
    for k, e in enumerate(exp):
        if e == 1:
            parts.append(varnames[k])
        elif e > 1:
            parts.append(f"{varnames[k]}^{e}")
    return " ".join(parts)


def format_poly(p: Poly, varnames: Sequence[str] | None = None) -> str:
    """Render ``p`` in the input grammar, highest lexicographic term first."""
    varnames = list(varnames or default_varnames(p.nvars))
    if p.is_zero():
        return "0"
    out = []
    terms = p.terms
    for exp in sorted(terms, reverse=True):
        c = terms[exp]
        mono = _monomial_str(exp, varnames)
        negative = (c.im == 0 and c.re < 0) or (c.re == 0 and c.im < 0)
        if negative:
            c = -c
        if mono and c == GaussRat(1):
            body = mono
        elif mono:
            body = f"{format_scalar(c)} {mono}"
        else:
            body = format_scalar(c)
        if not out:
            out.append(f"-{body}" if negative else body)
        else:
            out.append(f"- {body}" if negative else f"+ {body}")
    return " ".join(out)


def format_ratfun(f: RatFun, varnames: Sequence[str] | None = None) -> str:
    n = format_poly(f.num, varnames)
    if f.den == Poly.const(f.nvars, 1):
        return n
    if len(f.num) > 1:
        n = f"({n})"
    return f"{n}/({format_poly(f.den, varnames)})"


_TOKEN = re.compile(r"\s*(?:(?P<num>\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))")


class _Parser:
    def __init__(self, text: str, varnames: Sequence[str]):
        self.text = text
        self.varnames = list(varnames)
        self.index = {name: k + 1 for k, name in enumerate(self.varnames)}
        self.nv = len(self.varnames)
        self.tokens = []
        pos = 0
        while True:
            while pos < len(text) and text[pos].isspace():
                pos += 1
            if pos >= len(text):
                break
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                raise ParseError(f"unexpected character {text[pos]!r}", self._byte(pos))
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), start))
            pos = m.end()
        self.i = 0

    def _byte(self, pos: int) -> int:
        return len(self.text[:pos].encode("utf-8"))

    def _peek(self, k=0):
        j = self.i + k
        return self.tokens[j] if j < len(self.tokens) else (None, None, len(self.text))

    def _take(self):
        tok = self._peek()
        self.i += 1
        return tok

    def _error(self, message):
        raise ParseError(message, self._byte(self._peek()[2]))

    def _expect_op(self, op):
        kind, val, _ = self._peek()
        if kind != "op" or val != op:
            self._error(f"expected {op!r}")
        self._take()

    def parse(self) -> RatFun:
        f = self.ratfun()
        if self._peek()[0] is not None:
            self._error("unexpected trailing input")
        return f

    def ratfun(self) -> RatFun:
        num = self.expr()
        kind, val, _ = self._peek()
        if kind == "op" and val == "/" and self._peek(1)[:2] == ("op", "("):
            self._take()
            self._take()
            den = self.ratfun()
            self._expect_op(")")
            if den.is_zero():
                self._error("division by zero")
            return num / den
        return num

    def expr(self) -> RatFun:
        kind, val, _ = self._peek()
        sign = 1
        if kind == "op" and val in "+-":
            self._take()
            sign = -1 if val == "-" else 1
        total = self.term()
        if sign < 0:
            total = -total
        while True:
            kind, val, _ = self._peek()
            if kind == "op" and val in "+-":
                self._take()
                t = self.term()
                total = total + t if val == "+" else total - t
            else:
                return total

    def _starts_factor(self) -> bool:
        kind, val, _ = self._peek()
        return kind in ("num", "ident") or (kind == "op" and val == "(")

    def term(self) -> RatFun:
        if not self._starts_factor():
            self._error("expected a term")
        value = self.factor()
        while True:
            kind, val, _ = self._peek()
            if kind == "op" and val == "*":
                self._take()
                if not self._starts_factor():
                    self._error("expected a factor after '*'")
                value = value * self.factor()
            elif self._starts_factor():
                value = value * self.factor()
            else:
                return value

    def _uint(self) -> int:
        kind, val, _ = self._peek()
        if kind != "num":
            self._error("expected an unsigned integer")
        self._take()
        return int(val)

    def factor(self) -> RatFun:
        kind, val, pos = self._peek()
        if kind == "num":
            self._take()
            q = Fraction(int(val))
            k2, v2, _ = self._peek()
            if k2 == "op" and v2 == "/" and self._peek(1)[0] == "num":
                self._take()
                d = self._uint()
                if d == 0:
                    self._error("zero denominator in rational literal")
                q = q / d
            return RatFun.const(self.nv, q)
        if kind == "ident":
            self._take()
            if val == "i":
                base = RatFun.const(self.nv, I)
            elif val in self.index:
                base = RatFun.var(self.nv, self.index[val])
            else:
                raise UnknownVariable(val, self._byte(pos))
            return self._power(base)
        if kind == "op" and val == "(":
            self._take()
            inner = self.ratfun()
            self._expect_op(")")
            return self._power(inner)
        self._error("expected a factor")

    def _power(self, base: RatFun) -> RatFun:
        kind, val, _ = self._peek()
        if kind == "op" and val == "^":
            self._take()
            return base ** self._uint()
        return base


def parse(text: str, varnames: Sequence[str] | int) -> RatFun:
    """Parse a polynomial or rational function over the given variables."""
    if isinstance(varnames, int):
        varnames = default_varnames(varnames)
    if "i" in varnames:
        raise ValueError("'i' is reserved for the imaginary unit")
    return _Parser(text, varnames).parse()


def parse_poly(text: str, varnames: Sequence[str] | int) -> Poly:
    f = parse(text, varnames)
    if not f.is_polynomial():
        raise ParseError(f"{text!r} is not a polynomial")
    return f.num.scale(GaussRat(1) / f.den.constant_value())


def variables(nvars: int) -> list:
    """The coordinate functions x1..xn as RatFuns."""
    return [RatFun.var(nvars, k) for k in range(1, nvars + 1)]


def to_ratfun(value, nvars: int) -> RatFun:
    if isinstance(value, RatFun):
        return value
    if isinstance(value, Poly):
        return RatFun(value)
    return RatFun.const(nvars, value)


def gaussian_int_poly(nvars: int, terms: Iterable) -> Poly:
    """Build from ``[(exp, re, im), ...]`` triples."""
    return Poly(nvars, {tuple(e): GaussRat(r, i) for e, r, i in terms})
