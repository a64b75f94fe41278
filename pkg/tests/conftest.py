"""Shared strategies and helpers."""

from __future__ import annotations

import random

import sympy
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from overdet.algebra import GaussRat, Poly, RatFun

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

NV = 3


def _terms(nvars, max_deg, max_terms, coeff_bound=4):
    exps = st.tuples(*[st.integers(0, max_deg)] * nvars)
    coeffs = st.builds(GaussRat, st.integers(-coeff_bound, coeff_bound),
                       st.integers(-coeff_bound, coeff_bound))
    return st.dictionaries(exps, coeffs, max_size=max_terms)


def polys(nvars=NV, max_deg=2, max_terms=4):
    return _terms(nvars, max_deg, max_terms).map(lambda t: Poly(nvars, t))


def nonzero_polys(nvars=NV, max_deg=2, max_terms=3):
    return polys(nvars, max_deg, max_terms).filter(lambda p: not p.is_zero())


def ratfuns(nvars=NV):
    return st.builds(lambda n, d: RatFun(n, d), polys(nvars), nonzero_polys(nvars, 1, 2))


SYMS = sympy.symbols("x1:5")


def to_sympy(f) -> sympy.Expr:
    """Independent translation used as the oracle for exact arithmetic."""
    if isinstance(f, RatFun):
        return to_sympy(f.num) / to_sympy(f.den)
    out = sympy.Integer(0)
    for exp, c in f.terms.items():
        mono = sympy.Integer(1)
        for k, e in enumerate(exp):
            mono *= SYMS[k] ** e
        out += (sympy.Rational(c.re.numerator, c.re.denominator)
                + sympy.I * sympy.Rational(c.im.numerator, c.im.denominator)) * mono
    return out


def sym_equal(a, b) -> bool:
    return sympy.cancel(sympy.together(a - b)) == 0


def rng(seed=0):
    return random.Random(seed)
