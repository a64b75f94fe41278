"""First-order differential operators with rational-function coefficients.

A ``DiffOp`` acts as ``f -> sum_nu a[nu] * d_nu f + a0 * f``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .algebra import RatFun, format_ratfun, parse, to_ratfun


@dataclass(frozen=True)
class DiffOp:
    a: tuple
    a0: RatFun

    def __post_init__(self):
        n = self.a0.nvars
        a = tuple(to_ratfun(c, n) for c in self.a)
        if len(a) != n:
            raise ValueError(f"need {n} principal coefficients, got {len(a)}")
        if any(c.nvars != n for c in a):
            raise ValueError("coefficients with mixed nvars")
        object.__setattr__(self, "a", a)

    @classmethod
    def make(cls, principal: Sequence, zero_order=0, nvars: int | None = None) -> "DiffOp":
        n = nvars if nvars is not None else len(principal)
        return cls(tuple(to_ratfun(c, n) for c in principal), to_ratfun(zero_order, n))

    @classmethod
    def zero(cls, nvars: int) -> "DiffOp":
        z = RatFun.zero(nvars)
        return cls((z,) * nvars, z)

    @classmethod
    def partial(cls, nvars: int, axis: int) -> "DiffOp":
        """The coordinate derivative d/dx_axis (1-based)."""
        return cls.make([1 if k == axis else 0 for k in range(1, nvars + 1)], 0, nvars)

    @classmethod
    def multiplication(cls, f: RatFun) -> "DiffOp":
        return cls((RatFun.zero(f.nvars),) * f.nvars, f)

    @classmethod
    def parse(cls, principal: Sequence[str], zero_order: str, varnames: Sequence[str]) -> "DiffOp":
        return cls(tuple(parse(s, varnames) for s in principal), parse(zero_order, varnames))

    @property
    def nvars(self) -> int:
        return self.a0.nvars

    def coefficients(self) -> tuple:
        """(a0, a1, ..., an)."""
        return (self.a0,) + self.a

    def apply(self, f: RatFun) -> RatFun:
        out = self.a0 * f if not self.a0.is_zero() else RatFun.zero(self.nvars)
        for nu, c in enumerate(self.a, start=1):
            if not c.is_zero():
                out = out + c * f.derivative(nu)
        return out

    __call__ = apply

    def principal(self) -> "DiffOp":
        return DiffOp(self.a, RatFun.zero(self.nvars))

    def bar(self) -> "DiffOp":
        return DiffOp(tuple(c.conjugate() for c in self.a), self.a0.conjugate())

    def is_zero(self) -> bool:
        return self.a0.is_zero() and all(c.is_zero() for c in self.a)

    def is_principal(self) -> bool:
        return self.a0.is_zero()

    def __add__(self, other: "DiffOp") -> "DiffOp":
        return DiffOp(tuple(x + y for x, y in zip(self.a, other.a)), self.a0 + other.a0)

    def __sub__(self, other: "DiffOp") -> "DiffOp":
        return DiffOp(tuple(x - y for x, y in zip(self.a, other.a)), self.a0 - other.a0)

    def __neg__(self) -> "DiffOp":
        return DiffOp(tuple(-x for x in self.a), -self.a0)

    def scale(self, g) -> "DiffOp":
        """Left multiplication ``g * P``."""
        g = to_ratfun(g, self.nvars)
        return DiffOp(tuple(g * x for x in self.a), g * self.a0)

    def __rmul__(self, g):
        return self.scale(g)

    def format(self, varnames: Sequence[str] | None = None) -> dict:
        return {
            "principal": [format_ratfun(c, varnames) for c in self.a],
            "zero_order": format_ratfun(self.a0, varnames),
        }


def _principal_apply(P: DiffOp, f: RatFun) -> RatFun:
    out = RatFun.zero(P.nvars)
    for nu, c in enumerate(P.a, start=1):
        if not c.is_zero():
            out = out + c * f.derivative(nu)
    return out


def bracket(P: DiffOp, Q: DiffOp) -> DiffOp:
    """The commutator ``PQ - QP``, which is again first order."""
    n = P.nvars
    # second-order part of PQ - QP is a^mu b^nu - b^mu a^nu symmetrised; must vanish
    for mu in range(n):
        for nu in range(mu, n):
            s = P.a[mu] * Q.a[nu] + P.a[nu] * Q.a[mu] - Q.a[mu] * P.a[nu] - Q.a[nu] * P.a[mu]
            if not s.is_zero():
                raise AssertionError("second-order terms of a commutator failed to cancel")
    a = tuple(_principal_apply(P, Q.a[nu]) - _principal_apply(Q, P.a[nu]) for nu in range(n))
    a0 = _principal_apply(P, Q.a0) - _principal_apply(Q, P.a0)
    return DiffOp(a, a0)


def formal_adjoint(P: DiffOp) -> DiffOp:
    """Adjoint for the pairing (f, g) = integral of f * conj(g).

    tP f = -sum_nu d_nu(conj(a^nu) f) + conj(a0) f.
    """
    abar = tuple(c.conjugate() for c in P.a)
    a0 = P.a0.conjugate()
    for nu, c in enumerate(abar, start=1):
        a0 = a0 - c.derivative(nu)
    return DiffOp(tuple(-c for c in abar), a0)


def compose_apply(ops: Sequence[DiffOp], f: RatFun) -> RatFun:
    """Apply ``ops[0] o ops[1] o ...`` to ``f`` (rightmost first)."""
    for P in reversed(ops):
        f = P.apply(f)
    return f
