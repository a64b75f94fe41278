"""Multi-index combinatorics and antisymmetric cochains.

Indices are 1-based tuples.  A strictly increasing tuple is the storage
key; any other ordering is reached through ``perm_sign``.
"""

from __future__ import annotations

from itertools import combinations
from typing import Iterable, Mapping, Sequence

from .algebra import RatFun
from .errors import DegreeMismatch, NotAPermutation

MultiIndex = tuple


def position_count(k: int, J: Sequence[int]) -> int:
    """Number of entries of ``J`` strictly less than ``k``."""
    return sum(1 for j in J if j < k)


def perm_sign(top: Sequence[int], bottom: Sequence[int]) -> int:
    """Sign of the permutation carrying the tuple ``top`` to ``bottom``."""
    top, bottom = tuple(top), tuple(bottom)
    if len(set(top)) != len(top) or len(set(bottom)) != len(bottom):
        raise NotAPermutation(f"repeated entries in {top} / {bottom}")
    if sorted(top) != sorted(bottom):
        raise NotAPermutation(f"{bottom} is not a rearrangement of {top}")
    where = {v: k for k, v in enumerate(top)}
    seq = [where[v] for v in bottom]
    inversions = 0
    for a in range(len(seq)):
        for b in range(a + 1, len(seq)):
            if seq[a] > seq[b]:
                inversions += 1
    return -1 if inversions % 2 else 1


def sort_sign(t: Sequence[int]) -> tuple[int, MultiIndex]:
    """(sign, sorted tuple); sign is 0 when ``t`` has a repeat."""
    t = tuple(t)
    if len(set(t)) != len(t):
        return 0, tuple(sorted(t))
    s = tuple(sorted(t))
    return perm_sign(s, t), s


def remove(J: Sequence[int], *drop: int) -> MultiIndex:
    """``J`` with the given values removed, order preserved."""
    return tuple(j for j in J if j not in drop)


def enumerate_indices(r: int, q: int) -> list:
    """All strictly increasing length-``q`` tuples over 1..r, lexicographic."""
    if not 0 <= q <= r:
        return []
    return list(combinations(range(1, r + 1), q))


def key(J: Sequence[int]) -> str:
    """File/report key "j1.j2..." (empty string for the empty index)."""
    return ".".join(str(j) for j in J)


def parse_key(text: str) -> MultiIndex:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(p) for p in text.split("."))


class Cochain:
    """Antisymmetric array of rational functions of degree ``q``.

    Components are keyed by strictly increasing indices; a missing key is a
    zero component.
    """

    __slots__ = ("q", "r", "nvars", "components")

    def __init__(self, q: int, r: int, nvars: int, components: Mapping | None = None):
        if not 0 <= q <= r:
            raise DegreeMismatch(f"cochain degree {q} outside 0..{r}")
        self.q, self.r, self.nvars = q, r, nvars
        comps = {}
        for J, f in (components or {}).items():
            J = tuple(J)
            if len(J) != q or any(not 1 <= j <= r for j in J):
                raise DegreeMismatch(f"index {J} is not a degree-{q} index over 1..{r}")
            if list(J) != sorted(set(J)):
                raise ValueError(f"cochain keys must be strictly increasing, got {J}")
            if not isinstance(f, RatFun):
                f = RatFun.const(nvars, f) if not hasattr(f, "nvars") else RatFun(f)
            if not f.is_zero():
                comps[J] = f
        self.components = comps

    @classmethod
    def scalar(cls, r: int, f: RatFun) -> "Cochain":
        return cls(0, r, f.nvars, {(): f})

    def __getitem__(self, J) -> RatFun:
        return self.components.get(tuple(J), RatFun.zero(self.nvars))

    def get(self, t: Sequence[int]) -> RatFun:
        return antisym_get(self, t)

    def indices(self) -> list:
        return enumerate_indices(self.r, self.q)

    def components_full(self) -> dict:
        """Every increasing index mapped to its component, zeros included."""
        return {J: self[J] for J in self.indices()}

    def is_zero(self) -> bool:
        return not self.components

    def __eq__(self, other):
        if not isinstance(other, Cochain):
            return NotImplemented
        return (self.q, self.r, self.nvars, self.components) == (
            other.q, other.r, other.nvars, other.components)

    def __add__(self, other: "Cochain") -> "Cochain":
        self._same(other)
        out = dict(self.components)
        for J, f in other.components.items():
            out[J] = out[J] + f if J in out else f
        return Cochain(self.q, self.r, self.nvars, out)

    def __neg__(self):
        return Cochain(self.q, self.r, self.nvars, {J: -f for J, f in self.components.items()})

    def __sub__(self, other: "Cochain") -> "Cochain":
        return self + (-other)

    def map(self, fn) -> "Cochain":
        return Cochain(self.q, self.r, self.nvars, {J: fn(f) for J, f in self.components.items()})

    def _same(self, other):
        if (self.q, self.r, self.nvars) != (other.q, other.r, other.nvars):
            raise DegreeMismatch("cochains of different shape")

    def __repr__(self):
        return f"Cochain(q={self.q}, r={self.r}, {self.components!r})"


def antisym_get(f: Cochain, t: Iterable[int]) -> RatFun:
    """Component of ``f`` at an arbitrary tuple, extended antisymmetrically."""
    sign, J = sort_sign(t)
    if sign == 0:
        return RatFun.zero(f.nvars)
    c = f.components.get(J)
    if c is None:
        return RatFun.zero(f.nvars)
    return c if sign > 0 else -c
