"""Operator systems P = (P_1, ..., P_r) and their structural checks.

Structure-constant tables are nested tuples indexed ``c[j][k][l]``
(0-based) for the coefficient of ``P_l`` in ``[P_j, P_k]``.  Reports and
witnesses use 1-based indices.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import product
from typing import Sequence

import numpy as np

from .algebra import GaussRat, Poly, RatFun, default_varnames, format_ratfun, parse
from .diffop import DiffOp, bracket
from .errors import BadParams, MissingC, ParseError, PoleError

POLE_SAMPLES = 1000
RANK_SAMPLES = 100


@dataclass(frozen=True)
class OperatorSystem:
    n: int
    r: int
    ops: tuple
    c: tuple | None = None
    d: tuple | None = None
    e: tuple | None = None
    varnames: tuple = ()
    box: tuple = ()
    name: str = ""

    def __post_init__(self):
        if len(self.ops) != self.r:
            raise BadParams(f"expected {self.r} operators, got {len(self.ops)}")
        if any(P.nvars != self.n for P in self.ops):
            raise BadParams("operator nvars does not match n")
        if not self.varnames:
            object.__setattr__(self, "varnames", tuple(default_varnames(self.n)))
        if not self.box:
            object.__setattr__(self, "box", tuple((-1.0, 1.0) for _ in range(self.n)))
        object.__setattr__(self, "ops", tuple(self.ops))
        object.__setattr__(self, "box", tuple((float(lo), float(hi)) for lo, hi in self.box))
        if len(self.varnames) != self.n or len(self.box) != self.n:
            raise BadParams("varnames/box length must equal n")
        for name in ("c", "d", "e"):
            t = getattr(self, name)
            if t is not None:
                t = _freeze_table(t, self.r, self.n)
                object.__setattr__(self, name, t)
        if self.c is not None:
            for j, k, l in product(range(self.r), repeat=3):
                if self.c[j][k][l] != -self.c[k][j][l]:
                    raise BadParams(f"c is not antisymmetric at ({j + 1},{k + 1},{l + 1})")

    def with_tables(self, **tables) -> "OperatorSystem":
        return replace(self, **tables)

    def principal_parts(self) -> list:
        return [P.principal() for P in self.ops]

    def fmt(self, f: RatFun) -> str:
        return format_ratfun(f, self.varnames)

    def fmt_op(self, P: DiffOp) -> dict:
        return P.format(self.varnames)


def _freeze_table(t, r, n):
    if len(t) != r or any(len(row) != r for row in t) or any(len(x) != r for row in t for x in row):
        raise BadParams(f"structure table must be {r}x{r}x{r}")
    return tuple(tuple(tuple(_as_ratfun(x, n) for x in col) for col in row) for row in t)


def _as_ratfun(x, n):
    if isinstance(x, RatFun):
        return x
    return RatFun.const(n, x)


def zero_table(r: int, n: int) -> tuple:
    z = RatFun.zero(n)
    return tuple(tuple(tuple(z for _ in range(r)) for _ in range(r)) for _ in range(r))


@dataclass
class CheckReport:
    assumption: str
    passed: bool
    witness: dict | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.passed and self.witness is None:
            raise ValueError("a failed check needs a witness")

    def to_dict(self) -> dict:
        return {"assumption": self.assumption, "pass": self.passed,
                "witness": self.witness, "details": self.details}


# ---------------------------------------------------------------------------
# linear algebra over the rational-function field


@dataclass
class LinearSolution:
    consistent: bool
    x: list | None
    rank: int
    pivots: list
    kernel_dim: int
    bad_row: int | None = None


def solve_linear(M: Sequence[Sequence[RatFun]], b: Sequence[RatFun]) -> LinearSolution:
    """Gauss-Jordan elimination; pivots chosen left to right, free unknowns 0."""
    m = len(M)
    k = len(M[0]) if m else 0
    rows = [list(M[i]) + [b[i]] for i in range(m)]
    ids = list(range(m))
    pivots = []
    prow = 0
    for col in range(k):
        sel = next((i for i in range(prow, m) if not rows[i][col].is_zero()), None)
        if sel is None:
            continue
        rows[prow], rows[sel] = rows[sel], rows[prow]
        ids[prow], ids[sel] = ids[sel], ids[prow]
        inv = rows[prow][col].inverse()
        rows[prow] = [x * inv if not x.is_zero() else x for x in rows[prow]]
        for i in range(m):
            if i != prow and not rows[i][col].is_zero():
                f = rows[i][col]
                rows[i] = [x - f * y if not y.is_zero() else x for x, y in zip(rows[i], rows[prow])]
        pivots.append(col)
        prow += 1
        if prow == m:
            break
    rank = len(pivots)
    for i in range(rank, m):
        if not rows[i][k].is_zero():
            return LinearSolution(False, None, rank, pivots, k - rank, bad_row=ids[i])
    nv = b[0].nvars if m else 0
    x = [RatFun.zero(nv) for _ in range(k)]
    for i, col in enumerate(pivots):
        x[col] = rows[i][k]
    return LinearSolution(True, x, rank, pivots, k - rank)


def generic_rank(M: Sequence[Sequence[RatFun]]) -> int:
    if not M:
        return 0
    nv = M[0][0].nvars
    return solve_linear(M, [RatFun.zero(nv)] * len(M)).rank


def _op_vector(P: DiffOp) -> list:
    return [P.a0] + list(P.a)


def _combine(sys: OperatorSystem, coeffs: Sequence[RatFun], ops=None) -> DiffOp:
    ops = ops if ops is not None else sys.ops
    out = DiffOp.zero(sys.n)
    for c, P in zip(coeffs, ops):
        if not c.is_zero():
            out = out + P.scale(c)
    return out


# ---------------------------------------------------------------------------
# (A1) and structure constants


@dataclass
class StructureSolution:
    status: str  # "ok" | "no_solution" | "non_unique"
    c: tuple | None
    kernel_dim: int = 0
    witness: dict | None = None


def solve_structure_constants(sys: OperatorSystem) -> StructureSolution:
    n, r = sys.n, sys.r
    M = [[_op_vector(sys.ops[l])[nu] for l in range(r)] for nu in range(n + 1)]
    z = RatFun.zero(n)
    c = [[[z] * r for _ in range(r)] for _ in range(r)]
    kernel = 0
    for j in range(r):
        for k in range(j + 1, r):
            rhs = _op_vector(bracket(sys.ops[j], sys.ops[k]))
            sol = solve_linear(M, rhs)
            if not sol.consistent:
                return StructureSolution("no_solution", None, sol.kernel_dim, {
                    "pair": [j + 1, k + 1], "row": sol.bad_row,
                    "bracket": sys.fmt_op(bracket(sys.ops[j], sys.ops[k]))})
            kernel = sol.kernel_dim
            for l in range(r):
                c[j][k][l] = sol.x[l]
                c[k][j][l] = -sol.x[l]
    if r < 2:
        kernel = r - generic_rank(M)
    status = "non_unique" if kernel > 0 else "ok"
    return StructureSolution(status, tuple(tuple(tuple(x) for x in row) for row in c), kernel)


def ensure_c(sys: OperatorSystem) -> OperatorSystem:
    if sys.c is not None:
        return sys
    sol = solve_structure_constants(sys)
    if sol.c is None:
        raise MissingC(f"no structure constants exist: {sol.witness}")
    return sys.with_tables(c=sol.c)


def check_A1(sys: OperatorSystem) -> CheckReport:
    details = {}
    if sys.c is None:
        sol = solve_structure_constants(sys)
        if sol.c is None:
            raise MissingC(f"c absent and [P_j,P_k] leaves the span: {sol.witness}")
        details["c_solved"] = True
        details["non_unique"] = sol.status == "non_unique"
        sys = sys.with_tables(c=sol.c)
    for j in range(sys.r):
        for k in range(j + 1, sys.r):
            res = bracket(sys.ops[j], sys.ops[k]) - _combine(sys, sys.c[j][k])
            if not res.is_zero():
                return CheckReport("A1", False, {"pair": [j + 1, k + 1],
                                                 "residual": sys.fmt_op(res)}, details)
    return CheckReport("A1", True, None, details)


# ---------------------------------------------------------------------------
# (A2)


def check_A2(sys: OperatorSystem) -> CheckReport:
    if sys.c is None:
        raise MissingC("(A2) needs structure constants")
    r, c = sys.r, sys.c
    p = sys.principal_parts()

    @lru_cache(maxsize=None)
    def pc(a, j, k, l):
        return p[a].apply(c[j][k][l])

    def cc(j, k, m, l):
        # sum_s c_{jk}^s c_{sm}^l
        out = RatFun.zero(sys.n)
        for s in range(r):
            if not c[j][k][s].is_zero() and not c[s][m][l].is_zero():
                out = out + c[j][k][s] * c[s][m][l]
        return out

    for k, k2, l2, l in product(range(r), repeat=4):
        lhs = cc(k, k2, l2, l) + cc(k2, l2, k, l) + cc(l2, k, k2, l)
        rhs = pc(l2, k, k2, l) + pc(k, k2, l2, l) + pc(k2, l2, k, l)
        if lhs != rhs:
            return CheckReport("A2", False, {"index": [k + 1, k2 + 1, l2 + 1, l + 1],
                                             "residual": sys.fmt(lhs - rhs)})
    return CheckReport("A2", True)


# ---------------------------------------------------------------------------
# rank conditions


def coefficient_matrix(sys: OperatorSystem, mode: str) -> list:
    """Rows nu (0..n with the zero-order row, or 1..n), columns j."""
    if mode not in ("include_zero_order", "principal_only"):
        raise BadParams(f"unknown rank mode {mode!r}")
    start = 0 if mode == "include_zero_order" else 1
    return [[_op_vector(P)[nu] for P in sys.ops] for nu in range(start, sys.n + 1)]


def sample_points(box, count: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return lo + (hi - lo) * rng.random((count, len(box)))


def numeric_rank(A: np.ndarray, rtol: float = 1e-9) -> int:
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def check_rank(sys: OperatorSystem, mode: str = "include_zero_order", seed: int = 0) -> CheckReport:
    M = coefficient_matrix(sys, mode)
    rank = generic_rank(M)
    pts = sample_points(sys.box, RANK_SAMPLES, seed)
    vals = [[f.evaluate_points(pts) for f in row] for row in M]
    drops = []
    for i, x in enumerate(pts):
        A = np.array([[v[i] for v in row] for row in vals])
        nr = numeric_rank(A)
        if nr < rank:
            drops.append({"point": x.tolist(), "rank": nr})
    label = "rank" if mode == "include_zero_order" else "A2*"
    full = rank == sys.r
    details = {"mode": mode, "generic_rank": rank, "r": sys.r, "samples": RANK_SAMPLES,
               "drop_points": drops,
               "note": "zero-order row included (nu = 0..n)" if mode == "include_zero_order"
               else "principal coefficients only (nu = 1..n)"}
    if full and not drops:
        return CheckReport(label, True, None, details)
    witness = {"generic_rank": rank} if not full else {"point": drops[0]["point"]}
    return CheckReport(label, False, witness, details)


# ---------------------------------------------------------------------------
# (A3)


@dataclass
class A3Result:
    passed: bool
    d: tuple | None = None
    e: tuple | None = None
    pair: tuple | None = None
    residual: DiffOp | None = None

    def report(self, sys: OperatorSystem) -> CheckReport:
        if self.passed:
            return CheckReport("A3", True)
        return CheckReport("A3", False, {"pair": list(self.pair),
                                         "residual": sys.fmt_op(self.residual)})


def check_A3(sys: OperatorSystem) -> A3Result:
    """Solve [p_j, bar p_k] = d^l p_l - e^l bar p_l over the function field."""
    n, r = sys.n, sys.r
    p = sys.principal_parts()
    pbar = [P.bar() for P in p]
    cols = [P.a for P in p] + [tuple(-x for x in Q.a) for Q in pbar]
    M = [[cols[col][nu] for col in range(2 * r)] for nu in range(n)]
    z = RatFun.zero(n)
    d = [[[z] * r for _ in range(r)] for _ in range(r)]
    e = [[[z] * r for _ in range(r)] for _ in range(r)]
    for j in range(r):
        for k in range(r):
            br = bracket(p[j], pbar[k])
            sol = solve_linear(M, list(br.a))
            if not sol.consistent:
                partial = _particular(M, list(br.a))
                fit = _combine(sys, partial[:r], p) - _combine(sys, partial[r:], pbar)
                return A3Result(False, pair=(j + 1, k + 1), residual=br - fit)
            for l in range(r):
                d[j][k][l] = sol.x[l]
                e[j][k][l] = sol.x[r + l]
    freeze = lambda t: tuple(tuple(tuple(x) for x in row) for row in t)
    return A3Result(True, freeze(d), freeze(e))


def _particular(M, b) -> list:
    """Pivot solution of the consistent rows of an inconsistent system."""
    m, k = len(M), len(M[0])
    rows = [list(M[i]) + [b[i]] for i in range(m)]
    nv = b[0].nvars
    piv = []
    prow = 0
    for col in range(k):
        sel = next((i for i in range(prow, m) if not rows[i][col].is_zero()), None)
        if sel is None:
            continue
        rows[prow], rows[sel] = rows[sel], rows[prow]
        inv = rows[prow][col].inverse()
        rows[prow] = [x * inv for x in rows[prow]]
        for i in range(m):
            if i != prow and not rows[i][col].is_zero():
                f = rows[i][col]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[prow])]
        piv.append(col)
        prow += 1
        if prow == m:
            break
    x = [RatFun.zero(nv) for _ in range(k)]
    for i, col in enumerate(piv):
        x[col] = rows[i][k]
    return x


def ensure_a3(sys: OperatorSystem) -> OperatorSystem:
    if sys.d is not None and sys.e is not None:
        return sys
    res = check_A3(sys)
    if not res.passed:
        from .errors import MissingA3
        raise MissingA3(f"(A3) fails at pair {res.pair}")
    return sys.with_tables(d=res.d, e=res.e)


# ---------------------------------------------------------------------------
# pole-freeness on the declared box


def coefficient_functions(sys: OperatorSystem):
    for P in sys.ops:
        yield from P.coefficients()
    for t in (sys.c, sys.d, sys.e):
        if t is not None:
            for row in t:
                for col in row:
                    yield from col


def check_pole_free(sys: OperatorSystem) -> CheckReport:
    """Sample non-constant denominators on a ~1000-node grid of the box."""
    dens = {f.den for f in coefficient_functions(sys) if not f.den.is_constant()}
    if not dens:
        return CheckReport("pole_free", True, None, {"denominators": 0})
    m = max(2, int(round(POLE_SAMPLES ** (1.0 / sys.n))))
    axes = [np.linspace(lo, hi, m) for lo, hi in sys.box]
    pts = np.array(np.meshgrid(*axes, indexing="ij")).reshape(sys.n, -1).T
    for den in sorted(dens, key=lambda p: format_ratfun(RatFun(p), sys.varnames)):
        vals = den.evaluate_points(pts)
        scale = 1e-14 * (1.0 + den.coeff_magnitude())
        bad = np.abs(vals) < scale
        sign_change = den.is_real() and (vals.real.min() < 0 < vals.real.max())
        if bad.any() or sign_change:
            k = int(np.argmax(bad)) if bad.any() else int(np.argmin(np.abs(vals)))
            return CheckReport("pole_free", False, {
                "denominator": format_ratfun(RatFun(den), sys.varnames),
                "point": pts[k].tolist(), "sign_change": bool(sign_change)})
    return CheckReport("pole_free", True, None, {"denominators": len(dens), "samples": len(pts)})


# ---------------------------------------------------------------------------
# builtins


def derham(n: int) -> OperatorSystem:
    if n < 1:
        raise BadParams("derham needs n >= 1")
    ops = tuple(DiffOp.partial(n, j) for j in range(1, n + 1))
    z = zero_table(n, n)
    return OperatorSystem(n, n, ops, z, z, z, name=f"derham({n})")


def dolbeault(m: int) -> OperatorSystem:
    """d/dzbar_j = (d/dx_j + i d/dy_j)/2 with variables ordered x1, y1, x2, y2, ..."""
    if m < 1:
        raise BadParams("dolbeault needs m >= 1")
    n = 2 * m
    half = GaussRat(1, 0) / 2
    ops = []
    for j in range(m):
        a = [0] * n
        a[2 * j] = half
        a[2 * j + 1] = GaussRat(0, 1) / 2
        ops.append(DiffOp.make(a, 0, n))
    z = zero_table(m, n)
    return OperatorSystem(n, m, tuple(ops), z, z, z, name=f"dolbeault({m})")


def lewy() -> OperatorSystem:
    """The Lewy operator dzbar - i z dt in real coordinates (x1, x2, x3=t)."""
    x1, x2 = RatFun.var(3, 1), RatFun.var(3, 2)
    a = (RatFun.const(3, GaussRat(1, 0) / 2), RatFun.const(3, GaussRat(0, 1) / 2),
         x2 - x1 * GaussRat(0, 1))
    P = DiffOp(a, RatFun.zero(3))
    return OperatorSystem(3, 1, (P,), zero_table(1, 3), name="lewy")


def builtin(name: str, **params) -> OperatorSystem:
    try:
        if name == "derham":
            return derham(int(params.get("n", 3)))
        if name == "dolbeault":
            return dolbeault(int(params.get("m", 1)))
        if name == "lewy":
            return lewy()
    except (TypeError, ValueError) as exc:
        raise BadParams(str(exc)) from exc
    raise BadParams(f"unknown builtin {name!r}")


def _random_poly(rng: random.Random, n: int, deg: int, complex_coeffs: bool, max_terms: int = 2) -> Poly:
    terms = {}
    for _ in range(rng.randint(1, max_terms)):
        exp = [0] * n
        for _ in range(rng.randint(0, deg)):
            exp[rng.randrange(n)] += 1
        re_ = rng.randint(-2, 2)
        im_ = rng.randint(-1, 1) if complex_coeffs else 0
        if re_ == 0 and im_ == 0:
            re_ = 1
        terms[tuple(exp)] = GaussRat(re_, im_)
    return Poly(n, terms)


def unipotent_inverse(G: list) -> list:
    """Inverse of an upper unipotent matrix of RatFuns (back substitution)."""
    r = len(G)
    n = G[0][0].nvars
    inv = [[RatFun.one(n) if i == k else RatFun.zero(n) for k in range(r)] for i in range(r)]
    for col in range(r):
        for i in range(col - 1, -1, -1):
            s = RatFun.zero(n)
            for m in range(i + 1, col + 1):
                s = s + G[i][m] * inv[m][col]
            inv[i][col] = -s
    return inv


def from_frame(G: list, n: int, twist: RatFun | None = None, name: str = "") -> OperatorSystem:
    """P'_i = sum_k G[i][k] d_k (k <= r), optionally conjugated by exp(twist)."""
    r = len(G)
    ops = []
    for i in range(r):
        a = [G[i][k] if k < r else RatFun.zero(n) for k in range(n)]
        ops.append(DiffOp(tuple(a), RatFun.zero(n)))
    Ginv = unipotent_inverse(G)
    z = RatFun.zero(n)
    c = [[[z] * r for _ in range(r)] for _ in range(r)]
    for i in range(r):
        for j in range(i + 1, r):
            B = bracket(ops[i], ops[j]).a[:r]
            for l in range(r):
                s = RatFun.zero(n)
                for m in range(r):
                    if not B[m].is_zero() and not Ginv[m][l].is_zero():
                        s = s + B[m] * Ginv[m][l]
                c[i][j][l] = s
                c[j][i][l] = -s
    if twist is not None:
        ops = [DiffOp(P.a, P.apply(twist)) for P in ops]
    return OperatorSystem(n, r, tuple(ops), tuple(tuple(tuple(x) for x in row) for row in c),
                          name=name)


def random_involutive(seed: int, n: int, r: int, deg: int, *, twist: bool = False,
                      complex_coeffs: bool = True) -> OperatorSystem:
    """Gauge-transformed commuting frame with exactly known structure constants."""
    if not (1 <= r <= n <= 4) or not 0 <= deg <= 2:
        raise BadParams("random_involutive needs r <= n <= 4 and deg <= 2")
    rng = random.Random(seed)
    G = [[RatFun.zero(n)] * r for _ in range(r)]
    for i in range(r):
        G[i] = list(G[i])
        G[i][i] = RatFun.one(n)
        for k in range(i + 1, r):
            if rng.random() < 0.8:
                G[i][k] = RatFun(_random_poly(rng, n, deg, complex_coeffs))
    psi = RatFun(_random_poly(rng, n, deg, complex_coeffs)) if twist else None
    return from_frame(G, n, psi, name=f"random_involutive(seed={seed},n={n},r={r},deg={deg})")


# ---------------------------------------------------------------------------
# system files


def _field(obj, key, path, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError(f"missing field {path}{key!r}")
    v = obj[key]
    if kind is not None and not isinstance(v, kind):
        raise ParseError(f"field {path}{key!r} has the wrong type")
    return v


def _parse_at(text, varnames, where):
    if not isinstance(text, str):
        raise ParseError(f"{where}: expected a polynomial string")
    try:
        return parse(text, varnames)
    except ParseError as exc:
        raise ParseError(f"{where}: {exc.reason}", exc.offset, source=text) from exc


def system_from_dict(data: dict) -> OperatorSystem:
    n = _field(data, "n", "", int)
    r = _field(data, "r", "", int)
    varnames = tuple(data.get("vars") or default_varnames(n))
    if len(varnames) != n:
        raise ParseError("'vars' must list n names")
    box = data.get("box") or [[-1.0, 1.0]] * n
    if len(box) != n or any(len(b) != 2 or not b[0] < b[1] for b in box):
        raise ParseError("'box' must be n intervals [lo, hi] with lo < hi")
    ops_data = _field(data, "operators", "", list)
    if len(ops_data) != r:
        raise ParseError(f"'operators' must have r={r} entries")
    ops = []
    for j, od in enumerate(ops_data):
        principal = _field(od, "principal", f"operators[{j}].", list)
        if len(principal) != n:
            raise ParseError(f"operators[{j}].principal must have n={n} entries")
        a = tuple(_parse_at(s, varnames, f"operators[{j}].principal[{nu}]")
                  for nu, s in enumerate(principal))
        a0 = _parse_at(od.get("zero_order", "0"), varnames, f"operators[{j}].zero_order")
        ops.append(DiffOp(a, a0))
    tables = {}
    for name in ("c", "d", "e"):
        t = data.get(name)
        if t is None:
            continue
        if len(t) != r or any(len(row) != r or any(len(x) != r for x in row) for row in t):
            raise ParseError(f"'{name}' must be an r x r x r array")
        tables[name] = tuple(tuple(tuple(_parse_at(s, varnames, f"{name}[{j}][{k}][{l}]")
                                         for l, s in enumerate(col))
                                   for k, col in enumerate(row)) for j, row in enumerate(t))
    sys = OperatorSystem(n, r, tuple(ops), varnames=varnames, box=tuple(map(tuple, box)),
                         name=str(data.get("name", "")), **tables)
    return sys


def system_to_dict(sys: OperatorSystem) -> dict:
    out = {"n": sys.n, "r": sys.r, "vars": list(sys.varnames),
           "box": [list(b) for b in sys.box],
           "operators": [sys.fmt_op(P) for P in sys.ops]}
    if sys.name:
        out["name"] = sys.name
    for name in ("c", "d", "e"):
        t = getattr(sys, name)
        if t is not None:
            out[name] = [[[sys.fmt(x) for x in col] for col in row] for row in t]
    return out


def loads_system(text: str) -> OperatorSystem:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", len(text[:exc.pos].encode("utf-8"))) from exc
    return system_from_dict(data)


def load_system(path) -> OperatorSystem:
    with open(path, encoding="utf-8") as fh:
        return loads_system(fh.read())


def dump_system(sys: OperatorSystem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(system_to_dict(sys), fh, indent=2)
        fh.write("\n")
