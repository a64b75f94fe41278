"""Levels of the compatibility complex, their formal adjoints, and exact proofs.

``apply_P(sys, q, f)`` maps a degree ``q-1`` cochain to degree ``q``;
``apply_Pt`` goes back.  Composition ``P_{q+1} P_q`` is certified zero by
probing with monomials of degree <= 2 and recovering every coefficient of
the resulting second-order operator.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

from .algebra import RatFun
from .diffop import DiffOp, formal_adjoint
from .errors import DegreeMismatch, OverdetError
from .multiindex import (Cochain, antisym_get, enumerate_indices, key, perm_sign,
                         position_count, remove, sort_sign)
from .system import OperatorSystem, ensure_c


class CompositionNonzero(OverdetError):
    def __init__(self, witness):
        self.witness = witness
        super().__init__(f"P_(q+1) P_q has a nonzero coefficient: {witness}")


class AdjointMismatch(OverdetError):
    def __init__(self, witness):
        self.witness = witness
        super().__init__(f"adjoint entries differ: {witness}")


def _sgn(k: int) -> int:
    return -1 if k % 2 else 1


def _pmap(fn, items, threads):
    items = list(items)
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _check_level(sys: OperatorSystem, q: int):
    if not 1 <= q <= sys.r:
        raise DegreeMismatch(f"level q={q} outside 1..{sys.r}")


# ---------------------------------------------------------------------------
# the operator P_q


def apply_P(sys: OperatorSystem, q: int, f: Cochain) -> Cochain:
    _check_level(sys, q)
    if f.q != q - 1 or f.r != sys.r:
        raise DegreeMismatch(f"P_{q} takes a degree-{q - 1} cochain, got degree {f.q}")
    sys = ensure_c(sys)
    c, r, n = sys.c, sys.r, sys.n
    out = {}
    for J in enumerate_indices(r, q):
        acc = RatFun.zero(n)
        for j in J:
            g = f[remove(J, j)]
            if not g.is_zero():
                t = sys.ops[j - 1].apply(g)
                acc = acc + t if position_count(j, J) % 2 == 0 else acc - t
        for m, nn in combinations(J, 2):
            L = remove(J, m, nn)
            sg = perm_sign(J, (m, nn) + L)
            for s in range(1, r + 1):
                cs = c[m - 1][nn - 1][s - 1]
                if cs.is_zero():
                    continue
                g = antisym_get(f, (s,) + L)
                if not g.is_zero():
                    acc = acc - cs * g if sg > 0 else acc + cs * g
        out[J] = acc
    return Cochain(q, r, n, out)


@dataclass
class LevelOperator:
    """Matrix of first-order operators: rows[J][I] acts on component I."""

    q: int
    r: int
    nvars: int
    rows: dict

    def entry(self, J, I) -> DiffOp:
        return self.rows.get(tuple(J), {}).get(tuple(I), DiffOp.zero(self.nvars))

    def apply(self, f: Cochain) -> Cochain:
        out = {}
        for J, row in self.rows.items():
            acc = RatFun.zero(self.nvars)
            for I, D in row.items():
                g = f[I]
                if not g.is_zero():
                    acc = acc + D.apply(g)
            out[J] = acc
        return Cochain(self.q, self.r, self.nvars, out)

    def to_dict(self, varnames=None) -> dict:
        return {key(J): {key(I): D.format(varnames) for I, D in row.items()}
                for J, row in self.rows.items()}


def _add_entry(rows, J, I, D):
    row = rows.setdefault(J, {})
    row[I] = row[I] + D if I in row else D


def _prune(rows):
    return {J: {I: D for I, D in row.items() if not D.is_zero()} for J, row in rows.items()}


def build_matrix(sys: OperatorSystem, q: int) -> LevelOperator:
    """Explicit entries of P_q, rows indexed by |J| = q and columns by |I| = q-1."""
    _check_level(sys, q)
    sys = ensure_c(sys)
    c, r, n = sys.c, sys.r, sys.n
    rows: dict = {}
    for J in enumerate_indices(r, q):
        rows.setdefault(J, {})
        for j in J:
            _add_entry(rows, J, remove(J, j), sys.ops[j - 1].scale(_sgn(position_count(j, J))))
        for m, nn in combinations(J, 2):
            L = remove(J, m, nn)
            sg = perm_sign(J, (m, nn) + L)
            for s in range(1, r + 1):
                cs = c[m - 1][nn - 1][s - 1]
                ss, I = sort_sign((s,) + L)
                if cs.is_zero() or ss == 0:
                    continue
                _add_entry(rows, J, I, DiffOp.multiplication(cs * (-sg * ss)))
    return LevelOperator(q, r, n, _prune(rows))


# ---------------------------------------------------------------------------
# the formal adjoint


def apply_Pt(sys: OperatorSystem, q: int, f: Cochain) -> Cochain:
    """Formal adjoint of P_q applied to a degree-q cochain."""
    _check_level(sys, q)
    if f.q != q or f.r != sys.r:
        raise DegreeMismatch(f"tP_{q} takes a degree-{q} cochain, got degree {f.q}")
    sys = ensure_c(sys)
    c, r, n = sys.c, sys.r, sys.n
    adj = [formal_adjoint(P) for P in sys.ops]
    out = {}
    for I in enumerate_indices(r, q - 1):
        acc = RatFun.zero(n)
        for j in range(1, r + 1):
            if j in I:
                continue
            g = antisym_get(f, (j,) + I)
            if not g.is_zero():
                acc = acc + adj[j - 1].apply(g)
        for s in I:
            Is = remove(I, s)
            sgn_s = _sgn(position_count(s, Is))
            free = [v for v in range(1, r + 1) if v not in Is]
            for m, nn in combinations(free, 2):
                cbar = c[m - 1][nn - 1][s - 1].conjugate()
                if cbar.is_zero():
                    continue
                g = antisym_get(f, Is + (m, nn))
                if g.is_zero():
                    continue
                sg = sgn_s * perm_sign(Is + (m, nn), (m, nn) + Is)
                acc = acc - cbar * g if sg > 0 else acc + cbar * g
        out[I] = acc
    return Cochain(q - 1, r, n, out)


def mechanical_adjoint(sys: OperatorSystem, q: int) -> LevelOperator:
    """Transpose of ``build_matrix`` with the formal adjoint taken entrywise."""
    M = build_matrix(sys, q)
    rows: dict = {I: {} for I in enumerate_indices(sys.r, q - 1)}
    for J, row in M.rows.items():
        for I, D in row.items():
            rows[I][J] = formal_adjoint(D)
    return LevelOperator(q - 1, sys.r, sys.n, _prune(rows))


def _probe_first_order(action: Callable[[RatFun], dict], nvars: int) -> dict:
    """Recover {row: DiffOp} of a first-order action from probes 1 and x_mu."""
    one = RatFun.one(nvars)
    b0 = action(one)
    out = {}
    xs = [RatFun.var(nvars, mu) for mu in range(1, nvars + 1)]
    lin = [action(x) for x in xs]
    for row in b0:
        a = tuple(lin[mu][row] - xs[mu] * b0[row] for mu in range(nvars))
        out[row] = DiffOp(a, b0[row])
    return out


def adjoint_matrix(sys: OperatorSystem, q: int) -> LevelOperator:
    """The matrix realised by ``apply_Pt``, recovered column by column."""
    _check_level(sys, q)
    r, n = sys.r, sys.n
    rows: dict = {I: {} for I in enumerate_indices(r, q - 1)}
    for J in enumerate_indices(r, q):
        def action(g, J=J):
            return apply_Pt(sys, q, Cochain(q, r, n, {J: g})).components_full()
        for I, D in _probe_first_order(action, n).items():
            rows[I][J] = D
    return LevelOperator(q - 1, r, n, _prune(rows))


# ---------------------------------------------------------------------------
# proofs


@dataclass
class ProofReport:
    kind: str
    q: int
    passed: bool
    checked: int = 0
    witness: dict | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "q": self.q, "pass": self.passed, "checked": self.checked,
                "witness": self.witness, "details": self.details}


def probe_monomials(nvars: int) -> list:
    """[(label, monomial)] for 1, x_mu, x_mu x_nu (mu <= nu)."""
    xs = [RatFun.var(nvars, mu) for mu in range(1, nvars + 1)]
    out = [((), RatFun.one(nvars))]
    out += [((mu,), xs[mu - 1]) for mu in range(1, nvars + 1)]
    out += [((mu, nu), xs[mu - 1] * xs[nu - 1])
            for mu in range(1, nvars + 1) for nu in range(mu, nvars + 1)]
    return out


def recover_second_order(values: dict, nvars: int) -> dict:
    """Coefficients of L = b^{mu nu} d_mu d_nu + b^mu d_mu + b0 from probe values.

    ``values`` maps probe labels () / (mu,) / (mu, nu) to L(monomial).
    """
    xs = [RatFun.var(nvars, mu) for mu in range(1, nvars + 1)]
    b0 = values[()]
    coeffs = {"b0": b0}
    b1 = {}
    for mu in range(1, nvars + 1):
        b1[mu] = values[(mu,)] - xs[mu - 1] * b0
        coeffs[f"b{mu}"] = b1[mu]
    for mu in range(1, nvars + 1):
        for nu in range(mu, nvars + 1):
            v = (values[(mu, nu)] - xs[nu - 1] * b1[mu] - xs[mu - 1] * b1[nu]
                 - xs[mu - 1] * xs[nu - 1] * b0)
            if mu == nu:
                v = v * RatFun.const(nvars, 1) / 2
            coeffs[f"b{mu}{nu}"] = v
    return coeffs


def composition_coefficients(sys: OperatorSystem, q: int, I) -> dict:
    """{K: coefficient dict} of f_I -> (P_{q+1} P_q f)_K."""
    r, n = sys.r, sys.n
    per_probe = {}
    for label, mono in probe_monomials(n):
        g = apply_P(sys, q, Cochain(q - 1, r, n, {tuple(I): mono}))
        per_probe[label] = apply_P(sys, q + 1, g).components_full()
    return {K: recover_second_order({lab: v[K] for lab, v in per_probe.items()}, n)
            for K in enumerate_indices(r, q + 1)}


def verify_complex(sys: OperatorSystem, q: int, *, threads: int = 1,
                   strict: bool = False) -> ProofReport:
    _check_level(sys, q)
    sys = ensure_c(sys)
    if q == sys.r:
        return ProofReport("complex", q, True, 0, details={"note": "P_(r+1) := 0"})
    sources = enumerate_indices(sys.r, q - 1)
    results = _pmap(lambda I: composition_coefficients(sys, q, I), sources, threads)
    checked = 0
    for I, per_K in zip(sources, results):
        for K, coeffs in per_K.items():
            for name, v in coeffs.items():
                checked += 1
                if not v.is_zero():
                    witness = {"K": key(K), "I": key(I), "coefficient": name,
                               "value": sys.fmt(v)}
                    if strict:
                        raise CompositionNonzero(witness)
                    return ProofReport("complex", q, False, checked, witness)
    return ProofReport("complex", q, True, checked)


def verify_adjoint(sys: OperatorSystem, q: int, *, strict: bool = False) -> ProofReport:
    sys = ensure_c(sys)
    mech = mechanical_adjoint(sys, q)
    closed_form = adjoint_matrix(sys, q)
    checked = 0
    for I in enumerate_indices(sys.r, q - 1):
        for J in enumerate_indices(sys.r, q):
            checked += 1
            A, B = mech.entry(I, J), closed_form.entry(I, J)
            if A != B:
                witness = {"I": key(I), "J": key(J), "mechanical": sys.fmt_op(A),
                           "formula": sys.fmt_op(B)}
                if strict:
                    raise AdjointMismatch(witness)
                return ProofReport("adjoint", q, False, checked, witness)
    return ProofReport("adjoint", q, True, checked)


def divergence_certificate(sys: OperatorSystem, q: int, g: Cochain, f: Cochain):
    """(<P_q g, f> - <g, tP_q f>, V) with the first expected to equal div V.

    Pointwise pairing <u, v> = sum_J u_J conj(v_J); V is assembled from the
    principal coefficients of the matrix entries of P_q.
    """
    sys = ensure_c(sys)
    n = sys.n
    lhs = RatFun.zero(n)
    Pg = apply_P(sys, q, g)
    Ptf = apply_Pt(sys, q, f)
    for J in enumerate_indices(sys.r, q):
        lhs = lhs + Pg[J] * f[J].conjugate()
    for I in enumerate_indices(sys.r, q - 1):
        lhs = lhs - g[I] * Ptf[I].conjugate()
    M = build_matrix(sys, q)
    V = [RatFun.zero(n) for _ in range(n)]
    for J, row in M.rows.items():
        fJ = f[J].conjugate()
        if fJ.is_zero():
            continue
        for I, D in row.items():
            gI = g[I]
            if gI.is_zero():
                continue
            for nu in range(n):
                if not D.a[nu].is_zero():
                    V[nu] = V[nu] + D.a[nu] * gI * fJ
    return lhs, V


def divergence(V) -> RatFun:
    out = RatFun.zero(V[0].nvars)
    for nu, v in enumerate(V, start=1):
        out = out + v.derivative(nu)
    return out


def proof_terms(sys: OperatorSystem, q: int, f: Cochain) -> dict:
    """The partial sums I, II', II'', III', III'', IV', IV'' of P_{q+1} P_q f.

    P_{q+1} P_q f = I - (II' + II'') - (III' + III'') + (IV' + IV'').
    Tuples are read positionally: the component of P_q f at an unsorted
    tuple T uses the sign (-1)^(position of j in T) for its P_j terms.
    """
    _check_level(sys, q)
    if q >= sys.r:
        raise DegreeMismatch("proof terms need q < r")
    sys = ensure_c(sys)
    c, r, n = sys.c, sys.r, sys.n
    ops = sys.ops
    p = sys.principal_parts()
    names = ("I", "II1", "II2", "III1", "III2", "IV1", "IV2")
    acc = {name: {} for name in names}
    zero = RatFun.zero(n)

    def add(name, K, v):
        if not v.is_zero():
            d = acc[name]
            d[K] = d.get(K, zero) + v

    for K in enumerate_indices(r, q + 1):
        for k in K:
            sk = _sgn(position_count(k, K))
            Kk = remove(K, k)
            for j in Kk:
                g = f[remove(Kk, j)]
                if not g.is_zero():
                    s = sk * _sgn(position_count(j, Kk))
                    add("I", K, ops[k - 1].apply(ops[j - 1].apply(g)).__mul__(s))
        for m, nn in combinations(K, 2):
            L = remove(K, m, nn)
            sg = perm_sign(K, (m, nn) + L)
            for s in range(1, r + 1):
                cs = c[m - 1][nn - 1][s - 1]
                if cs.is_zero():
                    continue
                T = (s,) + L
                for pos, j in enumerate(T):
                    rest = T[:pos] + T[pos + 1:]
                    g = antisym_get(f, rest)
                    if g.is_zero():
                        continue
                    v = cs * ops[j - 1].apply(g) * (sg * _sgn(pos))
                    add("II1" if pos == 0 else "II2", K, v)
                if s in L:
                    continue
                for a, b in combinations(sorted(T), 2):
                    R = tuple(t for t in T if t not in (a, b))
                    sg2 = perm_sign(T, (a, b) + R)
                    for l in range(1, r + 1):
                        cl = c[a - 1][b - 1][l - 1]
                        if cl.is_zero():
                            continue
                        g = antisym_get(f, (l,) + R)
                        if g.is_zero():
                            continue
                        v = cs * cl * g * (sg * sg2)
                        add("IV2" if s in (a, b) else "IV1", K, v)
        for k in K:
            sk = _sgn(position_count(k, K))
            Kk = remove(K, k)
            for m, nn in combinations(Kk, 2):
                R = remove(Kk, m, nn)
                sg = sk * perm_sign(Kk, (m, nn) + R)
                for l in range(1, r + 1):
                    cl = c[m - 1][nn - 1][l - 1]
                    if cl.is_zero():
                        continue
                    g = antisym_get(f, (l,) + R)
                    if g.is_zero():
                        continue
                    add("III1", K, cl * ops[k - 1].apply(g) * sg)
                    add("III2", K, p[k - 1].apply(cl) * g * sg)
    return {name: Cochain(q + 1, r, n, d) for name, d in acc.items()}
