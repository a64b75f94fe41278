"""Finite-difference realisation of P_q and weighted least-squares solves.

Grid values are flattened row-major with x1 fastest.  Derivatives use
second-order centred differences inside and second-order one-sided
differences on the boundary; no boundary conditions are imposed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .algebra import RatFun
from .complex import build_matrix
from .diffop import DiffOp
from .errors import BadParams, CompatibilityError, ParseError, PoleError
from .multiindex import enumerate_indices, key, parse_key
from .system import OperatorSystem, ensure_c

MIN_NODES = 8


@dataclass(frozen=True)
class Grid:
    box: tuple
    N: tuple

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        N = self.N
        N = tuple(int(v) for v in N) if isinstance(N, (tuple, list)) else (int(N),) * len(box)
        if len(N) != len(box):
            raise BadParams("grid N and box have different dimensions")
        if any(v < MIN_NODES for v in N):
            raise BadParams(f"grid needs at least {MIN_NODES} nodes per axis")
        if any(hi <= lo for lo, hi in box):
            raise BadParams("grid box intervals must have lo < hi")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "N", N)

    @property
    def n(self) -> int:
        return len(self.box)

    @property
    def h(self) -> tuple:
        return tuple((hi - lo) / (N - 1) for (lo, hi), N in zip(self.box, self.N))

    @property
    def size(self) -> int:
        return math.prod(self.N)

    def axes(self) -> list:
        return [np.linspace(lo, hi, N) for (lo, hi), N in zip(self.box, self.N)]

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel(order="F") for m in mesh], axis=1)

    def to_dict(self) -> dict:
        N = self.N[0] if len(set(self.N)) == 1 else list(self.N)
        return {"N": N, "box": [list(b) for b in self.box]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "Grid":
        try:
            return cls(tuple(tuple(b) for b in data["box"]), data["N"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BadParams(f"bad grid description: {exc}") from None


# ---------------------------------------------------------------------------
# grid fields


@dataclass
class GridField:
    q: int
    grid: Grid
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = {}
        for J, v in self.values.items():
            a = np.asarray(v, dtype=complex).reshape(-1)
            if a.size != self.grid.size:
                raise BadParams(f"component {key(J)} has {a.size} values, grid has {self.grid.size}")
            if not np.all(np.isfinite(a)):
                raise BadParams(f"component {key(J)} contains non-finite values")
            vals[tuple(J)] = a
        self.values = vals

    def component(self, J) -> np.ndarray:
        v = self.values.get(tuple(J))
        return v if v is not None else np.zeros(self.grid.size, dtype=complex)

    def to_vector(self, r: int) -> np.ndarray:
        blocks = [self.component(J) for J in enumerate_indices(r, self.q)]
        return np.concatenate(blocks) if blocks else np.zeros(0, dtype=complex)

    @classmethod
    def from_vector(cls, vec: np.ndarray, r: int, q: int, grid: Grid) -> "GridField":
        m = grid.size
        idx = enumerate_indices(r, q)
        return cls(q, grid, {J: vec[a * m:(a + 1) * m].copy() for a, J in enumerate(idx)})

    def to_dict(self) -> dict:
        return {"q": self.q, "grid": self.grid.to_dict(),
                "components": {key(J): [[float(z.real), float(z.imag)] for z in v]
                               for J, v in sorted(self.values.items())}}

    @classmethod
    def from_dict(cls, data: Mapping) -> "GridField":
        if not isinstance(data, Mapping) or "q" not in data or "grid" not in data:
            raise BadParams("grid field needs 'q', 'grid' and 'components'")
        grid = Grid.from_dict(data["grid"])
        vals = {}
        for k, pairs in data.get("components", {}).items():
            try:
                arr = np.array(pairs, dtype=float)
                vals[parse_key(k)] = arr[:, 0] + 1j * arr[:, 1]
            except (ValueError, IndexError, TypeError):
                raise BadParams(f"component {k!r} must be a list of [re, im] pairs") from None
        return cls(int(data["q"]), grid, vals)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "GridField":
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            offset = len(text[:exc.pos].encode("utf-8"))
            raise ParseError(f"invalid JSON: {exc.msg}", offset, str(path)) from None
        return cls.from_dict(data)


def sample(f: RatFun, grid: Grid) -> np.ndarray:
    return np.asarray(f.evaluate_points(grid.points()), dtype=complex)


def field_from_functions(q: int, comps: Mapping, grid: Grid) -> GridField:
    return GridField(q, grid, {tuple(J): sample(f, grid) for J, f in comps.items()})


# ---------------------------------------------------------------------------
# discretisation


def diff_matrix_1d(N: int, h: float) -> sp.csr_matrix:
    D = sp.lil_matrix((N, N))
    D[0, 0:3] = [-3.0, 4.0, -1.0]
    D[N - 1, N - 3:N] = [1.0, -4.0, 3.0]
    for i in range(1, N - 1):
        D[i, i - 1] = -1.0
        D[i, i + 1] = 1.0
    return (D.tocsr() / (2.0 * h)).astype(complex)


def partial_matrix(grid: Grid, axis: int) -> sp.csr_matrix:
    """d/dx_axis (1-based) on the flattened grid."""
    mats = []
    for k in range(grid.n, 0, -1):  # slowest axis first in the Kronecker chain
        if k == axis:
            mats.append(diff_matrix_1d(grid.N[k - 1], grid.h[k - 1]))
        else:
            mats.append(sp.identity(grid.N[k - 1], dtype=complex, format="csr"))
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), mats)


@dataclass
class SparseOp:
    matrix: sp.csr_matrix
    rows: list
    cols: list
    grid: Grid
    q: int

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, v):
        return self.matrix @ v


def _node_values(f: RatFun, X: np.ndarray) -> np.ndarray:
    try:
        return np.asarray(f.evaluate_points(X), dtype=complex)
    except PoleError as exc:
        raise PoleError(f"coefficient pole at a grid node: {exc}", exc.point) from None


def discretize_entry(D: DiffOp, grid: Grid, X: np.ndarray, partials: list) -> sp.csr_matrix:
    m = grid.size
    out = sp.csr_matrix((m, m), dtype=complex)
    for nu, a in enumerate(D.a):
        if not a.is_zero():
            out = out + sp.diags(_node_values(a, X)) @ partials[nu]
    if not D.a0.is_zero():
        out = out + sp.diags(_node_values(D.a0, X))
    return out.tocsr()


def discretize_operator_matrix(rows: dict, row_idx: list, col_idx: list, grid: Grid,
                               q: int) -> SparseOp:
    X = grid.points()
    partials = [partial_matrix(grid, nu) for nu in range(1, grid.n + 1)]
    m = grid.size
    blocks = [[None] * len(col_idx) for _ in row_idx]
    where = {I: b for b, I in enumerate(col_idx)}
    for a, J in enumerate(row_idx):
        for I, D in rows.get(J, {}).items():
            blocks[a][where[I]] = discretize_entry(D, grid, X, partials)
    for a in range(len(row_idx)):
        if all(b is None for b in blocks[a]):
            blocks[a][0] = sp.csr_matrix((m, m), dtype=complex)
    for b in range(len(col_idx)):
        if all(blocks[a][b] is None for a in range(len(row_idx))):
            blocks[0][b] = sp.csr_matrix((m, m), dtype=complex)
    A = sp.bmat(blocks, format="csr", dtype=complex)
    return SparseOp(A, row_idx, col_idx, grid, q)


def discretize_P(sys: OperatorSystem, q: int, grid: Grid) -> SparseOp:
    if grid.n != sys.n:
        raise BadParams(f"grid dimension {grid.n} differs from system dimension {sys.n}")
    L = build_matrix(sys, q)
    return discretize_operator_matrix(L.rows, enumerate_indices(sys.r, q),
                                      enumerate_indices(sys.r, q - 1), grid, q)


# ---------------------------------------------------------------------------
# weighted least squares


@dataclass
class LsqResult:
    u: np.ndarray
    iterations: int
    converged: bool
    history: list
    residual: float           # ||A u - f||_w
    relative_residual: float  # ||A u - f||_w / ||f||_w

    def report(self) -> dict:
        return {"iterations": self.iterations, "converged": self.converged,
                "weighted_residual": self.residual, "relative_residual": self.relative_residual,
                "normal_residual_final": self.history[-1] if self.history else 0.0}


def default_maxit(unknowns: int) -> int:
    return int(200 * math.sqrt(max(unknowns, 1)))


def lsq_solve(A, f: np.ndarray, weight: np.ndarray | None = None, tol: float = 1e-8,
              maxit: int | None = None) -> LsqResult:
    """Minimise sum_i w_i |(A u - f)_i|^2 by CG on the normal equations.

    Runs the CGLS recurrence on W^(1/2) A, starting from u = 0 and stopping
    once ||A^* W (f - A u)|| <= tol * ||A^* W f||.  The history holds the
    normal-equation residual norms relative to that reference.
    """
    A = A.matrix if isinstance(A, SparseOp) else sp.csr_matrix(A)
    f = np.asarray(f, dtype=complex)
    m, k = A.shape
    w = np.ones(m) if weight is None else np.asarray(weight, dtype=float)
    if w.shape != (m,) or f.shape != (m,):
        raise BadParams("weight/right-hand side do not match the operator rows")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise BadParams("weights must be positive and finite")
    maxit = default_maxit(k) if maxit is None else int(maxit)
    sw = np.sqrt(w)
    Aw = sp.diags(sw) @ A
    AwH = Aw.conj().T.tocsr()
    b = sw * f
    x = np.zeros(k, dtype=complex)
    res = b.copy()
    s = AwH @ res
    ref = float(np.linalg.norm(s))
    fnorm = float(np.linalg.norm(b))
    history = []
    converged = ref == 0.0
    it = 0
    if not converged:
        p = s.copy()
        gamma = float(np.vdot(s, s).real)
        while it < maxit:
            qv = Aw @ p
            qq = float(np.vdot(qv, qv).real)
            if qq == 0.0:
                break
            alpha = gamma / qq
            x += alpha * p
            res -= alpha * qv
            s = AwH @ res
            gamma_new = float(np.vdot(s, s).real)
            it += 1
            history.append(math.sqrt(gamma_new) / ref)
            if math.sqrt(gamma_new) <= tol * ref:
                converged = True
                break
            p = s + (gamma_new / gamma) * p
            gamma = gamma_new
    rnorm = float(np.linalg.norm(sw * (A @ x - f)))
    return LsqResult(x, it, converged, history, rnorm, rnorm / fnorm if fnorm else 0.0)


def weights(phi: RatFun | None, grid: Grid) -> np.ndarray:
    if phi is None:
        return np.ones(grid.size)
    vals = sample(phi, grid)
    if np.abs(vals.imag).max(initial=0.0) > 1e-12 * (1 + np.abs(vals.real).max(initial=0.0)):
        raise BadParams("weight function must be real-valued")
    return np.exp(-vals.real)


@dataclass
class LevelSolution:
    u: GridField
    lsq: LsqResult
    compatibility_defect: float
    compatible: bool

    def report(self) -> dict:
        out = self.lsq.report()
        out.update({"compatibility_defect": self.compatibility_defect,
                    "compatible": self.compatible})
        return out


def solve_level(sys: OperatorSystem, q: int, f: GridField, phi: RatFun | None, grid: Grid,
                tol: float = 1e-8, maxit: int | None = None) -> LevelSolution:
    """Least-squares solution of P_q u = f with weight exp(-phi)."""
    if f.q != q:
        raise BadParams(f"right-hand side has degree {f.q}, level {q} needs {q}")
    sys = ensure_c(sys)
    w = weights(phi, grid)
    fv = f.to_vector(sys.r)
    defect = 0.0
    if q < sys.r:
        B = discretize_P(sys, q + 1, grid)
        nq1 = len(enumerate_indices(sys.r, q + 1))
        nq = len(enumerate_indices(sys.r, q))
        num = np.linalg.norm(np.sqrt(np.tile(w, nq1)) * (B @ fv))
        den = np.linalg.norm(np.sqrt(np.tile(w, nq)) * fv)
        defect = float(num / den) if den else 0.0
    A = discretize_P(sys, q, grid)
    nrows = len(enumerate_indices(sys.r, q))
    res = lsq_solve(A, fv, np.tile(w, nrows), tol, maxit)
    u = GridField.from_vector(res.u, sys.r, q - 1, grid)
    return LevelSolution(u, res, defect, defect <= 10 * tol)


def check_eta_compatibility(sys: OperatorSystem):
    """p_j a0_k - p_k a0_j == c^l_jk a0_l for all j < k; returns the failing pair."""
    sys = ensure_c(sys)
    p = sys.principal_parts()
    a0 = [P.a0 for P in sys.ops]
    for j in range(sys.r):
        for k in range(j + 1, sys.r):
            lhs = p[j].apply(a0[k]) - p[k].apply(a0[j])
            rhs = RatFun.zero(sys.n)
            for l in range(sys.r):
                if not sys.c[j][k][l].is_zero():
                    rhs = rhs + sys.c[j][k][l] * a0[l]
            if lhs != rhs:
                return (j + 1, k + 1), lhs - rhs
    return None


def solve_eta(sys: OperatorSystem, grid: Grid, tol: float = 1e-8,
              maxit: int | None = None) -> LevelSolution:
    """Solve p_j eta = a0_j (j = 1..r) in the least-squares sense."""
    sys = ensure_c(sys)
    bad = check_eta_compatibility(sys)
    if bad is not None:
        pair, diff = bad
        raise CompatibilityError(f"zero-order terms incompatible at pair {pair}: "
                                 f"defect {sys.fmt(diff)}")
    principal = sys.with_tables(ops=tuple(sys.principal_parts()), d=None, e=None)
    rhs = field_from_functions(1, {(j,): P.a0 for j, P in enumerate(sys.ops, start=1)}, grid)
    return solve_level(principal, 1, rhs, None, grid, tol, maxit)
