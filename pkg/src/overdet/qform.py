"""Hörmander-type quadratic forms, the induced forms on q-vectors, and scans.

The real form Re(M_jk xi_k conj(xi_j)) is stored as the Hermitian matrix
H = (M + M^*)/2, so that the form equals <H xi, xi>.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .algebra import RatFun
from .errors import BadParams, NotHermitian, PoleError
from .multiindex import enumerate_indices, sort_sign
from .system import OperatorSystem, ensure_a3

RANK_RTOL = 1e-9
JACOBI_RTOL = 1e-13
HERMITIAN_TOL = 1e-12


# ---------------------------------------------------------------------------
# dense Hermitian eigenvalues


def _check_hermitian(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise NotHermitian(f"expected a square matrix, got shape {H.shape}")
    scale = max(1.0, float(np.abs(H).max(initial=0.0)))
    if np.abs(H - H.conj().T).max(initial=0.0) > HERMITIAN_TOL * scale:
        raise NotHermitian("matrix is not Hermitian within tolerance")
    return (H + H.conj().T) / 2


def eigen_hermitian(H, max_sweeps: int = 100) -> np.ndarray:
    """Sorted eigenvalues by cyclic complex Jacobi rotations (row-major sweeps).

    Each rotation first removes the phase of H[p, q] with a diagonal unitary
    and then applies the real symmetric Jacobi rotation.
    """
    A = _check_hermitian(H).copy()
    m = A.shape[0]
    norm = np.linalg.norm(A)
    if norm == 0.0 or m == 1:
        return np.sort(np.real(np.diag(A)))
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off < JACOBI_RTOL * norm:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                h = A[p, q]
                ah = abs(h)
                if ah == 0.0:
                    continue
                phase = h / ah
                # column/row q scaled by conj(phase) makes A[p, q] = |h|
                A[:, q] *= np.conj(phase)
                A[q, :] *= phase
                app, aqq = A[p, p].real, A[q, q].real
                theta = (aqq - app) / (2.0 * ah)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                colp, colq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * colp - s * colq
                A[:, q] = s * colp + c * colq
                rowp, rowq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rowp - s * rowq
                A[q, :] = s * rowp + c * rowq
                A[p, q] = A[q, p] = 0.0
    return np.sort(np.real(np.diag(A)))


def numeric_rank(eigs: Sequence[float], rtol: float = RANK_RTOL) -> int:
    eigs = np.asarray(eigs, dtype=float)
    rho = float(np.abs(eigs).max(initial=0.0))
    if rho == 0.0:
        return 0
    return int(np.sum(np.abs(eigs) > rtol * rho))


# ---------------------------------------------------------------------------
# the form and its induced versions


def qform_entries(sys: OperatorSystem, phi: RatFun, source: str = "use_e") -> list:
    """Symbolic M_jk (row j multiplies conj(xi_j), column k multiplies xi_k)."""
    if phi.conjugate() != phi:
        raise BadParams("phi must be real-valued")
    if source not in ("use_e", "use_d"):
        raise BadParams(f"unknown source {source!r}")
    sys = ensure_a3(sys)
    r = sys.r
    p = sys.principal_parts()
    pbar_phi = [P.bar().apply(phi) for P in p]
    p_phi = [P.apply(phi) for P in p]
    M = []
    for j in range(r):
        row = []
        for k in range(r):
            v = p[j].apply(pbar_phi[k])
            for l in range(r):
                if source == "use_e":
                    t = sys.e[j][k][l]
                    if not t.is_zero():
                        v = v + t * pbar_phi[l]
                else:
                    t = sys.d[j][k][l]
                    if not t.is_zero():
                        v = v + t * p_phi[l]
            row.append(v)
        M.append(row)
    return M


def _evaluate_entries(M: list, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values with shape (points, r, r) and a mask of nodes hitting a pole."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    r = len(M)
    out = np.zeros((X.shape[0], r, r), dtype=complex)
    bad = np.zeros(X.shape[0], dtype=bool)
    for j in range(r):
        for k in range(r):
            f = M[j][k]
            if f.is_zero():
                continue
            den = f.den.evaluate_points(X)
            small = np.abs(den) < 1e-14 * (1.0 + f.den.coeff_magnitude())
            bad |= small
            num = f.num.evaluate_points(X)
            with np.errstate(divide="ignore", invalid="ignore"):
                out[:, j, k] = np.where(small, 0.0, num / np.where(small, 1.0, den))
    return out, bad


def hermitize(M: np.ndarray) -> np.ndarray:
    return (M + np.conj(np.swapaxes(M, -1, -2))) / 2


@dataclass
class HermitianSample:
    point: list
    H: np.ndarray


def qform_matrices(sys: OperatorSystem, phi: RatFun, X, source: str = "use_e") -> np.ndarray:
    """Hermitised forms at each row of ``X``, shape (points, r, r)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    vals, bad = _evaluate_entries(qform_entries(sys, phi, source), X)
    if bad.any():
        k = int(np.argmax(bad))
        raise PoleError("coefficient pole at sample point", X[k].tolist())
    return hermitize(vals)


def qform_matrix(sys: OperatorSystem, phi: RatFun, x, source: str = "use_e") -> HermitianSample:
    x = np.asarray(x, dtype=float)
    return HermitianSample([float(v) for v in x], qform_matrices(sys, phi, x[None, :], source)[0])


def induced_matrix(H, q: int) -> np.ndarray:
    """Matrix of xi -> sum_{|I|=q-1} <H xi_I, xi_I> on increasing q-indices."""
    H = np.asarray(H, dtype=complex)
    r = H.shape[0]
    if not 1 <= q <= r:
        raise BadParams(f"q must lie in 1..{r}")
    basis = enumerate_indices(r, q)
    where = {J: a for a, J in enumerate(basis)}
    N = np.zeros((len(basis), len(basis)), dtype=complex)
    for I in enumerate_indices(r, q - 1):
        hits = []
        for j in range(1, r + 1):
            s, A = sort_sign((j,) + I)
            if s:
                hits.append((j - 1, where[A], s))
        for j, a, sa in hits:
            for k, b, sb in hits:
                N[a, b] += H[j, k] * sa * sb
    return N


def check_induced_spectrum(H, q: int, tol: float = 1e-9) -> dict:
    """Compare the spectrum of the induced q-form matrix with all q-fold sums of eigenvalues of H."""
    H = _check_hermitian(H)
    r = H.shape[0]
    lam = eigen_hermitian(H)
    expected = np.sort([sum(lam[j - 1] for j in J) for J in combinations(range(1, r + 1), q)])
    got = eigen_hermitian(induced_matrix(H, q))
    diff = np.abs(got - expected)
    return {"pass": bool(diff.max(initial=0.0) <= tol), "max_diff": float(diff.max(initial=0.0)),
            "eigenvalues": got.tolist(), "expected": expected.tolist()}


check_lemma31 = check_induced_spectrum  # name used by the public interface


# ---------------------------------------------------------------------------
# scans


def local_hessian_form(sys: OperatorSystem, phi: RatFun, y) -> np.ndarray:
    """a_j^mu conj(a_k^nu) d_mu d_nu phi at y, oriented like ``qform_matrix``.

    This is the reduction of the form at a point where phi and its first
    derivatives vanish.
    """
    n, r = sys.n, sys.r
    y = np.asarray(y, dtype=float)
    hess = np.zeros((n, n), dtype=complex)
    for mu in range(n):
        for nu in range(n):
            hess[mu, nu] = phi.derivative(mu + 1).derivative(nu + 1).evaluate(y)
    A = np.array([[P.a[mu].evaluate(y) for mu in range(n)] for P in sys.ops], dtype=complex)
    return hermitize(A @ hess @ A.conj().T)


@dataclass
class QFormReport:
    samples: list
    r: int
    q: int
    min_eigenvalue: float | None
    non_psd: int
    poles: int
    rank_condition: bool
    p_convex: bool
    critical: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self, with_samples: bool = True) -> dict:
        agg = {"min_eigenvalue": self.min_eigenvalue, "non_psd_points": self.non_psd,
               "pole_nodes": self.poles, "samples": len(self.samples), "q": self.q,
               "rank_threshold": self.r - self.q + 1, "rank_condition": self.rank_condition,
               "p_convex": self.p_convex}
        out = {"aggregate": agg}
        if with_samples:
            out["samples"] = self.samples
        if self.critical is not None:
            out["critical_point"] = self.critical
        return out


def _sample_record(point, H, psd_tol):
    eigs = eigen_hermitian(H)
    rho = float(np.abs(eigs).max(initial=0.0))
    rank = numeric_rank(eigs)
    psd = bool(eigs[0] >= -psd_tol * max(rho, 1.0))
    return {"point": [float(v) for v in point], "eigenvalues": eigs.tolist(),
            "psd": psd, "rank": rank}


def grid_points(box, N: int) -> np.ndarray:
    """Nodes of an N^n grid, row-major with x1 fastest."""
    axes = [np.linspace(lo, hi, N) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel(order="F") for m in mesh], axis=1)


def pconvexity_scan(sys: OperatorSystem, phi: RatFun, box=None, N: int = 16, q: int = 1, *,
                    source: str = "use_e", critical_point=None, threads: int = 1,
                    psd_tol: float = 1e-9) -> QFormReport:
    if N < 2:
        raise BadParams("scan needs N >= 2 per axis")
    if not 1 <= q <= sys.r:
        raise BadParams(f"q must lie in 1..{sys.r}")
    box = box or sys.box
    X = grid_points(box, N)
    M = qform_entries(sys, phi, source)
    vals, bad = _evaluate_entries(M, X)
    Hs = hermitize(vals)
    idx = [i for i in range(len(X)) if not bad[i]]

    def work(i):
        return _sample_record(X[i], Hs[i], psd_tol)

    if threads > 1 and len(idx) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            samples = list(pool.map(work, idx))
    else:
        samples = [work(i) for i in idx]
    need = sys.r - q + 1
    min_eig = min((s["eigenvalues"][0] for s in samples), default=None)
    non_psd = sum(1 for s in samples if not s["psd"])
    rank_ok = bool(samples) and all(s["psd"] and s["rank"] >= need for s in samples)
    convex = bool(samples) and all(s["psd"] and s["rank"] == sys.r for s in samples)
    crit = None
    if critical_point is not None:
        y = np.asarray(critical_point, dtype=float)
        grad = [abs(phi.derivative(mu + 1).evaluate(y)) for mu in range(sys.n)]
        H_y = qform_matrix(sys, phi, y, source).H
        L_y = local_hessian_form(sys, phi, y)
        crit = {"point": y.tolist(), "gradient_norm": float(max(grad)),
                "eigenvalues": eigen_hermitian(L_y).tolist(),
                "max_diff": float(np.abs(H_y - L_y).max())}
    return QFormReport(samples, sys.r, q, min_eig, non_psd, int(bad.sum()), rank_ok, convex, crit)
