from itertools import combinations, permutations
from math import comb, factorial

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from overdet.algebra import parse
from overdet.errors import BadParams, MissingA3, NotHermitian
from overdet.multiindex import perm_sign
from overdet.qform import (check_induced_spectrum, qform_entries, eigen_hermitian, induced_matrix, local_hessian_form,
                           numeric_rank, pconvexity_scan, qform_matrix)
from overdet.system import check_A3, derham, dolbeault, lewy, random_involutive


def rand_herm(rng, r):
    A = rng.normal(size=(r, r)) + 1j * rng.normal(size=(r, r))
    return (A + A.conj().T) / 2


def induced_oracle(H, q):
    """Form sum_I sum_jk H_jk xi_{kI} conj(xi_{jI}) assembled on full tensors."""
    r = H.shape[0]
    basis = list(combinations(range(r), q))

    def full(a):
        T = np.zeros((r,) * q, dtype=complex)
        for perm in permutations(basis[a]):
            T[perm] = perm_sign(basis[a], perm)
        return T

    tensors = [full(a) for a in range(len(basis))]
    N = np.zeros((len(basis), len(basis)), dtype=complex)
    for a, Ta in enumerate(tensors):
        for b, Tb in enumerate(tensors):
            # sum over increasing I = sum over all tuples / (q-1)!
            N[a, b] = np.vdot(Ta, np.tensordot(H, Tb, axes=(1, 0))) / factorial(q - 1)
    return N


# -- eigenvalues ------------------------------------------------------------------

def test_eigen_examples():
    assert np.allclose(eigen_hermitian(np.diag([3.0, 1.0, 2.0])), [1, 2, 3])
    assert np.allclose(eigen_hermitian([[0, 1], [1, 0]]), [-1, 1])
    assert np.allclose(eigen_hermitian([[0, 1j], [-1j, 0]]), [-1, 1])
    with pytest.raises(NotHermitian):
        eigen_hermitian([[0, 1], [0, 0]])


@given(st.integers(1, 6), st.integers(0, 10 ** 6))
def test_eigen_against_numpy(r, seed):
    H = rand_herm(np.random.default_rng(seed), r)
    assert np.allclose(eigen_hermitian(H), np.linalg.eigvalsh(H), atol=1e-11)


def test_numeric_rank():
    assert numeric_rank([0.0, 1e-12, 1.0]) == 1
    assert numeric_rank([0.0, 0.0]) == 0


# -- the form ------------------------------------------------------------------------

def test_dolbeault_form_is_identity():
    sys = dolbeault(2)
    phi = parse("x1^2 + x2^2 + x3^2 + x4^2", 4)
    for x in ([0, 0, 0, 0], [0.3, -0.5, 0.9, 0.1]):
        assert np.allclose(qform_matrix(sys, phi, x).H, np.eye(2), atol=1e-14)


def test_constant_weight_gives_zero():
    H = qform_matrix(derham(3), parse("7", 3), [0.1, 0.2, 0.3]).H
    assert np.all(H == 0)


def test_derham_form():
    H = qform_matrix(derham(3), parse("x1^2 + x2^2 + x3^2", 3), [0.5, -0.2, 0.0]).H
    assert np.allclose(H, 2 * np.eye(3))


def test_weight_must_be_real_and_A3_needed():
    with pytest.raises(BadParams):
        qform_matrix(derham(2), parse("i x1", 2), [0, 0])
    with pytest.raises(MissingA3):
        qform_matrix(lewy(), parse("x1^2", 3), [0, 0, 0])


def test_use_e_use_d_agree():
    rng = np.random.default_rng(0)
    systems = [random_involutive(s, 3, 2, 1) for s in (4, 6)]
    phi = parse("x1^2 + 2 x2^2 + x1 x3 + x3^2", 3)
    for sys in systems:
        # the raw entries differ by [p_j, bar p_k] phi, which is anti-Hermitian
        assert qform_entries(sys, phi, "use_e") != qform_entries(sys, phi, "use_d")
        for x in rng.uniform(-1, 1, (20, 3)):
            He = qform_matrix(sys, phi, x, "use_e").H
            Hd = qform_matrix(sys, phi, x, "use_d").H
            assert np.abs(He - Hd).max() < 1e-9


# -- induced forms --------------------------------------------------------------------

def test_induced_examples():
    H = np.diag([1.0, 2.0, 3.0]).astype(complex)
    assert np.allclose(eigen_hermitian(induced_matrix(H, 2)), [3, 4, 5])
    assert np.array_equal(induced_matrix(H, 1), H)
    assert np.allclose(induced_matrix(H, 3), [[6.0]])


@pytest.mark.parametrize("r", [2, 3, 4])
def test_induced_against_definition(r):
    rng = np.random.default_rng(r)
    H = rand_herm(rng, r)
    for q in range(1, r + 1):
        assert np.allclose(induced_matrix(H, q), induced_oracle(H, q), atol=1e-12)


def test_induced_spectrum_random():
    rng = np.random.default_rng(31)
    for _ in range(100):
        r = int(rng.integers(1, 6))
        H = rand_herm(rng, r)
        for q in range(1, r + 1):
            res = check_induced_spectrum(H, q, 1e-9)
            assert res["pass"], res
            assert np.isclose(np.trace(induced_matrix(H, q)).real,
                              comb(r - 1, q - 1) * np.trace(H).real)


def test_induced_spectrum_trivial_cases():
    for q in (1, 2, 3):
        assert check_induced_spectrum(np.zeros((3, 3)), q)["eigenvalues"] == [0.0] * comb(3, q)
        assert np.allclose(check_induced_spectrum(np.eye(3), q)["eigenvalues"], q)


# -- scans -----------------------------------------------------------------------------

def test_scan_dolbeault():
    rep = pconvexity_scan(dolbeault(1), parse("x1^2 + x2^2", 2), N=16)
    assert rep.min_eigenvalue == pytest.approx(1.0, abs=1e-12)
    assert rep.p_convex and rep.rank_condition and rep.non_psd == 0
    assert len(rep.samples) == 256


def test_scan_constant_and_saddle():
    rep = pconvexity_scan(derham(2), parse("3", 2), N=4)
    assert rep.min_eigenvalue == 0 and not rep.p_convex
    rep = pconvexity_scan(derham(2), parse("x1^2 - x2^2", 2), N=5)
    assert rep.non_psd == 25
    assert all(np.allclose(s["eigenvalues"], [-2, 2]) for s in rep.samples)


def test_scan_rank_threshold():
    # phi = x1^2 on derham(2): eigenvalues {0, 2}; rank 1 = r - q + 1 only for q = 2
    phi = parse("x1^2", 2)
    assert not pconvexity_scan(derham(2), phi, N=4, q=1).rank_condition
    assert pconvexity_scan(derham(2), phi, N=4, q=2).rank_condition


def test_critical_point_reduction():
    sys = random_involutive(4, 3, 2, 1)
    assert check_A3(sys).passed
    phi = parse("(x1 - 1/5)^2 + x2^2 + x1 x3 - 1/5 x3 + 2 x3^2", 3)
    rep = pconvexity_scan(sys, phi, N=3, critical_point=[0.2, 0.0, 0.0])
    crit = rep.critical
    assert crit["gradient_norm"] < 1e-14 and crit["max_diff"] < 1e-12
    L = local_hessian_form(sys, phi, [0.2, 0.0, 0.0])
    assert np.allclose(eigen_hermitian(L), crit["eigenvalues"])


def test_scan_threads_deterministic():
    phi = parse("x1^2 + x2^2 + x3^2", 3)
    sys = random_involutive(2, 3, 2, 1)
    a = pconvexity_scan(sys, phi, N=6, threads=1).to_dict()
    b = pconvexity_scan(sys, phi, N=6, threads=4).to_dict()
    assert a == b


def test_scan_bad_params():
    with pytest.raises(BadParams):
        pconvexity_scan(derham(2), parse("x1", 2), N=1)
    with pytest.raises(BadParams):
        pconvexity_scan(derham(2), parse("x1", 2), q=3)
def test_contract_alias():
    from overdet import qform
    assert qform.check_lemma31 is qform.check_induced_spectrum


def test_nonzero_e_table():
    # p = (1 + i x1) d/dx1: p and bar p are dependent, so [p, bar p] = -2i d/dx1
    # can be written with d alone (the solved table) or with e alone
    from overdet.diffop import DiffOp, bracket
    from overdet.system import OperatorSystem
    P = DiffOp.make([parse("1 + i*x1", 2), 0], 0, 2)
    solved = OperatorSystem(2, 1, (P,))
    res = check_A3(solved)
    assert res.passed and not res.d[0][0][0].is_zero() and res.e[0][0][0].is_zero()
    e = parse("2*i/(1 - i*x1)", 2)
    zero = parse("0", 2)
    alt = OperatorSystem(2, 1, (P,), d=(((zero,),),), e=(((e,),),))
    assert bracket(P, P.bar()) == -(P.bar().scale(e))
    phi = parse("x1^2 + x1 x2 + 3 x2^2", 2)
    assert qform_entries(alt, phi, "use_e") != qform_entries(solved, phi, "use_e")
    rng = np.random.default_rng(3)
    for x in rng.uniform(-1, 1, size=(50, 2)):
        ref = qform_matrix(solved, phi, x, "use_e").H
        for src in ("use_e", "use_d"):
            assert np.allclose(qform_matrix(alt, phi, x, src).H, ref, atol=1e-12)
