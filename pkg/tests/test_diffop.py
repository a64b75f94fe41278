
from hypothesis import given
from hypothesis import strategies as st

from overdet.algebra import GaussRat, RatFun, variables
from overdet.diffop import DiffOp, bracket, formal_adjoint

from conftest import polys

x1, x2, x3 = variables(3)
I = RatFun.const(3, GaussRat(0, 1))
D = [DiffOp.partial(3, k) for k in (1, 2, 3)]


def op(*principal, a0=0):
    return DiffOp.make(principal, a0, 3)


def lewy_p():
    return op(GaussRat(1, 0) / 2, GaussRat(0, 1) / 2, x2 - I * x1)


def random_ops():
    return st.builds(lambda a, b, c, z: DiffOp.make([RatFun(a), RatFun(b), RatFun(c)], RatFun(z), 3),
                     polys(max_terms=2), polys(max_terms=2), polys(max_terms=2), polys(max_terms=2))


def test_apply_examples():
    assert D[0].apply(x1 ** 2) == 2 * x1
    assert op(x2, 0, 0, a0=1).apply(x1) == x2 + x1
    assert lewy_p().apply(x3) == x2 - I * x1


def test_principal_and_bar():
    assert op(1, 0, 0, a0=1).principal() == D[0]
    assert op(I, 0, 0).bar() == op(-I, 0, 0)


def test_bracket_examples():
    assert bracket(D[0], op(x1, 0, 0)) == D[0]
    assert bracket(D[0], D[1]).is_zero()
    p = lewy_p()
    assert bracket(p, p.bar()) == op(0, 0, 2 * I)


def test_adjoint_examples():
    assert formal_adjoint(D[0]) == op(-1, 0, 0)
    assert formal_adjoint(op(x1, 0, 0)) == op(-x1, 0, 0, a0=-1)


@given(random_ops())
def test_bar_principal_commute(P):
    assert P.principal().bar() == P.bar().principal()


@given(random_ops())
def test_adjoint_involution(P):
    assert formal_adjoint(formal_adjoint(P)) == P


@given(random_ops(), random_ops())
def test_bracket_antisymmetric(P, Q):
    assert bracket(P, Q) == -bracket(Q, P)


@given(random_ops(), random_ops(), random_ops())
def test_jacobi_identity(P, Q, R):
    total = bracket(P, bracket(Q, R)) + bracket(Q, bracket(R, P)) + bracket(R, bracket(P, Q))
    assert total.is_zero()


@given(random_ops(), st.tuples(polys(), polys()))
def test_bracket_matches_composition(P, fg):
    f = RatFun(fg[0])
    assert bracket(P, D[1]).apply(f) == P.apply(D[1].apply(f)) - D[1].apply(P.apply(f))


@given(random_ops(), polys(), polys())
def test_divergence_certificate(P, f, g):
    f, g = RatFun(f), RatFun(g)
    lhs = P.apply(g) * f.conjugate() - g * formal_adjoint(P).apply(f).conjugate()
    rhs = RatFun.zero(3)
    for nu in range(3):
        rhs = rhs + (P.a[nu] * g * f.conjugate()).derivative(nu + 1)
    assert lhs == rhs


def test_parse_constructor():
    P = DiffOp.parse(["x2", "0", "i"], "1", ["x1", "x2", "x3"])
    assert P == op(x2, 0, I, a0=1)
    assert P.format(["x1", "x2", "x3"])["principal"][2] == "i"
