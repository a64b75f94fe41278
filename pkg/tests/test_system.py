import json

import pytest

from overdet.algebra import GaussRat, RatFun, variables
from overdet.diffop import DiffOp, bracket
from overdet.errors import BadParams, ParseError
from overdet.system import (OperatorSystem, builtin, check_A1, check_A2, check_A3,
                            check_pole_free, check_rank, derham, dolbeault, dump_system,
                            from_frame, generic_rank, lewy, load_system, loads_system,
                            random_involutive, solve_structure_constants, system_to_dict)

x1, x2 = variables(2)


def sys_d_xd(c1=1):
    one = RatFun.one(1)
    ops = (DiffOp.make([1], 0, 1), DiffOp.make([RatFun.var(1, 1)], 0, 1))
    z = RatFun.zero(1)
    c = [[[z, z], [one * c1, z]], [[-one * c1, z], [z, z]]]
    return OperatorSystem(1, 2, ops, c)


def gauge():
    return OperatorSystem(2, 2, (DiffOp.make([1, x2], 0, 2), DiffOp.make([0, 1], 0, 2)))


# -- A1 ----------------------------------------------------------------------

def test_A1_derham():
    assert check_A1(derham(3)).passed


def test_A1_explicit_c():
    assert check_A1(sys_d_xd(1)).passed
    rep = check_A1(sys_d_xd(0))
    assert not rep.passed and rep.witness["pair"] == [1, 2]


def test_structure_constants_gauge():
    sol = solve_structure_constants(gauge())
    assert sol.status == "ok"
    c = sol.c
    assert c[0][1][1] == RatFun.const(2, -1) and c[1][0][1] == RatFun.const(2, 1)
    assert all(c[j][k][l].is_zero() for j in range(2) for k in range(2) for l in range(2)
               if (j, k, l) not in [(0, 1, 1), (1, 0, 1)])


def test_structure_constants_derham_and_non_unique():
    sol = solve_structure_constants(derham(3))
    assert sol.status == "ok"
    assert all(x.is_zero() for row in sol.c for col in row for x in col)
    twin = OperatorSystem(2, 2, (DiffOp.partial(2, 1), DiffOp.partial(2, 1)))
    assert solve_structure_constants(twin).status == "non_unique"


# -- A2 ----------------------------------------------------------------------

def test_A2_examples():
    assert check_A2(derham(3)).passed
    assert check_A2(dolbeault(2)).passed
    sys = gauge().with_tables(c=solve_structure_constants(gauge()).c)
    assert check_A2(sys).passed


def test_A2_detects_bad_constants():
    # c_12^3 = x3 on commuting fields: the d_3 term cannot cancel
    z = RatFun.zero(3)
    c = [[[z] * 3 for _ in range(3)] for _ in range(3)]
    c[0][1][2], c[1][0][2] = RatFun.var(3, 3), -RatFun.var(3, 3)
    rep = check_A2(derham(3).with_tables(c=c))
    assert not rep.passed and rep.witness is not None


@pytest.mark.parametrize("seed", range(50))
def test_A1_implies_A2_on_generated(seed):
    sys = random_involutive(seed, n=3 + seed % 2, r=2 + seed % 2, deg=1 + seed % 2)
    assert check_A1(sys).passed
    assert check_A2(sys).passed


# -- rank ----------------------------------------------------------------------

def test_rank_examples():
    for mode in ("include_zero_order", "principal_only"):
        rep = check_rank(derham(3), mode)
        assert rep.passed and rep.details["generic_rank"] == 3
    assert check_rank(lewy(), "principal_only").details["generic_rank"] == 1
    rep = check_rank(sys_d_xd(), "principal_only")
    assert not rep.passed and rep.details["generic_rank"] == 1


def test_generic_rank_drops_on_proportional_rows():
    assert generic_rank([[x1, x2], [x1 * x2, x2 ** 2]]) == 1
    assert generic_rank([[x1, x2], [x2, x1]]) == 2


# -- A3 ----------------------------------------------------------------------

def test_A3_examples():
    for sys in (derham(3), dolbeault(2)):
        res = check_A3(sys)
        assert res.passed
        assert all(x.is_zero() for t in (res.d, res.e) for row in t for col in row for x in col)
    res = check_A3(lewy())
    assert not res.passed and res.pair == (1, 1)
    assert res.residual == DiffOp.make([0, 0, RatFun.const(3, GaussRat(0, 2))], 0, 3)


def test_A3_random_systems_fit():
    sys = random_involutive(3, n=3, r=2, deg=1)
    res = check_A3(sys)
    assert res.passed
    p = sys.principal_parts()
    for j in range(2):
        for k in range(2):
            fit = DiffOp.zero(3)
            for l in range(2):
                fit = fit + p[l].scale(res.d[j][k][l]) - p[l].bar().scale(res.e[j][k][l])
            assert bracket(p[j], p[k].bar()) == fit


# -- builtins and generator ------------------------------------------------------

def test_builtins():
    d3 = builtin("derham", n=3)
    assert d3.r == 3 and check_A1(d3).passed and check_A2(d3).passed
    d2 = builtin("dolbeault", m=2)
    assert (d2.n, d2.r) == (4, 2) and check_A3(d2).passed
    with pytest.raises(BadParams):
        builtin("nope")
    with pytest.raises(BadParams):
        derham(0)


def test_generator_known_frame():
    one, z = RatFun.one(2), RatFun.zero(2)
    sys = from_frame([[one, x2], [z, one]], 2)
    assert sys.ops[0] == DiffOp.make([1, x2], 0, 2)
    assert sys.c[0][1][1] == RatFun.const(2, -1)
    ident = from_frame([[one, z], [z, one]], 2)
    assert all(x.is_zero() for row in ident.c for col in row for x in col)


def test_generator_deterministic_and_bounded():
    assert random_involutive(5, 3, 2, 2) == random_involutive(5, 3, 2, 2)
    with pytest.raises(BadParams):
        random_involutive(0, 5, 2, 1)


def test_twisted_generator_passes():
    for seed in range(5):
        sys = random_involutive(seed, 3, 3, 1, twist=True)
        assert check_A1(sys).passed and check_A2(sys).passed


def test_antisymmetry_enforced():
    z = RatFun.zero(2)
    c = [[[z, z], [RatFun.one(2), z]], [[RatFun.one(2), z], [z, z]]]
    with pytest.raises(BadParams):
        derham(2).with_tables(c=c)


def test_pole_free():
    assert check_pole_free(derham(2)).passed
    bad = OperatorSystem(1, 1, (DiffOp.make([1 / RatFun.var(1, 1)], 0, 1),))
    assert not check_pole_free(bad).passed


# -- files ---------------------------------------------------------------------

def test_file_roundtrip(tmp_path):
    sys = random_involutive(11, 3, 3, 2, twist=True)
    path = tmp_path / "s.json"
    dump_system(sys, path)
    back = load_system(path)
    assert system_to_dict(back) == system_to_dict(sys)
    assert back.c == sys.c and back.ops == sys.ops


def test_parse_errors_carry_offsets():
    doc = {"n": 1, "r": 1, "operators": [{"principal": ["x1^"], "zero_order": "0"}]}
    with pytest.raises(ParseError) as err:
        loads_system(json.dumps(doc))
    assert err.value.offset == 3 and "principal[0]" in str(err.value)
    text = '{"n": 1, "r": 1, "operators": ['
    with pytest.raises(ParseError) as err:
        loads_system(text)
    assert err.value.offset == len(text)
    with pytest.raises(ParseError):
        loads_system('{"n": 1}')
