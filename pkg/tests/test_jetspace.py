import pytest

from jetbrst.builtins import build_yang_mills
from jetbrst.errors import TruncationOverflow
from jetbrst.jetspace import (abelian_algebra, check_nilpotency, exterior_d, su2_algebra,
                              total_derivative)
from jetbrst.superalgebra import Expr, apply_derivation, gradings


def test_su2_structure_constants():
    g = su2_algebra()
    assert g.jacobi_violations() == []
    assert not g.is_abelian
    for a in range(3):
        for b in range(3):
            for c in range(3):
                assert g.structure(a, b, c) == -g.structure(b, a, c)
    assert g.structure(0, 1, 2) == 1
    assert abelian_algebra(2).is_abelian


def test_symbols_are_interned_and_sorted_derivs():
    m = build_yang_mills(2, "su2", 2)
    a = m.symbol("A", (0, 1), (1, 0))
    assert a is m.symbol("A", (0, 1), (0, 1))
    assert a.deriv == (0, 1)
    assert a.dimension == 3


def test_total_derivative_raises_order():
    m = build_yang_mills(2, "abelian", 2)
    c = Expr.sym(m.symbol("C", (0,)))
    assert total_derivative(m, c, 1) == Expr.sym(m.symbol("C", (0,), (1,)))
    x = Expr.sym(m.symbol("x", (1,)))
    assert total_derivative(m, x, 1) == 1
    assert not total_derivative(m, x, 0)


def test_order_cap_is_hard():
    m = build_yang_mills(2, "abelian", 2, max_order=3)
    top = Expr.sym(m.symbol("C", (0,), (0, 0, 0)))
    with pytest.raises(TruncationOverflow):
        total_derivative(m, top, 0)


@pytest.mark.parametrize("algebra", ["abelian", "su2"])
@pytest.mark.parametrize("mode", ["s", "stilde"])
def test_ym_nilpotent(algebra, mode):
    m = build_yang_mills(2, algebra, 2, mode)
    assert check_nilpotency(m.s, m).ok
    assert check_nilpotency(m.d, m).ok
    assert check_nilpotency(m.differential(), m).ok


def test_corrupted_rule_is_caught():
    m = build_yang_mills(2, "su2", 2)
    for a in range(3):
        m.s_rules[m.symbol("C", (a,))] = Expr()
    rep = check_nilpotency(m.s, m)
    assert not rep.ok
    assert any(g.name == "A" for g in rep.residuals)


def test_s_commutes_with_partial():
    m = build_yang_mills(2, "su2", 2)
    for g in m.generators(1):
        for mu in range(2):
            e = Expr.sym(g)
            assert apply_derivation(m.s, total_derivative(m, e, mu)) == \
                total_derivative(m, apply_derivation(m.s, e), mu)


def test_s_raises_ghost_number_and_keeps_dimension():
    m = build_yang_mills(2, "su2", 2)
    for g in m.generators(2):
        img = apply_derivation(m.s, Expr.sym(g))
        if img:
            assert gradings(img, "ghost") == {g.ghost + 1}
            assert gradings(img, "dimension") == {g.dimension}


def test_exterior_d_squares_to_zero():
    m = build_yang_mills(2, "su2", 2)
    e = Expr.sym(m.symbol("A", (0, 2))) * Expr.sym(m.symbol("C", (1,)))
    assert exterior_d(m, e)
    assert not exterior_d(m, exterior_d(m, e))
