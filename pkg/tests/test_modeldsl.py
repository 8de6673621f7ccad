from importlib import resources

import pytest

from jetbrst.builtins import build_toy_model, build_yang_mills
from jetbrst.errors import DslSyntaxError, GradingMismatch, ModelError, UndeclaredSymbol
from jetbrst.jetspace import check_nilpotency
from jetbrst.modeldsl import (check_grading_consistency, load_model, model_signature, parse_expr,
                              parse_model, print_model)
from jetbrst.superalgebra import Expr

MODELS = resources.files("jetbrst").joinpath("models")
YM = MODELS.joinpath("ym_su2.jbm").read_text()
TOY = MODELS.joinpath("toy.jbm").read_text()


def test_toy_file_matches_builtin():
    assert model_signature(parse_model(TOY)) == model_signature(build_toy_model())


def test_ym_file_matches_builtin():
    m = parse_model(YM)
    assert model_signature(m) == model_signature(build_yang_mills(2, "su2", 2))
    assert check_grading_consistency(m).ok
    assert check_nilpotency(m.s, m).ok


@pytest.mark.parametrize("name", ["toy.jbm", "ym_su2.jbm", "even_negative.jbm"])
def test_print_parse_round_trip(name):
    m = load_model(MODELS.joinpath(name))
    again = parse_model(print_model(m))
    assert model_signature(again) == model_signature(m)
    assert print_model(again) == print_model(m)


def test_builtin_round_trips_through_text():
    m = build_yang_mills(2, "su2", 2)
    assert model_signature(parse_model(print_model(m))) == model_signature(m)


def test_ghost_dimension_mismatch_is_reported():
    bad = YM.replace("family C lie parity=1 ghost=1 dim=0", "family C lie parity=1 ghost=1 dim=1")
    with pytest.raises(GradingMismatch) as info:
        parse_model(bad)
    assert info.value.line is not None
    m = parse_model(bad, strict=False)
    rep = check_grading_consistency(m)
    assert not rep.ok
    assert any("A" in line for line in rep.lines())


def test_corrupted_ghost_rule_parses_but_is_not_nilpotent():
    bad = YM.replace("rule s C[a] = 1/2*f[b,c,a]*C[c]*C[b]", "rule s C[a] = f[b,c,a]*C[c]*C[b]")
    m = parse_model(bad)
    assert check_grading_consistency(m).ok
    assert not check_nilpotency(m.s, m).ok


def test_syntax_error_position():
    bad = TOY.replace("rule s t = v*u", "rule s t = v*)u")
    with pytest.raises(DslSyntaxError) as info:
        parse_model(bad)
    line = bad.splitlines().index("rule s t = v*)u") + 1
    assert info.value.line == line
    assert info.value.column is not None


def test_undeclared_symbol():
    with pytest.raises(UndeclaredSymbol):
        parse_model(TOY.replace("rule s t = v*u", "rule s t = v*q"))


def test_missing_rule():
    with pytest.raises(ModelError):
        parse_model(TOY.replace("rule s v = 0\n", ""))


def test_missing_header():
    with pytest.raises(ModelError):
        parse_model(TOY.replace("jetbrst-model v1\n", ""))


def test_parse_expr_sums_repeated_indices():
    m = build_yang_mills(2, "su2", 2)
    e = parse_expr("A[mu,a]*A[mu,a]", m)
    expected = Expr()
    for mu in range(2):
        for a in range(3):
            expected = expected + Expr.mono([m.symbol("A", (mu, a))] * 2)
    assert e == expected
    assert parse_expr("d[0]C[1] - 1/2*C[1]*C[0]", m) == \
        Expr.sym(m.symbol("C", (1,), (0,))) + Expr.mono([m.symbol("C", (0,)), m.symbol("C", (1,))],
                                                         Expr.const(1).terms[()] / 2)
