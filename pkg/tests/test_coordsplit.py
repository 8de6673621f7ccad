import random

import pytest

from jetbrst.builtins import build_toy_model, build_yang_mills
from jetbrst.coordsplit import validate_split
from jetbrst.errors import BasisIncomplete, DoubletViolation, ModelError, NotTriangular
from jetbrst.modeldsl import load_model, parse_model
from jetbrst.props import random_expr
from jetbrst.superalgebra import Expr, apply_derivation
from importlib import resources

TOY = resources.files("jetbrst").joinpath("models/toy.jbm").read_text()


def test_toy_split():
    m = build_toy_model()
    cs = validate_split(m)
    t, u, v = (m.symbol(x) for x in "tuv")
    assert cs.to_new(Expr.sym(t)) == Expr.sym(cs.w_syms[0])
    (unew,) = cs.u_syms
    assert cs.to_original(Expr.sym(cs.partner[unew])) == Expr.sym(v)
    assert cs.r_function(cs.w_syms[0]) == 0
    # s t = v u reads v:u u:u in new coordinates
    assert cs.s_image(cs.w_syms[0]) == Expr.sym(cs.partner[unew]) * Expr.sym(unew)


@pytest.mark.parametrize("edit, exc", [
    (lambda s: s.replace("w t = t\n", ""), BasisIncomplete),
    (lambda s: s.replace("w t = t", "w t = u*u"), NotTriangular),
    (lambda s: s.replace("w t = t", "w t = t + u*u"), NotTriangular),
    (lambda s: s.replace("w t = t", "w t = 1"), ModelError),
])
def test_bad_toy_splits(edit, exc):
    with pytest.raises(exc):
        validate_split(parse_model(edit(TOY)))


def test_doublet_violation():
    m = build_toy_model()
    u, v, t = (m.symbol(x) for x in "uvt")
    m.s_rules[v] = Expr.sym(u) * Expr.sym(u)
    m.s_rules[t] = Expr()
    with pytest.raises(DoubletViolation):
        validate_split(m)


@pytest.mark.parametrize("algebra, n, mode", [
    ("su2", 2, "s"), ("su2", 2, "stilde"), ("abelian", 4, "s"), ("su2", 3, "stilde"),
])
def test_ym_generators_round_trip(algebra, n, mode):
    m = build_yang_mills(n, algebra, 2, mode)
    cs = validate_split(m)
    for g in m.generators():
        e = Expr.sym(g)
        assert cs.to_original(cs.to_new(e)) == e, g
    for s in list(cs.forward):
        if len(s.deriv) <= m.jet_order:
            e = Expr.sym(s)
            assert cs.to_new(cs.to_original(e)) == e, s


def test_ym_basis_is_complete():
    m = build_yang_mills(2, "su2", 2)
    cs = validate_split(m)
    for k in range(m.jet_order + 1):
        gens = m.generators_at(k)
        new = [s for s, e in cs.forward.items() if max(x.jet_order for x in e.symbols()) == k]
        assert len(gens) == len(new), k


def test_ym_doublets_close():
    m = build_yang_mills(2, "su2", 2, "stilde")
    cs = validate_split(m)
    Dn = cs.new_derivation()
    for u in cs.u_generators():
        v = cs.partner[u]
        assert apply_derivation(Dn, Expr.sym(u)) == Expr.sym(v)
        assert cs.to_original(Expr.sym(v)) == apply_derivation(cs.D, cs.forward[u])
        assert not apply_derivation(cs.D, cs.forward[v])


def test_random_round_trips():
    m = build_yang_mills(2, "su2", 2)
    cs = validate_split(m)
    rng = random.Random(7)
    pool = m.generators(1)
    new_pool = sorted(s for s in cs.forward if len(s.deriv) <= 1)
    for _ in range(200):
        e = random_expr(rng, pool, 3, 3)
        assert cs.to_original(cs.to_new(e)) == e
        # products of three v's expand to thousands of terms; two factors suffice here
        f = random_expr(rng, new_pool, 3, 2)
        assert cs.to_new(cs.to_original(f)) == f


def test_model_files_validate():
    for name in ("toy.jbm", "ym_su2.jbm"):
        path = resources.files("jetbrst").joinpath("models").joinpath(name)
        validate_split(load_model(path))
