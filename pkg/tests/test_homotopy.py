from fractions import Fraction

import pytest
import sympy

from jetbrst.builtins import build_toy_model, build_yang_mills
from jetbrst.coordsplit import validate_split
from jetbrst.errors import NotTerminated
from jetbrst.homotopy import (IterationState, iterate_once, run_algorithm, termination_bound,
                              verify_result)
from jetbrst.superalgebra import Expr, apply_derivation, degree_in
from jetbrst.coordsplit import is_uv


# ---------------------------------------------------------------------------
# toy oracle: polynomials in u (even), v (odd), t (even) as {(i, j, k): coeff}
# for u^i v^j t^k with j in {0, 1}; s u = v, s v = 0, s t = v u.

def _oracle_mul(a, b):
    out = {}
    for (i1, j1, k1), c1 in a.items():
        for (i2, j2, k2), c2 in b.items():
            if j1 + j2 > 1:
                continue
            key = (i1 + i2, j1 + j2, k1 + k2)
            out[key] = out.get(key, 0) + c1 * c2
    return {k: v for k, v in out.items() if v != 0}


def _oracle_s(p):
    # s(u^i v^j t^k) = i u^(i-1) v^(j+1) t^k + k u^i v^j (v u) t^(k-1); v passes only even factors
    out = {}
    for (i, j, k), c in p.items():
        if j:
            continue
        if i:
            key = (i - 1, 1, k)
            out[key] = out.get(key, 0) + i * c
        if k:
            key = (i + 1, 1, k - 1)
            out[key] = out.get(key, 0) + k * c
    return {k: v for k, v in out.items() if v != 0}


def oracle_toy_w():
    """Solve s(t + sum_m a_m m) = 0 over all degree-2 monomials m in (u, v)."""
    monos = [(2, 0, 0), (1, 1, 0)]          # u u and u v; v v = 0
    a = sympy.symbols(f"a0:{len(monos)}")
    ansatz = {(0, 0, 1): sympy.Integer(1)}
    for m, sym in zip(monos, a):
        ansatz[m] = sym
    sw = _oracle_s(ansatz)
    sol = sympy.solve([sympy.expand(c) for c in sw.values()], a, dict=True)
    assert len(sol) == 1
    return {m: Fraction(str(sympy.nsimplify(sym.subs(sol[0]).subs({x: 0 for x in a}))))
            for m, sym in zip(monos, a)}


def test_toy_against_oracle(toy):
    model, cs, res = toy
    coeffs = oracle_toy_w()
    assert coeffs == {(2, 0, 0): Fraction(-1, 2), (1, 1, 0): 0}
    t, u = model.symbol("t"), model.symbol("u")
    (I,) = res.targets
    expected = Expr.sym(t) + Expr.mono([u, u], coeffs[(2, 0, 0)])
    assert res.w_original[I] == expected
    assert not apply_derivation(model.s, res.w_original[I])
    assert res.terminated and res.iterations_used == 2


def test_toy_perturbed_coefficient_fails(toy):
    model, cs, res = toy
    t, u = model.symbol("t"), model.symbol("u")
    wrong = Expr.sym(t) + Expr.mono([u, u], Fraction(-2, 5))
    assert apply_derivation(model.s, wrong)
    assert _oracle_s({(0, 0, 1): 1, (2, 0, 0): Fraction(-2, 5)})


def field_strength_oracle(model, mu, nu, a):
    f = model.lie.structure
    A = model.symbol
    e = Expr.sym(A("A", (nu, a), (mu,))) - Expr.sym(A("A", (mu, a), (nu,)))
    for b in range(model.lie.dim):
        for c in range(model.lie.dim):
            if f(b, c, a):
                e = e + Expr.mono([A("A", (mu, b)), A("A", (nu, c))], f(b, c, a))
    return e


def test_su2_field_strength(su2_s):
    model, cs, res = su2_s
    assert res.terminated
    Fs = {I: e for I, e in res.w_original.items() if I.name == "F"}
    assert len(Fs) == 3
    for I, e in Fs.items():
        mu, nu, a = I.index
        assert e == field_strength_oracle(model, mu, nu, a)


@pytest.mark.parametrize("fixture", ["su2_s", "su2_stilde", "abelian_s", "toy"])
def test_r_unchanged_and_verified(fixture, request):
    model, cs, res = request.getfixturevalue(fixture)
    assert res.terminated
    for I in res.targets:
        assert res.r_final[I] == res.r[I], I
    assert verify_result(model, cs, res).ok


def test_defect_degree_filtration(su2_s):
    model, cs, res = su2_s
    state = IterationState.initial(cs, res.targets)
    for m in range(res.iterations_used + 1):
        for I in res.targets:
            d = state.engine.defect(m, I)
            assert all(degree_in(mono, is_uv) > m for mono in d.terms), (m, I)
        if m < res.iterations_used:
            state = iterate_once(state, cs, model)
    assert state.w_exprs == res.w_new


def test_bound_covers_last_correction(su2_s):
    model, cs, res = su2_s
    bound = termination_bound(model, cs, res.targets)
    assert bound.bounded
    assert bound.delta == 1
    for I, k in res.last_nonzero.items():
        assert k <= bound.get(I)


def test_not_terminated_carries_partial_result():
    model = build_yang_mills(2, "su2", 2)
    cs = validate_split(model)
    with pytest.raises(NotTerminated) as info:
        run_algorithm(model, cs, max_iter=1)
    partial = info.value.result
    assert not partial.terminated
    assert partial.iterations_used == 1
    assert partial.residual


def test_abelian_needs_no_nonlinear_terms(abelian_s):
    model, cs, res = abelian_s
    for I, e in res.w_original.items():
        assert all(len(mono) == 1 for mono in e.terms), I


def test_even_negative_dimension_is_unbounded():
    from importlib import resources
    from jetbrst.modeldsl import load_model
    model = load_model(resources.files("jetbrst").joinpath("models").joinpath("even_negative.jbm"))
    cs = validate_split(model)
    bound = termination_bound(model, cs)
    assert not bound.bounded
    assert bound.violated.startswith("(iii)")
