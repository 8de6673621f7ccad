import dataclasses

import pytest

from jetbrst.covariant import (antifield_number, check_consistency, classify_w, decompose_tilde,
                               extract_algebra, split_by_antifield_number)
from jetbrst.errors import NotTildeMode, UnsupportedDegree
from jetbrst.superalgebra import Expr, GradedSymbol


def _ghost_index(M):
    return M.index[0]


def test_su2_structure_functions(su2_s):
    model, cs, res = su2_s
    alg = extract_algebra(res)
    f = model.lie.structure
    ghosts = [M for M in alg.C if M.name == "C"]
    assert len(ghosts) == 3
    for L in ghosts:
        for K in ghosts:
            for M in ghosts:
                a, b, c = _ghost_index(L), _ghost_index(K), _ghost_index(M)
                assert alg.F_of(L, K, M) == Expr.const(-f(a, b, c))
    # every other entry of F vanishes
    for (L, K, M), v in alg.F.items():
        assert L in ghosts and K in ghosts and M in ghosts


def test_su2_reconstruction_and_consistency(su2_s):
    model, cs, res = su2_s
    alg = extract_algebra(res)
    rebuilt = alg.reconstruct()
    for I, r in alg.r.items():
        assert rebuilt[I] == r, I
    rep = check_consistency(alg)
    assert rep.ok, rep.problems
    assert not rep.skipped


def test_nabla_on_field_strength(su2_s):
    # s F = C x F: nabla_C[a] F[b] = f_ab^c F[c] (up to the sign convention of the algebra)
    model, cs, res = su2_s
    alg = extract_algebra(res)
    Fs = [T for T in alg.T if T.name == "F"]
    for M in (C for C in alg.C if C.name == "C"):
        for T in Fs:
            R = alg.R_of(M, T)
            assert all(len(mono) == 1 and mono[0].name == "F" for mono in R.terms)


def test_abelian_is_flat(abelian_s):
    alg = extract_algebra(abelian_s[2])
    assert not alg.F
    assert check_consistency(alg).ok


def test_perturbed_F_is_localised(su2_s):
    alg = extract_algebra(su2_s[2])
    key = next(iter(sorted(alg.F)))
    F = dict(alg.F)
    F[key] = F[key].scale(2)
    rep = check_consistency(dataclasses.replace(alg, F=F))
    assert not rep.ok
    L, K, M = key
    for line in rep.problems:
        assert str(M) in line or str(L) in line or str(K) in line


def test_ghost_two_w_is_rejected(su2_s):
    res = su2_s[2]
    ghost2 = GradedSymbol("B", (0,), (), "w", 0, 2)
    bogus = dataclasses.replace(res, targets=list(res.targets) + [ghost2])
    with pytest.raises(UnsupportedDegree):
        classify_w(bogus)


def test_tilde_needs_stilde(su2_s):
    with pytest.raises(NotTildeMode):
        decompose_tilde(su2_s[2])


def test_tilde_decomposition(su2_stilde):
    model, cs, res = su2_stilde
    dec = decompose_tilde(res, model)
    Fs = [p for p in dec.tensors if p.symbol.name == "F"]
    assert Fs
    names = set()
    for p in Fs:
        assert p.T
        for k, e in p.antifield_terms.items():
            assert k >= 1
            for mono in e.terms:
                names.add(tuple(sorted(s.name for s in mono)))
    assert ("Astar", "dx") in names
    assert ("Cstar", "dx", "dx") in names
    ghosts = {p.symbol.name for p in dec.ghosts}
    assert "C" in ghosts
    C0 = next(p for p in dec.ghosts if p.symbol.name == "C")
    assert set(C0.A) == {0, 1}
    assert {A for A, mu, residual in dec.relations} <= set(res.targets)


def test_antifield_number_split():
    a = GradedSymbol("Astar", (0,), (), "antifield", 1, -1, antifield_number=1)
    c = GradedSymbol("C", (0,), (), "ghost", 1, 1)
    e = Expr.mono([a, c]) + Expr.sym(c)
    parts = split_by_antifield_number(e)
    assert set(parts) == {0, 1}
    assert antifield_number(next(iter(parts[1].terms))) == 1
