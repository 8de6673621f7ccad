"""Covariant algebra read off from the final w's.

With the w's split into ghost-like C^M (degree 1) and tensor-like T^A
(degree 0), closure of s on the w's forces

    s T^A = C^M R_M^A(T),    s C^M = 1/2 (-)^(eps_K + 1) C^K C^L F_LK^M(T),

where eps_K + 1 is the parity of C^K.  The derivations
nabla_M = R_M^A d/dT^A then satisfy [nabla_M, nabla_N] = -F_MN^K nabla_K.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .errors import (NonlinearGhostDependence, NotQuadratic, NotTildeMode, UnknownGenerator,
                     UnsupportedDegree)
from .homotopy import AlgorithmResult
from .jetspace import JetModel, total_derivative
from .superalgebra import (Derivation, Expr, GradedSymbol, apply_derivation, graded_product,
                           left_derivative, substitute)


def _degree(s: GradedSymbol, mode: str) -> int:
    return s.ghost if mode == "s" else s.tot


@dataclass
class Classification:
    mode: str
    C: list          # degree-1 w's
    T: list          # degree-0 w's


def classify_w(result: AlgorithmResult, mode: str | None = None) -> Classification:
    """Split the w's of a result by ghost number (mode s) or total degree (stilde)."""
    mode = mode or result.mode
    ws = sorted(set(result.targets) | set(result.auxiliary))
    C, T = [], []
    for w in ws:
        deg = _degree(w, mode)
        if deg == 1:
            C.append(w)
        elif deg == 0:
            T.append(w)
        else:
            what = "ghost number" if mode == "s" else "total degree"
            raise UnsupportedDegree(f"{w} has {what} {deg}; only 0 and 1 are supported")
    return Classification(mode, C, T)


def _eps(K: GradedSymbol) -> int:
    return (K.parity + 1) & 1


def _sign(p: int) -> int:
    return -1 if p & 1 else 1


@dataclass
class CovariantAlgebra:
    C: list
    T: list
    R: dict                  # (M, A) -> R_M^A, nonzero entries only
    F: dict                  # (L, K, M) -> F_LK^M, nonzero entries only
    eps: dict                # M -> eps_M
    r: dict = field(default_factory=dict, repr=False)

    def R_of(self, M, A) -> Expr:
        return self.R.get((M, A), Expr())

    def F_of(self, L, K, M) -> Expr:
        return self.F.get((L, K, M), Expr())

    def known_T(self) -> set:
        return {A for A in self.T if A in self.r}

    def nabla(self, M) -> Derivation:
        """R_M^A d/dT^A; raises UnknownGenerator on T's whose r is not at hand."""
        known = self.known_T()

        def rule(s):
            if s in known:
                return self.R_of(M, s)
            return None

        return Derivation(self.eps[M], rule=rule, name=f"nabla[{M}]")

    def reconstruct(self) -> dict:
        """The s-images rebuilt from (R, F)."""
        out = {}
        for A in self.T:
            if A not in self.r:
                continue
            e = Expr()
            for M in self.C:
                R = self.R_of(M, A)
                if R:
                    e = e + graded_product(Expr.sym(M), R)
            out[A] = e
        for M in self.C:
            if M not in self.r:
                continue
            e = Expr()
            for K in self.C:
                for L in self.C:
                    F = self.F_of(L, K, M)
                    if F:
                        CC = graded_product(Expr.sym(K), Expr.sym(L))
                        e = e + graded_product(CC, F).scale(_sign(_eps(K) + 1))
            out[M] = e.scale(Fraction(1, 2))
        return out


def _count(mono, group: set) -> int:
    return sum(1 for s in mono if s in group)


def extract_algebra(result: AlgorithmResult, classification: Classification | None = None) -> CovariantAlgebra:
    """Read off R_M^A and F_LK^M from the r's of a terminated result."""
    cl = classification or classify_w(result)
    r_all = dict(result.r_aux)
    r_all.update(result.r)
    Cset = set(cl.C)
    eps = {M: _eps(M) for M in cl.C}
    R, F = {}, {}
    for A in cl.T:
        r = r_all.get(A)
        if r is None:
            continue
        for mono in r.terms:
            if _count(mono, Cset) != 1:
                raise NonlinearGhostDependence(f"r of {A} is not linear in the C's: term "
                                               f"{Expr({mono: r.terms[mono]})}")
        for M in cl.C:
            d = left_derivative(r, M)
            if d:
                R[(M, A)] = d
    for M in cl.C:
        r = r_all.get(M)
        if r is None:
            continue
        for mono in r.terms:
            if _count(mono, Cset) != 2:
                raise NotQuadratic(f"r of {M} is not quadratic in the C's: term "
                                   f"{Expr({mono: r.terms[mono]})}")
        for K in cl.C:
            dK = left_derivative(r, K)
            if not dK:
                continue
            for L in cl.C:
                d = left_derivative(dK, L)
                if d:
                    F[(L, K, M)] = d.scale(_sign(_eps(K) + 1))
    return CovariantAlgebra(list(cl.C), list(cl.T), R, F, eps,
                            {k: v for k, v in r_all.items() if k in Cset or k in set(cl.T)})


@dataclass
class ConsistencyReport:
    problems: list = field(default_factory=list)
    skipped: list = field(default_factory=list)   # checks needing r's beyond the computed w's

    @property
    def ok(self) -> bool:
        return not self.problems


def check_consistency(alg: CovariantAlgebra) -> ConsistencyReport:
    """Check [nabla_M, nabla_N] = -F_MN^K nabla_K on every T with known r, and the
    graded cyclic identity for F."""
    rep = ConsistencyReport()
    nab = {M: alg.nabla(M) for M in alg.C}
    known = sorted(alg.known_T())
    C = alg.C
    for i, M in enumerate(C):
        for N in C[i:]:
            sMN = _sign(alg.eps[M] * alg.eps[N])
            for A in known:
                try:
                    lhs = apply_derivation(nab[M], alg.R_of(N, A)) - \
                        apply_derivation(nab[N], alg.R_of(M, A)).scale(sMN)
                except UnknownGenerator:
                    rep.skipped.append(f"[nabla {M}, nabla {N}] on {A}")
                    continue
                rhs = Expr()
                for K in C:
                    F = alg.F_of(M, N, K)
                    if F:
                        rhs = rhs - graded_product(F, alg.R_of(K, A))
                if lhs != rhs:
                    rep.problems.append(f"[nabla {M}, nabla {N}] {A} = {lhs}, "
                                        f"but -F nabla {A} = {rhs}")

    def term(K, M, N, L):
        acc = apply_derivation(nab[K], alg.F_of(M, N, L))
        for Rr in C:
            F1 = alg.F_of(M, N, Rr)
            if F1:
                acc = acc + graded_product(F1, alg.F_of(Rr, K, L))
        return acc.scale(_sign(alg.eps[K] * alg.eps[N]))

    # the cyclic sum only depends on the cyclic class of (K, M, N)
    seen = set()
    for K in C:
        for M in C:
            for N in C:
                cls = min((K, M, N), (M, N, K), (N, K, M))
                if cls in seen:
                    continue
                seen.add(cls)
                for L in C:
                    try:
                        tot = term(K, M, N, L) + term(M, N, K, L) + term(N, K, M, L)
                    except UnknownGenerator:
                        rep.skipped.append(f"cyclic identity ({K}, {M}, {N}) -> {L}")
                        continue
                    if tot:
                        rep.problems.append(f"cyclic identity ({K}, {M}, {N}) -> {L}: {tot}")
    return rep


# ----------------------------------------------------------------------
# s-tilde decomposition
# ----------------------------------------------------------------------

def antifield_number(mono) -> int:
    return sum(s.antifield_number for s in mono)


def split_by_antifield_number(e: Expr) -> dict:
    out: dict = {}
    for mono, c in e.terms.items():
        out.setdefault(antifield_number(mono), {})[mono] = c
    return {k: Expr(v) for k, v in sorted(out.items())}


@dataclass
class TildeGhostPiece:
    symbol: GradedSymbol
    A: dict                 # mu -> A_mu^M (coefficient of dx^mu, antifield independent)
    C: Expr                 # ghost-number-1 antifield independent piece
    antifield_terms: dict   # antifield number >= 1 -> Expr


@dataclass
class TildeTensorPiece:
    symbol: GradedSymbol
    T: Expr
    antifield_terms: dict


@dataclass
class TildeDecomposition:
    ghosts: list
    tensors: list
    relations: list = field(default_factory=list)   # (T, mu, residual) for d_mu T ~ A_mu^M nabla_M T

    def ghost(self, s) -> TildeGhostPiece:
        return next(p for p in self.ghosts if p.symbol == s)

    def tensor(self, s) -> TildeTensorPiece:
        return next(p for p in self.tensors if p.symbol == s)


def decompose_tilde(result: AlgorithmResult, model: JetModel | None = None,
                    classification: Classification | None = None) -> TildeDecomposition:
    """Split each C~ into dx^mu A_mu + C + antifield terms and each T~ into T +
    antifield terms (original coordinates).

    With ``model`` given, also evaluates d_mu T - A_mu^M nabla_M T for the
    T's whose r involves only computed w's.  These residuals are reported
    only: they are expected to vanish on-shell, which is not checked here.
    """
    if result.mode != "stilde":
        raise NotTildeMode(f"result was computed in mode {result.mode}, not stilde")
    cl = classification or classify_w(result)
    orig = dict(result.aux_original)
    orig.update(result.w_original)
    ghosts, tensors = [], []
    for M in cl.C:
        parts = split_by_antifield_number(orig[M])
        free = parts.pop(0, Expr())
        dxs = sorted({s for s in free.symbols() if s.cls == "dx"})
        A = {}
        for dx in dxs:
            a = left_derivative(free, dx)
            if a:
                A[dx.index[0]] = a
        C = free.filter(lambda mono: sum(s.formdeg for s in mono) == 0)
        ghosts.append(TildeGhostPiece(M, A, C, parts))
    for T in cl.T:
        parts = split_by_antifield_number(orig[T])
        tensors.append(TildeTensorPiece(T, parts.pop(0, Expr()), parts))
    dec = TildeDecomposition(ghosts, tensors)
    if model is not None:
        dec.relations = _relations(result, cl, dec, model, orig)
    return dec


def _relations(result, cl, dec, model, orig) -> list:
    alg = extract_algebra(result, cl)
    out = []
    for piece in dec.tensors:
        A = piece.symbol
        if A not in result.targets:
            continue
        nablaT = {}
        for M in cl.C:
            R = alg.R_of(M, A)
            if not R:
                continue
            if any(s not in orig for s in R.symbols()):
                nablaT = None
                break
            Ro = substitute(R, lambda s: orig.get(s), check_parity=False)
            nablaT[M] = split_by_antifield_number(Ro).get(0, Expr())
        if nablaT is None:
            continue
        for mu in range(model.base_dim):
            lhs = total_derivative(model, piece.T, mu)
            rhs = Expr()
            for g in dec.ghosts:
                a = g.A.get(mu)
                if a and g.symbol in nablaT:
                    rhs = rhs + graded_product(a, nablaT[g.symbol])
            out.append((A, mu, lhs - rhs))
    return out
