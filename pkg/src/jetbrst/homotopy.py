"""Iterative construction of the w's: w_(m+1) = w_(m) - Y_(m+1)/(m+1) with
Y_(m+1) = rho h_(m+1), h_(m+1) the lowest (u,v)-degree part of s w_(m) - r(w_(m)).

Corrections are computed
lazily per (degree, w), so a w outside the requested set is only evolved when
some requested w needs it (in s-tilde mode r of a top-order w involves w's of
one order higher).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .coordsplit import CoordinateSystem, is_uv
from .errors import NonvanishingLowDegree, NotTerminated, TruncationOverflow
from .jetspace import JetModel
from .superalgebra import (Expr, apply_derivation, degree_decomposition, degree_in, gradings,
                           substitute)


def _uv_degree_above(D):
    return lambda mono: degree_in(mono, is_uv) > D


def rho(cs: CoordinateSystem, e: Expr) -> Expr:
    """u^l d/dv^l applied to an expression in new coordinates."""
    return apply_derivation(cs.rho(), e)


# ----------------------------------------------------------------------
# termination bound
# ----------------------------------------------------------------------

@dataclass
class TerminationBound:
    bounded: bool
    violated: str | None = None
    per_w: dict = field(default_factory=dict)    # w symbol -> int
    B: Fraction = Fraction(0)
    delta: Fraction | None = None

    def get(self, w):
        return self.per_w.get(w) if self.bounded else None

    def describe(self) -> str:
        if not self.bounded:
            return f"unbounded: {self.violated}"
        return f"bounded: delta={self.delta}, B={self.B}"


def termination_bound(model: JetModel, cs: CoordinateSystem, targets=None) -> TerminationBound:
    """Check the dimension conditions and return m_I = floor((dim w_I + B)/delta).

    (i) the differential has dimension shift 0; (ii) all u's and v's have
    positive dimension; (iii) the negative-dimension w's (outside the disregard
    list) are finitely many and all odd.
    """
    D = cs.D
    K = model.jet_order
    # (i)
    if D.dimension not in (0, None):
        return TerminationBound(False, f"(i) differential has dimension shift {D.dimension}")
    for g in model.generators(K):
        if g.name in cs.spec.disregard:
            continue
        try:
            img = D.image(g)
        except TruncationOverflow:
            continue
        dims = gradings(img, "dimension")
        if dims and dims != {g.dimension}:
            return TerminationBound(False, f"(i) {D.name}({g}) is not of dimension {g.dimension}")
    # (ii)
    uvs = [s for u in cs.u_generators(K) for s in (u, cs.partner.get(u)) if s is not None]
    bad = [s for s in uvs if s.dimension <= 0]
    if bad:
        return TerminationBound(False, f"(ii) {bad[0]} has dimension {bad[0].dimension} <= 0")
    if not uvs:
        return TerminationBound(False, "(ii) no doublets")
    delta = min(s.dimension for s in uvs)
    # (iii) dimensions grow with jet order, so negative ones sit at low order
    lowest = min((f.dimension for f in model.families.values()), default=0)
    horizon = max(K, min(int(math.ceil(-lowest)), model.max_order - 1))
    B = Fraction(0)
    for w in cs.w_generators(horizon):
        if w in cs.disregarded or w.dimension >= 0:
            continue
        if w.parity == 0:
            return TerminationBound(False, f"(iii) {w} is even with negative dimension {w.dimension}")
        B += -w.dimension
    for fam in model.families.values():
        if fam.kind == "jet" and fam.dimension + horizon + 1 < 0:
            return TerminationBound(False, f"(iii) cannot enumerate negative-dimension derivatives of "
                                           f"{fam.name} below max_order")
    ws = targets if targets is not None else cs.w_generators(K)
    per = {w: math.floor((Fraction(w.dimension) + B) / delta) for w in ws}
    return TerminationBound(True, None, per, B, Fraction(delta))


# ----------------------------------------------------------------------
# the iteration
# ----------------------------------------------------------------------

class _Engine:
    """Memoized corrections.

    ``Y[(k, J)]`` holds Y_k^J in its natural (u, v, w_(k-1)) coordinates, where
    it is homogeneous of (u,v)-degree k.  ``w(m, J, d)`` expands w_(m)^J in
    (u, v, w_(0)) coordinates, truncated above (u,v)-degree d (d=None: exact).
    Only the degree-k part of a defect feeds Y_k, so everything used to build a
    correction is evaluated at bounded degree.  Exact expansions are needed only for the final result
    and the termination test.
    """

    def __init__(self, cs: CoordinateSystem):
        self.cs = cs
        self.Dn = cs.new_derivation()
        self.rho = cs.rho()
        self.Y: dict = {}
        self.h: dict = {}
        self._r: dict = {}
        self._wm: dict = {}

    def _is_w(self, s):
        return self.cs.kind.get(s) == "w"

    def r(self, J) -> Expr:
        try:
            return self._r[J]
        except KeyError:
            v = self._r[J] = self.cs.r_function(J)
            return v

    def w(self, m: int, J, d=None) -> Expr:
        """w_(m)^J in (u, v, w_(0)) coordinates, up to (u,v)-degree d."""
        if m == 0 or d == 0:
            return Expr.sym(J)
        if d is not None and m > d:
            return self.w(d, J, d)
        key = (m, J, d)
        try:
            return self._wm[key]
        except KeyError:
            pass
        Y = self.correction(m, J)
        v = self.w(m - 1, J, d)
        if Y:
            sub_d = None if d is None else d - m
            back = substitute(Y, lambda s: self.w(m - 1, s, sub_d) if self._is_w(s) else None,
                              truncate=None if d is None else _uv_degree_above(d),
                              check_parity=False)
            v = v - back.scale(Fraction(1, m))
        self._wm[key] = v
        return v

    def P(self, m: int, J, d=None) -> Expr:
        return self.w(m, J, d) - Expr.sym(J)

    def defect(self, m: int, J, d=None) -> Expr:
        """s w_(m)^J - r^J(w_(m)) in (u, v, w_(0)) coordinates, up to degree d.

        The new differential never lowers (u,v)-degree, so truncating its
        argument first is harmless.
        """
        trunc = None if d is None else _uv_degree_above(d)
        wm = self.w(m, J, d)
        lhs = apply_derivation(self.Dn, wm, truncate=trunc)
        rhs = substitute(self.r(J), lambda s: self.w(m, s, d) if self._is_w(s) else None,
                         truncate=trunc, check_parity=False)
        return lhs - rhs

    def correction(self, k: int, J) -> Expr:
        """Y_k^J in (u, v, w_(k-1)) coordinates, from the defect of w_(k-1)^J."""
        key = (k, J)
        try:
            return self.Y[key]
        except KeyError:
            pass
        m = k - 1
        # w_(0) = w_(m) + (terms of (u,v)-degree >= 1), so the components of
        # degree <= k read the same in either set of w's
        E = self.defect(m, J, k)
        h = Expr()
        for deg, comp in degree_decomposition(E, is_uv):
            if deg <= m:
                raise NonvanishingLowDegree(
                    f"w {J}: defect at step {m} has a degree-{deg} component {comp}")
            if deg == k:
                h = comp
        Y = apply_derivation(self.rho, h)
        self.h[key] = h
        self.Y[key] = Y
        return Y

    def correction_w0(self, k: int, J) -> Expr:
        """Y_k^J in (u, v, w_(0)) coordinates (exact)."""
        return (self.w(k - 1, J) - self.w(k, J)).scale(k)


@dataclass
class IterationRecord:
    m: int
    h: dict      # J -> h_(m+1)^J in (u, v, w_(m)) coordinates
    Y: dict      # J -> Y_(m+1)^J in (u, v, w_(m)) coordinates


@dataclass
class IterationState:
    m: int
    targets: list
    r_funcs: dict            # I -> r^I recorded at m = 0
    trace: list = field(default_factory=list)
    engine: _Engine | None = field(default=None, repr=False, compare=False)

    @classmethod
    def initial(cls, cs: CoordinateSystem, targets) -> "IterationState":
        eng = _Engine(cs)
        targets = list(targets)
        return cls(0, targets, {I: eng.r(I) for I in targets}, [], eng)

    @property
    def w_exprs(self) -> dict:
        """I -> w_(m)^I in (u, v, w_(0)), exact.

        Expanding exactly can be expensive when the corrections keep growing,
        so the iteration itself never asks for it.
        """
        return {I: self.engine.w(self.m, I) for I in self.targets}

    def settled(self) -> dict:
        """The part of w_(m)^I of (u,v)-degree <= m, which later steps leave alone."""
        return {I: self.engine.w(self.m, I, self.m) for I in self.targets}

    def defects(self, d=None) -> dict:
        return {I: self.engine.defect(self.m, I, d) for I in self.targets}

    def closure(self):
        """(closed, defects).  The defect has (u,v)-degree > m, so its degree m+1
        part is a cheap certificate of non-closure; only when that vanishes is the
        exact defect computed."""
        low = self.defects(self.m + 1)
        if any(low.values()):
            return False, low
        exact = self.defects()
        return not any(exact.values()), exact


def iterate_once(state: IterationState, cs: CoordinateSystem | None = None,
                 model: JetModel | None = None) -> IterationState:
    """One step m -> m+1 for every w in the state."""
    eng = state.engine
    k = state.m + 1
    hs, Ys = {}, {}
    for I in state.targets:
        Y = eng.correction(k, I)
        if Y:
            Ys[I] = Y
            hs[I] = eng.h[(k, I)]
    rec = IterationRecord(state.m, hs, Ys)
    return IterationState(k, state.targets, state.r_funcs, state.trace + [rec], eng)


@dataclass
class AlgorithmResult:
    mode: str
    targets: list
    w_new: dict              # I -> Expr in (u, v, w_(0))
    w_original: dict         # I -> Expr in original jet coordinates
    r: dict                  # I -> r^I recorded at m = 0 (in w symbols)
    r_final: dict            # I -> degree-0 part of s w^I in (u, v, w) coordinates
    terminated: bool
    iterations_used: int
    bound: TerminationBound
    residual: dict           # I -> s w^I - r^I(w) (empty values when terminated)
    trace: list
    auxiliary: dict = field(default_factory=dict)   # J -> w^J for w's pulled in by r's
    last_nonzero: dict = field(default_factory=dict)  # I -> index k of the last nonzero Y_k
    r_aux: dict = field(default_factory=dict)         # J -> r^J for the auxiliary w's
    aux_original: dict = field(default_factory=dict)  # J -> auxiliary w^J in original coordinates
    stop_reason: str = "closed"     # closed | max-iter | bound | order-cap
    w_degree: int | None = None     # w's are truncated above this (u,v)-degree (None: exact)
    message: str = ""

    def w_symbols(self) -> list:
        return list(self.targets)


def run_algorithm(model: JetModel, cs: CoordinateSystem, max_iter: int = 10, mode: str | None = None,
                  targets=None, raise_on_failure: bool = True) -> AlgorithmResult:
    """Iterate until s w^I = r^I(w) holds exactly for every requested w.

    Stops with NotTerminated (carrying the partial result) after ``max_iter``
    steps, once a finite termination bound has been exceeded, or when the next
    step needs jet coordinates beyond the model's max_order.  A partial result
    holds the settled part of the w's (degree <= m) and the lowest nonvanishing
    components of the defects.
    """
    if mode is not None and mode != cs.mode:
        raise ValueError(f"coordinate system was built for mode {cs.mode}, not {mode}")
    if targets is None:
        targets = cs.w_generators(model.jet_order)
    targets = list(targets)
    bound = termination_bound(model, cs, targets)
    limit = max_iter
    if bound.bounded and bound.per_w:
        limit = min(max_iter, max(bound.per_w.values()) + 1)
    state = IterationState.initial(cs, targets)
    reason, message, defects = "closed", "", {}
    while True:
        try:
            closed, defects = state.closure()
        except TruncationOverflow as exc:
            reason, message = "order-cap", f"closure test at step {state.m}: {exc}"
            break
        if closed:
            break
        if state.m >= limit:
            reason = "max-iter" if state.m >= max_iter else "bound"
            break
        try:
            state = iterate_once(state, cs, model)
        except TruncationOverflow as exc:
            reason, message = "order-cap", f"step {state.m + 1}: {exc}"
            break
    terminated = reason == "closed"
    result = _assemble(model, cs, state, bound, terminated, defects, reason, message)
    if not terminated and raise_on_failure:
        why = f"no termination after {state.m} iterations"
        if reason == "order-cap":
            why += f"; the next step needs derivatives beyond max_order={model.max_order} ({message})"
        elif bound.bounded and state.m > max(bound.per_w.values(), default=0):
            why += f" although the bound is {max(bound.per_w.values())}"
        elif not bound.bounded:
            why += f"; termination bound {bound.describe()}"
        raise NotTerminated(why, result)
    return result


def _assemble(model, cs, state: IterationState, bound, terminated, defects,
              reason="closed", message="") -> AlgorithmResult:
    eng = state.engine
    m = state.m
    targets = list(state.targets)
    w_new = state.w_exprs if terminated else state.settled()
    w_orig = {I: cs.to_original(e) for I, e in w_new.items()}
    r_final = {}
    aux = {}
    if terminated:
        for I in targets:
            sw = apply_derivation(eng.Dn, w_new[I])
            r_final[I] = sw.filter(lambda mono: not any(is_uv(s) for s in mono))
        for I in targets:
            for J in eng.r(I).symbols():
                if cs.kind.get(J) == "w" and J not in w_new:
                    aux[J] = eng.w(m, J)
    last = {}
    for (k, J), Y in eng.Y.items():
        if J in w_new and Y and k <= m:
            last[J] = max(last.get(J, 0), k)
    residual = {I: d for I, d in defects.items() if d}
    return AlgorithmResult(cs.mode, targets, w_new, w_orig, dict(state.r_funcs), r_final,
                           terminated, m, bound, residual, state.trace, aux, last,
                           {J: eng.r(J) for J in aux}, {J: cs.to_original(e) for J, e in aux.items()},
                           reason, None if terminated else m, message)


@dataclass
class VerificationReport:
    problems: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def lines(self) -> list:
        return [str(p) for p in self.problems]


def verify_result(model: JetModel, cs: CoordinateSystem, result: AlgorithmResult) -> VerificationReport:
    """Recompute s w^I in original coordinates and compare with r^I(w).

    Also recomputes r^I from scratch as the u,v-free part of s w_(0)^I.
    """
    rep = VerificationReport()
    D = model.differential(result.mode)
    table = dict(result.w_original)
    table.update(result.aux_original)

    def w_orig(s):
        if cs.kind.get(s) != "w":
            return None
        if s not in table:
            table[s] = cs.forward[s]
        return table[s]

    for I in result.targets:
        lhs = apply_derivation(D, result.w_original[I])
        rhs = substitute(result.r[I], w_orig, check_parity=False)
        diff = lhs - rhs
        if diff:
            rep.problems.append(f"{I}: s w - r(w) = {diff}")
        fresh = cs.to_new(apply_derivation(D, cs.forward[I])).filter(
            lambda mono: not any(is_uv(s) for s in mono))
        if fresh != result.r[I]:
            rep.problems.append(f"{I}: recorded r differs from the u,v-free part of s w_(0)")
    return rep
