"""Doublet splits {u, v, w_(0)} of a jet space and the triangular coordinate
changes between original jet coordinates and the new ones.

New coordinates are grouped by *rank* of their highest symbol: jet order
first, then antifields above everything else, then ghost number.  Inside one rank the definitions must be linear in the
generators of that rank, with an invertible coefficient block; everything
else must involve strictly lower ranks.  The inverse map is then built rank by
rank, by inverting the block and back-substituting the lower-rank parts.
Blocks are built on demand, so coordinates above the declared jet order are
available as long as they stay below the model's hard order cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable

from .errors import (BasisIncomplete, DoubletViolation, NoLeadingTerm, NotTriangular,
                     TruncationOverflow)
from .jetspace import JetModel, multi_indices
from .linalg import SingularMatrix, sparse_inverse
from .superalgebra import (Derivation, Expr, GradedSymbol, _tidy, apply_derivation,
                           degree_decomposition, substitute)


def rank(s: GradedSymbol) -> tuple:
    return (s.jet_order, s.cls == "antifield", s.ghost)


def is_uv(s: GradedSymbol) -> bool:
    return s.cls in ("u", "v")


@dataclass(frozen=True)
class NewCoordDef:
    """One new coordinate: its symbol, its definition in original jet
    coordinates, and optionally the generator designated as leading."""

    symbol: GradedSymbol
    expr: Expr
    leading: GradedSymbol | None = None


@dataclass
class SplitSpec:
    """A user-supplied (or generated) doublet split.

    Either explicit ``u_defs``/``w0_defs`` lists, or a ``generator(k)``
    returning the ``(u_defs, w0_defs)`` whose top jet order is ``k``.
    ``disregard`` names families whose members are s-singlets kept as w's but
    ignored by the termination analysis.
    """

    u_defs: list = field(default_factory=list)
    w0_defs: list = field(default_factory=list)
    disregard: tuple = ()
    generator: Callable | None = None
    name: str = "split"

    def defs_at_order(self, k: int):
        if self.generator is not None:
            return self.generator(k)
        us = [d for d in self.u_defs if _top_order(d.expr) == k]
        ws = [d for d in self.w0_defs if _top_order(d.expr) == k]
        return us, ws

    def max_explicit_order(self) -> int | None:
        if self.generator is not None:
            return None
        orders = [_top_order(d.expr) for d in self.u_defs + self.w0_defs]
        return max(orders, default=0)


def _top_order(e: Expr) -> int:
    return max((s.jet_order for s in e.symbols()), default=0)


def _top_rank(e: Expr):
    return max((rank(s) for s in e.symbols()), default=None)


def new_symbol(cls: str, name: str, like: GradedSymbol, index=None, deriv=None, *,
               parity=None, ghost=None, formdeg=None, dimension=None, antifield_number=None):
    """A new-coordinate symbol carrying the gradings of ``like`` unless overridden."""
    return GradedSymbol(
        name,
        tuple(like.index if index is None else index),
        tuple(like.deriv if deriv is None else deriv),
        cls,
        like.parity if parity is None else parity,
        like.ghost if ghost is None else ghost,
        like.formdeg if formdeg is None else formdeg,
        like.dimension if dimension is None else dimension,
        like.antifield_number if antifield_number is None else antifield_number,
    )


def _linear_top(e: Expr, r) -> tuple[dict, Expr]:
    """Split ``e`` into its linear part in rank-``r`` generators and the rest;
    raises NotTriangular if rank-``r`` generators occur nonlinearly."""
    lin = {}
    rest = {}
    for m, c in e.terms.items():
        tops = [s for s in m if rank(s) == r]
        if not tops:
            rest[m] = c
        elif len(m) == 1:
            lin[m[0]] = c
        else:
            raise NotTriangular(f"generator {tops[0]} of top rank {r} occurs in nonlinear term "
                                f"{Expr({m: c})}")
    return lin, Expr(rest)


class CoordinateSystem:
    """Validated split with forward (new -> original) and inverse maps.

    Use :func:`validate_split` to construct one.
    """

    def __init__(self, model: JetModel, spec: SplitSpec, mode: str | None = None):
        self.model = model
        self.spec = spec
        self.mode = mode or model.mode
        self.D: Derivation = model.differential(self.mode)
        self.forward: dict = {}       # new symbol -> Expr in original coordinates
        self.inverse: dict = {}       # original generator -> Expr in new coordinates
        self._lazy_inverse: dict = {}  # generator -> (inverse row, block data), not yet assembled
        self.partner: dict = {}       # u -> v and v -> u
        self.kind: dict = {}          # new symbol -> "u" | "v" | "w"
        self.u_syms: list = []
        self.w_syms: list = []
        self.disregarded: set = set()
        self.dangling: dict = {}      # u whose v exceeds the order cap -> message
        self._orders_registered = -1
        self._orders_built = -1
        self._pending: dict = {}      # rank -> list of defs (symbol, expr)
        self._s_images: dict = {}
        self._new_D: Derivation | None = None

    # ------------------------------------------------------------------
    @property
    def v_syms(self) -> list:
        return [self.partner[u] for u in self.u_syms if u in self.partner]

    def is_uv(self, s: GradedSymbol) -> bool:
        return self.kind.get(s) in ("u", "v")

    def uv_counter(self):
        return is_uv

    def _register_order(self, k: int):
        """Register the u's and w's of top order k, computing the v's of the u's."""
        if k > self.model.max_order:
            raise TruncationOverflow(f"order {k} exceeds max_order={self.model.max_order}")
        us, ws = self.spec.defs_at_order(k)
        for d in ws:
            self._add_def(d.symbol, d.expr, "w", d.leading)
            self.w_syms.append(d.symbol)
            if d.expr.symbols() and next(iter(d.expr.symbols())).name in self.spec.disregard:
                self.disregarded.add(d.symbol)
        for d in us:
            self._add_def(d.symbol, d.expr, "u", d.leading)
            self.u_syms.append(d.symbol)
            try:
                vexpr = apply_derivation(self.D, d.expr)
            except TruncationOverflow as exc:
                self.dangling[d.symbol] = str(exc)
                continue
            if not vexpr:
                raise NoLeadingTerm(f"u {d.symbol} has vanishing image; it cannot be a doublet")
            r = _top_rank(vexpr)
            lin, _ = _linear_top(vexpr, r)
            if not lin:
                raise NoLeadingTerm(f"v partner of {d.symbol} has no linear leading term")
            lead = min(lin)
            vsym = new_symbol("v", d.symbol.name, lead, d.symbol.index, d.symbol.deriv,
                              dimension=d.symbol.dimension)
            self.partner[d.symbol] = vsym
            self.partner[vsym] = d.symbol
            self._add_def(vsym, vexpr, "v", None)

    def _add_def(self, sym, expr, kind, leading):
        if sym in self.forward:
            raise BasisIncomplete(f"new coordinate {sym} defined twice")
        r = _top_rank(expr)
        if r is None:
            raise NoLeadingTerm(f"{kind} {sym} has constant definition {expr}")
        lin, _ = _linear_top(expr, r)
        if not lin:
            raise NoLeadingTerm(f"{kind} {sym} has no linear term at its top rank {r}")
        if leading is not None and leading not in lin:
            raise NoLeadingTerm(f"designated leading generator {leading} of {sym} "
                                f"is not a linear top-rank term")
        built = self._orders_built
        if r[0] <= built:
            raise NotTriangular(f"{kind} {sym} lands at order {r[0]}, already inverted")
        self.forward[sym] = expr
        self.kind[sym] = kind
        self._pending.setdefault(r, []).append(sym)

    def ensure_order(self, k: int):
        """Build the inverse map for all generators of jet order <= k."""
        while self._orders_built < k:
            nxt = self._orders_built + 1
            while self._orders_registered < nxt:
                self._orders_registered += 1
                self._register_order(self._orders_registered)
            self._build_order(nxt)
            self._orders_built = nxt

    def lookup(self, cls: str, name: str, index=(), deriv=()):
        """The new coordinate ``cls:name[index]`` with derivative ``deriv``, or None."""
        key = (cls, name, tuple(index), tuple(deriv))
        k = self._orders_built
        limit = min(self.model.max_order, max(self.model.jet_order, len(key[3]) + 1))
        while True:
            for s in self.forward:
                if (s.cls, s.name, s.index, s.deriv) == key:
                    return s
            if k >= limit:
                return None
            k += 1
            self.ensure_order(k)

    def _build_order(self, k: int):
        gens = self.model.generators_at(k)
        by_rank: dict = {}
        for g in gens:
            by_rank.setdefault(rank(g), []).append(g)
        ranks = sorted(set(by_rank) | {r for r in self._pending if r[0] == k})
        for r in ranks:
            block_gens = by_rank.get(r, [])
            defs = self._pending.pop(r, [])
            self._invert_block(r, block_gens, defs)

    def _invert_block(self, r, gens, defs):
        if not gens and not defs:
            return
        rows = []
        rests = []
        for sym in defs:
            lin, rest = _linear_top(self.forward[sym], r)
            rows.append(lin)
            rests.append(rest)
        if len(defs) != len(gens):
            hint = ""
            if self.dangling and len(defs) < len(gens):
                raise TruncationOverflow(
                    f"rank {r}: {len(gens)} generators but only {len(defs)} new coordinates; "
                    f"missing partners lie beyond max_order={self.model.max_order}")
            raise BasisIncomplete(f"rank {r}: {len(gens)} generators but {len(defs)} new "
                                  f"coordinates{hint}")
        try:
            inv = sparse_inverse(rows, gens)
        except SingularMatrix as exc:
            missing = ", ".join(str(c) for c in exc.free_columns[:5])
            raise BasisIncomplete(f"rank {r}: definitions are linearly dependent; "
                                  f"unaccounted generators include {missing}") from None
        # inverses are assembled on first use: most higher-order generators
        # are only ever touched through a few s-images
        block = (list(defs), rests, {})
        for g in gens:
            self._lazy_inverse[g] = (inv[g], block)

    def _assemble_inverse(self, g):
        coeffs, (defs, rests, rhs) = self._lazy_inverse.pop(g)
        out: dict = {}
        for i, c in coeffs.items():
            if i not in rhs:
                rhs[i] = Expr.sym(defs[i]) - self.to_new(rests[i])
            for m, v in rhs[i].terms.items():
                nv = out.get(m, 0) + c * v
                if nv:
                    out[m] = nv
                else:
                    del out[m]
        e = self.inverse[g] = Expr(_tidy(out))
        return e

    # conversions --------------------------------------------------------
    def _inverse_of(self, s: GradedSymbol):
        if s.is_new:
            return None
        try:
            return self.inverse[s]
        except KeyError:
            pass
        if s not in self._lazy_inverse:
            if not self.model.owns(s):
                return None
            self.ensure_order(s.jet_order)
            if s in self.inverse:
                return self.inverse[s]
        return self._assemble_inverse(s)

    def to_new_coords(self, e: Expr, truncate=None) -> Expr:
        """Express ``e`` (original jet coordinates) in (u, v, w_(0))."""
        return substitute(e, self._inverse_of, truncate=truncate, check_parity=False)

    to_new = to_new_coords

    def _forward_of(self, s: GradedSymbol):
        if not s.is_new:
            return None
        try:
            return self.forward[s]
        except KeyError:
            pass
        if s in self.partner and self.partner[s] in self.dangling:
            raise TruncationOverflow(self.dangling[self.partner[s]])
        raise KeyError(f"{s} is not a coordinate of this system")

    def to_original_coords(self, e: Expr) -> Expr:
        """Express ``e`` (new coordinates) in the original jet coordinates."""
        for m in e.terms:
            for s in m:
                if s.is_new and s not in self.forward and s in self.dangling:
                    raise TruncationOverflow(self.dangling[s])
        return substitute(e, self._forward_of, check_parity=False)

    to_original = to_original_coords

    # the differential in new coordinates --------------------------------
    def s_image(self, w: GradedSymbol) -> Expr:
        """s w_(0) expressed in (u, v, w_(0)) coordinates."""
        try:
            return self._s_images[w]
        except KeyError:
            pass
        val = self.to_new(apply_derivation(self.D, self.forward[w]))
        self._s_images[w] = val
        return val

    def r_function(self, w: GradedSymbol) -> Expr:
        """The u,v-free part of s w_(0): the function r(w_(0))."""
        return self.s_image(w).filter(lambda m: not any(is_uv(s) for s in m))

    def new_derivation(self) -> Derivation:
        """s acting on new coordinates: u -> v, v -> 0, w -> s_image(w)."""
        if self._new_D is None:
            def rule(s):
                k = self.kind.get(s)
                if k == "u":
                    v = self.partner.get(s)
                    if v is None:
                        raise TruncationOverflow(self.dangling.get(s, f"{s} has no partner"))
                    return Expr.sym(v)
                if k == "v":
                    return Expr()
                if k == "w":
                    return self.s_image(s)
                return None
            self._new_D = Derivation(1, rule=rule, dimension=0, tot=1, name=f"{self.mode}[new]")
        return self._new_D

    def rho(self) -> Derivation:
        """The odd derivation u^l d/dv^l on new coordinates."""
        def rule(s):
            if self.kind.get(s) == "v":
                return Expr.sym(self.partner[s])
            return Expr()
        return Derivation(1, rule=rule, name="rho")

    def w_generators(self, order: int | None = None) -> list:
        """w_(0)'s whose top jet order is at most ``order`` (default: jet_order)."""
        order = self.model.jet_order if order is None else order
        self.ensure_order(order)
        return [w for w in self.w_syms if _top_order(self.forward[w]) <= order]

    def u_generators(self, order: int | None = None) -> list:
        order = self.model.jet_order if order is None else order
        self.ensure_order(order)
        return [u for u in self.u_syms if _top_order(self.forward[u]) <= order]


def to_new_coords(cs: CoordinateSystem, e: Expr) -> Expr:
    return cs.to_new(e)


def to_original_coords(cs: CoordinateSystem, e: Expr) -> Expr:
    return cs.to_original(e)


def uv_degree_decomposition(cs: CoordinateSystem, e: Expr) -> list:
    """N_{u,v}-homogeneous components of ``e`` as ``[(k, component), ...]``."""
    return degree_decomposition(e, is_uv)


def validate_split(model: JetModel, spec: SplitSpec | None = None, mode: str | None = None,
                   check_doublets: bool = True) -> CoordinateSystem:
    """Validate ``spec`` on ``model`` up to its jet order and return the system.

    Checks triangularity and completeness of every rank block up to the jet
    order, s v = 0 for all u's up to the jet order, and computes the s-images
    (hence r) of all w_(0)'s up to the jet order.
    """
    if spec is None:
        spec = split_for_model(model, mode)
    cs = CoordinateSystem(model, spec, mode)
    cs.ensure_order(model.jet_order)
    if spec.generator is None:
        top = spec.max_explicit_order() or 0
        if top > model.jet_order:
            cs.ensure_order(top)
        leftovers = [s for r, syms in cs._pending.items() for s in syms]
        extra = [s for s in leftovers if _top_order(cs.forward[s]) <= model.jet_order]
        if extra:
            raise BasisIncomplete(f"definitions not matched to generators: {extra[:5]}")
    _check_disregard(cs)
    if check_doublets:
        for u in cs.u_generators():
            v = cs.partner.get(u)
            if v is None:
                continue
            try:
                sv = apply_derivation(cs.D, cs.forward[v])
            except TruncationOverflow:
                continue
            if sv:
                raise DoubletViolation(f"s({v}) = {sv} is not zero")
    for w in cs.w_generators():
        cs.s_image(w)
    return cs


def _check_disregard(cs: CoordinateSystem):
    names = set(cs.spec.disregard)
    if not names:
        return
    model = cs.model
    for g in model.generators():
        if g.name in names:
            continue
        try:
            img = model.s.image(g)
        except TruncationOverflow:
            continue
        bad = [s for s in img.symbols() if s.name in names]
        if bad:
            raise NotTriangular(f"disregarded symbol {bad[0]} occurs in s({g})")


# ----------------------------------------------------------------------
# builtin Yang-Mills split
# ----------------------------------------------------------------------

def ym_split(model: JetModel, mode: str | None = None) -> SplitSpec:
    """The doublet split described for Yang-Mills.

    u's: symmetrized derivatives of A, derivatives of A* outside the
    divergence directions, all derivatives of C*.  w_(0)'s: C, dx, x (x moves
    to the u's when the model asks for x as a doublet) and derivatives of
    d_mu A_nu - d_nu A_mu completing the A-derivatives to a basis.
    """
    mode = mode or model.mode
    n = model.base_dim
    G = range(model.lie.dim)
    x_doublet = bool(model.options.get("x_as_doublet"))
    completion_cache: dict = {}

    def sym(name, idx, deriv=()):
        return model.symbol(name, idx, deriv)

    def symA(S, a) -> Expr:
        e = Expr()
        L = len(S)
        for pos in range(L):
            nu = S[pos]
            rest = S[:pos] + S[pos + 1:]
            e = e + Expr.sym(sym("A", (nu, a), rest)).scale(Fraction(1, L))
        return e

    def lin_F(J, mu, nu, a) -> Expr:
        return Expr.sym(sym("A", (nu, a), J + (mu,))) - Expr.sym(sym("A", (mu, a), J + (nu,)))

    def completions(k):
        """Greedy choice of (J, mu, nu) with d_J(d_mu A_nu - d_nu A_mu) completing
        the span of symmetrized derivatives and equation-of-motion derivatives."""
        if k in completion_cache:
            return completion_cache[k]
        a = 0
        basis: list = []   # reduced rows: (pivot, dict)

        def reduce(vec):
            vec = dict(vec)
            for piv, row in basis:
                f = vec.get(piv)
                if f:
                    for c, v in row.items():
                        nv = vec.get(c, 0) - f * v
                        if nv:
                            vec[c] = nv
                        else:
                            vec.pop(c, None)
            return vec

        def add(vec):
            vec = reduce(vec)
            if not vec:
                return False
            piv = min(vec, key=lambda s: s.key)
            inv = Fraction(1) / vec[piv]
            vec = {c: v * inv for c, v in vec.items()}
            for i, (p, row) in enumerate(basis):
                f = row.get(piv)
                if f:
                    for c, v in vec.items():
                        nv = row.get(c, 0) - f * v
                        if nv:
                            row[c] = nv
                        else:
                            row.pop(c, None)
            basis.append((piv, vec))
            return True

        def as_vec(e):
            return {m[0]: c for m, c in e.terms.items() if len(m) == 1 and m[0].name == "A"
                    and m[0].jet_order == k}

        for S in multi_indices(n, k + 1):
            add(as_vec(symA(S, a)))
        if k >= 2:
            for I in multi_indices(n, k - 2):
                for mu in range(n):
                    # linear part of d_I d_nu F^{nu mu}
                    e = Expr()
                    for nu in range(n):
                        e = e + lin_F(I + (nu,), nu, mu, a).scale(model.metric[nu] * model.metric[mu])
                    add(as_vec(e))
        chosen = []
        for J in multi_indices(n, k - 1):
            for mu in range(n):
                for nu in range(mu + 1, n):
                    if add(as_vec(lin_F(J, mu, nu, a))):
                        chosen.append((J, mu, nu))
        completion_cache[k] = chosen
        return chosen

    def generator(k):
        us, ws = [], []
        if k == 0:
            for a in G:
                c = sym("C", (a,))
                ws.append(NewCoordDef(new_symbol("w", "C", c), Expr.sym(c), c))
            for mu in range(n):
                x, dx = sym("x", (mu,)), sym("dx", (mu,))
                if x_doublet:
                    us.append(NewCoordDef(new_symbol("u", "x", x), Expr.sym(x), x))
                else:
                    ws.append(NewCoordDef(new_symbol("w", "x", x), Expr.sym(x), x))
                    ws.append(NewCoordDef(new_symbol("w", "dx", dx), Expr.sym(dx), dx))
        for S in multi_indices(n, k + 1):
            for a in G:
                e = symA(S, a)
                lead = sym("A", (S[-1], a), S[:-1])
                us.append(NewCoordDef(new_symbol("u", "symA", lead, S + (a,), ()), e, lead))
        for I in multi_indices(n, k):
            for mu in range(n):
                if mu == 0 and 0 in I:
                    continue
                for a in G:
                    g = sym("Astar", (mu, a), I)
                    us.append(NewCoordDef(new_symbol("u", "Astar", g), Expr.sym(g), g))
            for a in G:
                g = sym("Cstar", (a,), I)
                us.append(NewCoordDef(new_symbol("u", "Cstar", g), Expr.sym(g), g))
        if k >= 1:
            for J, mu, nu in completions(k):
                for a in G:
                    e = lin_F(J, mu, nu, a)
                    lead = sym("A", (nu, a), J + (mu,))
                    ws.append(NewCoordDef(new_symbol("w", "F", lead, (mu, nu, a), J), e, lead))
        return us, ws

    return SplitSpec(disregard=() if x_doublet else ("x",), generator=generator, name="ym")


def split_for_model(model: JetModel, mode: str | None = None) -> SplitSpec:
    split = model.split
    if isinstance(split, SplitSpec):
        return split
    if split == "ym":
        return ym_split(model, mode)
    if callable(split):
        return split(model)
    raise ValueError(f"model {model.name} carries no split")
