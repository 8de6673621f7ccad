"""Jet-space bookkeeping: families of jet coordinates, total derivatives,
prolongation of s, the exterior derivative and nilpotency checks."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .errors import TruncationOverflow, UnknownGenerator
from .superalgebra import Derivation, Expr, GradedSymbol, apply_derivation, graded_product

SLOT_TYPES = ("lorentz", "lie")


@dataclass(frozen=True)
class Family:
    """A family of generators sharing gradings, e.g. ``A[mu,a]``.

    ``kind`` is ``"jet"`` for fields/antifields (derivatives are new jet
    coordinates), ``"coordinate"`` for x (d_mu x^nu = delta), ``"differential"``
    for dx (d_mu dx^nu = 0), and ``"static"`` for constants without derivatives.
    """

    name: str
    slots: tuple = ()
    parity: int = 0
    ghost: int = 0
    formdeg: int = 0
    dimension: Fraction = Fraction(0)
    cls: str = "field"
    kind: str = "jet"
    antifield_number: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dimension", Fraction(self.dimension))
        object.__setattr__(self, "slots", tuple(self.slots))
        for s in self.slots:
            if s not in SLOT_TYPES:
                raise ValueError(f"unknown slot type {s!r}")


@dataclass(frozen=True)
class LieAlgebra:
    """Numeric Lie algebra data: f[(a, b, c)] = f_ab^c and an invariant metric g_ab."""

    name: str
    dim: int
    f: dict = field(default_factory=dict, hash=False, compare=True)
    g: dict = field(default_factory=dict, hash=False, compare=True)
    ginv: dict = field(init=False, hash=False, compare=False, repr=False)

    def __post_init__(self):
        from .linalg import invert

        rows = [[self.metric(i, j) for j in range(self.dim)] for i in range(self.dim)]
        inv = invert(rows) if self.dim else []
        object.__setattr__(self, "ginv", {(i, j): inv[i][j] for i in range(self.dim)
                                          for j in range(self.dim) if inv[i][j]})

    def structure(self, a, b, c) -> Fraction:
        return self.f.get((a, b, c), Fraction(0))

    def metric(self, a, b) -> Fraction:
        return self.g.get((a, b), Fraction(0))

    def inverse_metric(self, a, b) -> Fraction:
        return self.ginv.get((a, b), Fraction(0))

    @property
    def is_abelian(self) -> bool:
        return not any(self.f.values())

    def jacobi_violations(self) -> list:
        out = []
        r = range(self.dim)
        for a, b, c, e in itertools.product(r, r, r, r):
            tot = sum(self.structure(a, b, d) * self.structure(d, c, e)
                      + self.structure(b, c, d) * self.structure(d, a, e)
                      + self.structure(c, a, d) * self.structure(d, b, e) for d in r)
            if tot:
                out.append((a, b, c, e))
        return out


def abelian_algebra(k: int) -> LieAlgebra:
    return LieAlgebra(f"u1^{k}", k, {}, {(a, a): Fraction(1) for a in range(k)})


def su2_algebra() -> LieAlgebra:
    f = {}
    for a, b, c in itertools.permutations(range(3)):
        # sign of the permutation (a, b, c) of (0, 1, 2)
        sign = 1 if (a, b, c) in ((0, 1, 2), (1, 2, 0), (2, 0, 1)) else -1
        f[(a, b, c)] = Fraction(sign)
    return LieAlgebra("su2", 3, f, {(a, a): Fraction(1) for a in range(3)})


def multi_indices(n: int, k: int):
    """Sorted multi-indices of order ``k`` over ``range(n)``."""
    return list(itertools.combinations_with_replacement(range(n), k))


class JetModel:
    """A jet space with its BRST differential.

    ``jet_order`` is the declared truncation K: the coordinates that are
    enumerated, checked and classified.  ``max_order`` is the hard cap on
    derivative order for any symbol the engine may create while evaluating;
    exceeding it raises :class:`TruncationOverflow`.
    """

    def __init__(self, base_dim: int, families: Iterable[Family], s_rules: dict | None = None, *,
                 lie: LieAlgebra | None = None, metric: tuple | None = None, jet_order: int = 2,
                 max_order: int | None = None, mode: str = "s", disregard: Iterable[str] = (),
                 split=None, name: str = "model", options: dict | None = None):
        self.base_dim = base_dim
        self.families = {f.name: f for f in families}
        self.lie = lie if lie is not None else abelian_algebra(0)
        if metric is None:
            metric = tuple([1] + [-1] * (base_dim - 1)) if base_dim else ()
        self.metric = tuple(metric)
        if len(self.metric) != base_dim:
            raise ValueError("metric signature length must equal base_dim")
        self.jet_order = jet_order
        self.max_order = max_order if max_order is not None else jet_order + 3
        if mode not in ("s", "stilde"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.disregard = tuple(disregard)
        self.split = split
        self.name = name
        self.options = dict(options or {})
        self.s_rules: dict = {}
        self._symbols: dict = {}
        self._derivs: dict = {}
        self._s = self._d = self._stilde = None
        for k, v in (s_rules or {}).items():
            self.s_rules[k] = v

    # symbols ------------------------------------------------------------
    def slot_range(self, slot: str) -> range:
        return range(self.base_dim) if slot == "lorentz" else range(self.lie.dim)

    def index_values(self, fam: Family):
        return list(itertools.product(*(self.slot_range(s) for s in fam.slots)))

    def symbol(self, family: str | Family, index=(), deriv=()) -> GradedSymbol:
        fam = self.families[family] if isinstance(family, str) else family
        index = tuple(index)
        deriv = tuple(sorted(deriv))
        key = (fam.name, index, deriv)
        try:
            return self._symbols[key]
        except KeyError:
            pass
        if len(index) != len(fam.slots):
            raise ValueError(f"{fam.name} takes {len(fam.slots)} indices, got {index}")
        for i, s in zip(index, fam.slots):
            if i not in self.slot_range(s):
                raise ValueError(f"index {i} out of range for {s} slot of {fam.name}")
        if deriv:
            if fam.kind != "jet":
                raise ValueError(f"{fam.name} has no derivative coordinates")
            if len(deriv) > self.max_order:
                raise TruncationOverflow(
                    f"{fam.name}{list(index)} at derivative order {len(deriv)} exceeds max_order={self.max_order}")
            if any(m not in range(self.base_dim) for m in deriv):
                raise ValueError(f"derivative index out of range: {deriv}")
        sym = GradedSymbol(fam.name, index, deriv, fam.cls, fam.parity, fam.ghost, fam.formdeg,
                           fam.dimension + len(deriv), fam.antifield_number)
        self._symbols[key] = sym
        return sym

    def family_of(self, s: GradedSymbol) -> Family:
        return self.families[s.name]

    def owns(self, s: GradedSymbol) -> bool:
        return not s.is_new and s.name in self.families

    def generators(self, order: int | None = None, families: Iterable[str] | None = None) -> list:
        """All jet coordinates up to derivative ``order`` (default: jet_order)."""
        order = self.jet_order if order is None else order
        names = list(families) if families is not None else list(self.families)
        out = []
        for name in names:
            fam = self.families[name]
            orders = range(order + 1) if fam.kind == "jet" else range(1)
            for k in orders:
                for d in multi_indices(self.base_dim, k):
                    for idx in self.index_values(fam):
                        out.append(self.symbol(fam, idx, d))
        return sorted(out)

    def generators_at(self, order: int) -> list:
        out = []
        for fam in self.families.values():
            if order > 0 and fam.kind != "jet":
                continue
            for d in multi_indices(self.base_dim, order):
                for idx in self.index_values(fam):
                    out.append(self.symbol(fam, idx, d))
        return sorted(out)

    def families_of_kind(self, kind: str) -> list:
        return [f for f in self.families.values() if f.kind == kind]

    # derivations --------------------------------------------------------
    def partial(self, mu: int) -> Derivation:
        """Total derivative d_mu as an even derivation on jet coordinates."""
        try:
            return self._derivs[mu]
        except KeyError:
            pass
        if mu not in range(self.base_dim):
            raise ValueError(f"no direction {mu} in base dimension {self.base_dim}")

        def rule(s):
            if not self.owns(s):
                return None
            fam = self.families[s.name]
            if fam.kind == "jet":
                return Expr.sym(self.symbol(fam, s.index, s.deriv + (mu,)))
            if fam.kind == "coordinate":
                return Expr.const(1 if s.index == (mu,) else 0)
            return Expr()

        D = Derivation(0, rule=rule, ghost=0, formdeg=0, dimension=1, name=f"d_{mu}")
        self._derivs[mu] = D
        return D

    @property
    def s(self) -> Derivation:
        if self._s is None:
            self._s = prolong_derivation(self, Derivation(1, self.s_rules, ghost=1, formdeg=0,
                                                          dimension=0, name="s"))
        return self._s

    @property
    def d(self) -> Derivation:
        if self._d is None:
            def rule(s):
                if not self.owns(s):
                    return None
                return exterior_d(self, Expr.sym(s))
            self._d = Derivation(1, rule=rule, ghost=0, formdeg=1, dimension=0, name="d")
        return self._d

    @property
    def stilde(self) -> Derivation:
        if self._stilde is None:
            s, d = self.s, self.d

            def rule(g):
                return s.image(g) + d.image(g)
            self._stilde = Derivation(1, rule=rule, ghost=None, formdeg=None, dimension=0, tot=1,
                                      name="stilde")
        return self._stilde

    def differential(self, mode: str | None = None) -> Derivation:
        mode = mode or self.mode
        return self.s if mode == "s" else self.stilde

    def differential_symbols(self) -> list:
        fams = self.families_of_kind("differential")
        if not fams:
            return []
        fam = fams[0]
        return [self.symbol(fam, (mu,)) for mu in range(self.base_dim)]

    def with_mode(self, mode: str) -> "JetModel":
        m = self.copy()
        m.mode = mode
        return m

    def copy(self, **changes) -> "JetModel":
        kw = dict(base_dim=self.base_dim, families=list(self.families.values()),
                  s_rules=dict(self.s_rules), lie=self.lie, metric=self.metric,
                  jet_order=self.jet_order, max_order=self.max_order, mode=self.mode,
                  disregard=self.disregard, split=self.split, name=self.name, options=self.options)
        kw.update(changes)
        return JetModel(**kw)

    def __repr__(self):
        return (f"JetModel({self.name!r}, n={self.base_dim}, K={self.jet_order}, "
                f"mode={self.mode}, families={list(self.families)})")


def total_derivative(model: JetModel, e: Expr, mu: int) -> Expr:
    """d_mu e; raises TruncationOverflow past the model's order cap."""
    return apply_derivation(model.partial(mu), e)


def exterior_d(model: JetModel, e: Expr) -> Expr:
    """d e = dx^mu d_mu e, skipping directions whose dx already occurs."""
    dxs = model.differential_symbols()
    if not dxs:
        return Expr()
    out = Expr()
    for mono, c in e.terms.items():
        term = Expr({mono: c})
        present = set(mono)
        for mu, dx in enumerate(dxs):
            if dx in present:
                continue
            part = apply_derivation(model.partial(mu), term)
            if part:
                out = out + graded_product(Expr.sym(dx), part)
    return out


def prolong_derivation(model: JetModel, D: Derivation) -> Derivation:
    """Extend ``D`` from undifferentiated generators to all jet coordinates
    by D(d_I phi) = d_I(D phi).

    Coordinates and differentials (x, dx) keep their declared images, or 0.
    """
    base = D

    def rule(s):
        if not model.owns(s):
            return None
        fam = model.families[s.name]
        if not s.deriv:
            if base.defined_on(s):
                return base.image(s)
            if fam.kind in ("coordinate", "differential", "static"):
                return Expr()
            raise UnknownGenerator(f"{base.name} has no rule for {s}")
        mu = s.deriv[-1]
        parent = model.symbol(fam, s.index, s.deriv[:-1])
        return total_derivative(model, prolonged.image(parent), mu)

    prolonged = Derivation(D.parity, rule=rule, ghost=D.ghost, formdeg=D.formdeg,
                           dimension=D.dimension, tot=D.tot, name=D.name)
    return prolonged


@dataclass
class NilpotencyReport:
    checked: int = 0
    residuals: dict = field(default_factory=dict)
    overflows: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.residuals and not self.overflows

    def lines(self) -> list:
        out = [f"{g}: D(D(g)) = {r}" for g, r in self.residuals.items()]
        out += [f"{g}: not evaluable ({msg})" for g, msg in self.overflows]
        return out


def check_nilpotency(D: Derivation, model: JetModel, generators: Iterable | None = None) -> NilpotencyReport:
    """Evaluate D(D(g)) on every jet coordinate up to the model's jet order."""
    gens = model.generators() if generators is None else list(generators)
    rep = NilpotencyReport()
    for g in gens:
        rep.checked += 1
        try:
            r = apply_derivation(D, D.image(g))
        except TruncationOverflow as exc:
            rep.overflows.append((g, str(exc)))
            continue
        if r:
            rep.residuals[g] = r
    return rep
