"""Builtin models: Yang-Mills in the antifield formalism and a toy doublet model."""

from __future__ import annotations

from fractions import Fraction

from .errors import UnsupportedAlgebra
from .coordsplit import NewCoordDef, SplitSpec, new_symbol
from .jetspace import Family, JetModel, LieAlgebra, abelian_algebra, su2_algebra
from .superalgebra import Expr, graded_product

HALF = Fraction(1, 2)


def ym_families() -> list:
    # dimensions: x, dx -1; C 0; A 1; A* 3; C* 4
    return [
        Family("x", ("lorentz",), 0, 0, 0, -1, "x", "coordinate"),
        Family("dx", ("lorentz",), 1, 0, 1, -1, "dx", "differential"),
        Family("C", ("lie",), 1, 1, 0, 0, "ghost"),
        Family("A", ("lorentz", "lie"), 0, 0, 0, 1, "field"),
        Family("Astar", ("lorentz", "lie"), 1, -1, 0, 3, "antifield", antifield_number=1),
        Family("Cstar", ("lie",), 0, -2, 0, 4, "antifield", antifield_number=1),
    ]


def lie_algebra(spec) -> LieAlgebra:
    """``"su2"``, ``"abelian"`` (one u(1)), ``"abelianK"`` / ``"u1^K"``, or a LieAlgebra."""
    if isinstance(spec, LieAlgebra):
        return spec
    s = str(spec).lower()
    if s == "su2":
        return su2_algebra()
    for prefix in ("abelian", "u1^", "u1x", "u1"):
        if s.startswith(prefix):
            rest = s[len(prefix):]
            try:
                k = int(rest) if rest else 1
            except ValueError:
                break
            if k < 1:
                break
            return abelian_algebra(k)
    raise UnsupportedAlgebra(f"unsupported Lie algebra {spec!r}; use su2 or abelian<k>")


class _YM:
    """Expression helpers for the Yang-Mills s-rules on a given model."""

    def __init__(self, model: JetModel):
        self.m = model
        self.n = model.base_dim
        self.lie = model.lie
        self.G = range(model.lie.dim)

    def sym(self, name, *idx, deriv=()):
        return Expr.sym(self.m.symbol(name, idx, deriv))

    def eta(self, mu):
        return self.m.metric[mu]

    def F(self, mu, nu, a) -> Expr:
        """F_{mu nu}^a = d_mu A_nu^a - d_nu A_mu^a + f_bc^a A_mu^b A_nu^c."""
        e = self.sym("A", nu, a, deriv=(mu,)) - self.sym("A", mu, a, deriv=(nu,))
        for b in self.G:
            for c in self.G:
                f = self.lie.structure(b, c, a)
                if f:
                    e = e + graded_product(self.sym("A", mu, b), self.sym("A", nu, c)).scale(f)
        return e

    def F_up(self, nu, mu, a) -> Expr:
        return self.F(nu, mu, a).scale(self.eta(nu) * self.eta(mu))

    def sA(self, mu, a) -> Expr:
        e = self.sym("C", a, deriv=(mu,))
        for b in self.G:
            for c in self.G:
                f = self.lie.structure(b, c, a)
                if f:
                    e = e + graded_product(self.sym("A", mu, b), self.sym("C", c)).scale(f)
        return e

    def sC(self, a) -> Expr:
        e = Expr()
        for b in self.G:
            for c in self.G:
                f = self.lie.structure(b, c, a)
                if f:
                    e = e + graded_product(self.sym("C", c), self.sym("C", b)).scale(f * HALF)
        return e

    def DF_up(self, mu, b) -> Expr:
        """D_nu F^{nu mu b}."""
        from .jetspace import total_derivative

        e = Expr()
        for nu in range(self.n):
            e = e + total_derivative(self.m, self.F_up(nu, mu, b), nu)
            for c in self.G:
                for d in self.G:
                    f = self.lie.structure(c, d, b)
                    if f:
                        e = e + graded_product(self.sym("A", nu, c), self.F_up(nu, mu, d)).scale(f)
        return e

    def sAstar(self, mu, a) -> Expr:
        e = Expr()
        for b in self.G:
            g = self.lie.metric(a, b)
            if g:
                e = e + self.DF_up(mu, b).scale(g)
        for b in self.G:
            for c in self.G:
                f = self.lie.structure(b, a, c)
                if f:
                    e = e + graded_product(self.sym("C", b), self.sym("Astar", mu, c)).scale(f)
        return e

    def sCstar(self, a) -> Expr:
        # -D_mu A*^mu_a + C^b f_ba^c C*_c
        e = Expr()
        for mu in range(self.n):
            e = e - self.sym("Astar", mu, a, deriv=(mu,))
            for b in self.G:
                for c in self.G:
                    f = self.lie.structure(b, a, c)
                    if f:
                        e = e + graded_product(self.sym("A", mu, b), self.sym("Astar", mu, c)).scale(f)
        for b in self.G:
            for c in self.G:
                f = self.lie.structure(b, a, c)
                if f:
                    e = e + graded_product(self.sym("C", b), self.sym("Cstar", c)).scale(f)
        return e


def build_yang_mills(n: int = 2, algebra="su2", K: int = 2, mode: str = "s", *,
                     max_order: int | None = None, metric: tuple | None = None,
                     x_as_doublet: bool = False) -> JetModel:
    """Yang-Mills with gauge fields, ghosts and their antifields.

    The model carries the builtin doublet split (``split="ym"``); x^mu is on
    the disregard list unless ``x_as_doublet`` puts it among the u's (only
    meaningful in mode ``stilde``, where (x, dx) form a doublet).
    """
    if n < 2 or K < 2:
        raise ValueError("build_yang_mills needs n >= 2 and K >= 2")
    lie = lie_algebra(algebra)
    options = {"x_as_doublet": bool(x_as_doublet)}
    model = JetModel(n, ym_families(), lie=lie, metric=metric, jet_order=K, max_order=max_order,
                     mode=mode, disregard=() if x_as_doublet else ("x",), split="ym",
                     name=f"ym:{lie.name}:{n}:{K}", options=options)
    ym = _YM(model)
    rules = {}
    for a in ym.G:
        rules[model.symbol("C", (a,))] = ym.sC(a)
        rules[model.symbol("Cstar", (a,))] = ym.sCstar(a)
        for mu in range(n):
            rules[model.symbol("A", (mu, a))] = ym.sA(mu, a)
            rules[model.symbol("Astar", (mu, a))] = ym.sAstar(mu, a)
    for mu in range(n):
        rules[model.symbol("x", (mu,))] = Expr()
        rules[model.symbol("dx", (mu,))] = Expr()
    model.s_rules.update(rules)
    return model


def field_strength(model: JetModel, mu: int, nu: int, a: int) -> Expr:
    return _YM(model).F(mu, nu, a)


def build_toy_model() -> JetModel:
    """u even, v odd, t even with s u = v, s v = 0, s t = v u."""
    fams = [
        Family("t", (), 0, 0, 0, 2, "field", "static"),
        Family("u", (), 0, 0, 0, 1, "field", "static"),
        Family("v", (), 1, 1, 0, 1, "field", "static"),
    ]
    model = JetModel(0, fams, jet_order=0, max_order=0, name="toy", split=None)
    t, u, v = (model.symbol(x) for x in "tuv")
    model.s_rules.update({
        u: Expr.sym(v),
        v: Expr(),
        t: graded_product(Expr.sym(v), Expr.sym(u)),
    })

    model.split = SplitSpec(
        [NewCoordDef(new_symbol("u", "u", u, (), ()), Expr.sym(u))],
        [NewCoordDef(new_symbol("w", "t", t, (), ()), Expr.sym(t))],
        name="toy")
    return model
