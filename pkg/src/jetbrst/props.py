"""Seeded randomized checks of the algebraic laws the engine relies on.

Each law draws its own instances from ``random.Random(seed)`` so a failure is
reproducible from (seed, law, instance number).  Used by ``jetbrst props``
and by the acceptance suite.
"""

from __future__ import annotations

import random
import time
from fractions import Fraction

from .builtins import build_yang_mills
from .coordsplit import validate_split
from .jetspace import total_derivative
from .superalgebra import (Derivation, Expr, apply_derivation, counting_operator, degree_decomposition,
                           expr_parity, graded_product, homogeneous_component)


def random_coeff(rng: random.Random):
    num = rng.choice([-3, -2, -1, 1, 1, 2, 3])
    den = rng.choice([1, 1, 1, 2, 3])
    return Fraction(num, den)


def random_expr(rng: random.Random, pool, max_terms=3, max_len=3, parity=None) -> Expr:
    """A random polynomial over ``pool``; with ``parity`` every term has that parity."""
    raw = []
    for _ in range(rng.randint(1, max_terms)):
        syms = [rng.choice(pool) for _ in range(rng.randint(0, max_len))]
        if parity is not None and sum(s.parity for s in syms) % 2 != parity:
            odd = [s for s in pool if s.parity]
            if not odd:
                continue
            syms.append(rng.choice(odd))
        raw.append(Expr.mono(syms, random_coeff(rng)))
    out = Expr()
    for e in raw:
        out = out + e
    return out


class _Fixture:
    """Shared model and coordinate systems (built once per suite run)."""

    def __init__(self):
        self.model = build_yang_mills(2, "su2", 2, "s")
        self.cs = validate_split(self.model)
        self.model_t = build_yang_mills(2, "su2", 2, "stilde")
        self.cs_t = validate_split(self.model_t)
        K = self.model.jet_order
        self.low = [g for g in self.model.generators(K - 1)]
        self.all = self.model.generators(K)
        self.new_low = sorted(s for s in self.cs.forward if len(s.deriv) <= K - 1)
        self.uv = sorted(s for s in self.cs.forward if self.cs.kind[s] in ("u", "v") and len(s.deriv) <= K)
        self.Dn = self.cs.new_derivation()
        self.rho = self.cs.rho()


def law_graded_commutativity(rng, fx):
    a = random_expr(rng, fx.all, 2, 2, parity=rng.randint(0, 1))
    b = random_expr(rng, fx.all, 2, 2, parity=rng.randint(0, 1))
    pa, pb = expr_parity(a), expr_parity(b)
    if pa is None or pb is None:
        return None
    sign = -1 if pa and pb else 1
    if graded_product(a, b) != graded_product(b, a).scale(sign):
        return f"a*b != (-)^(|a||b|) b*a for a={a}, b={b}"
    c = random_expr(rng, fx.all, 2, 2)
    if graded_product(graded_product(a, b), c) != graded_product(a, graded_product(b, c)):
        return f"associativity fails for {a}, {b}, {c}"
    return None


def law_leibniz(rng, fx):
    par = rng.randint(0, 1)
    gens = rng.sample(fx.all, 4)
    images = {g: random_expr(rng, fx.all, 2, 2, parity=(g.parity + par) % 2) for g in gens}

    def rule(s):
        return images.get(s, Expr())

    D = Derivation(par, rule=rule)
    x = random_expr(rng, gens, 2, 3, parity=rng.randint(0, 1))
    y = random_expr(rng, gens, 2, 3)
    px = expr_parity(x)
    if px is None:
        return None
    lhs = apply_derivation(D, graded_product(x, y))
    rhs = graded_product(apply_derivation(D, x), y) + \
        graded_product(x, apply_derivation(D, y)).scale(-1 if par and px else 1)
    if lhs != rhs:
        return f"Leibniz fails for x={x}, y={y}"
    return None


def law_nilpotent(rng, fx):
    e = random_expr(rng, fx.low, 2, 2)
    m = fx.model
    which = rng.choice(["d", "s", "stilde"])
    D = m.d if which == "d" else (m.s if which == "s" else fx.model_t.stilde)
    r = apply_derivation(D, apply_derivation(D, e))
    if r:
        return f"{which}^2 {e} = {r}"
    return None


def law_s_commutes_with_partial(rng, fx):
    e = random_expr(rng, fx.low, 2, 2)
    mu = rng.randrange(fx.model.base_dim)
    m = fx.model
    a = apply_derivation(m.s, total_derivative(m, e, mu))
    b = total_derivative(m, apply_derivation(m.s, e), mu)
    if a != b:
        return f"[s, d_{mu}] {e} = {a - b}"
    return None


def law_round_trip(rng, fx):
    cs = fx.cs
    if rng.random() < 0.5:
        e = random_expr(rng, fx.low, 2, 2)
        back = cs.to_original(cs.to_new(e))
        if back != e:
            return f"original -> new -> original changed {e}"
    else:
        e = random_expr(rng, fx.new_low, 2, 2)
        back = cs.to_new(cs.to_original(e))
        if back != e:
            return f"new -> original -> new changed {e}"
    return None


def law_projectors(rng, fx):
    cs = fx.cs
    pool = fx.uv + [s for s in fx.new_low if cs.kind[s] == "w"]
    e = random_expr(rng, pool, 3, 3)
    is_uv = cs.uv_counter()
    comps = degree_decomposition(e, is_uv)
    total = Expr()
    for k, c in comps:
        total = total + c
        if counting_operator(c, is_uv) != c.scale(k):
            return f"N does not act as {k} on its degree-{k} component of {e}"
        if homogeneous_component(c, is_uv, k) != c:
            return f"projector P_{k} is not idempotent on {e}"
        j = k + rng.randint(1, 2)
        if homogeneous_component(c, is_uv, j):
            return f"P_{j} P_{k} != 0 on {e}"
    if total != e:
        return f"components of {e} do not add up"
    # on pure (u, v) polynomials rho s + s rho is the counting operator
    f = random_expr(rng, fx.uv, 3, 3, parity=rng.randint(0, 1))
    anti = apply_derivation(fx.rho, apply_derivation(fx.Dn, f)) + \
        apply_derivation(fx.Dn, apply_derivation(fx.rho, f))
    if anti != counting_operator(f, is_uv):
        return f"(rho s + s rho) != N on {f}"
    return None


LAWS = {
    "graded_commutativity": law_graded_commutativity,
    "leibniz": law_leibniz,
    "nilpotency": law_nilpotent,
    "s_commutes_with_partial": law_s_commutes_with_partial,
    "coordinate_round_trip": law_round_trip,
    "uv_projectors": law_projectors,
}


def run_property_suite(seed: int = 0, count: int = 10000, laws=None) -> dict:
    """Run ``count`` instances in total, split evenly over the laws."""
    fx = _Fixture()
    names = list(laws or LAWS)
    per = -(-count // len(names))
    out = {}
    for name in names:
        rng = random.Random(f"{seed}:{name}")
        fails, examples = 0, []
        t0 = time.perf_counter()
        for i in range(per):
            msg = LAWS[name](rng, fx)
            if msg:
                fails += 1
                if len(examples) < 3:
                    examples.append(f"#{i}: {msg}")
        out[name] = {"instances": per, "failures": fails, "examples": examples,
                     "seconds": time.perf_counter() - t0}
    return out
