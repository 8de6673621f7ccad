"""Graded-commutative polynomials with exact rational coefficients.

Monomials are stored as sorted tuples of :class:`GradedSymbol`; even symbols
may repeat, odd ones may not.  Reordering an input monomial into canonical
order absorbs the Koszul sign into the coefficient, so two expressions are
equal iff their term dictionaries are equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping

from .errors import ParityMismatch, UnknownGenerator

CLASS_ORDER = {
    "x": 0,
    "dx": 1,
    "ghost": 2,
    "field": 3,
    "antifield": 4,
    "aux": 5,
    "w": 6,
    "u": 7,
    "v": 8,
}

NEW_CLASSES = ("u", "v", "w")


@dataclass(frozen=True, eq=False)
class GradedSymbol:
    """One algebra generator: a jet coordinate or a new coordinate.

    ``index`` holds the family's own indices (Lorentz and Lie, in declaration
    order) and ``deriv`` the sorted multi-index of base-space derivatives.
    Identity is the tuple (class, name, index, deriv); the gradings ride along.
    """

    name: str
    index: tuple = ()
    deriv: tuple = ()
    cls: str = "aux"
    parity: int = 0
    ghost: int = 0
    formdeg: int = 0
    dimension: Fraction = Fraction(0)
    antifield_number: int = 0
    key: tuple = field(init=False, repr=False)
    _hash: int = field(init=False, repr=False)

    def __post_init__(self):
        key = (CLASS_ORDER[self.cls], self.name, tuple(self.index), tuple(self.deriv))
        object.__setattr__(self, "key", key)
        object.__setattr__(self, "_hash", hash(key))
        object.__setattr__(self, "dimension", Fraction(self.dimension))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return self is other or (isinstance(other, GradedSymbol) and self.key == other.key)

    def __lt__(self, other):
        return self.key < other.key

    @property
    def jet_order(self) -> int:
        return len(self.deriv)

    @property
    def tot(self) -> int:
        return self.ghost + self.formdeg

    @property
    def is_new(self) -> bool:
        return self.cls in NEW_CLASSES

    def __str__(self):
        body = self.name
        if self.index:
            body += "[" + ",".join(str(i) for i in self.index) + "]"
        if self.deriv:
            body = "d[" + ",".join(str(i) for i in self.deriv) + "]" + body
        if self.is_new:
            body = self.cls + ":" + body
        return body

    __repr__ = __str__


Monomial = tuple  # tuple[GradedSymbol, ...], sorted


def _mono_mul(a: tuple, b: tuple):
    """Product of two sorted monomials: returns (sign, monomial), sign 0 if it vanishes."""
    if not a:
        return 1, b
    if not b:
        return 1, a
    if a[-1].key < b[0].key:
        return 1, a + b
    if b[-1].key < a[0].key:
        oa = sum(s.parity for s in a)
        ob = sum(s.parity for s in b)
        return (-1 if (oa & 1 and ob & 1) else 1), b + a
    odd_left = sum(s.parity for s in a)
    sign = 1
    out = []
    i = j = 0
    na, nb = len(a), len(b)
    while i < na and j < nb:
        x = a[i]
        y = b[j]
        kx, ky = x.key, y.key
        if ky < kx:
            if y.parity and odd_left & 1:
                sign = -sign
            out.append(y)
            j += 1
        elif kx < ky:
            if x.parity:
                odd_left -= 1
            out.append(x)
            i += 1
        else:
            if x.parity:
                return 0, None
            out.append(x)
            i += 1
    if i < na:
        out.extend(a[i:])
    if j < nb:
        out.extend(b[j:])
    return sign, tuple(out)


def sort_monomial(symbols: Iterable[GradedSymbol]):
    """Canonically order a sequence of symbols; returns (sign, monomial)."""
    sign = 1
    mono: tuple = ()
    for s in symbols:
        sg, mono = _mono_mul(mono, (s,))
        if not sg:
            return 0, None
        sign *= sg
    return sign, mono


def mono_parity(mono) -> int:
    return sum(s.parity for s in mono) & 1


def _num(c):
    """Exact coefficient: a plain int when integral (fast path), else a Fraction."""
    if type(c) is int:
        return c
    c = Fraction(c)
    return c.numerator if c.denominator == 1 else c


def _tidy(out: dict) -> dict:
    for k, v in out.items():
        if type(v) is not int and v.denominator == 1:
            out[k] = v.numerator
    return out


class Expr:
    """A graded-commutative polynomial in normal form.

    ``terms`` maps sorted monomials to nonzero rational coefficients (ints
    when integral, Fractions otherwise).  The constructor trusts its input;
    use :func:`normal_form` for raw data.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: dict | None = None):
        self.terms = terms if terms is not None else {}

    # construction -----------------------------------------------------
    @classmethod
    def zero(cls) -> "Expr":
        return cls({})

    @classmethod
    def const(cls, c) -> "Expr":
        c = _num(c)
        return cls({(): c} if c else {})

    @classmethod
    def sym(cls, s: GradedSymbol, coeff=1) -> "Expr":
        c = _num(coeff)
        return cls({(s,): c} if c else {})

    @classmethod
    def mono(cls, symbols: Iterable[GradedSymbol], coeff=1) -> "Expr":
        sign, m = sort_monomial(symbols)
        c = _num(coeff) * sign
        return cls({m: c} if c else {})

    # arithmetic -------------------------------------------------------
    def __bool__(self):
        return bool(self.terms)

    def __len__(self):
        return len(self.terms)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Expr.const(other)
        if not isinstance(other, Expr):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __neg__(self):
        return Expr({m: -c for m, c in self.terms.items()})

    def __add__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Expr.const(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            v = out.get(m, 0) + c
            if v:
                out[m] = v
            else:
                out.pop(m, None)
        return Expr(_tidy(out))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Expr.const(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "Expr":
        c = _num(c)
        if not c:
            return Expr()
        if c == 1:
            return Expr(dict(self.terms))
        return Expr(_tidy({m: v * c for m, v in self.terms.items()}))

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        return graded_product(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        return NotImplemented

    def __truediv__(self, other):
        return self.scale(Fraction(1) / Fraction(other))

    # inspection -------------------------------------------------------
    def symbols(self) -> set:
        return {s for m in self.terms for s in m}

    def is_constant(self) -> bool:
        return all(not m for m in self.terms)

    def constant_term(self) -> Fraction:
        return Fraction(self.terms.get((), 0))

    def sorted_terms(self):
        """Terms in canonical order: by monomial length, then symbol keys."""
        return sorted(self.terms.items(), key=lambda t: (len(t[0]), [s.key for s in t[0]]))

    def coefficient(self, symbols: Iterable[GradedSymbol]) -> Fraction:
        """Coefficient of the canonical monomial built from ``symbols`` (sign included)."""
        sign, m = sort_monomial(symbols)
        if not sign:
            return Fraction(0)
        return Fraction(self.terms.get(m, 0) * sign)

    def map_coefficients(self, fn: Callable) -> "Expr":
        out = {}
        for m, c in self.terms.items():
            v = _num(fn(Fraction(c)))
            if v:
                out[m] = v
        return Expr(out)

    def filter(self, pred: Callable) -> "Expr":
        return Expr({m: c for m, c in self.terms.items() if pred(m)})

    def __str__(self):
        return format_expr(self)

    __repr__ = __str__


def format_coeff(c) -> str:
    c = Fraction(c)
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def format_expr(e: Expr) -> str:
    """Render ``e`` in the parseable text syntax, e.g. ``1/2*C[0]*C[1] - d[0]A[1,2]``."""
    if not e.terms:
        return "0"
    parts = []
    for i, (m, c) in enumerate(e.sorted_terms()):
        neg = c < 0
        a = -c if neg else c
        factors = [str(s) for s in m]
        if a != 1 or not factors:
            factors.insert(0, format_coeff(a))
        body = "*".join(factors)
        if i == 0:
            parts.append(("-" if neg else "") + body)
        else:
            parts.append((" - " if neg else " + ") + body)
    return "".join(parts)


# ----------------------------------------------------------------------
# operations
# ----------------------------------------------------------------------

def normal_form(raw: Iterable) -> Expr:
    """Build an Expr from ``(coefficient, [symbols...])`` pairs in any order."""
    out: dict = {}
    for coeff, syms in raw:
        sign, m = sort_monomial(syms)
        if not sign:
            continue
        v = out.get(m, 0) + _num(coeff) * sign
        if v:
            out[m] = v
        else:
            out.pop(m, None)
    return Expr(_tidy(out))


def graded_product(a: Expr, b: Expr, truncate: Callable | None = None) -> Expr:
    """Koszul-signed product; ``truncate(monomial)`` may veto monomials."""
    out: dict = {}
    for ma, ca in a.terms.items():
        for mb, cb in b.terms.items():
            sign, m = _mono_mul(ma, mb)
            if not sign:
                continue
            if truncate is not None and truncate(m):
                continue
            v = out.get(m, 0) + (ca * cb if sign > 0 else -(ca * cb))
            if v:
                out[m] = v
            else:
                del out[m]
    return Expr(_tidy(out))


def expr_parity(e: Expr) -> int | None:
    """Common parity of all terms, or None for an inhomogeneous expression."""
    ps = {mono_parity(m) for m in e.terms}
    if not ps:
        return 0
    return ps.pop() if len(ps) == 1 else None


def grading_of(mono, attr: str):
    if attr == "tot":
        return sum(s.ghost + s.formdeg for s in mono)
    return sum(getattr(s, attr) for s in mono)


def gradings(e: Expr, attr: str) -> set:
    """Set of values the named grading takes across the terms of ``e``."""
    return {grading_of(m, attr) for m in e.terms}


class Derivation:
    """A graded derivation given by its action on generators.

    ``action`` is a mapping from generator to image.  ``rule`` is consulted
    (and memoised) for generators missing from ``action``; it returns an
    :class:`Expr` or ``None`` when the generator is outside its domain.
    The grading shifts (``ghost``, ``formdeg``, ``dimension``, ``tot``) are
    metadata used by grading checks; ``None`` marks an inhomogeneous shift.
    """

    def __init__(self, parity: int, action: Mapping | None = None, rule: Callable | None = None,
                 *, ghost=None, formdeg=None, dimension=None, tot=None, name: str = "D"):
        self.parity = parity & 1
        self._action = dict(action or {})
        self._rule = rule
        self.ghost = ghost
        self.formdeg = formdeg
        self.dimension = None if dimension is None else Fraction(dimension)
        if tot is None and ghost is not None and formdeg is not None:
            tot = ghost + formdeg
        self.tot = tot
        self.name = name

    @property
    def action(self) -> Mapping:
        """The generator images computed or declared so far."""
        return dict(self._action)

    def defined_on(self, s: GradedSymbol) -> bool:
        try:
            self.image(s)
        except UnknownGenerator:
            return False
        return True

    def image(self, s: GradedSymbol) -> Expr:
        try:
            return self._action[s]
        except KeyError:
            pass
        val = self._rule(s) if self._rule is not None else None
        if val is None:
            raise UnknownGenerator(f"{self.name} has no action on {s}")
        self._action[s] = val
        return val

    def __call__(self, e: Expr) -> Expr:
        return apply_derivation(self, e)

    def __add__(self, other: "Derivation") -> "Derivation":
        if self.parity != other.parity:
            raise ValueError("cannot add derivations of different parity")

        def rule(s):
            return self.image(s) + other.image(s)

        def same(a, b):
            return a if a == b else None

        return Derivation(self.parity, rule=rule, ghost=same(self.ghost, other.ghost),
                          formdeg=same(self.formdeg, other.formdeg),
                          dimension=same(self.dimension, other.dimension),
                          tot=same(self.tot, other.tot),
                          name=f"({self.name}+{other.name})")


def apply_derivation(D: Derivation, e: Expr, truncate: Callable | None = None) -> Expr:
    """Graded Leibniz extension of ``D`` to ``e``."""
    out: dict = {}
    odd_D = D.parity
    for mono, c in e.terms.items():
        pre_odd = 0
        n = len(mono)
        i = 0
        while i < n:
            s = mono[i]
            # identical adjacent even factors contribute identically
            mult = 1
            if not s.parity:
                while i + mult < n and mono[i + mult] == s:
                    mult += 1
            img = D.image(s)
            if img.terms:
                sign = -1 if (odd_D and pre_odd & 1) else 1
                cc = c * sign * mult
                prefix = mono[:i]
                suffix = mono[i + 1:]
                for m2, c2 in img.terms.items():
                    s1, m = _mono_mul(prefix, m2)
                    if not s1:
                        continue
                    s2, m = _mono_mul(m, suffix)
                    if not s2:
                        continue
                    if truncate is not None and truncate(m):
                        continue
                    v = cc * c2
                    if s1 * s2 < 0:
                        v = -v
                    v = out.get(m, 0) + v
                    if v:
                        out[m] = v
                    else:
                        del out[m]
            if s.parity:
                pre_odd += 1
            i += mult
    return Expr(_tidy(out))


def degree_in(mono, counter) -> int:
    return sum(1 for s in mono if counter(s))


def _as_predicate(counter):
    if callable(counter):
        return counter
    subset = frozenset(counter)
    return lambda s: s in subset


def homogeneous_component(e: Expr, counter, k: int) -> Expr:
    """Terms of ``e`` containing exactly ``k`` factors from ``counter``.

    ``counter`` is a collection of symbols or a predicate on symbols.
    """
    pred = _as_predicate(counter)
    return Expr({m: c for m, c in e.terms.items() if degree_in(m, pred) == k})


def degree_decomposition(e: Expr, counter) -> list:
    """List of ``(k, component)`` in ascending ``k`` for the nonzero components."""
    pred = _as_predicate(counter)
    comps: dict = {}
    for m, c in e.terms.items():
        comps.setdefault(degree_in(m, pred), {})[m] = c
    return [(k, Expr(comps[k])) for k in sorted(comps)]


def counting_operator(e: Expr, counter) -> Expr:
    """N e: each term multiplied by its number of factors from ``counter``."""
    pred = _as_predicate(counter)
    return Expr({m: c * degree_in(m, pred) for m, c in e.terms.items() if degree_in(m, pred)})


def substitute(e: Expr, mapping, truncate: Callable | None = None, check_parity: bool = True) -> Expr:
    """Simultaneous substitution of generators, extended multiplicatively.

    ``mapping`` is a dict or a callable returning an Expr or ``None``; symbols
    without an image are kept.  ``truncate(monomial)`` drops monomials early,
    which is only sound for filtrations compatible with multiplication.
    """
    get = mapping if callable(mapping) else mapping.get
    cache: dict = {}

    def img(s):
        try:
            return cache[s]
        except KeyError:
            pass
        v = get(s)
        if v is None:
            v = Expr.sym(s)
        elif check_parity and v.terms:
            p = expr_parity(v)
            if p is None or p != s.parity:
                raise ParityMismatch(f"image of {s} has parity {p}, expected {s.parity}")
        cache[s] = v
        return v

    acc: dict = {}
    for mono, c in e.terms.items():
        term = Expr.const(c)
        for s in mono:
            term = graded_product(term, img(s), truncate)
            if not term.terms:
                break
        for m, v in term.terms.items():
            nv = acc.get(m, 0) + v
            if nv:
                acc[m] = nv
            else:
                del acc[m]
    return Expr(_tidy(acc))


def left_derivative(e: Expr, s: GradedSymbol) -> Expr:
    """Left partial derivative d/ds acting from the left, with Koszul signs."""
    out: dict = {}
    for mono, c in e.terms.items():
        pre_odd = 0
        for i, t in enumerate(mono):
            if t == s:
                rest = mono[:i] + mono[i + 1:]
                v = c
                if s.parity and pre_odd & 1:
                    v = -v
                nv = out.get(rest, 0) + v
                if nv:
                    out[rest] = nv
                else:
                    del out[rest]
                if s.parity:
                    break
            if t.parity:
                pre_odd += 1
    return Expr(out)
