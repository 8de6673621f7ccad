"""Line-oriented model files (header ``jetbrst-model v1``).

Example::

    jetbrst-model v1
    name toy
    base_dim 0
    jet_order 0
    family t parity=0 ghost=0 dim=2 kind=static
    family u parity=0 ghost=0 dim=1 kind=static
    family v parity=1 ghost=1 dim=1 kind=static
    rule s u = v
    rule s v = 0
    rule s t = v*u
    u u = u
    w t = t

Expressions use ``+ - *``, parentheses, rational literals (``1/2``), symbols
``NAME[i,j]``, total derivatives ``d[mu,nu]factor`` and the numeric tensors
``f g ginv eta etainv delta``.  Lower-case identifiers inside index lists
are placeholders: those on the left of a rule range over their slot, a
placeholder repeated inside a product is summed.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .builtins import lie_algebra
from .coordsplit import NewCoordDef, SplitSpec, _linear_top, _top_rank, new_symbol
from .errors import DslSyntaxError, GradingMismatch, ModelError, TruncationOverflow, UndeclaredSymbol
from .jetspace import Family, JetModel, LieAlgebra, total_derivative
from .superalgebra import Expr, GradedSymbol, format_coeff, gradings, graded_product

HEADER = "jetbrst-model v1"
TENSORS = {"f": ("lie", "lie", "lie"), "g": ("lie", "lie"), "ginv": ("lie", "lie"),
           "eta": ("lorentz", "lorentz"), "etainv": ("lorentz", "lorentz"), "delta": (None, None)}
KINDS = ("jet", "coordinate", "differential", "static")

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op><=|>=|!=|[-+*/()\[\],:=<>]))")


# ----------------------------------------------------------------------
# tokenizer and expression AST
# ----------------------------------------------------------------------

@dataclass
class Tok:
    kind: str
    text: str
    col: int


def tokenize(text: str, line: int, offset: int = 0) -> list:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            bad = len(text) - len(text[pos:].lstrip())
            raise DslSyntaxError(f"unexpected character {text[bad]!r}", line, offset + bad + 1)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(Tok(kind, m.group(kind), offset + start + 1))
        pos = m.end()
    toks.append(Tok("end", "", offset + len(text) + 1))
    return toks


@dataclass
class Num:
    value: Fraction


@dataclass
class Sym:
    cls: str | None
    name: str
    index: list        # ints or placeholder names
    col: int
    deriv: list = field(default_factory=list)


@dataclass
class Deriv:
    index: list
    body: object


@dataclass
class Prod:
    factors: list


@dataclass
class Sum:
    terms: list        # (sign, node)


class _Parser:
    def __init__(self, toks, line):
        self.toks = toks
        self.i = 0
        self.line = line

    def peek(self, k=0):
        return self.toks[self.i + k]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text):
        t = self.next()
        if t.text != text:
            raise DslSyntaxError(f"expected {text!r}, found {t.text or 'end of line'!r}", self.line, t.col)
        return t

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        return DslSyntaxError(msg, self.line, tok.col)

    def expr(self):
        terms = []
        sign = 1
        if self.peek().text in "+-" and self.peek().kind == "op":
            sign = -1 if self.next().text == "-" else 1
        terms.append((sign, self.product()))
        while self.peek().kind == "op" and self.peek().text in ("+", "-"):
            sign = -1 if self.next().text == "-" else 1
            terms.append((sign, self.product()))
        return terms[0][1] if len(terms) == 1 and terms[0][0] == 1 else Sum(terms)

    def product(self):
        factors = [self.factor()]
        while self.peek().text == "*":
            self.next()
            factors.append(self.factor())
        return factors[0] if len(factors) == 1 else Prod(factors)

    def index_list(self):
        self.expect("[")
        out = []
        if self.peek().text == "]":
            self.next()
            return out
        while True:
            t = self.next()
            if t.kind == "num":
                out.append(int(t.text))
            elif t.kind == "name":
                out.append(t.text)
            else:
                raise DslSyntaxError(f"bad index {t.text!r}", self.line, t.col)
            t = self.next()
            if t.text == "]":
                return out
            if t.text != ",":
                raise DslSyntaxError(f"expected ',' or ']' in index list, found {t.text!r}", self.line, t.col)

    def factor(self):
        t = self.peek()
        if t.kind == "num":
            self.next()
            v = Fraction(int(t.text))
            if self.peek().text == "/":
                self.next()
                d = self.next()
                if d.kind != "num" or int(d.text) == 0:
                    raise DslSyntaxError("expected a nonzero integer denominator", self.line, d.col)
                v = v / int(d.text)
            return Num(v)
        if t.text == "(":
            self.next()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "name":
            if t.text == "d" and self.peek(1).text == "[":
                self.next()
                idx = self.index_list()
                body = self.factor()
                if isinstance(body, Sym) and body.cls is not None:
                    body.deriv = list(idx) + list(body.deriv)
                    return body
                return Deriv(idx, body)
            return self.symbol()
        raise self.error(f"unexpected {t.text or 'end of line'!r}")

    def symbol(self):
        t = self.next()
        cls = None
        if self.peek().text == ":" and t.text in ("u", "v", "w"):
            self.next()
            cls = t.text
            deriv = []
            if self.peek().text == "d" and self.peek(1).text == "[":
                self.next()
                deriv = self.index_list()
            t = self.next()
            if t.kind != "name":
                raise DslSyntaxError("expected a coordinate name", self.line, t.col)
            idx = self.index_list() if self.peek().text == "[" else []
            return Sym(cls, t.text, idx, t.col, deriv)
        idx = self.index_list() if self.peek().text == "[" else []
        return Sym(None, t.text, idx, t.col)


def _free(node) -> "dict":
    """Placeholder -> occurrence count, after summation inside ``node``."""
    if isinstance(node, Num):
        return {}
    if isinstance(node, Sym):
        c = {}
        for i in list(node.index) + list(node.deriv):
            if isinstance(i, str):
                c[i] = c.get(i, 0) + 1
        return {k: 1 for k, v in c.items() if v == 1}
    if isinstance(node, Sum):
        out = {}
        for _, t in node.terms:
            out.update(_free(t))
        return out
    if isinstance(node, (Prod, Deriv)):
        c = {}
        parts = node.factors if isinstance(node, Prod) else [node.body]
        for p in parts:
            for k in _free(p):
                c[k] = c.get(k, 0) + 1
        if isinstance(node, Deriv):
            for i in node.index:
                if isinstance(i, str):
                    c[i] = c.get(i, 0) + 1
        return {k: 1 for k, v in c.items() if v == 1}
    raise TypeError(node)


def _summed(node) -> set:
    """Placeholders summed at this node (repeated among its direct parts)."""
    c = {}
    if isinstance(node, Sym):
        for i in list(node.index) + list(node.deriv):
            if isinstance(i, str):
                c[i] = c.get(i, 0) + 1
    else:
        parts = node.factors if isinstance(node, Prod) else [node.body]
        for p in parts:
            for k in _free(p):
                c[k] = c.get(k, 0) + 1
        if isinstance(node, Deriv):
            for i in node.index:
                if isinstance(i, str):
                    c[i] = c.get(i, 0) + 1
    return {k for k, v in c.items() if v > 1}


# ----------------------------------------------------------------------
# evaluation
# ----------------------------------------------------------------------

@dataclass
class Macro:
    params: list
    body: object
    line: int


class _Env:
    """Symbol resolution for one model under construction."""

    def __init__(self, model: JetModel, macros: dict, resolver=None):
        self.model = model
        self.macros = macros
        self.resolver = resolver
        self.line = 0

    def slot_of_tensor(self, name, pos):
        return TENSORS[name][pos]

    def types(self, node, out: dict, params=None):
        """Infer placeholder slot types ("lorentz" / "lie")."""
        def put(name, slot, col):
            if slot is None:
                return
            prev = out.get(name)
            if prev is not None and prev != slot:
                raise DslSyntaxError(f"placeholder {name} used as {prev} and {slot} index", self.line, col)
            out[name] = slot

        if isinstance(node, Num):
            return
        if isinstance(node, Sum):
            for _, t in node.terms:
                self.types(t, out)
        elif isinstance(node, Prod):
            for f in node.factors:
                self.types(f, out)
        elif isinstance(node, Deriv):
            for i in node.index:
                if isinstance(i, str):
                    put(i, "lorentz", 0)
            self.types(node.body, out)
        elif isinstance(node, Sym):
            for i in node.deriv:
                if isinstance(i, str):
                    put(i, "lorentz", node.col)
            slots = self._slots(node)
            for i, slot in zip(node.index, slots):
                if isinstance(i, str):
                    put(i, slot, node.col)
            if node.name == "delta" and node.cls is None:
                a, b = node.index if len(node.index) == 2 else (None, None)
                if isinstance(a, str) and isinstance(b, str):
                    if a in out:
                        put(b, out[a], node.col)
                    elif b in out:
                        put(a, out[b], node.col)

    def _slots(self, node: Sym):
        if node.cls is not None:
            return [None] * len(node.index)
        if node.name in self.macros:
            mac = self.macros[node.name]
            inner = {}
            self.types(mac.body, inner)
            return [inner.get(p) for p in mac.params]
        if node.name in TENSORS:
            return list(TENSORS[node.name])
        fam = self.model.families.get(node.name)
        if fam is None:
            raise UndeclaredSymbol(f"undeclared symbol {node.name!r}", self.line, node.col)
        return list(fam.slots)

    def range_of(self, slot):
        return self.model.slot_range(slot)

    def evaluate(self, node, env: dict, types: dict) -> Expr:
        if isinstance(node, Num):
            return Expr.const(node.value)
        if isinstance(node, Sum):
            acc = Expr()
            for sign, t in node.terms:
                v = self.evaluate(t, env, types)
                acc = acc + v if sign > 0 else acc - v
            return acc
        summed = sorted(_summed(node) - set(env))
        if summed:
            acc = Expr()
            for slot_types in summed:
                if slot_types not in types:
                    raise DslSyntaxError(f"cannot infer the range of index {slot_types}", self.line, 0)
            ranges = [self.range_of(types[p]) for p in summed]
            for vals in itertools.product(*ranges):
                env2 = dict(env)
                env2.update(zip(summed, vals))
                acc = acc + self._eval_node(node, env2, types)
            return acc
        return self._eval_node(node, env, types)

    def _idx(self, idx, env, col):
        out = []
        for i in idx:
            if isinstance(i, str):
                if i not in env:
                    raise DslSyntaxError(f"unbound index {i}", self.line, col)
                out.append(env[i])
            else:
                out.append(i)
        return tuple(out)

    def _eval_node(self, node, env, types) -> Expr:
        if isinstance(node, Prod):
            acc = Expr.const(1)
            for f in node.factors:
                acc = graded_product(acc, self.evaluate(f, env, types))
                if not acc:
                    break
            return acc
        if isinstance(node, Deriv):
            e = self.evaluate(node.body, env, types)
            for mu in self._idx(node.index, env, 0):
                self._check_dir(mu, 0)
                e = total_derivative(self.model, e, mu)
            return e
        return self._eval_sym(node, env, types)

    def _check_dir(self, mu, col):
        if mu not in range(self.model.base_dim):
            raise DslSyntaxError(f"derivative index {mu} out of range", self.line, col)

    def _eval_sym(self, node: Sym, env, types) -> Expr:
        idx = self._idx(node.index, env, node.col)
        deriv = self._idx(node.deriv, env, node.col)
        if node.cls is not None:
            if self.resolver is None:
                raise UndeclaredSymbol(f"new coordinate {node.cls}:{node.name} outside a split context",
                                       self.line, node.col)
            s = self.resolver(node.cls, node.name, idx, deriv)
            if s is None:
                raise UndeclaredSymbol(f"unknown coordinate {node.cls}:{node.name}{list(idx)}",
                                       self.line, node.col)
            return Expr.sym(s)
        name = node.name
        if name in self.macros:
            mac = self.macros[name]
            if len(idx) != len(mac.params):
                raise DslSyntaxError(f"{name} takes {len(mac.params)} indices", self.line, node.col)
            inner_types = {}
            self.types(mac.body, inner_types)
            e = self.evaluate(mac.body, dict(zip(mac.params, idx)), inner_types)
            for mu in deriv:
                e = total_derivative(self.model, e, mu)
            return e
        if name in TENSORS:
            return Expr.const(self._tensor(name, idx, node))
        fam = self.model.families.get(name)
        if fam is None:
            raise UndeclaredSymbol(f"undeclared symbol {name!r}", self.line, node.col)
        try:
            return Expr.sym(self.model.symbol(fam, idx, deriv))
        except ValueError as exc:
            raise DslSyntaxError(str(exc), self.line, node.col) from None
        except TruncationOverflow as exc:
            raise ModelError(str(exc), self.line, node.col) from None

    def _tensor(self, name, idx, node):
        lie, m = self.model.lie, self.model
        want = len(TENSORS[name])
        if len(idx) != want:
            raise DslSyntaxError(f"{name} takes {want} indices", self.line, node.col)
        try:
            if name == "f":
                return lie.structure(*idx)
            if name == "g":
                return lie.metric(*idx)
            if name == "ginv":
                return lie.inverse_metric(*idx)
            if name in ("eta", "etainv"):
                a, b = idx
                return Fraction(m.metric[a]) if a == b else Fraction(0)
            return Fraction(1 if idx[0] == idx[1] else 0)
        except IndexError:
            raise DslSyntaxError(f"index out of range for {name}", self.line, node.col) from None


# ----------------------------------------------------------------------
# model files
# ----------------------------------------------------------------------

@dataclass
class _Pending:
    kind: str          # rule | u | w
    line: int
    text: str
    col: int


def _parse_int(s, line, col, what):
    try:
        return int(s)
    except ValueError:
        raise DslSyntaxError(f"{what} must be an integer, got {s!r}", line, col) from None


def _parse_frac(s, line, col, what):
    try:
        return Fraction(s)
    except (ValueError, ZeroDivisionError):
        raise DslSyntaxError(f"{what} must be a rational number, got {s!r}", line, col) from None


def _parse_family(rest: str, line: int, col0: int) -> Family:
    parts = rest.split()
    if not parts:
        raise DslSyntaxError("family needs a name", line, col0)
    name = parts[0]
    if not re.fullmatch(r"[A-Za-z][A-Za-z0-9_]*", name) or name in TENSORS or name == "d":
        raise DslSyntaxError(f"invalid family name {name!r}", line, col0)
    slots, opts = [], {}
    for p in parts[1:]:
        if "=" in p:
            k, v = p.split("=", 1)
            opts[k] = v
        elif p in ("lorentz", "lie"):
            slots.append(p)
        else:
            raise DslSyntaxError(f"unknown family attribute {p!r}", line, col0 + rest.find(p))
    known = {"parity", "ghost", "formdeg", "dim", "class", "kind", "afn"}
    for k in opts:
        if k not in known:
            raise DslSyntaxError(f"unknown family option {k!r}", line, col0 + rest.find(k))
    for k in ("parity", "ghost", "dim"):
        if k not in opts:
            raise DslSyntaxError(f"family {name} needs {k}=", line, col0)
    parity = _parse_int(opts["parity"], line, col0, "parity")
    if parity not in (0, 1):
        raise DslSyntaxError("parity must be 0 or 1", line, col0)
    kind = opts.get("kind", "jet")
    if kind not in KINDS:
        raise DslSyntaxError(f"kind must be one of {', '.join(KINDS)}", line, col0)
    default_cls = {"coordinate": "x", "differential": "dx"}.get(kind, "field")
    return Family(name, tuple(slots), parity, _parse_int(opts["ghost"], line, col0, "ghost"),
                  _parse_int(opts.get("formdeg", "0"), line, col0, "formdeg"),
                  _parse_frac(opts["dim"], line, col0, "dim"), opts.get("class", default_cls), kind,
                  _parse_int(opts.get("afn", "0"), line, col0, "afn"))


def _parse_metric(rest, n, line, col):
    parts = rest.split()
    if parts == ["mostly-minus"]:
        return None
    if parts == ["mostly-plus"]:
        return tuple([-1] + [1] * (n - 1)) if n else ()
    if parts and parts[0] == "diag":
        vals = [_parse_int(p, line, col, "metric entry") for p in parts[1:]]
        if len(vals) != n or any(v not in (1, -1) for v in vals):
            raise DslSyntaxError(f"metric needs {n} entries of +-1", line, col)
        return tuple(vals)
    raise DslSyntaxError("metric is mostly-minus, mostly-plus or diag ...", line, col)


def _parse_algebra(rest, line, col) -> LieAlgebra:
    parts = rest.split()
    if not parts:
        raise DslSyntaxError("algebra needs a value", line, col)
    if parts[0] == "abelian" and len(parts) == 2:
        return lie_algebra(f"abelian{_parse_int(parts[1], line, col, 'algebra dimension')}")
    try:
        return lie_algebra(parts[0])
    except Exception as exc:
        raise ModelError(str(exc), line, col) from None


def _split_lhs(text: str, line: int, col: int):
    """``LHS [where cond, ...] [lead SYM] = RHS`` -> pieces."""
    depth = 0
    eq = -1
    for i, ch in enumerate(text):
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        elif ch == "=" and depth == 0 and text[i - 1:i] not in ("<", ">", "!") and text[i + 1:i + 2] != "=":
            eq = i
            break
    if eq < 0:
        raise DslSyntaxError("expected '='", line, col + len(text))
    lhs, rhs = text[:eq], text[eq + 1:]
    lead = None
    cond = ""
    m = re.search(r"\blead\b", lhs)
    if m:
        lead = (lhs[m.end():], col + m.end())
        lhs = lhs[:m.start()]
    m = re.search(r"\bwhere\b", lhs)
    if m:
        cond = lhs[m.end():]
        lhs = lhs[:m.start()]
    return lhs, cond, lead, rhs, col + eq + 1


_COND = re.compile(r"\s*([A-Za-z_]\w*|\d+)\s*(<=|>=|<|>|==|!=)\s*([A-Za-z_]\w*|\d+)\s*")


def _conditions(cond: str, line, col):
    out = []
    if not cond.strip():
        return out
    for part in cond.split(","):
        m = _COND.fullmatch(part)
        if not m:
            raise DslSyntaxError(f"bad constraint {part.strip()!r}", line, col)
        out.append(m.groups())
    return out


def _holds(conds, env):
    import operator
    ops = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge,
           "==": operator.eq, "!=": operator.ne}
    for a, op, b in conds:
        va = env[a] if a in env else int(a)
        vb = env[b] if b in env else int(b)
        if not ops[op](va, vb):
            return False
    return True


def parse_model(src: str, strict: bool = True) -> JetModel:
    """Parse model text into a JetModel (with its split, if declared).

    With ``strict`` a rule whose gradings disagree with the declarations
    raises GradingMismatch; otherwise use :func:`check_grading_consistency`.
    """
    lines = src.splitlines()
    first = next(((i, l) for i, l in enumerate(lines) if l.strip() and not l.strip().startswith("#")), None)
    if first is None or first[1].strip() != HEADER:
        raise DslSyntaxError(f"missing header {HEADER!r}", (first[0] + 1) if first else 1, 1)
    settings: dict = {}
    families: list = []
    macros_src: list = []
    pending: list = []
    disregard: list = []
    split_builtin = None
    options: dict = {}
    for ln, raw in enumerate(lines[first[0] + 1:], start=first[0] + 2):
        text = raw.split("#", 1)[0].rstrip()
        if not text.strip():
            continue
        col0 = len(text) - len(text.lstrip()) + 1
        text = text.strip()
        kw, _, rest = text.partition(" ")
        rcol = col0 + len(kw) + 1
        rest = rest.strip()
        if kw in ("name", "base_dim", "jet_order", "max_order", "mode", "metric", "algebra"):
            if kw in settings:
                raise DslSyntaxError(f"duplicate {kw}", ln, col0)
            settings[kw] = (rest, ln, rcol)
        elif kw == "family":
            fam = _parse_family(rest, ln, rcol)
            if any(f.name == fam.name for f in families):
                raise DslSyntaxError(f"duplicate family {fam.name}", ln, rcol)
            families.append(fam)
        elif kw == "define":
            macros_src.append((rest, ln, rcol))
        elif kw == "rule":
            if not rest.startswith("s "):
                raise DslSyntaxError("rules are written 'rule s LHS = RHS'", ln, rcol)
            pending.append(_Pending("rule", ln, rest[2:], rcol + 2))
        elif kw in ("u", "w"):
            pending.append(_Pending(kw, ln, rest, rcol))
        elif kw == "disregard":
            disregard.extend(rest.split())
        elif kw == "split":
            if rest != "ym":
                raise DslSyntaxError(f"unknown builtin split {rest!r}", ln, rcol)
            split_builtin = rest
        elif kw == "option":
            k, _, v = rest.partition("=")
            options[k.strip()] = v.strip().lower() in ("1", "true", "yes")
        else:
            raise DslSyntaxError(f"unknown directive {kw!r}", ln, col0)

    def setting(k, default, conv):
        if k not in settings:
            return default
        v, ln, col = settings[k]
        return conv(v, ln, col)

    n = setting("base_dim", None, lambda v, l, c: _parse_int(v, l, c, "base_dim"))
    if n is None:
        raise DslSyntaxError("missing base_dim", 1, 1)
    K = setting("jet_order", 2, lambda v, l, c: _parse_int(v, l, c, "jet_order"))
    maxo = setting("max_order", None, lambda v, l, c: _parse_int(v, l, c, "max_order"))
    mode = setting("mode", "s", lambda v, l, c: v if v in ("s", "stilde") else
                   (_ for _ in ()).throw(DslSyntaxError("mode is s or stilde", l, c)))
    metric = setting("metric", None, lambda v, l, c: _parse_metric(v, n, l, c))
    lie = setting("algebra", None, _parse_algebra)
    name = setting("name", "model", lambda v, l, c: v)
    fam_names = {f.name for f in families}
    for dname in disregard:
        if dname not in fam_names:
            raise UndeclaredSymbol(f"disregarded family {dname!r} is not declared")
    model = JetModel(n, families, lie=lie, metric=metric, jet_order=K, max_order=maxo, mode=mode,
                     disregard=tuple(disregard), split=split_builtin, name=name, options=options)
    macros: dict = {}
    env = _Env(model, macros)
    for text, ln, col in macros_src:
        lhs, cond, lead, rhs, rcol = _split_lhs(text, ln, col)
        head = _Parser(tokenize(lhs, ln, col - 1), ln)
        sym = head.symbol()
        if head.peek().kind != "end":
            raise head.error("unexpected text after macro head")
        if sym.name in fam_names or sym.name in TENSORS:
            raise DslSyntaxError(f"macro {sym.name} shadows a symbol", ln, col)
        if any(not isinstance(p, str) for p in sym.index):
            raise DslSyntaxError("macro parameters must be placeholders", ln, col)
        p = _Parser(tokenize(rhs, ln, rcol - 1), ln)
        body = p.expr()
        if p.peek().kind != "end":
            raise p.error("unexpected text after expression")
        macros[sym.name] = Macro(list(sym.index), body, ln)

    u_defs, w_defs = [], []
    for item in pending:
        env.line = item.line
        lhs, cond, lead, rhs, rcol = _split_lhs(item.text, item.line, item.col)
        head = _Parser(tokenize(lhs, item.line, item.col - 1), item.line)
        if head.peek().text == "d" and head.peek(1).text == "[":
            head.next()
            hderiv = head.index_list()
        else:
            hderiv = []
        lsym = head.symbol()
        lsym.deriv = hderiv
        if head.peek().kind != "end":
            raise head.error("unexpected text on left-hand side")
        p = _Parser(tokenize(rhs, item.line, rcol - 1), item.line)
        body = p.expr()
        if p.peek().kind != "end":
            raise p.error("unexpected text after expression")
        lead_node = None
        if lead:
            lp = _Parser(tokenize(lead[0], item.line, lead[1] - 1), item.line)
            lead_node = lp.factor()
        conds = _conditions(cond, item.line, item.col)
        types: dict = {}
        if item.kind == "rule":
            if lsym.deriv or lsym.cls is not None:
                raise DslSyntaxError("rules are given on undifferentiated generators", item.line, item.col)
            fam = model.families.get(lsym.name)
            if fam is None:
                raise UndeclaredSymbol(f"undeclared symbol {lsym.name!r}", item.line, lsym.col)
            env.types(lsym, types)
        else:
            fam = None
        env.types(body, types)
        if lead_node is not None:
            env.types(lead_node, types)
        free_lhs = [i for i in list(lsym.index) + list(lsym.deriv) if isinstance(i, str)]
        if item.kind == "rule":
            for i in lsym.index:
                if isinstance(i, str) and i not in types:
                    types[i] = "lorentz"
        for i in free_lhs:
            if i not in types:
                raise DslSyntaxError(f"cannot infer the range of index {i}", item.line, lsym.col)
        leftover = set(_free(body)) - set(free_lhs)
        if leftover:
            raise DslSyntaxError(f"unbound index {sorted(leftover)[0]}", item.line, rcol)
        uniq = list(dict.fromkeys(free_lhs))
        ranges = [model.slot_range(types[i]) if types[i] != "lorentz" or i not in lsym.deriv
                  else range(n) for i in uniq]
        for vals in itertools.product(*ranges):
            bind = dict(zip(uniq, vals))
            if not _holds(conds, bind):
                continue
            idx = tuple(bind[i] if isinstance(i, str) else i for i in lsym.index)
            dv = tuple(bind[i] if isinstance(i, str) else i for i in lsym.deriv)
            e = env.evaluate(body, bind, types)
            if item.kind == "rule":
                try:
                    g = model.symbol(fam, idx)
                except ValueError as exc:
                    raise DslSyntaxError(str(exc), item.line, lsym.col) from None
                if g in model.s_rules:
                    raise DslSyntaxError(f"duplicate rule for {g}", item.line, item.col)
                if strict:
                    problem = _rule_problem(g, e, model, "s")
                    if problem:
                        raise GradingMismatch(problem, item.line, rcol)
                model.s_rules[g] = e
            else:
                ld = None
                if lead_node is not None:
                    le = env.evaluate(lead_node, bind, types)
                    if len(le.terms) != 1 or len(next(iter(le.terms))) != 1:
                        raise DslSyntaxError("lead must be a single generator", item.line, lead[1])
                    ld = next(iter(le.terms))[0]
                r = _top_rank(e)
                if r is None:
                    raise ModelError(f"{item.kind} {lsym.name}{list(idx)} has a constant definition",
                                     item.line, rcol)
                lin, _ = _linear_top(e, r)
                like = ld if ld is not None else (min(lin) if lin else max(e.symbols()))
                sym = new_symbol(item.kind, lsym.name, like, idx, dv)
                (u_defs if item.kind == "u" else w_defs).append(NewCoordDef(sym, e, ld))
    for fam in families:
        if fam.kind not in ("jet", "static"):
            continue
        for idx in model.index_values(fam):
            g = model.symbol(fam, idx)
            if g not in model.s_rules:
                raise UndeclaredSymbol(f"no s rule for {g}")
    if u_defs or w_defs:
        if split_builtin:
            raise ModelError("a model uses either 'split ym' or explicit u/w definitions")
        model.split = SplitSpec(u_defs, w_defs, tuple(disregard), name=name)
    model.source_macros = {k: v for k, v in macros.items()}
    return model


def load_model(path) -> JetModel:
    return parse_model(Path(path).read_text(encoding="utf-8"))


def parse_expr(text: str, model: JetModel, resolver=None) -> Expr:
    """Parse a concrete expression (no free placeholders) against ``model``.

    ``resolver(cls, name, index, deriv)`` maps new-coordinate references
    ``u:NAME[...]`` to symbols; see ``CoordinateSystem.lookup``.
    """
    env = _Env(model, getattr(model, "source_macros", {}), resolver)
    p = _Parser(tokenize(text, 1), 1)
    node = p.expr()
    if p.peek().kind != "end":
        raise p.error("unexpected text after expression")
    types: dict = {}
    env.types(node, types)
    left = _free(node)
    if left:
        raise DslSyntaxError(f"unbound index {sorted(left)[0]}", 1, 1)
    return env.evaluate(node, {}, types)


# ----------------------------------------------------------------------
# grading checks
# ----------------------------------------------------------------------

def _rule_problem(g: GradedSymbol, e: Expr, model: JetModel, mode: str) -> str | None:
    if not e:
        return None
    par = set()
    for mono in e.terms:
        par.add(sum(s.parity for s in mono) % 2)
    if par != {1 - g.parity}:
        return f"s {g}: parity {sorted(par)} but expected {1 - g.parity}"
    if mode == "s":
        checks = (("ghost", g.ghost + 1), ("formdeg", g.formdeg), ("dimension", g.dimension))
    else:
        checks = (("tot", g.tot + 1), ("dimension", g.dimension))
    for attr, want in checks:
        got = gradings(e, attr)
        if got != {want}:
            return f"s {g}: {attr} {sorted(got)} but expected {want}"
    return None


@dataclass
class GradingReport:
    problems: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def lines(self) -> list:
        return list(self.problems)


def check_grading_consistency(model: JetModel, mode: str | None = None) -> GradingReport:
    """Every rule must flip parity and shift ghost by +1, form degree and
    dimension by 0; in mode stilde the images of s + d are checked against
    total degree +1 instead."""
    mode = mode or model.mode
    rep = GradingReport()
    D = model.differential(mode)
    for fam in model.families.values():
        for idx in model.index_values(fam):
            g = model.symbol(fam, idx)
            if mode == "s":
                e = model.s_rules.get(g, Expr())
            else:
                try:
                    e = D.image(g)
                except TruncationOverflow:
                    continue
            problem = _rule_problem(g, e, model, mode)
            if problem:
                rep.problems.append(problem)
    return rep


# ----------------------------------------------------------------------
# printing
# ----------------------------------------------------------------------

def _fmt_frac(x) -> str:
    return format_coeff(Fraction(x))


def print_model(model: JetModel) -> str:
    """Canonical text form: families, concrete rules, split."""
    out = [HEADER, f"name {model.name}", f"base_dim {model.base_dim}"]
    if model.base_dim:
        out.append("metric diag " + " ".join(str(int(v)) for v in model.metric))
    lie = model.lie
    if lie.dim:
        if lie.name == "su2":
            out.append("algebra su2")
        elif lie.is_abelian and all(lie.metric(a, b) == (1 if a == b else 0)
                                      for a in range(lie.dim) for b in range(lie.dim)):
            out.append(f"algebra abelian {lie.dim}")
        else:
            raise ModelError(f"cannot print Lie algebra {lie.name}")
    out += [f"jet_order {model.jet_order}", f"max_order {model.max_order}", f"mode {model.mode}"]
    for k in sorted(model.options):
        out.append(f"option {k}={'true' if model.options[k] else 'false'}")
    for fam in model.families.values():
        parts = [f"family {fam.name}"] + list(fam.slots)
        parts += [f"parity={fam.parity}", f"ghost={fam.ghost}", f"formdeg={fam.formdeg}",
                  f"dim={_fmt_frac(fam.dimension)}", f"class={fam.cls}", f"kind={fam.kind}"]
        if fam.antifield_number:
            parts.append(f"afn={fam.antifield_number}")
        out.append(" ".join(parts))
    for g in sorted(model.s_rules):
        e = model.s_rules[g]
        out.append(f"rule s {g} = {e}")
    if model.disregard:
        out.append("disregard " + " ".join(model.disregard))
    split = model.split
    if split == "ym":
        out.append("split ym")
    elif isinstance(split, SplitSpec) and split.generator is None:
        for kind, defs in (("u", split.u_defs), ("w", split.w0_defs)):
            for d in defs:
                head = str(d.symbol).split(":", 1)[1]
                lead = f" lead {d.leading}" if d.leading is not None else ""
                out.append(f"{kind} {head}{lead} = {d.expr}")
    return "\n".join(out) + "\n"


def model_signature(model: JetModel) -> tuple:
    """Structural identity used to compare models (families, rules, settings, split)."""
    rules = tuple(sorted((g.key, tuple(sorted((tuple(s.key for s in m), c) for m, c in e.terms.items())))
                         for g, e in model.s_rules.items()))
    fams = tuple((f.name, f.slots, f.parity, f.ghost, f.formdeg, Fraction(f.dimension), f.cls, f.kind,
                  f.antifield_number) for f in model.families.values())
    lie = model.lie
    lie_sig = (lie.dim, tuple(sorted((k, Fraction(v)) for k, v in lie.f.items() if v)))
    split = model.split
    if isinstance(split, SplitSpec) and split.generator is None:
        split = tuple((str(d.symbol), str(d.expr)) for d in split.u_defs + split.w0_defs)
    return (model.base_dim, tuple(model.metric), lie_sig, model.jet_order, model.max_order, model.mode,
            tuple(model.disregard), fams, rules, split, tuple(sorted(model.options.items())))
