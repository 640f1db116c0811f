"""Closed-form coefficient expressions.

An :class:`Expr` is an immutable tree built from exact rational constants,
variables, sums, products, integer powers, ``sin``/``cos``/``exp``/``sign``
and the Hölder power ``abs(e)^beta``.  Trees can be parsed from text, printed
back canonically, differentiated symbolically, reduced to an expanded normal
form (which makes polynomial identities exactly decidable) and evaluated
either exactly (rationals) or in double precision.

Grammar accepted by :func:`parse`::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*        # '/' only by a constant
    factor := '-' factor | atom ('^' exponent)?
    exponent := integer | decimal | '(' integer '/' integer ')'
    atom   := number | 'x' index | 't' index | '(' expr ')' | func '(' expr ')'
    func   := 'sin' | 'cos' | 'exp' | 'abs' | 'sign'

``abs(e)^d`` with a decimal or parenthesised rational ``d`` is a Hölder power.
"""

from __future__ import annotations

import math
import re
from decimal import Decimal
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Add",
    "Mul",
    "Pow",
    "Func",
    "Holder",
    "ExprSyntaxError",
    "EvaluationError",
    "parse",
    "to_string",
    "simplify",
    "differentiate",
    "evaluate",
    "substitute",
    "lambdify",
    "is_zero",
    "is_polynomial",
    "is_rational_polynomial",
    "free_variables",
    "holder_nodes",
    "as_expr",
    "ZERO",
    "ONE",
]

FUNCTIONS = ("sin", "cos", "exp", "sign")


class ExprSyntaxError(ValueError):
    """Raised by :func:`parse`; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class EvaluationError(ArithmeticError):
    """Numeric evaluation produced a non-finite or undefined value."""


# ---------------------------------------------------------------------------
# nodes


class Expr:
    __slots__ = ("_hash",)

    def _key(self) -> tuple:
        raise NotImplementedError

    def __eq__(self, other):
        if self is other:
            return True
        return type(self) is type(other) and self._key() == other._key()

    def __hash__(self):
        try:
            return self._hash
        except AttributeError:
            h = hash((type(self).__name__,) + self._key())
            object.__setattr__(self, "_hash", h)
            return h

    def __setattr__(self, name, value):
        raise AttributeError("Expr nodes are immutable")

    def __repr__(self):
        return f"{type(self).__name__}<{to_string(self)}>"

    def __str__(self):
        return to_string(self)

    # arithmetic builds raw trees with light constant folding only
    def __add__(self, other):
        return _add(self, as_expr(other))

    def __radd__(self, other):
        return _add(as_expr(other), self)

    def __sub__(self, other):
        return _add(self, _neg(as_expr(other)))

    def __rsub__(self, other):
        return _add(as_expr(other), _neg(self))

    def __mul__(self, other):
        return _mul(self, as_expr(other))

    def __rmul__(self, other):
        return _mul(as_expr(other), self)

    def __neg__(self):
        return _neg(self)

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            raise TypeError("only non-negative integer powers are supported")
        if k == 0:
            return ONE
        if k == 1:
            return self
        return Pow(self, k)


def _init(obj, **fields):
    for name, value in fields.items():
        object.__setattr__(obj, name, value)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        _init(self, value=Fraction(value))

    def _key(self):
        return (self.value,)


class Var(Expr):
    """Variable ``x_{index+1}`` (0-based ``index``)."""

    __slots__ = ("index",)

    def __init__(self, index: int):
        _init(self, index=int(index))

    def _key(self):
        return (self.index,)


class Add(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms: Iterable[Expr]):
        _init(self, terms=tuple(terms))

    def _key(self):
        return self.terms


class Mul(Expr):
    __slots__ = ("factors",)

    def __init__(self, factors: Iterable[Expr]):
        _init(self, factors=tuple(factors))

    def _key(self):
        return self.factors


class Pow(Expr):
    __slots__ = ("base", "exp")

    def __init__(self, base: Expr, exp: int):
        _init(self, base=base, exp=int(exp))

    def _key(self):
        return (self.base, self.exp)


class Func(Expr):
    __slots__ = ("name", "arg")

    def __init__(self, name: str, arg: Expr):
        if name not in FUNCTIONS:
            raise ValueError(f"unknown function {name!r}")
        _init(self, name=name, arg=arg)

    def _key(self):
        return (self.name, self.arg)


class Holder(Expr):
    """``|base|^beta``; differentiable where ``base != 0``.

    A shifted centre ``|x - c|^beta`` is expressed through the base
    expression itself.
    """

    __slots__ = ("base", "beta")

    def __init__(self, base: Expr, beta):
        _init(self, base=base, beta=Fraction(beta))

    def _key(self):
        return (self.base, self.beta)


ZERO = Const(0)
ONE = Const(1)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, Fraction)):
        return Const(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise EvaluationError("non-finite constant")
        return Const(Fraction(value))
    if isinstance(value, str):
        return parse(value)
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def _add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    return Add((a, b))


def _mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    return Mul((a, b))


def _neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Mul) and a.factors and isinstance(a.factors[0], Const):
        return Mul((Const(-a.factors[0].value),) + a.factors[1:])
    return Mul((Const(-1), a))


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?|\.\d+)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str):
    pos = 0
    tokens = []
    n = len(source)
    while pos < n:
        if source[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str, nx: int | None):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0
        self.nx = nx

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op):
        kind, text, pos = self.take()
        if kind != "op" or text != op:
            what = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {op!r}, found {what}", pos)

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {text!r}", pos)
        return e

    def expr(self) -> Expr:
        terms = [self.term()]
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.take()
                t = self.term()
                terms.append(t if text == "+" else _neg(t))
            else:
                break
        return terms[0] if len(terms) == 1 else Add(terms)

    def term(self) -> Expr:
        factors = [self.factor()]
        while True:
            kind, text, pos = self.peek()
            if kind == "op" and text in "*/":
                self.take()
                f = self.factor()
                if text == "*":
                    factors.append(f)
                    continue
                if not isinstance(f, Const) or f.value == 0:
                    raise ExprSyntaxError("division only by a nonzero constant", pos)
                last = factors[-1]
                if isinstance(last, Const):
                    factors[-1] = Const(last.value / f.value)
                else:
                    factors.append(Const(1 / f.value))
            else:
                break
        return factors[0] if len(factors) == 1 else Mul(factors)

    def factor(self) -> Expr:
        kind, text, pos = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return _neg(self.factor())
        base, is_abs = self.atom()
        kind, text, pos = self.peek()
        if not (kind == "op" and text == "^"):
            return base
        self.take()
        kind, text, pos = self.take()
        if kind == "num" and "." not in text:
            k = int(text)
            if is_abs and k % 2 == 0:
                return Pow(base.base, k)
            if is_abs and k > 0:
                return Holder(base.base, k)
            return Pow(base, k)
        if kind == "num":
            beta = Fraction(Decimal(text))
        elif kind == "op" and text == "(":
            k1, t1, p1 = self.take()
            self.expect("/")
            k2, t2, p2 = self.take()
            if k1 != "num" or k2 != "num" or "." in t1 or "." in t2:
                raise ExprSyntaxError("expected rational exponent p/q", p1)
            if int(t2) == 0:
                raise ExprSyntaxError("zero denominator", p2)
            beta = Fraction(int(t1), int(t2))
            self.expect(")")
        else:
            what = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected exponent, found {what}", pos)
        if not is_abs:
            raise ExprSyntaxError("non-integer exponent requires abs(...)", pos)
        if beta <= 0:
            raise ExprSyntaxError("hölder exponent must be positive", pos)
        if beta.denominator == 1 and beta.numerator % 2 == 0:
            # |b|^(2k) is the polynomial b^(2k)
            return Pow(base.base, beta.numerator)
        return Holder(base.base, beta)

    def atom(self) -> tuple[Expr, bool]:
        kind, text, pos = self.take()
        if kind == "num":
            return Const(Fraction(Decimal(text))), False
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e, False
        if kind == "name":
            m = re.fullmatch(r"([xt])(\d+)", text)
            if m:
                idx = int(m.group(2))
                if idx < 1:
                    raise ExprSyntaxError(f"variable index must be >= 1 in {text!r}", pos)
                if m.group(1) == "x":
                    if self.nx is not None and idx > self.nx:
                        raise ExprSyntaxError(f"unknown identifier {text!r}", pos)
                    return Var(idx - 1), False
                if self.nx is None:
                    raise ExprSyntaxError(f"unknown identifier {text!r}", pos)
                return Var(self.nx + idx - 1), False
            if text in FUNCTIONS or text == "abs":
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                if text == "abs":
                    return Holder(arg, 1), True
                return Func(text, arg), False
            raise ExprSyntaxError(f"unknown identifier {text!r}", pos)
        what = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"expected operand, found {what}", pos)


def parse(source: str, nx: int | None = None) -> Expr:
    """Parse ``source`` into an expression tree.

    ``nx`` is the number of base variables ``x1..x{nx}``; when given, lifted
    variables ``t1, t2, ...`` are accepted and mapped to indices ``nx, nx+1, ...``.
    """
    return _Parser(source, nx).parse()


# ---------------------------------------------------------------------------
# printing


def _fmt_fraction(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def _fmt_beta(beta: Fraction) -> str:
    den = beta.denominator
    while den % 2 == 0:
        den //= 2
    while den % 5 == 0:
        den //= 5
    if den != 1:
        return f"({beta.numerator}/{beta.denominator})"
    text = format(Decimal(beta.numerator) / Decimal(beta.denominator), "f")
    if "." not in text:
        text += ".0"
    return text


def to_string(e: Expr, nx: int | None = None) -> str:
    """Canonical text; ``parse(to_string(e, nx), nx) == e``."""
    return _Printer(nx).p(e)


class _Printer:
    def __init__(self, nx):
        self.nx = nx

    def var(self, i):
        if self.nx is not None and i >= self.nx:
            return f"t{i - self.nx + 1}"
        return f"x{i + 1}"

    def p(self, e: Expr) -> str:
        if isinstance(e, Const):
            return _fmt_fraction(e.value)
        if isinstance(e, Var):
            return self.var(e.index)
        if isinstance(e, Add):
            out = [self.add_term(e.terms[0])]
            for t in e.terms[1:]:
                s = self.add_term(t)
                if s.startswith("-"):
                    out.append(" - " + s[1:])
                else:
                    out.append(" + " + s)
            return "".join(out)
        if isinstance(e, Mul):
            parts = []
            for k, f in enumerate(e.factors):
                s = self.p(f)
                if isinstance(f, (Add, Mul)):
                    s = f"({s})"
                elif isinstance(f, Const) and k > 0 and (f.value < 0 or f.value.denominator != 1):
                    s = f"({s})"
                parts.append(s)
            return "*".join(parts)
        if isinstance(e, Pow):
            return f"{self.atom(e.base)}^{e.exp}"
        if isinstance(e, Func):
            return f"{e.name}({self.p(e.arg)})"
        if isinstance(e, Holder):
            if e.beta == 1:
                return f"abs({self.p(e.base)})"
            return f"abs({self.p(e.base)})^{_fmt_beta(e.beta)}"
        raise TypeError(type(e))

    def add_term(self, t: Expr) -> str:
        s = self.p(t)
        if isinstance(t, Add):
            return f"({s})"
        return s

    def atom(self, e: Expr) -> str:
        s = self.p(e)
        if isinstance(e, Var) or isinstance(e, Func):
            return s
        if isinstance(e, Holder) and e.beta == 1:
            return s
        if isinstance(e, Const) and e.value >= 0 and e.value.denominator == 1:
            return s
        return f"({s})"


# ---------------------------------------------------------------------------
# normal form: a sum of monomials over atoms (variables, function nodes,
# hölder powers) with exact rational coefficients


def _atom_key(a: Expr) -> tuple:
    if isinstance(a, Var):
        return (0, a.index, "")
    return (1, 0, to_string(a))


def _mono_key(m) -> tuple:
    deg = sum(k for a, k in m if isinstance(a, Var))
    return (deg, tuple((_atom_key(a), k) for a, k in m))


def _mono_mul(m1, m2):
    if not m1:
        return m2
    if not m2:
        return m1
    powers: dict[Expr, int] = {}
    holders: dict[Expr, Fraction] = {}
    for m in (m1, m2):
        for a, k in m:
            if isinstance(a, Holder):
                holders[a.base] = holders.get(a.base, Fraction(0)) + a.beta * k
            else:
                powers[a] = powers.get(a, 0) + k
    items = []
    for a, k in powers.items():
        if isinstance(a, Func) and a.name == "sign":
            k %= 2
        if k:
            items.append((a, k))
    for base, beta in holders.items():
        if beta != 0:
            items.append((Holder(base, beta), 1))
    items.sort(key=lambda ak: _atom_key(ak[0]))
    return tuple(items)


def _poly_add(p: dict, q: dict, scale: Fraction = Fraction(1)) -> dict:
    out = dict(p)
    for m, c in q.items():
        v = out.get(m, 0) + scale * c
        if v:
            out[m] = v
        else:
            out.pop(m, None)
    return out


def _poly_mul(p: dict, q: dict) -> dict:
    out: dict = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = _mono_mul(m1, m2)
            v = out.get(m, 0) + c1 * c2
            if v:
                out[m] = v
            else:
                out.pop(m, None)
    return out


def _atom_poly(a: Expr) -> dict:
    return {((a, 1),): Fraction(1)}


def _const_poly(c) -> dict:
    c = Fraction(c)
    return {(): c} if c else {}


@lru_cache(maxsize=200_000)
def _expand_cached(e: Expr) -> tuple:
    return tuple(_expand(e).items())


def _expand_of(e: Expr) -> dict:
    return dict(_expand_cached(e))


def _expand(e: Expr) -> dict:
    if isinstance(e, Const):
        return _const_poly(e.value)
    if isinstance(e, Var):
        return _atom_poly(e)
    if isinstance(e, Add):
        out: dict = {}
        for t in e.terms:
            out = _poly_add(out, _expand_of(t))
        return out
    if isinstance(e, Mul):
        out = {(): Fraction(1)}
        for f in e.factors:
            out = _poly_mul(out, _expand_of(f))
            if not out:
                break
        return out
    if isinstance(e, Pow):
        base = _expand_of(e.base)
        out = {(): Fraction(1)}
        for _ in range(e.exp):
            out = _poly_mul(out, base)
        return out
    if isinstance(e, Func):
        arg = simplify(e.arg)
        if isinstance(arg, Const):
            v = arg.value
            if e.name == "sign":
                return _const_poly((v > 0) - (v < 0))
            if v == 0:
                return _const_poly(0 if e.name == "sin" else 1)
        return _atom_poly(Func(e.name, arg))
    if isinstance(e, Holder):
        base = simplify(e.base)
        if e.beta == 0:
            return _const_poly(1)
        if isinstance(base, Const):
            if base.value == 0 and e.beta > 0:
                return {}
            if e.beta.denominator == 1 and (base.value != 0 or e.beta > 0):
                return _const_poly(abs(base.value) ** int(e.beta))
        return _atom_poly(Holder(base, e.beta))
    raise TypeError(type(e))


def _rebuild(poly: dict) -> Expr:
    if not poly:
        return ZERO
    terms = []
    for m in sorted(poly, key=_mono_key):
        c = poly[m]
        factors = [a if k == 1 else Pow(a, k) for a, k in m]
        if not factors:
            terms.append(Const(c))
        elif c == 1:
            terms.append(factors[0] if len(factors) == 1 else Mul(factors))
        else:
            terms.append(Mul([Const(c)] + factors))
    return terms[0] if len(terms) == 1 else Add(terms)


@lru_cache(maxsize=200_000)
def simplify(e: Expr) -> Expr:
    """Expanded canonical form.

    Two polynomial expressions are equal as polynomials iff their simplified
    forms are equal trees.  ``sign(e)^2`` is reduced to 1 and hölder powers of
    a common base are merged, identities valid away from zeros of the base.
    """
    return _rebuild(_expand_of(e))


def is_zero(e: Expr) -> bool:
    return simplify(e) == ZERO


# ---------------------------------------------------------------------------
# differentiation


def _raw_diff(e: Expr, i: int) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == i else ZERO
    if isinstance(e, Add):
        out = ZERO
        for t in e.terms:
            out = _add(out, _raw_diff(t, i))
        return out
    if isinstance(e, Mul):
        out = ZERO
        fs = e.factors
        for k, f in enumerate(fs):
            d = _raw_diff(f, i)
            if d == ZERO:
                continue
            term = d
            for j, g in enumerate(fs):
                if j != k:
                    term = _mul(term, g)
            out = _add(out, term)
        return out
    if isinstance(e, Pow):
        d = _raw_diff(e.base, i)
        if d == ZERO or e.exp == 0:
            return ZERO
        lower = e.base if e.exp == 2 else Pow(e.base, e.exp - 1)
        return _mul(_mul(Const(e.exp), lower), d)
    if isinstance(e, Func):
        d = _raw_diff(e.arg, i)
        if d == ZERO or e.name == "sign":
            return ZERO
        if e.name == "sin":
            outer = Func("cos", e.arg)
        elif e.name == "cos":
            outer = _neg(Func("sin", e.arg))
        else:
            outer = e
        return _mul(outer, d)
    if isinstance(e, Holder):
        d = _raw_diff(e.base, i)
        if d == ZERO:
            return ZERO
        outer = _mul(Const(e.beta), _mul(Func("sign", e.base), Holder(e.base, e.beta - 1)))
        return _mul(outer, d)
    raise TypeError(type(e))


@lru_cache(maxsize=200_000)
def differentiate(e: Expr, var: int) -> Expr:
    """Partial derivative with respect to variable index ``var`` (0-based).

    The result is in simplified form.  ``d|f|^b = b sign(f) |f|^(b-1) df``.
    """
    return simplify(_raw_diff(e, var))


# ---------------------------------------------------------------------------
# evaluation


def _is_exact_input(x) -> bool:
    return all(isinstance(v, (int, Fraction)) and not isinstance(v, bool) for v in x)


def _eval_exact(e: Expr, x) -> Fraction:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return Fraction(x[e.index])
    if isinstance(e, Add):
        return sum((_eval_exact(t, x) for t in e.terms), Fraction(0))
    if isinstance(e, Mul):
        out = Fraction(1)
        for f in e.factors:
            out *= _eval_exact(f, x)
        return out
    if isinstance(e, Pow):
        return _eval_exact(e.base, x) ** e.exp
    if isinstance(e, Func) and e.name == "sign":
        v = _eval_exact(e.arg, x)
        return Fraction((v > 0) - (v < 0))
    if isinstance(e, Holder):
        v = abs(_eval_exact(e.base, x))
        if v != 0 and e.beta.denominator != 1:
            raise _NotExact
        if v == 0:
            if e.beta > 0:
                return Fraction(0)
            raise EvaluationError("hölder power with non-positive exponent at zero")
        return v ** int(e.beta)
    raise _NotExact


class _NotExact(Exception):
    pass


def _eval_float(e: Expr, x) -> float:
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Var):
        return float(x[e.index])
    if isinstance(e, Add):
        return math.fsum(_eval_float(t, x) for t in e.terms)
    if isinstance(e, Mul):
        out = 1.0
        for f in e.factors:
            out *= _eval_float(f, x)
        return out
    if isinstance(e, Pow):
        return _eval_float(e.base, x) ** e.exp
    if isinstance(e, Func):
        v = _eval_float(e.arg, x)
        if e.name == "sin":
            return math.sin(v)
        if e.name == "cos":
            return math.cos(v)
        if e.name == "exp":
            return math.exp(v)
        return float((v > 0) - (v < 0))
    if isinstance(e, Holder):
        v = abs(_eval_float(e.base, x))
        if v == 0.0:
            if e.beta > 0:
                return 0.0
            raise EvaluationError("hölder power with non-positive exponent at zero")
        return v ** float(e.beta)
    raise TypeError(type(e))


def evaluate(e: Expr, x: Sequence):
    """Value of ``e`` at the point ``x``.

    Returns a :class:`~fractions.Fraction` when every input coordinate is
    rational and the tree has no transcendental node; a float otherwise.
    Overflow and undefined values raise :class:`EvaluationError`.
    """
    if _is_exact_input(x):
        try:
            return _eval_exact(e, x)
        except _NotExact:
            pass
    try:
        v = _eval_float(e, x)
    except (OverflowError, ZeroDivisionError) as exc:
        raise EvaluationError(str(exc)) from exc
    if not math.isfinite(v):
        raise EvaluationError(f"non-finite value while evaluating {to_string(e)}")
    return v


# ---------------------------------------------------------------------------
# structural helpers


def substitute(e: Expr, mapping: Mapping[int, Expr]) -> Expr:
    """Replace variables by expressions (raw tree; call :func:`simplify`)."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        return mapping.get(e.index, e)
    if isinstance(e, Add):
        return Add(substitute(t, mapping) for t in e.terms)
    if isinstance(e, Mul):
        return Mul(substitute(f, mapping) for f in e.factors)
    if isinstance(e, Pow):
        return Pow(substitute(e.base, mapping), e.exp)
    if isinstance(e, Func):
        return Func(e.name, substitute(e.arg, mapping))
    if isinstance(e, Holder):
        return Holder(substitute(e.base, mapping), e.beta)
    raise TypeError(type(e))


def _walk(e: Expr):
    yield e
    if isinstance(e, Add):
        for t in e.terms:
            yield from _walk(t)
    elif isinstance(e, Mul):
        for f in e.factors:
            yield from _walk(f)
    elif isinstance(e, Pow):
        yield from _walk(e.base)
    elif isinstance(e, Func):
        yield from _walk(e.arg)
    elif isinstance(e, Holder):
        yield from _walk(e.base)


def free_variables(e: Expr) -> set[int]:
    return {n.index for n in _walk(e) if isinstance(n, Var)}


def holder_nodes(e: Expr) -> list[Holder]:
    return [n for n in _walk(e) if isinstance(n, Holder)]


def is_polynomial(e: Expr) -> bool:
    return not any(isinstance(n, (Func, Holder)) for n in _walk(e))


def is_rational_polynomial(e: Expr) -> bool:
    return is_polynomial(e)


def polynomial_degree(e: Expr) -> int:
    """Total degree of a polynomial expression (-1 for zero)."""
    poly = _expand_of(e)
    if not poly:
        return -1
    degs = []
    for m in poly:
        if any(not isinstance(a, Var) for a, _ in m):
            raise ValueError("not a polynomial")
        degs.append(sum(k for _, k in m))
    return max(degs)


def polynomial_terms(e: Expr) -> dict[tuple[int, ...], Fraction]:
    """Map from sparse exponent tuples ``((var, power), ...)`` to coefficients."""
    out = {}
    for m, c in _expand_of(e).items():
        if any(not isinstance(a, Var) for a, _ in m):
            raise ValueError("not a polynomial")
        out[tuple((a.index, k) for a, k in m)] = c
    return out


def from_polynomial_terms(terms: Mapping[tuple, Fraction]) -> Expr:
    poly = {}
    for key, c in terms.items():
        if c:
            poly[tuple((Var(i), k) for i, k in sorted(key))] = Fraction(c)
    return _rebuild(poly)


# ---------------------------------------------------------------------------
# numpy compilation


def _np_src(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        return f"x[..., {e.index}]"
    if isinstance(e, Add):
        return "(" + " + ".join(_np_src(t) for t in e.terms) + ")"
    if isinstance(e, Mul):
        return "(" + " * ".join(_np_src(f) for f in e.factors) + ")"
    if isinstance(e, Pow):
        return f"({_np_src(e.base)} ** {e.exp})"
    if isinstance(e, Func):
        return f"np.{e.name}({_np_src(e.arg)})"
    if isinstance(e, Holder):
        return f"(np.abs({_np_src(e.base)}) ** {float(e.beta)!r})"
    raise TypeError(type(e))


def lambdify(exprs: Sequence[Expr]) -> Callable[[np.ndarray], np.ndarray]:
    """Compile expressions into ``f(x) -> array (..., len(exprs))``.

    ``x`` has shape ``(..., p)``.  Values are not checked for finiteness.
    """
    lines = ["def _f(x):", "    x = np.asarray(x, dtype=float)",
             f"    out = np.empty(x.shape[:-1] + ({len(exprs)},))"]
    for k, e in enumerate(exprs):
        lines.append(f"    out[..., {k}] = {_np_src(e)}")
    lines.append("    return out")
    namespace = {"np": np}
    with np.errstate(all="ignore"):
        exec("\n".join(lines), namespace)
    f = namespace["_f"]

    def compiled(x):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return f(x)

    return compiled
