"""Expression trees and the canonical ordering used everywhere else.

Expressions are immutable and hashable.  Arithmetic normalization lives in
normal.py; this module only defines the shapes and a few convenience
constructors.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union


class Expr:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Num(Expr):
    """Exact number.  Denominator 1 means integer."""

    value: Fraction

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))

    @property
    def is_integer(self) -> bool:
        return self.value.denominator == 1


@dataclass(frozen=True, slots=True)
class Flt(Expr):
    value: float


@dataclass(frozen=True, slots=True)
class Sym(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class Str(Expr):
    text: str


@dataclass(frozen=True, slots=True)
class App(Expr):
    head: str
    args: tuple[Expr, ...]


@dataclass(frozen=True, slots=True)
class Add(Expr):
    terms: tuple[Expr, ...]


@dataclass(frozen=True, slots=True)
class Mul(Expr):
    factors: tuple[Expr, ...]


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exp: Expr


@dataclass(frozen=True, slots=True)
class Quo(Expr):
    """Explicit quotient.  Used for surface division and fraction display."""

    num: Expr
    den: Expr


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    """Syntactic unary minus.  Kept distinct so index arguments like -0
    survive parsing; folded into Mul(-1, x) during evaluation."""

    arg: Expr


@dataclass(frozen=True, slots=True)
class Lst(Expr):
    items: tuple[Expr, ...]


@dataclass(frozen=True, slots=True)
class Eqn(Expr):
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True, slots=True)
class MatV(Expr):
    rows: tuple[tuple[Expr, ...], ...]


@dataclass(frozen=True, slots=True)
class PVar(Expr):
    """Pattern variable (~x) inside rules."""

    name: str


@dataclass(frozen=True, slots=True)
class RuleE(Expr):
    lhs: Expr
    rhs: Expr
    guard: Optional[Expr] = None


@dataclass(frozen=True, slots=True)
class FormE(Expr):
    """Wrapper carrying an exterior-calculus value (graded form or tangent
    vector).  The payload is hashable and defined in excalc.py."""

    payload: object


# -- constructors ------------------------------------------------------------

ZERO = Num(Fraction(0))
ONE = Num(Fraction(1))
MINUS_ONE = Num(Fraction(-1))
NIL = Sym("nil")

RESERVED = {"e", "i", "infinity", "nil", "pi"}


def num(v) -> Num:
    return Num(Fraction(v))


def sym(name: str) -> Sym:
    return Sym(name)


def app(head: str, *args: Expr) -> App:
    return App(head, tuple(args))


def add(*terms: Expr) -> Expr:
    flat: list[Expr] = []
    for t in terms:
        if isinstance(t, Add):
            flat.extend(t.terms)
        else:
            flat.append(t)
    if not flat:
        return ZERO
    if len(flat) == 1:
        return flat[0]
    return Add(tuple(flat))


def mul(*factors: Expr) -> Expr:
    flat: list[Expr] = []
    for f in factors:
        if isinstance(f, Mul):
            flat.extend(f.factors)
        else:
            flat.append(f)
    if not flat:
        return ONE
    if len(flat) == 1:
        return flat[0]
    return Mul(tuple(flat))


def pow_(base: Expr, exp: Expr) -> Pow:
    return Pow(base, exp)


def neg(e: Expr) -> Expr:
    return mul(MINUS_ONE, e)


def lst(*items: Expr) -> Lst:
    return Lst(tuple(items))


def is_zero(e: Expr) -> bool:
    return (isinstance(e, Num) and e.value == 0) or (isinstance(e, Flt) and e.value == 0.0)


def is_one(e: Expr) -> bool:
    return (isinstance(e, Num) and e.value == 1) or (isinstance(e, Flt) and e.value == 1.0)


def as_number(e: Expr) -> Optional[Union[Fraction, float]]:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Flt):
        return e.value
    return None


def as_int(e: Expr) -> Optional[int]:
    if isinstance(e, Num) and e.is_integer:
        return int(e.value)
    if isinstance(e, Flt) and float(e.value).is_integer():
        return int(e.value)
    return None


# -- ordering ----------------------------------------------------------------

_KIND_RANK = {
    Num: 0,
    Flt: 1,
    Str: 2,
    Sym: 3,
    App: 4,
    Pow: 5,
    Mul: 6,
    Add: 7,
    Quo: 8,
    Neg: 8.5,
    Lst: 9,
    Eqn: 10,
    MatV: 11,
    PVar: 12,
    RuleE: 13,
    FormE: 14,
}


def order_key(e: Expr, priority: tuple[str, ...] = ()) -> tuple:
    """Total order key.  Numbers sort before symbols (integers first),
    symbols alphabetically, applications by head then arguments.  Names in
    `priority` jump ahead of all other symbols, in list order."""
    if isinstance(e, Num):
        return (0, 0 if e.is_integer else 1, e.value)
    if isinstance(e, Flt):
        return (0, 2, Fraction(e.value) if e.value == e.value else Fraction(0))
    if isinstance(e, Str):
        return (1, e.text)
    if isinstance(e, Sym):
        if e.name in priority:
            return (2, 0, priority.index(e.name), e.name)
        return (2, 1, 0, e.name)
    if isinstance(e, PVar):
        return (2, 2, 0, e.name)
    if isinstance(e, App):
        return (3, e.head, tuple(order_key(a, priority) for a in e.args))
    if isinstance(e, Pow):
        return (4, order_key(e.base, priority), order_key(e.exp, priority))
    if isinstance(e, Mul):
        return (5, tuple(order_key(f, priority) for f in e.factors))
    if isinstance(e, Add):
        return (6, tuple(order_key(t, priority) for t in e.terms))
    if isinstance(e, Quo):
        return (7, order_key(e.num, priority), order_key(e.den, priority))
    if isinstance(e, Neg):
        return (7.5, order_key(e.arg, priority))
    if isinstance(e, Lst):
        return (8, tuple(order_key(t, priority) for t in e.items))
    if isinstance(e, Eqn):
        return (9, order_key(e.lhs, priority), order_key(e.rhs, priority))
    if isinstance(e, MatV):
        return (10, tuple(tuple(order_key(x, priority) for x in row) for row in e.rows))
    if isinstance(e, RuleE):
        return (11, order_key(e.lhs, priority), order_key(e.rhs, priority))
    if isinstance(e, FormE):
        return (12, repr(e.payload))
    raise TypeError(f"no order for {type(e).__name__}")


def canonical_order(a: Expr, b: Expr, priority: tuple[str, ...] = ()) -> int:
    """-1 if a sorts before b, 0 if equal, 1 otherwise."""
    ka, kb = order_key(a, priority), order_key(b, priority)
    return -1 if ka < kb else (0 if ka == kb else 1)


def walk(e: Expr):
    """Yield e and every subexpression."""
    yield e
    if isinstance(e, App):
        for a in e.args:
            yield from walk(a)
    elif isinstance(e, Add):
        for t in e.terms:
            yield from walk(t)
    elif isinstance(e, Mul):
        for f in e.factors:
            yield from walk(f)
    elif isinstance(e, Pow):
        yield from walk(e.base)
        yield from walk(e.exp)
    elif isinstance(e, (Quo,)):
        yield from walk(e.num)
        yield from walk(e.den)
    elif isinstance(e, Neg):
        yield from walk(e.arg)
    elif isinstance(e, Lst):
        for t in e.items:
            yield from walk(t)
    elif isinstance(e, Eqn):
        yield from walk(e.lhs)
        yield from walk(e.rhs)
    elif isinstance(e, MatV):
        for row in e.rows:
            for x in row:
                yield from walk(x)
    elif isinstance(e, RuleE):
        yield from walk(e.lhs)
        yield from walk(e.rhs)
        if e.guard is not None:
            yield from walk(e.guard)


def contains_symbol(e: Expr, name: str) -> bool:
    return any(isinstance(s, Sym) and s.name == name for s in walk(e))
