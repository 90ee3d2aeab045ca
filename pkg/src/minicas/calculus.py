"""Differentiation, table-driven integration, series, limits, sums, solve.

Every entry point takes the session plus the raw argument tuple from the
evaluator, so operands get the full evaluation pipeline while variable
names stay symbolic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from . import normal as N
from . import poly as P
from .errors import (DivisionByZero, EvalError, NotPolynomial, SingularPoint,
                     SystemTooHard)
from .expr import (
    Add, App, Eqn, Expr, Flt, Lst, Mul, Neg, Num, Pow, Quo, Str, Sym,
    ONE, ZERO, add, app, mul, num, sym, walk,
)
from .rewrite import apply_literal


def _var(e: Expr) -> Sym:
    if isinstance(e, Sym):
        return e
    raise EvalError("expected a variable name")


def _poly_one() -> P.Poly:
    return P.p_const(Fraction(1))


# -- differentiation ----------------------------------------------------------


def df(s, args) -> Expr:
    if len(args) < 2:
        raise EvalError("df expects df(expression, variable, ...)")
    e = s._full(args[0])
    i = 1
    while i < len(args):
        x = _var(s._req(args[i]))
        n = 1
        if i + 1 < len(args):
            nxt = s._norm(s._req(args[i + 1]))
            if isinstance(nxt, Num) and nxt.value.denominator == 1:
                n = int(nxt.value)
                i += 1
        i += 1
        for _ in range(n):
            e = s._norm(_d(s, s._norm(e), x))
    return e


def _depends(s, name: str, x: Sym) -> bool:
    return x.name in s.depgraph.get(name, ())


_D_TABLE = {
    "sin": lambda u: app("cos", u),
    "cos": lambda u: Neg(app("sin", u)),
    "tan": lambda u: Add((Pow(app("tan", u), num(2)), ONE)),
    "cot": lambda u: Neg(Add((Pow(app("cot", u), num(2)), ONE))),
    "exp": lambda u: app("exp", u),
    "log": lambda u: Quo(ONE, u),
    "ln": lambda u: Quo(ONE, u),
    "sqrt": lambda u: Quo(ONE, Mul((num(2), app("sqrt", u)))),
    "asin": lambda u: Quo(ONE, app("sqrt", Add((ONE, Neg(Pow(u, num(2))))))),
    "acos": lambda u: Neg(Quo(ONE, app("sqrt", Add((ONE, Neg(Pow(u, num(2)))))))),
    "atan": lambda u: Quo(ONE, Add((ONE, Pow(u, num(2))))),
}


def _df_kernel(f: Expr, pairs: list[tuple[str, int]]) -> Expr:
    out: list[Expr] = [f]
    for name, n in sorted(pairs):
        out.append(sym(name))
        if n > 1:
            out.append(num(n))
    return App("df", tuple(out))


def _df_pairs(args: tuple[Expr, ...]) -> tuple[Expr, list[tuple[str, int]]]:
    pairs: list[tuple[str, int]] = []
    i = 1
    while i < len(args):
        name = args[i].name
        n = 1
        if i + 1 < len(args) and isinstance(args[i + 1], Num):
            n = int(args[i + 1].value)
            i += 1
        i += 1
        pairs.append((name, n))
    return args[0], pairs


def _d(s, e: Expr, x: Sym) -> Expr:
    match e:
        case Num(_) | Flt(_) | Str(_):
            return ZERO
        case Sym(name):
            if e == x:
                return ONE
            if _depends(s, name, x):
                return App("df", (e, x))
            return ZERO
        case Add(terms):
            return add(*[_d(s, t, x) for t in terms])
        case Neg(a):
            return Neg(_d(s, a, x))
        case Mul(factors):
            parts = []
            for i, f in enumerate(factors):
                di = _d(s, f, x)
                if di == ZERO:
                    continue
                rest = factors[:i] + factors[i + 1:]
                parts.append(mul(di, *rest))
            return add(*parts) if parts else ZERO
        case Quo(a, b):
            da, db = _d(s, a, x), _d(s, b, x)
            if db == ZERO:
                return Quo(da, b)
            return Quo(Add((Mul((da, b)), Neg(Mul((a, db))))), Pow(b, num(2)))
        case Pow(b, p):
            db, dp = _d(s, b, x), _d(s, p, x)
            parts = []
            if db != ZERO:
                parts.append(mul(p, Pow(b, Add((p, Neg(ONE)))), db))
            if dp != ZERO:
                parts.append(mul(Pow(b, p), dp) if b == sym("e") else
                             mul(app("log", b), Pow(b, p), dp))
            return add(*parts) if parts else ZERO
        case Eqn(a, b):
            return Eqn(_d(s, a, x), _d(s, b, x))
        case Lst(items):
            return Lst(tuple(_d(s, it, x) for it in items))
        case App("df", dargs):
            if s._free_of(dargs[0], x):
                return ZERO
            f, pairs = _df_pairs(dargs)
            if any(name == x.name for name, _ in pairs):
                pairs = [(m, k + 1 if m == x.name else k) for m, k in pairs]
            else:
                pairs = pairs + [(x.name, 1)]
            return _df_kernel(f, pairs)
        case App("int", (f, v)) if v == x:
            return f
        case App(head, (u,)) if head in _D_TABLE:
            du = _d(s, u, x)
            if du == ZERO:
                return ZERO
            return mul(_D_TABLE[head](u), du)
        case App(_, aa):
            if all(s._free_of(a, x) for a in aa):
                return ZERO
            return App("df", (e, x))
        case _:
            return ZERO


# -- integration --------------------------------------------------------------


def integrate(s, args) -> Expr:
    if len(args) != 2:
        raise EvalError("int expects int(expression, variable)")
    e = s._full(args[0])
    x = _var(s._req(args[1]))
    r = _integrate(s, e, x)
    return s._norm(r) if r is not None else App("int", (e, x))


def _integrate(s, e: Expr, x: Sym) -> Optional[Expr]:
    e = s._norm(e)
    if isinstance(e, Quo) and s._free_of(e.den, x):
        inner = _integrate(s, e.num, x)
        return None if inner is None else Quo(inner, e.den)
    terms = e.terms if isinstance(e, Add) else (e,)
    out = []
    for t in terms:
        r = _int_term(s, t, x)
        if r is None:
            return None
        out.append(r)
    return add(*out)


_INT_TABLE = {
    "sin": lambda u: Neg(app("cos", u)),
    "cos": lambda u: app("sin", u),
    "exp": lambda u: app("exp", u),
}


def _int_term(s, t: Expr, x: Sym) -> Optional[Expr]:
    if isinstance(t, Quo):
        if s._free_of(t.den, x):
            inner = _int_term(s, t.num, x)
            return None if inner is None else Quo(inner, t.den)
        if isinstance(t.num, Add):
            parts = []
            for tt in t.num.terms:
                r = _int_term(s, Quo(tt, t.den), x)
                if r is None:
                    return None
                parts.append(r)
            return add(*parts)
        factors = _mul_factors(t)
        if factors is None:
            return None
    else:
        factors = list(t.factors) if isinstance(t, Mul) else [t]
    const: list[Expr] = []
    core: list[Expr] = []
    for f in _merge_powers(factors):
        (const if s._free_of(f, x) else core).append(f)
    if not core:
        return mul(*(const + [x]))
    body = _int_core(s, core, x)
    if body is None:
        return None
    return mul(*(const + [body]))


def _merge_powers(factors: list[Expr]) -> list[Expr]:
    """Combine repeated bases with integer exponents, e.g. x**2 * x**-1."""
    bases: list[Expr] = []
    exps: dict[int, Fraction] = {}
    rest: list[Expr] = []
    for f in factors:
        match f:
            case Pow(b, Num(n)):
                base, k = b, n
            case _ if not isinstance(f, (Add, Mul, Quo, Neg)):
                base, k = f, Fraction(1)
            case _:
                rest.append(f)
                continue
        for i, b0 in enumerate(bases):
            if b0 == base:
                exps[i] += k
                break
        else:
            bases.append(base)
            exps[len(bases) - 1] = k
    out = []
    for i, b0 in enumerate(bases):
        k = exps[i]
        if k == 0:
            continue
        out.append(b0 if k == 1 else Pow(b0, Num(k)))
    return out + rest


def _int_core(s, core: list[Expr], x: Sym) -> Optional[Expr]:
    if len(core) == 1:
        e = core[0]
        if e == x:
            return Quo(Pow(x, num(2)), num(2))
        match e:
            case Pow(b, Num(n)) if b == x:
                if n == -1:
                    return app("log", x)
                return Quo(Pow(x, Num(n + 1)), Num(n + 1))
            case Pow(App(h, (u,)), Num(n)) if n == 2 and h in ("sin", "cos") \
                    and _linear_in(s, u, x) is not None:
                # power reduction by the double angle identity
                a, _ = _linear_in(s, u, x)
                half = Quo(x, num(2))
                prod = Quo(Mul((app("cos", u), app("sin", u))),
                           Mul((num(2), a)))
                return Add((half, Neg(prod))) if h == "sin" else \
                    Add((half, prod))
            case App("df", (f, v)) if v == x:
                return f
            case App(h, (u,)) if h in _INT_TABLE and u == x:
                return _INT_TABLE[h](u)
    # one factor g(f); the rest must equal df(f,x) up to a factor free of x
    for i, g in enumerate(core):
        rest = core[:i] + core[i + 1:]
        for f, big_g in _antiderivatives(g):
            dfv = s._norm(_d(s, f, x))
            if dfv == ZERO:
                continue
            ratio = s._norm(Quo(mul(*rest), dfv))
            if s._free_of(ratio, x):
                return mul(ratio, big_g)
    return None


def _linear_in(s, u: Expr, x: Sym) -> Optional[tuple[Expr, Expr]]:
    """u = a*x + b with a, b free of x; returns (a, b) or None."""
    du = s._norm(_d(s, u, x))
    if du == ZERO or not s._free_of(du, x):
        return None
    b = s._norm(Add((u, Neg(Mul((du, x))))))
    if not s._free_of(b, x):
        return None
    return du, b


def _antiderivatives(g: Expr) -> list[tuple[Expr, Expr]]:
    """Candidate (f, G(f)) pairs with G' = g, tried in order."""
    out: list[tuple[Expr, Expr]] = []
    match g:
        case App(h, (u,)) if h in _INT_TABLE:
            out.append((u, _INT_TABLE[h](u)))
        case Pow(b, Num(n)):
            out.append((b, app("log", b)) if n == -1 else
                       (b, Quo(Pow(b, Num(n + 1)), Num(n + 1))))
    if not isinstance(g, (Add, Mul, Quo, Neg, Num, Flt, Str)):
        # the factor itself as f, covering integrands of the form f'*f
        out.append((g, Quo(Pow(g, num(2)), num(2))))
    return out


# -- taylor series ------------------------------------------------------------


@dataclass
class SeriesExpansion:
    var: Sym
    point: Expr
    coeffs: list[Expr]
    order: int

    def to_expr(self) -> Expr:
        base = self.var if self.point == ZERO else \
            Add((self.var, Neg(self.point)))
        terms = []
        for k, c in enumerate(self.coeffs):
            if c == ZERO:
                continue
            if k == 0:
                terms.append(c)
            else:
                terms.append(mul(c, base if k == 1 else Pow(base, num(k))))
        return add(*terms) if terms else ZERO


def _at_point(s, e: Expr, x: Sym, pt: Expr) -> Expr:
    try:
        return s._full(apply_literal(e, {x: pt}))
    except DivisionByZero:
        raise SingularPoint("the expansion point is singular")


def taylor_series(s, e: Expr, x: Sym, pt: Expr, n: int) -> SeriesExpansion:
    coeffs: list[Expr] = []
    cur = s._full(e)
    fact = 1
    for k in range(n + 1):
        if k > 0:
            fact *= k
        val = _at_point(s, cur, x, pt)
        coeffs.append(s._norm(Quo(val, num(fact))) if fact > 1 else val)
        if k < n:
            cur = s._norm(_d(s, cur, x))
    return SeriesExpansion(x, pt, coeffs, n)


def taylor(s, args) -> Expr:
    if len(args) != 4:
        raise EvalError(
            "taylor expects taylor(expression, variable, point, order)")
    e = s._req(args[0])
    x = _var(s._req(args[1]))
    pt = s._norm(s._req(args[2]))
    n = s._int(args[3])
    if n < 0:
        raise EvalError("taylor order must not be negative")
    return s._norm(taylor_series(s, e, x, pt, n).to_expr())


# -- limits -------------------------------------------------------------------


def limit(s, args) -> Expr:
    if len(args) == 2 and isinstance(args[1], Eqn):
        e_raw, x_raw, pt_raw = args[0], args[1].lhs, args[1].rhs
    elif len(args) == 3:
        e_raw, x_raw, pt_raw = args
    else:
        raise EvalError("limit expects limit(expression, variable, point)")
    e = s._full(e_raw)
    x = _var(s._req(x_raw))
    pt = s._norm(s._req(pt_raw))
    if pt == sym("infinity"):
        r = _limit_inf(s, e, x)
    else:
        r = None
        for order in (8, 16):
            r = _limit_series(s, e, x, pt, order)
            if r is not None:
                break
    return r if r is not None else App("limit", (e, x, pt))


def _limit_series(s, e: Expr, x: Sym, pt: Expr, order: int) -> Optional[Expr]:
    nf = N.to_nf(s.nctx(), e)
    nume = N.nf_to_expr(N.NF(nf.num, _poly_one()))
    dene = N.nf_to_expr(N.NF(nf.den, _poly_one()))
    try:
        sn = taylor_series(s, nume, x, pt, order)
        sd = taylor_series(s, dene, x, pt, order)
    except (SingularPoint, EvalError):
        return None
    kn = _first_nonzero(sn.coeffs)
    kd = _first_nonzero(sd.coeffs)
    if kd is None:
        return None
    if kn is None:
        # numerator vanished to this order; trust only the deeper pass
        return ZERO if order > 8 else None
    if kn > kd:
        return ZERO
    if kn == kd:
        return s._norm(Quo(sn.coeffs[kn], sd.coeffs[kd]))
    return None


def _first_nonzero(coeffs: list[Expr]) -> Optional[int]:
    for k, c in enumerate(coeffs):
        if c != ZERO:
            return k
    return None


def _limit_inf(s, e: Expr, x: Sym) -> Optional[Expr]:
    decayed = _drop_decay(s, e, x)
    if decayed is not None:
        e = s._norm(decayed)
    nf = N.to_nf(s.nctx(), e)
    dn = _poly_degree(nf.num, x)
    dd = _poly_degree(nf.den, x)
    if dn is None or dd is None:
        return None
    if dn < dd:
        return ZERO
    if dn == dd:
        return s._norm(Quo(_coeff_of(nf.num, x, dn), _coeff_of(nf.den, x, dd)))
    return sym("infinity")


def _num_value(e: Expr) -> Optional[Fraction]:
    match e:
        case Num(v):
            return v
        case Quo(a, b):
            va, vb = _num_value(a), _num_value(b)
            if va is None or not vb:
                return None
            return va / vb
        case Neg(a):
            v = _num_value(a)
            return None if v is None else -v
        case _:
            return None


def _is_decay(s, b: Optional[Fraction], p: Expr, x: Sym) -> Optional[bool]:
    """Whether b**p tends to 0 as x grows; None when p is not linear in x."""
    if b is None or b == 0 or abs(b) == 1:
        return None
    lin = _linear_in(s, p, x)
    if lin is None or not isinstance(lin[0], Num):
        return None
    return (abs(b) < 1) == (lin[0].value > 0)


def _drop_decay(s, e: Expr, x: Sym) -> Optional[Expr]:
    """Replace r**(a*x+b) by 0 when it decays; quotients whose denominator
    grows that way collapse to 0 as well."""
    hit = False

    def grows(node: Expr) -> bool:
        for n in walk(node):
            if isinstance(n, Pow) and \
                    _is_decay(s, _num_value(n.base), n.exp, x) is False:
                return True
        return False

    def go(node: Expr) -> Expr:
        nonlocal hit
        match node:
            case Pow(b, p) if _is_decay(s, _num_value(b), p, x):
                hit = True
                return ZERO
            case Add(ts):
                return Add(tuple(go(t) for t in ts))
            case Mul(fs):
                return Mul(tuple(go(f) for f in fs))
            case Quo(a, b):
                if grows(b) and not grows(a):
                    hit = True
                    return ZERO
                return Quo(go(a), go(b))
            case Neg(a):
                return Neg(go(a))
            case _:
                return node

    out = go(e)
    return out if hit else None


# -- polynomial views over normal forms -----------------------------------------


def _poly_degree(p: P.Poly, x: Sym) -> Optional[int]:
    """Degree in x of an NF polynomial; None when x hides inside a kernel."""
    deg = 0
    for m, _c in p.items():
        d = 0
        for k, e in m[0]:
            if k == x:
                if e < 0:
                    return None
                d += e
            elif not _kernel_free(k, x):
                return None
        for k, _e in m[1]:
            if k == x or not _kernel_free(k, x):
                return None
        deg = max(deg, d)
    return deg


def _kernel_free(k: Expr, x: Sym) -> bool:
    return all(n != x for n in walk(k))


def _coeff_of(p: P.Poly, x: Sym, k: int) -> Expr:
    out: P.Poly = {}
    for m, c in p.items():
        d = dict(m[0])
        if d.get(x, 0) == k:
            d.pop(x, None)
            out[P.mono_make(d.items(), m[1])] = c
    return N.nf_to_expr(N.NF(out, _poly_one())) if out else ZERO


def _nf_polynomial(s, e: Expr, x: Sym) -> tuple[list[Expr], Expr]:
    """Coefficients (low to high) in x plus the x-free denominator."""
    nf = N.to_nf(s.nctx(), e)
    deg = _poly_degree(nf.num, x)
    den = N.nf_to_expr(N.NF(nf.den, _poly_one()))
    if deg is None or not s._free_of(den, x):
        raise NotPolynomial(f"not a polynomial in {x.name}")
    return [s._norm(_coeff_of(nf.num, x, k)) for k in range(deg + 1)], den


# -- closed-form summation ------------------------------------------------------


def sum_closed(s, args) -> Expr:
    if len(args) == 2 and isinstance(args[1], Eqn):
        rng = args[1].rhs
        if not (isinstance(rng, App) and rng.head == "%range"):
            raise EvalError("sum expects a range like i = 1 .. n")
        term_raw, var_raw = args[0], args[1].lhs
        lo_raw, hi_raw = rng.args
    elif len(args) == 4:
        term_raw, var_raw, lo_raw, hi_raw = args
    else:
        raise EvalError("sum expects sum(term, variable, low, high)")
    x = _var(var_raw if isinstance(var_raw, Sym) else s._req(var_raw))
    saved = s.bindings.pop(x.name, None)
    try:
        term = s._full(term_raw)
    finally:
        if saved is not None:
            s.bindings[x.name] = saved
    lo = s._renorm(lo_raw)
    hi = s._renorm(hi_raw)
    r = _sum_closed(s, term, x, lo, hi)
    return r if r is not None else App("sum", (term, x, lo, hi))


def _is_int(e: Expr) -> bool:
    return isinstance(e, Num) and e.value.denominator == 1


def _sum_closed(s, term: Expr, x: Sym, lo: Expr, hi: Expr) -> Optional[Expr]:
    if _is_int(lo) and _is_int(hi):
        total: list[Expr] = []
        for k in range(int(lo.value), int(hi.value) + 1):
            s.budget.tick()
            total.append(s._norm(apply_literal(term, {x: num(k)})))
        return s._norm(add(*total)) if total else ZERO
    if s._free_of(term, x):
        return s._norm(Mul((Add((hi, Neg(lo), ONE)), term)))
    for attempt in (_sum_poly, _sum_geometric, _sum_telescope):
        r = attempt(s, term, x, lo, hi)
        if r is not None:
            return r
    return None


_FAULHABER = {
    0: lambda n: n,
    1: lambda n: Quo(Mul((n, Add((n, ONE)))), num(2)),
    2: lambda n: Quo(Mul((n, Add((n, ONE)), Add((Mul((num(2), n)), ONE)))),
                     num(6)),
    3: lambda n: Quo(Mul((Pow(n, num(2)), Pow(Add((n, ONE)), num(2)))),
                     num(4)),
    4: lambda n: Quo(Mul((n, Add((n, ONE)), Add((Mul((num(2), n)), ONE)),
                          Add((Mul((num(3), Pow(n, num(2)))),
                               Mul((num(3), n)), num(-1))))), num(30)),
}


def _sum_poly(s, term: Expr, x: Sym, lo: Expr, hi: Expr) -> Optional[Expr]:
    try:
        coeffs, den = _nf_polynomial(s, term, x)
    except (NotPolynomial, EvalError):
        return None
    if len(coeffs) - 1 > 4:
        return None
    lom1 = s._norm(Add((lo, Neg(ONE))))
    parts: list[Expr] = []
    for k, c in enumerate(coeffs):
        if c == ZERO:
            continue
        fk = _FAULHABER[k]
        parts.append(Mul((c, Add((fk(hi), Neg(fk(lom1)))))))
    if not parts:
        return ZERO
    return s._norm(Quo(add(*parts), den))


def _mul_factors(e: Expr) -> Optional[list[Expr]]:
    """Flatten a term into multiplicative factors, folding quotients into
    negative powers; None when the shape is not a plain product."""
    match e:
        case Mul(fs):
            out = []
            for f in fs:
                sub = _mul_factors(f)
                if sub is None:
                    return None
                out.extend(sub)
            return out
        case Quo(a, b):
            na, nb = _mul_factors(a), _mul_factors(b)
            if na is None or nb is None:
                return None
            inv = []
            for f in nb:
                match f:
                    case Pow(base, Num(n)):
                        inv.append(Pow(base, Num(-n)))
                    case Pow(base, p):
                        inv.append(Pow(base, Neg(p)))
                    case _:
                        inv.append(Pow(f, num(-1)))
            return na + inv
        case Neg(a):
            sub = _mul_factors(a)
            return None if sub is None else [num(-1)] + sub
        case _:
            return [e]


def _sum_geometric(s, term: Expr, x: Sym, lo: Expr, hi: Expr) -> Optional[Expr]:
    factors = _mul_factors(term)
    if factors is None:
        return None
    c_parts: list[Expr] = []
    ratio: Optional[Expr] = None
    shift: Expr = ONE
    for f in factors:
        if s._free_of(f, x):
            c_parts.append(f)
            continue
        match f:
            case Pow(b, p) if s._free_of(b, x):
                ab = _linear_in(s, p, x)
                if ab is None or ratio is not None:
                    return None
                a, b0 = ab
                ratio = s._norm(Pow(b, a))
                shift = s._norm(Pow(b, b0))
            case _:
                return None
    if ratio is None or ratio == ONE:
        return None
    one_minus = s._norm(Add((ONE, Neg(ratio))))
    if one_minus == ZERO:
        return None
    series = Add((Pow(ratio, lo), Neg(Pow(ratio, Add((hi, ONE))))))
    c = mul(*(c_parts + [shift]))
    return s._norm(Quo(Mul((c, series)), one_minus))


def _sum_telescope(s, term: Expr, x: Sym, lo: Expr, hi: Expr) -> Optional[Expr]:
    """c/((x+a)(x+a+1)) telescopes to c/(lo+a) - c/(hi+a+1)."""
    nf = N.to_nf(s.nctx(), term)
    if not P.p_is_const(nf.num):
        return None
    cval = P.p_const_value(nf.num)
    if not isinstance(cval, Fraction):
        return None
    den = N.nf_to_expr(N.NF(nf.den, _poly_one()))
    dnf = N.to_nf(s.nctx(), den)
    if _poly_degree(dnf.num, x) != 2:
        return None
    c2 = _coeff_of(dnf.num, x, 2)
    c1 = _coeff_of(dnf.num, x, 1)
    c0 = _coeff_of(dnf.num, x, 0)
    if not all(isinstance(c, Num) for c in (c2, c1, c0)):
        return None
    # den = c2*(x+a)(x+a+1) needs c1 = c2*(2a+1) and c0 = c2*a*(a+1)
    a = (Fraction(c1.value, c2.value) - 1) / 2
    if c2.value * a * (a + 1) != c0.value:
        return None
    cc = Num(Fraction(cval, c2.value))
    first = Quo(cc, Add((lo, Num(a))))
    last = Quo(cc, Add((hi, Num(a), ONE)))
    return s._norm(Add((first, Neg(last))))


# -- coefficient extraction -----------------------------------------------------


def coeff(s, args) -> Expr:
    if len(args) not in (2, 3):
        raise EvalError("coeff expects coeff(poly, kernel [, power])")
    e = s._full(args[0])
    kern = s._norm(s._req(args[1]))
    if not isinstance(kern, Sym):
        raise EvalError("coeff expects a kernel name")
    coeffs, den = _nf_polynomial(s, e, kern)
    if len(args) == 3:
        k = s._int(args[2])
        c = coeffs[k] if 0 <= k < len(coeffs) else ZERO
        return s._norm(Quo(c, den))
    return Lst(tuple(s._norm(Quo(c, den)) for c in coeffs))


# -- solve ----------------------------------------------------------------------


def solve_cmd(s, args) -> Expr:
    if not args:
        raise EvalError("solve needs an equation")
    eq_v = s._req(args[0])
    eqns = list(eq_v.items) if isinstance(eq_v, Lst) else [eq_v]
    exprs = [s._full(Add((q.lhs, Neg(q.rhs)))) if isinstance(q, Eqn)
             else s._full(q) for q in eqns]
    if len(args) >= 2:
        u_v = s._req(args[1])
        unknowns = [_var(u) for u in
                    (u_v.items if isinstance(u_v, Lst) else [u_v])]
    else:
        free = sorted({n.name for e in exprs for n in walk(e)
                       if isinstance(n, Sym)
                       and n.name not in ("e", "i", "pi", "infinity", "nil")})
        unknowns = [sym(n) for n in free]
        if len(unknowns) != len(exprs):
            raise EvalError("solve cannot infer the unknowns, name them")
    if len(exprs) == 1 and len(unknowns) == 1:
        roots = _solve_uni(s, exprs[0], unknowns[0])
        return Lst(tuple(Eqn(unknowns[0], r) for r in roots))
    if len(exprs) == 2 and len(unknowns) == 2:
        sols = _solve_pair(s, exprs, unknowns)
        return Lst(tuple(Lst(tuple(Eqn(u, v) for u, v in zip(unknowns, sol)))
                         for sol in sols))
    raise SystemTooHard("solve handles one equation or a pair of two")


def _solve_uni(s, e: Expr, x: Sym) -> list[Expr]:
    coeffs, _den = _nf_polynomial(s, e, x)
    while len(coeffs) > 1 and coeffs[-1] == ZERO:
        coeffs.pop()
    if len(coeffs) == 1:
        if coeffs[0] == ZERO:
            raise EvalError("solve: the equation holds identically")
        raise EvalError("solve: no solution")
    roots: list[Expr] = []
    if len(coeffs) > 3:
        if not all(isinstance(c, Num) for c in coeffs):
            return [App("root_of", (s._norm(e), x, num(i + 1)))
                    for i in range(len(coeffs) - 1)]
        rat, rest = _rational_roots([c.value for c in coeffs])
        roots.extend(num(r) for r in rat)
        coeffs = [num(c) for c in rest]
    if len(coeffs) == 2:
        roots += [s._norm(Quo(Neg(coeffs[0]), coeffs[1]))]
    elif len(coeffs) == 3:
        roots += _quadratic(s, coeffs)
    elif len(coeffs) > 3:
        rem = s._norm(add(*[mul(c, Pow(x, num(k))) if k else c
                            for k, c in enumerate(coeffs)]))
        roots += [App("root_of", (rem, x, num(i + 1)))
                  for i in range(len(coeffs) - 1)]
    if not s.switches.get("multiplicities"):
        uniq: list[Expr] = []
        for r in roots:
            if r not in uniq:
                uniq.append(r)
        roots = uniq
    return roots


def _rational_roots(coeffs: list[Fraction]) \
        -> tuple[list[Fraction], list[Fraction]]:
    """Strip rational roots; returns (roots, remaining coeffs low to high)."""
    ints = _clear_to_ints(coeffs)
    roots: list[Fraction] = []
    while len(ints) > 3:
        if ints[0] == 0:
            roots.append(Fraction(0))
            ints = ints[1:]
            continue
        hit = None
        for r in _root_candidates(ints):
            if _poly_eval(ints, r) == 0:
                hit = r
                break
        if hit is None:
            break
        roots.append(hit)
        ints = _clear_to_ints(_deflate(ints, hit))
    return roots, [Fraction(c) for c in ints]


def _clear_to_ints(coeffs) -> list[int]:
    lcm = 1
    for c in coeffs:
        c = Fraction(c)
        lcm = lcm * c.denominator // math.gcd(lcm, c.denominator)
    return [int(Fraction(c) * lcm) for c in coeffs]


def _root_candidates(ints: list[int]) -> list[Fraction]:
    cands = {Fraction(sp * p, q)
             for p in _divisors(abs(ints[0]))
             for q in _divisors(abs(ints[-1]))
             for sp in (1, -1)}
    return sorted(cands, key=lambda f: (abs(f), -f))


def _divisors(n: int) -> list[int]:
    out = set()
    d = 1
    while d * d <= n:
        if n % d == 0:
            out.add(d)
            out.add(n // d)
        d += 1
    return sorted(out) if out else [1]


def _poly_eval(ints: list[int], r: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(ints):
        acc = acc * r + c
    return acc


def _deflate(ints: list[int], r: Fraction) -> list[Fraction]:
    """Synthetic division by (x - r); the remainder is zero by construction."""
    out: list[Fraction] = [Fraction(0)] * (len(ints) - 1)
    carry = Fraction(0)
    for k in range(len(ints) - 1, 0, -1):
        carry = Fraction(ints[k]) + carry * r
        out[k - 1] = carry
    return out


def _quadratic(s, coeffs: list[Expr]) -> list[Expr]:
    c, b, a = coeffs
    if isinstance(a, Num) and a.value < 0:
        c, b, a = (s._norm(Neg(t)) for t in (c, b, a))
    disc = s._norm(Add((Pow(b, num(2)), Neg(Mul((num(4), a, c))))))
    sq = s._full(app("sqrt", disc))
    two_a = Mul((num(2), a))
    return [s._norm(Quo(Add((Neg(b), sq)), two_a)),
            s._norm(Quo(Add((Neg(b), Neg(sq))), two_a))]


def _solve_pair(s, exprs: list[Expr], unknowns: list[Sym]) -> list[list[Expr]]:
    for ei, e in enumerate(exprs):
        for u in unknowns:
            cs = _try_linear(s, e, u)
            if cs is None:
                continue
            c1, c0 = cs
            v = unknowns[0] if u == unknowns[1] else unknowns[1]
            u_expr = s._norm(Quo(Neg(c0), c1))
            reduced = s._norm(apply_literal(exprs[1 - ei], {u: u_expr}))
            sols = []
            for rv in _solve_uni(s, reduced, v):
                uu = s._norm(apply_literal(u_expr, {v: rv}))
                by_name = {u: uu, v: rv}
                sols.append([by_name[w] for w in unknowns])
            return sols
    raise SystemTooHard("no unknown appears linearly")


def _try_linear(s, e: Expr, u: Sym) -> Optional[tuple[Expr, Expr]]:
    try:
        cs, _den = _nf_polynomial(s, e, u)
    except NotPolynomial:
        return None
    if len(cs) != 2 or not s._free_of(cs[1], u):
        return None
    return cs[1], cs[0]
