"""Canonical rational normal form driven by the switch set.

A value is held as a quotient of two expanded polynomials over exact
coefficients, with every non-polynomial subterm (function application,
symbolic power, unexpanded sum when `exp` is off, reciprocal when `mcd` is
off) abstracted as an opaque kernel.  Turning display switches changes only
how the quotient is rendered back into an expression tree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from . import poly as P
from .errors import BudgetExceeded, CasError, DivisionByZero, EvalError
from .expr import (
    Add, App, Eqn, Expr, Flt, FormE, Lst, MatV, Mul, Neg, Num, PVar, Pow, Quo,
    RuleE, Str, Sym, ZERO, ONE, as_int, num, order_key,
)

SWITCH_NAMES = (
    "allfac", "div", "exp", "mcd", "lcm", "gcd", "rat", "ratpri", "pri",
    "revpri", "rounded", "complex", "nero", "nat", "msg", "tex",
    "multiplicities", "comp",
)

_DEFAULT_ON = {"allfac", "exp", "mcd", "lcm", "ratpri", "pri", "nat", "msg"}


@dataclass
class SwitchSet:
    values: dict = field(default_factory=lambda: {n: (n in _DEFAULT_ON) for n in SWITCH_NAMES})
    extras: dict = field(default_factory=dict)

    def get(self, name: str) -> bool:
        if name in self.values:
            return self.values[name]
        return self.extras.get(name, False)

    def set(self, name: str, on: bool) -> bool:
        """Returns True when the name is a known switch."""
        if name in self.values:
            self.values[name] = on
            return True
        self.extras[name] = on
        return False

    def copy(self) -> "SwitchSet":
        return SwitchSet(dict(self.values), dict(self.extras))

    def __getattr__(self, name):
        values = object.__getattribute__(self, "values")
        if name in values:
            return values[name]
        raise AttributeError(name)


class StepCounter:
    __slots__ = ("limit", "used")

    def __init__(self, limit: int = 10**6):
        self.limit = limit
        self.used = 0

    def reset(self):
        self.used = 0

    def tick(self, n: int = 1):
        self.used += n
        if self.used > self.limit:
            raise BudgetExceeded()


@dataclass
class NCtx:
    """Everything normalization needs to know about the session."""

    sw: SwitchSet = field(default_factory=SwitchSet)
    priority: tuple = ()
    factors: tuple = ()
    budget: StepCounter = field(default_factory=StepCounter)
    warnings: list = field(default_factory=list)
    noncom: frozenset = frozenset()
    requo: int = 0

    def warn(self, msg: str):
        self.warnings.append(msg)


class NF:
    __slots__ = ("num", "den")

    def __init__(self, num: P.Poly, den: P.Poly):
        self.num = num
        self.den = den

    def is_zero(self) -> bool:
        return not self.num

    def is_const(self) -> bool:
        return P.p_is_const(self.num) and P.p_is_const(self.den)

    def const_value(self):
        return P.p_const_value(self.num) / P.p_const_value(self.den)


def nf_const(c) -> NF:
    return NF(P.p_const(c), P.p_const(Fraction(1)))


def nf_kernel(k: Expr, noncom: bool = False) -> NF:
    if noncom:
        return NF({P.mono_make([], [(k, 1)]): Fraction(1)}, P.p_const(Fraction(1)))
    return NF(P.p_kernel(k), P.p_const(Fraction(1)))


# -- square-free helpers for radicals ----------------------------------------


def _square_part(n: int) -> tuple[int, int]:
    """n = s*s*f with f square free (n >= 0).  Returns (s, f)."""
    if n in (0, 1):
        return (1, n)
    s, f, d = 1, 1, 2
    while d * d <= n:
        while n % (d * d) == 0:
            s *= d
            n //= d * d
        if n % d == 0:
            f *= d
            n //= d
        d += 1
    return (s, f * n)


def _int_nth_root(n: int, k: int) -> Optional[int]:
    if n < 0:
        return None
    r = round(n ** (1.0 / k))
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand ** k == n:
            return cand
    return None


# -- monomial folding ----------------------------------------------------------

I_SYM = Sym("i")


def _pow_base_exp(k: Expr) -> tuple[Expr, Expr]:
    if isinstance(k, Pow):
        return k.base, k.exp
    return k, ONE


def _mono_normalize(ctx: NCtx, m: P.Mono, c) -> P.Poly:
    """Rewrite a raw monomial: fold powers of i, merge same-base symbolic
    powers, pull integer parts out of fractional powers."""
    comm, noncom = m
    plain: list = []
    groups: dict[Expr, list] = {}
    has_pow = set()
    for k, e in comm:
        base, bexp = _pow_base_exp(k)
        if isinstance(k, Pow):
            has_pow.add(base)
        groups.setdefault(base, []).append((k, e))
    changed = False
    pieces: list[P.Poly] = []
    for base, entries in groups.items():
        if base == I_SYM:
            etot = sum(e for _, e in entries)
            changed = changed or (etot not in (0, 1)) or len(entries) > 1
            r = etot % 4
            if r in (2, 3):
                c = -c
            if r in (1, 3):
                plain.append((I_SYM, 1))
            continue
        if base not in has_pow:
            plain.extend(entries)
            continue
        # combine exponents symbolically
        total = nf_const(Fraction(0))
        for k, e in entries:
            _, bexp = _pow_base_exp(k)
            total = nf_add(ctx, total, nf_mul(ctx, to_nf(ctx, bexp), nf_const(Fraction(e))))
        if total.is_zero():
            changed = True
            continue
        if total.is_const() and not P.p_is_float(total.num):
            q = total.const_value()
            if q.denominator == 1:
                changed = True
                if isinstance(base, (Sym, App, PVar)):
                    # the base is itself a kernel; attaching the power directly
                    # avoids a multiply that would regroup to this same monomial
                    plain.append((base, int(q)))
                else:
                    pieces.append((base, int(q)))
                continue
            ip = q.numerator // q.denominator
            fr = q - ip
            if ip != 0:
                changed = True
                if isinstance(base, (Sym, App, PVar)):
                    plain.append((base, ip))
                else:
                    pieces.append((base, ip))
            newk = Pow(base, Num(fr))
            if len(entries) != 1 or entries[0][0] != newk or entries[0][1] != 1:
                changed = True
            plain.append((newk, 1))
            continue
        expc = nf_to_expr(total)
        newk = Pow(base, expc)
        if len(entries) != 1 or entries[0][0] != newk or entries[0][1] != 1:
            changed = True
        plain.append((newk, 1))
    if not changed:
        mono = P.mono_make(plain, noncom)
        return {mono: c} if c != 0 else {}
    out: P.Poly = {P.mono_make(plain, noncom): c}
    for base, n in pieces:
        bnf = to_nf(ctx, base)
        pw = nf_ipow(ctx, bnf, n)
        if P.p_is_const(pw.den) and P.p_const_value(pw.den) == 1:
            out = _pmul(ctx, out, pw.num)
            continue
        # opaque quotient base: splice base**n into each monomial directly.
        # Multiplying the expanded power through _pmul would regroup it with
        # fractional powers of the same base without terminating, and its
        # kernel shape would no longer match plain products of the base.
        ke = nf_to_expr(bnf)
        out2: P.Poly = {}
        for m, mc in out.items():
            m2 = P.mono_make(list(m[0]) + [(ke, n)], m[1])
            s = out2.get(m2, Fraction(0)) + mc
            if s != 0:
                out2[m2] = s
            else:
                out2.pop(m2, None)
        out = out2
    return out


def _pmul(ctx: NCtx, a: P.Poly, b: P.Poly) -> P.Poly:
    return P.p_mul(a, b, lambda m, c: _mono_normalize(ctx, m, c), ctx.budget.tick)


# -- core arithmetic -----------------------------------------------------------


def nf_add(ctx: NCtx, a: NF, b: NF) -> NF:
    ctx.budget.tick()
    if a.den == b.den:
        return _post(ctx, NF(P.p_add(a.num, b.num), dict(a.den)))
    n = P.p_add(_pmul(ctx, a.num, b.den), _pmul(ctx, b.num, a.den))
    d = _pmul(ctx, a.den, b.den)
    return _post(ctx, NF(n, d))


def nf_neg(a: NF) -> NF:
    return NF(P.p_neg(a.num), dict(a.den))


def _multi_term(p: P.Poly) -> bool:
    return len(p) > 1


def _kernelize(ctx: NCtx, nf: NF) -> Expr:
    return nf_to_expr(nf)


def nf_mul(ctx: NCtx, a: NF, b: NF) -> NF:
    ctx.budget.tick()
    if not ctx.sw.get("exp"):
        a = _opaque_if_sum(ctx, a)
        b = _opaque_if_sum(ctx, b)
    n = _pmul(ctx, a.num, b.num)
    d = _pmul(ctx, a.den, b.den)
    return _post(ctx, NF(n, d))


def _opaque_if_sum(ctx: NCtx, a: NF) -> NF:
    if _multi_term(a.num):
        k = _kernelize(ctx, NF(a.num, P.p_const(Fraction(1))))
        return NF(P.p_kernel(k), dict(a.den))
    return a


def nf_div(ctx: NCtx, a: NF, b: NF) -> NF:
    if b.is_zero():
        raise DivisionByZero()
    return nf_mul(ctx, a, nf_ipow(ctx, b, -1))


def nf_ipow(ctx: NCtx, base: NF, n: int) -> NF:
    ctx.budget.tick()
    if n == 0:
        if base.is_zero():
            ctx.warn("0**0 replaced by 1")
        return nf_const(Fraction(1))
    if base.is_zero():
        if n < 0:
            raise DivisionByZero("0 raised to a negative power")
        return nf_const(Fraction(0))
    if n == 1:
        return _post(ctx, NF(dict(base.num), dict(base.den)))
    if n < 0:
        if ctx.sw.get("mcd"):
            inv = NF(dict(base.den), dict(base.num))
            return nf_ipow(ctx, inv, -n)
        # quotients are not collected: invert monomials, kernelize sums
        if len(base.num) == 1 and P.p_is_const(base.den):
            (mono, c), = base.num.items()
            if not mono[1]:
                dc = P.p_const_value(base.den)
                comm = [(k, -e) for k, e in mono[0]]
                out = NF({P.mono_make(comm): dc / c}, P.p_const(Fraction(1)))
                return nf_ipow(ctx, out, -n)
        return nf_ipow_opaque(ctx, base, n)
    if not ctx.sw.get("exp") and (_multi_term(base.num) or _multi_term(base.den)):
        return nf_ipow_opaque(ctx, base, n)
    nnum = base.num
    nden = base.den
    outn = P.p_const(Fraction(1))
    outd = P.p_const(Fraction(1))
    k = n
    while k:
        if k & 1:
            outn = _pmul(ctx, outn, nnum)
            outd = _pmul(ctx, outd, nden)
        k >>= 1
        if k:
            nnum = _pmul(ctx, nnum, nnum)
            nden = _pmul(ctx, nden, nden)
    return _post(ctx, NF(outn, outd))


def nf_ipow_opaque(ctx: NCtx, base: NF, n: int) -> NF:
    k = _kernelize(ctx, base)
    if isinstance(k, Pow) and isinstance(k.exp, Num) and k.exp.is_integer:
        # collapse nested integer powers
        return _post(ctx, NF({P.mono_make([(k.base, int(k.exp.value) * n)]): Fraction(1)}, P.p_const(Fraction(1))))
    return _post(ctx, NF({P.mono_make([(k, n)]): Fraction(1)}, P.p_const(Fraction(1))))


def nf_pow(ctx: NCtx, base: NF, expo: NF) -> NF:
    if expo.is_const() and not P.p_is_float(expo.num) and not P.p_is_float(expo.den):
        q = expo.const_value()
        if q.denominator == 1:
            return nf_ipow(ctx, base, int(q))
        return _nf_radical(ctx, base, q)
    if expo.is_const() and (P.p_is_float(expo.num) or P.p_is_float(expo.den)):
        bv = base.const_value() if base.is_const() else None
        if bv is not None and float(bv) >= 0:
            return nf_const(float(bv) ** float(expo.const_value()))
    if base.is_zero():
        return nf_const(Fraction(0))
    if base.is_const() and base.const_value() == 1:
        return nf_const(Fraction(1))
    return nf_kernel(Pow(nf_to_expr(base), nf_to_expr(expo)))


def _neg_unit(ctx: NCtx, out: NF, q: Fraction) -> NF:
    """Multiply by (-1)**q."""
    ip = q.numerator // q.denominator
    fr = q - ip
    if ip % 2:
        out = nf_neg(out)
    if fr == Fraction(1, 2):
        out = nf_mul(ctx, out, nf_kernel(I_SYM))
    elif fr:
        out = nf_mul(ctx, out, nf_kernel(Pow(Num(Fraction(-1)), Num(fr))))
    return out


def _nf_radical(ctx: NCtx, base: NF, q: Fraction) -> NF:
    """base ** q with q a non-integer rational."""
    if base.is_zero():
        if q < 0:
            raise DivisionByZero("0 raised to a negative power")
        return nf_const(Fraction(0))
    if base.is_const():
        v = base.const_value()
        if isinstance(v, float) or P.p_is_float(base.num):
            fv = float(v)
            if fv >= 0:
                return nf_const(fv ** float(q))
            return _neg_unit(ctx, nf_const((-fv) ** float(q)), q)
        neg = v < 0
        av = abs(v)
        ip = q.numerator // q.denominator
        fr = q - ip
        out = nf_const(av ** ip)
        if fr:
            if fr == Fraction(1, 2):
                sn, fn = _square_part(av.numerator)
                sd, fd = _square_part(av.denominator)
                out = nf_mul(ctx, out, nf_const(Fraction(sn, sd * fd)))
                if fn * fd != 1:
                    out = nf_mul(ctx, out, nf_kernel(Pow(num(fn * fd), Num(Fraction(1, 2)))))
            else:
                rn = _int_nth_root(av.numerator, fr.denominator)
                rd = _int_nth_root(av.denominator, fr.denominator)
                if rn is not None and rd is not None:
                    out = nf_mul(ctx, out, nf_const(Fraction(rn, rd) ** fr.numerator))
                else:
                    out = nf_mul(ctx, out, nf_kernel(Pow(Num(av), Num(fr))))
        if neg:
            out = _neg_unit(ctx, out, q)
        return out
    ip = q.numerator // q.denominator
    fr = q - ip
    base_e = nf_to_expr(base)
    out = nf_ipow(ctx, base, ip) if ip else nf_const(Fraction(1))
    return nf_mul(ctx, out, nf_kernel(Pow(base_e, Num(fr))))


# -- quotient post-processing --------------------------------------------------


def _post(ctx: NCtx, nf: NF) -> NF:
    """Clear coefficient denominators, cancel content, then the switch-gated
    cancellation levels, then normalize the sign of the denominator."""
    nfloat = P.p_is_float(nf.num) or P.p_is_float(nf.den)
    numP, denP = nf.num, nf.den
    if not numP:
        if not denP:
            raise DivisionByZero()
        return NF({}, P.p_const(Fraction(1)))
    if nfloat:
        numP = {m: float(c) for m, c in numP.items()}
        denP = {m: float(c) for m, c in denP.items()}
        if P.p_is_const(denP):
            dv = P.p_const_value(denP)
            if dv == 0.0:
                raise DivisionByZero()
            numP = {m: c / dv for m, c in numP.items()}
            denP = P.p_const(Fraction(1))
            numP = {m: c for m, c in numP.items() if c != 0.0}
        return NF(numP, denP)
    # quotient-shaped kernels appear transiently when fractional powers of a
    # composite base combine to an integer; re-expanding the expression folds
    # them into the num/den polynomials so cancellation can see them
    if ctx.requo < 3 and any(isinstance(k, Quo)
                             for p in (numP, denP) for m in p for k, _ in m[0]):
        ctx.requo += 1
        try:
            return to_nf(ctx, nf_to_expr(NF(numP, denP)))
        finally:
            ctx.requo -= 1
    # exact path: clear denominators
    numP, denP = _scale_int(numP, denP)
    if ctx.sw.get("mcd"):
        numP, denP = _clear_negative_exponents(numP, denP)
    # monomial kernel content common to both sides always cancels
    numP, denP = _cancel_kernel_content(numP, denP)
    if not P.p_is_const(denP):
        if ctx.sw.get("lcm"):
            if numP == denP:
                return NF(P.p_const(Fraction(1)), P.p_const(Fraction(1)))
            q = P.p_divexact(numP, denP)
            if q is not None:
                numP, denP = _scale_int(q, P.p_const(Fraction(1)))
            else:
                q = P.p_divexact(denP, numP)
                if q is not None and len(q) >= 1:
                    numP, denP = _scale_int(P.p_const(Fraction(1)), q)
        if ctx.sw.get("gcd") and not P.p_is_const(denP):
            g = P.p_gcd(numP, denP)
            if not P.p_is_const(g):
                qn = P.p_divexact(numP, g)
                qd = P.p_divexact(denP, g)
                if qn is not None and qd is not None:
                    numP, denP = _scale_int(qn, qd)
    # sign normalization: leading denominator coefficient positive
    if denP:
        kernels = sorted({k for m in denP for k, _ in m[0]}, key=order_key)
        lead = max(denP, key=lambda m: (sum(dict(m[0]).get(k, 0) for k in kernels),
                                        tuple(dict(m[0]).get(k, 0) for k in kernels)))
        if denP[lead] < 0:
            denP = {m: -c for m, c in denP.items()}
            numP = {m: -c for m, c in numP.items()}
    nf2 = NF(numP, denP)
    if ctx.sw.get("complex"):
        nf2 = _rationalize_i(ctx, nf2)
    return nf2


def _scale_int(numP: P.Poly, denP: P.Poly) -> tuple[P.Poly, P.Poly]:
    """Scale both sides by one integer so all coefficients are integral,
    then cancel the shared numeric content; the value is unchanged."""
    lcm = 1
    for c in list(numP.values()) + list(denP.values()):
        lcm = lcm * c.denominator // math.gcd(lcm, c.denominator)
    if lcm != 1:
        numP = {m: c * lcm for m, c in numP.items()}
        denP = {m: c * lcm for m, c in denP.items()}
    gnum = P.p_numeric_content(numP)
    gden = P.p_numeric_content(denP)
    g = Fraction(math.gcd(gnum.numerator, gden.numerator),
                 math.gcd(gnum.denominator, gden.denominator))
    if g != 1:
        numP = {m: c / g for m, c in numP.items()}
        denP = {m: c / g for m, c in denP.items()}
    return numP, denP



def _clear_negative_exponents(numP: P.Poly, denP: P.Poly) -> tuple[P.Poly, P.Poly]:
    """When quotients are collected, reciprocal kernels k**-n inside terms
    move into the denominator by scaling both sides with k**n."""
    need: dict[Expr, int] = {}
    for p in (numP, denP):
        for m in p:
            for k, e in m[0]:
                if e < 0:
                    need[k] = max(need.get(k, 0), -e)
    if not need:
        return numP, denP
    shift = P.mono_make(need.items())

    def scale(p: P.Poly) -> P.Poly:
        return {P.mono_mul(m, shift): c for m, c in p.items()}

    return scale(numP), scale(denP)


def _cancel_kernel_content(a: P.Poly, b: P.Poly) -> tuple[P.Poly, P.Poly]:
    if not a or not b:
        return a, b

    def common(p: P.Poly) -> dict:
        it = iter(p)
        first = dict(next(it)[0])
        for m in it:
            d = dict(m[0])
            for k in list(first):
                e = min(first[k], d.get(k, 0))
                if e > 0:
                    first[k] = e
                else:
                    first.pop(k)
            if not first:
                break
        return first

    ca, cb = common(a), common(b)
    shared = {k: min(e, cb[k]) for k, e in ca.items() if k in cb}
    shared = {k: e for k, e in shared.items() if e > 0}
    if not shared:
        return a, b

    def strip(p: P.Poly) -> P.Poly:
        out = {}
        for m, c in p.items():
            d = dict(m[0])
            for k, e in shared.items():
                d[k] -= e
            out[P.mono_make(d.items(), m[1])] = c
        return out

    return strip(a), strip(b)


def _split_by_i(p: P.Poly) -> tuple[P.Poly, P.Poly]:
    re, im = {}, {}
    for m, c in p.items():
        d = dict(m[0])
        e = d.pop(I_SYM, 0)
        if e == 0:
            re[m] = c
        else:
            im[P.mono_make(d.items(), m[1])] = c
    return re, im


def _rationalize_i(ctx: NCtx, nf: NF) -> NF:
    has_i = any(k == I_SYM for m in nf.den for k, _ in m[0])
    if not has_i:
        return nf
    re, im = _split_by_i(nf.den)
    conj = P.p_add(re, {m: -c for m, c in _pmul(ctx, im, P.p_kernel(I_SYM)).items()})
    newnum = _pmul(ctx, nf.num, conj)
    newden = _pmul(ctx, nf.den, conj)
    sw = ctx.sw.get("complex")
    ctx.sw.set("complex", False)
    try:
        out = _post(ctx, NF(newnum, newden))
    finally:
        ctx.sw.set("complex", sw)
    return out


# -- conversion in -------------------------------------------------------------


def to_nf(ctx: NCtx, e: Expr) -> NF:
    ctx.budget.tick()
    if isinstance(e, Num):
        if ctx.sw.get("rounded") and not e.is_integer:
            return nf_const(float(e.value))
        return nf_const(e.value)
    if isinstance(e, Flt):
        return nf_const(e.value)
    if isinstance(e, Sym):
        return nf_kernel(e, e.name in ctx.noncom)
    if isinstance(e, Neg):
        return nf_neg(to_nf(ctx, e.arg))
    if isinstance(e, Add):
        out = nf_const(Fraction(0))
        for t in e.terms:
            out = nf_add(ctx, out, to_nf(ctx, t))
        return out
    if isinstance(e, Mul):
        out = nf_const(Fraction(1))
        for f in e.factors:
            out = nf_mul(ctx, out, to_nf(ctx, f))
        return out
    if isinstance(e, Quo):
        return nf_div(ctx, to_nf(ctx, e.num), to_nf(ctx, e.den))
    if isinstance(e, Pow):
        return nf_pow(ctx, to_nf(ctx, e.base), to_nf(ctx, e.exp))
    if isinstance(e, App):
        if e.head == "sqrt" and len(e.args) == 1:
            return nf_pow(ctx, to_nf(ctx, e.args[0]), nf_const(Fraction(1, 2)))
        return nf_kernel(e, e.head in ctx.noncom)
    if isinstance(e, PVar):
        return nf_kernel(e)
    raise EvalError(f"cannot normalize {type(e).__name__} arithmetically")


# -- conversion out ------------------------------------------------------------


def _struct_mono_sort(p: P.Poly) -> list:
    return sorted(p.items(), key=lambda it: (tuple((order_key(k), e) for k, e in it[0][0]),
                                             tuple((order_key(k), e) for k, e in it[0][1])))


def _mono_to_expr(m: P.Mono, c) -> Expr:
    factors: list[Expr] = []
    if isinstance(c, float):
        if c != 1.0:
            factors.append(Flt(c))
    elif c != 1:
        factors.append(Num(c))
    for k, e in m[0]:
        factors.append(k if e == 1 else Pow(k, num(e)))
    for k, e in m[1]:
        factors.append(k if e == 1 else Pow(k, num(e)))
    if not factors:
        return Flt(1.0) if isinstance(c, float) else Num(Fraction(1))
    if len(factors) == 1:
        return factors[0]
    return Mul(tuple(factors))


def poly_to_expr(p: P.Poly) -> Expr:
    if not p:
        return ZERO
    terms = [_mono_to_expr(m, c) for m, c in _struct_mono_sort(p)]
    if len(terms) == 1:
        return terms[0]
    return Add(tuple(terms))


def nf_to_expr(nf: NF) -> Expr:
    n = poly_to_expr(nf.num)
    if P.p_is_const(nf.den):
        dv = P.p_const_value(nf.den)
        if dv == 1:
            return n
        return Quo(n, Num(dv) if not isinstance(dv, float) else Flt(dv))
    return Quo(n, poly_to_expr(nf.den))


def nf_equal(ctx: NCtx, a: Expr, b: Expr) -> bool:
    """Structural equality after normalization of the difference."""
    d = to_nf(ctx, Add((a, Mul((Num(Fraction(-1)), b)))))
    return d.is_zero()


# -- display -------------------------------------------------------------------


def _is_composite_kernel(k: Expr) -> bool:
    return isinstance(k, (Add, Quo)) or (isinstance(k, Pow) and isinstance(k.base, (Add, Quo)))


def _kernel_degree(k: Expr) -> int:
    if isinstance(k, Add):
        deg = 0
        for t in k.terms:
            d = 0
            for f in (t.factors if isinstance(t, Mul) else (t,)):
                if isinstance(f, Pow) and isinstance(f.exp, Num) and f.exp.is_integer:
                    d += int(f.exp.value)
                elif not isinstance(f, (Num, Flt)):
                    d += 1
            deg = max(deg, d)
        return deg
    return 1


def _display_axes(p: P.Poly, priority: tuple) -> list[Expr]:
    kernels = {k for m in p for k, _ in m[0]}
    atoms = sorted((k for k in kernels if not _is_composite_kernel(k)),
                   key=lambda k: order_key(k, priority))
    comps = sorted((k for k in kernels if _is_composite_kernel(k)),
                   key=lambda k: (-_kernel_degree(k), tuple(__neg_key(order_key(k, priority)))))
    return atoms + comps


def __neg_key(k):
    # crude descending order for heterogeneous keys: wrap in a reversing tuple
    return (_Rev(k),)


class _Rev:
    __slots__ = ("k",)

    def __init__(self, k):
        self.k = k

    def __lt__(self, other):
        return other.k < self.k

    def __eq__(self, other):
        return self.k == other.k


def _display_sorted_monos(p: P.Poly, priority: tuple, revpri: bool) -> list:
    axes = _display_axes(p, priority)
    idx = {k: n for n, k in enumerate(axes)}

    def key(item):
        m, _ = item
        v = [0] * len(axes)
        for k, e in m[0]:
            v[idx[k]] = e
        return tuple(v)

    monos = sorted(p.items(), key=key, reverse=True)
    if revpri:
        monos.reverse()
    return monos


def _display_mono(m: P.Mono, c, priority: tuple) -> Expr:
    comps = [(k, e) for k, e in m[0] if _is_composite_kernel(k)]
    atoms = [(k, e) for k, e in m[0] if not _is_composite_kernel(k)]
    comps.sort(key=lambda p2: (-_kernel_degree(p2[0]), __neg_key(order_key(p2[0], priority))))
    atoms.sort(key=lambda p2: order_key(p2[0], priority))
    factors: list[Expr] = []
    if isinstance(c, float):
        if c != 1.0:
            factors.append(Flt(c))
    else:
        if c != 1:
            factors.append(Num(c))
    for k, e in comps + atoms:
        factors.append(k if e == 1 else Pow(k, num(e)))
    for k, e in m[1]:
        factors.append(k if e == 1 else Pow(k, num(e)))
    if not factors:
        return Flt(1.0) if isinstance(c, float) else Num(Fraction(1))
    if len(factors) == 1:
        return factors[0]
    return Mul(tuple(factors))


def _poly_display(p: P.Poly, ctx: NCtx) -> Expr:
    if not p:
        return ZERO
    pri = ctx.sw.get("pri")
    revpri = pri and ctx.sw.get("revpri")
    monos = _display_sorted_monos(p, ctx.priority, revpri)
    terms = [_display_mono(m, c, ctx.priority) for m, c in monos]
    if len(terms) == 1:
        return terms[0]
    return Add(tuple(terms))


def _poly_content(p: P.Poly):
    """(numeric content with leading sign, kernel exponent map).  A kernel
    contributes when every monomial carries it with the same sign: the
    smallest positive or the largest negative power comes out."""
    nc = P.p_numeric_content(p)
    exps: dict = {}
    for m in p:
        for k, _e in m[0]:
            exps.setdefault(k, [])
    monos = list(p)
    for k in exps:
        exps[k] = [dict(m[0]).get(k, 0) for m in monos]
    kern = {}
    for k, es in exps.items():
        if min(es) > 0:
            kern[k] = min(es)
        elif max(es) < 0:
            kern[k] = max(es)
    return nc, kern


def from_nf_display(ctx: NCtx, nf: NF) -> Expr:
    """Build the display tree the printer will render, honoring the display
    switches (allfac, div, rat, revpri, gated by pri; ratpri handled here by
    choosing fraction versus reciprocal product)."""
    return _redisplay(ctx, _display_nf(ctx, nf))


def _redisplay(ctx: NCtx, e: Expr) -> Expr:
    """Kernel arguments keep their construction order in the normal form;
    re-render each one so nested sums follow the display ordering too."""
    match e:
        case Add(terms):
            return Add(tuple(_redisplay(ctx, t) for t in terms))
        case Mul(factors):
            return Mul(tuple(_rearg(ctx, f) if isinstance(f, Add)
                             else _redisplay(ctx, f) for f in factors))
        case Quo(a, b):
            return Quo(_redisplay(ctx, a), _redisplay(ctx, b))
        case Neg(a):
            return Neg(_redisplay(ctx, a))
        case Pow(b, x):
            return Pow(_rearg(ctx, b), _rearg(ctx, x))
        case App(h, args):
            return App(h, tuple(_rearg(ctx, a) for a in args))
        case Lst(items):
            return Lst(tuple(_redisplay(ctx, x) for x in items))
        case _:
            return e


def _rearg(ctx: NCtx, a: Expr) -> Expr:
    if isinstance(a, Neg) and isinstance(a.arg, (Num, Sym)):
        return a  # lowered index marker, not arithmetic
    if isinstance(a, (Add, Mul, Quo, Pow, Neg, App)):
        try:
            return from_nf_display(ctx, to_nf(ctx, a))
        except CasError:
            return _redisplay(ctx, a)
    return a


def _display_nf(ctx: NCtx, nf: NF) -> Expr:
    pri = ctx.sw.get("pri")
    den_const = P.p_is_const(nf.den)
    dv = P.p_const_value(nf.den) if den_const else None
    if den_const and dv == 1:
        return _display_num_poly(ctx, nf.num)
    # quotient
    if pri and ctx.sw.get("rat") and ctx.factors and _rat_applicable(nf):
        return _rat_display(ctx, nf)
    if pri and ctx.sw.get("div"):
        return _div_display(ctx, nf)
    nexpr = _display_num_poly(ctx, nf.num)
    dexpr = Num(dv) if den_const and not isinstance(dv, float) else (
        Flt(dv) if den_const else _poly_display(nf.den, ctx))
    if ctx.sw.get("ratpri"):
        return Quo(nexpr, dexpr)
    return _recip_display(ctx, nf)


def _display_num_poly(ctx: NCtx, p: P.Poly) -> Expr:
    pri = ctx.sw.get("pri")
    if pri and ctx.sw.get("allfac") and len(p) > 1:
        nc, kern = _poly_content(p)
        lead_negative = all(
            (c < 0) if not isinstance(c, float) else (c < 0.0) for c in p.values()
        )
        sign = -1 if lead_negative else 1
        if (nc != 1 or kern or sign < 0) and not P.p_has_noncom(p):
            content_factor = sign * nc
            inner = {}
            for m, c in p.items():
                d = dict(m[0])
                for k, e in kern.items():
                    d[k] -= e
                inner[P.mono_make(d.items(), m[1])] = c / content_factor
            cf: list[Expr] = []
            if content_factor != 1:
                cf.append(Num(content_factor))
            for k, e in kern.items():
                cf.append(k if e == 1 else Pow(k, num(e)))
            if cf:
                inner_expr = _poly_display(inner, ctx)
                return Mul(tuple(cf + [inner_expr]))
    return _poly_display(p, ctx)


def _recip_display(ctx: NCtx, nf: NF) -> Expr:
    """num * den**(-1) with the reciprocal leading; numeric coefficients stay
    in front so sums print their signs."""
    den_const = P.p_is_const(nf.den)
    dv = P.p_const_value(nf.den) if den_const else None
    if den_const and dv == 1:
        return _display_num_poly(ctx, nf.num)
    nexpr = _display_num_poly(ctx, nf.num)
    dexpr = Num(dv) if den_const and not isinstance(dv, float) else (
        Flt(dv) if den_const else _poly_display(nf.den, ctx))
    recip = Pow(dexpr, Num(Fraction(-1)))
    match nexpr:
        case Num(v) if v == 1:
            return recip
        case Num(_) | Flt(_):
            return Mul((nexpr, recip))
        case Mul(fs) if isinstance(fs[0], (Num, Flt)):
            return Mul((fs[0], recip) + fs[1:])
        case _:
            return Mul((recip, nexpr))


def _div_display(ctx: NCtx, nf: NF) -> Expr:
    dexpr_poly = nf.den
    terms = []
    monos = _display_sorted_monos(nf.num, ctx.priority, ctx.sw.get("revpri") and ctx.sw.get("pri"))
    for m, c in monos:
        piece = _post(ctx, NF({m: c}, dict(dexpr_poly)))
        terms.append(_recip_display(ctx, piece))
    if len(terms) == 1:
        return terms[0]
    return Add(tuple(terms))


def _rat_applicable(nf: NF) -> bool:
    return len(nf.den) == 1


def _rat_display(ctx: NCtx, nf: NF) -> Expr:
    (dm, dc), = nf.den.items()
    terms = []
    monos = _display_sorted_monos(nf.num, ctx.priority, ctx.sw.get("revpri") and ctx.sw.get("pri"))
    for m, c in monos:
        d = dict(m[0])
        for k, e in dm[0]:
            d[k] = d.get(k, 0) - e
        terms.append(_display_mono(P.mono_make(d.items(), m[1]), c / dc, ctx.priority))
    if len(terms) == 1:
        return terms[0]
    return Add(tuple(terms))
