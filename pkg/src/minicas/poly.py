"""Sparse multivariate polynomials over expression kernels.

A monomial is a pair (comm, noncom): `comm` maps kernels to integer exponents
(stored as a structurally sorted tuple of pairs so monomials hash), `noncom`
is an ordered tuple of (kernel, exponent) factors whose relative order is
preserved by multiplication.  Coefficients are Fractions, or floats once a
float has contaminated the computation.

Exponents in `comm` may be negative (reciprocal kernels when quotients are
not being collected); gcd and exact division only run on true polynomials.
"""
from __future__ import annotations

from fractions import Fraction
from math import gcd as _igcd

from .expr import Expr, order_key

Mono = tuple
Poly = dict

MONO_ONE: Mono = ((), ())


def mono_make(comm_pairs, noncom_pairs=()) -> Mono:
    acc: dict[Expr, int] = {}
    for k, e in comm_pairs:
        acc[k] = acc.get(k, 0) + e
    comm = tuple(sorted(((k, e) for k, e in acc.items() if e != 0), key=lambda p: order_key(p[0])))
    nc: list[list] = []
    for k, e in noncom_pairs:
        if e == 0:
            continue
        if nc and nc[-1][0] == k:
            nc[-1][1] += e
            if nc[-1][1] == 0:
                nc.pop()
        else:
            nc.append([k, e])
    return (comm, tuple((k, e) for k, e in nc))


def mono_mul(m1: Mono, m2: Mono) -> Mono:
    return mono_make(list(m1[0]) + list(m2[0]), list(m1[1]) + list(m2[1]))


def mono_is_one(m: Mono) -> bool:
    return not m[0] and not m[1]


def p_zero() -> Poly:
    return {}


def p_const(c) -> Poly:
    return {} if c == 0 else {MONO_ONE: c}


def p_kernel(k: Expr, e: int = 1) -> Poly:
    return {mono_make([(k, e)]): Fraction(1)}


def p_is_const(p: Poly) -> bool:
    return not p or (len(p) == 1 and MONO_ONE in p)


def p_const_value(p: Poly):
    if not p:
        return Fraction(0)
    return p[MONO_ONE]


def p_add(a: Poly, b: Poly) -> Poly:
    out = dict(a)
    for m, c in b.items():
        s = out.get(m, 0) + c
        if s == 0 and not isinstance(s, float):
            out.pop(m, None)
        elif isinstance(s, float) and s == 0.0:
            out.pop(m, None)
        else:
            out[m] = s
    return out


def p_neg(a: Poly) -> Poly:
    return {m: -c for m, c in a.items()}


def p_scale(a: Poly, c) -> Poly:
    if c == 0:
        return {}
    return {m: c * v for m, v in a.items()}


def p_mul(a: Poly, b: Poly, mono_normalize=None, tick=None) -> Poly:
    """Product.  `mono_normalize(mono, coeff) -> Poly` may rewrite a raw
    monomial (kernel power folding); None keeps raw monomials."""
    out: Poly = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            if tick is not None:
                tick()
            m = mono_mul(m1, m2)
            c = c1 * c2
            if mono_normalize is None:
                s = out.get(m, 0) + c
                if s == 0 and not isinstance(s, float) or (isinstance(s, float) and s == 0.0):
                    out.pop(m, None)
                else:
                    out[m] = s
            else:
                piece = mono_normalize(m, c)
                out = p_add(out, piece)
    return out


def p_pow_raw(a: Poly, n: int) -> Poly:
    out = p_const(Fraction(1))
    base = a
    while n:
        if n & 1:
            out = p_mul(out, base)
        base = p_mul(base, base)
        n >>= 1
    return out


def p_has_noncom(p: Poly) -> bool:
    return any(m[1] for m in p)


def p_has_negative_exp(p: Poly) -> bool:
    return any(e < 0 for m in p for _, e in m[0])


def p_kernels(p: Poly) -> list[Expr]:
    seen = {}
    for m in p:
        for k, _ in m[0]:
            seen[k] = True
    return sorted(seen, key=order_key)


def p_is_float(p: Poly) -> bool:
    return any(isinstance(c, float) for c in p.values())


# -- ordering helpers for division -------------------------------------------


def _exp_vec(m: Mono, kernels: list[Expr]) -> tuple:
    d = dict(m[0])
    return tuple(d.get(k, 0) for k in kernels)


def _lead(p: Poly, kernels: list[Expr]) -> Mono:
    return max(p, key=lambda m: (sum(_exp_vec(m, kernels)), _exp_vec(m, kernels)))


def p_divexact(a: Poly, b: Poly) -> Poly | None:
    """Exact quotient a / b in the free commutative ring, or None."""
    if not b:
        return None
    if not a:
        return {}
    if p_has_noncom(a) or p_has_noncom(b) or p_has_negative_exp(a) or p_has_negative_exp(b):
        return None
    kernels = sorted({k for m in list(a) + list(b) for k, _ in m[0]}, key=order_key)
    lead_b = _lead(b, kernels)
    vb = _exp_vec(lead_b, kernels)
    cb = b[lead_b]
    q: Poly = {}
    r = dict(a)
    while r:
        lead_r = _lead(r, kernels)
        vr = _exp_vec(lead_r, kernels)
        diff = tuple(x - y for x, y in zip(vr, vb))
        if any(d < 0 for d in diff):
            return None
        mq = mono_make([(k, d) for k, d in zip(kernels, diff)])
        cq = r[lead_r] / cb
        q[mq] = q.get(mq, 0) + cq
        for m2, c2 in b.items():
            m = mono_mul(mq, m2)
            s = r.get(m, 0) - cq * c2
            if s == 0:
                r.pop(m, None)
            else:
                r[m] = s
    return q


# -- gcd ----------------------------------------------------------------------


def _frac_gcd(a: Fraction, b: Fraction) -> Fraction:
    if a == 0:
        return abs(b)
    if b == 0:
        return abs(a)
    num = _igcd(a.numerator, b.numerator)
    den = (a.denominator * b.denominator) // _igcd(a.denominator, b.denominator)
    return Fraction(num, den)


def p_numeric_content(p: Poly) -> Fraction:
    c = Fraction(0)
    for v in p.values():
        if isinstance(v, float):
            return Fraction(1)
        c = _frac_gcd(c, v)
        if c == 1:
            break
    return c if c else Fraction(1)


def _univ(p: Poly, k: Expr) -> dict[int, Poly]:
    out: dict[int, Poly] = {}
    for m, c in p.items():
        d = dict(m[0])
        e = d.pop(k, 0)
        rest = mono_make(d.items())
        out.setdefault(e, {})
        out[e][rest] = out[e].get(rest, 0) + c
    return {e: {m: c for m, c in q.items() if c != 0} for e, q in out.items()}


def _from_univ(co: dict[int, Poly], k: Expr) -> Poly:
    out: Poly = {}
    for e, q in co.items():
        for m, c in q.items():
            mm = mono_make(list(m[0]) + [(k, e)], m[1])
            out[mm] = out.get(mm, 0) + c
    return {m: c for m, c in out.items() if c != 0}


def p_gcd(a: Poly, b: Poly) -> Poly:
    """Gcd in the free commutative polynomial ring.  Bails out to a numeric
    content gcd when noncommutative or reciprocal factors are present."""
    if not a:
        return dict(b)
    if not b:
        return dict(a)
    bail = (
        p_has_noncom(a)
        or p_has_noncom(b)
        or p_has_negative_exp(a)
        or p_has_negative_exp(b)
        or p_is_float(a)
        or p_is_float(b)
    )
    if bail:
        return p_const(Fraction(1))
    if p_is_const(a) or p_is_const(b):
        vals = list(a.values()) + list(b.values())
        g = Fraction(0)
        for v in vals:
            g = _frac_gcd(g, v)
        return p_const(g if g else Fraction(1))
    ka = {k for m in a for k, _ in m[0]}
    kb = {k for m in b for k, _ in m[0]}
    common = ka & kb
    if not common:
        ca, cb = p_numeric_content(a), p_numeric_content(b)
        return p_const(_frac_gcd(ca, cb))
    k = sorted(common, key=order_key)[0]
    ua, ub = _univ(a, k), _univ(b, k)

    def content(u: dict[int, Poly]) -> Poly:
        polys = list(u.values())
        g = polys[0]
        for q in polys[1:]:
            g = p_gcd(g, q)
            if p_is_const(g) and p_const_value(g) == 1:
                break
        return g

    ca, cb = content(ua), content(ub)
    cont = p_gcd(ca, cb)

    def primitive(u: dict[int, Poly], c: Poly) -> dict[int, Poly]:
        return {e: p_divexact(q, c) for e, q in u.items()}

    A, B = primitive(ua, ca), primitive(ub, cb)
    if max(A) < max(B):
        A, B = B, A
    # primitive PRS
    while True:
        if not any(B.values()):
            break
        R = _prem(A, B)
        if not R or not any(R.values()):
            A, B = B, {}
            break
        cR = content(R)
        R = primitive(R, cR)
        A, B = B, R
    g = _from_univ(A, k)
    cg = content(_univ(g, k))
    gp = p_divexact(g, cg)
    if gp is None:
        gp = g
    result = p_mul(cont, gp)
    # normalize sign and drop numeric content: callers cancel content separately
    nc = p_numeric_content(result)
    lead = _lead(result, sorted({kk for m in result for kk, _ in m[0]}, key=order_key)) if result else MONO_ONE
    if result and result[lead] < 0:
        nc = -nc
    out = p_divexact(result, p_const(nc))
    return out if out else p_const(Fraction(1))


def _prem(A: dict[int, Poly], B: dict[int, Poly]) -> dict[int, Poly]:
    """Pseudo-remainder of univariate polynomials with Poly coefficients."""
    da, db = max(A), max(B)
    lb = B[db]
    R = {e: dict(q) for e, q in A.items()}
    dr = max(R) if R else -1
    steps = da - db + 1
    for _ in range(max(steps, 0)):
        dr = max((e for e, q in R.items() if q), default=-1)
        if dr < db:
            break
        lr = R[dr]
        # R = lb*R - lr*x^(dr-db)*B
        newR: dict[int, Poly] = {}
        for e, q in R.items():
            if q:
                newR[e] = p_mul(lb, q)
        for e, q in B.items():
            t = p_mul(lr, q)
            ee = e + dr - db
            newR[ee] = p_add(newR.get(ee, {}), p_neg(t))
        R = {e: q for e, q in newR.items() if q}
    return {e: q for e, q in R.items() if q and e >= 0 and any(q.values())}
