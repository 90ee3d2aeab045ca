"""Exterior calculus layer: coframes, indexed quantities, graded forms.

Activated by 'load_package excalc'.  The session keeps a State instance
and routes kernel applications through intercept() before its own
operator lookup; whole statements and assignments pass through
statement()/assign() first so that repeated upper/lower index names are
summed over the declared range.

Components of indexed quantities live in per-name stores keyed by
(sign, label) tuples, reduced to a canonical representative of the
declared symmetry orbit.  Exterior forms are handled as sums of
scalar * ordered leg sequences over the coordinate differentials and
projected back onto the declared coframe for display.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Callable, Optional

from . import calculus as C
from . import linalg as LA
from .errors import (DimensionMismatch, EvalError, FreeIndexMismatch,
                     IndexBalance, NoFrame, SingularCoframe)
from .expr import (NIL, ONE, RESERVED, ZERO, Add, App, Eqn, Expr, Lst, MatV,
                   Mul, Neg, Num, Pow, Quo, RuleE, Str, Sym, add, mul, neg,
                   num, order_key, sym, walk)

PASS = object()


@dataclass
class PForm:
    """A declared (possibly indexed) exterior form."""

    degree: int
    rank: int
    perms: list[tuple[tuple[int, ...], int]]
    store: dict[tuple, Expr] = field(default_factory=dict)
    zero_all: bool = False


@dataclass
class Frame:
    name: str
    labels: list
    coords: list[str]
    legs: list[list[Expr]]      # o^a = sum_i legs[a][i] d coords[i]
    legs_inv: list[list[Expr]]  # d coords[i] = sum_a legs_inv[i][a] o^a
    metric: list[list[Expr]]
    metric_inv: list[list[Expr]]
    detg: Expr
    det_sign: int
    sqrtg: Expr
    metric_name: Optional[str]
    synthetic: bool
    frame_name: Optional[str] = None
    pos: dict = field(default_factory=dict)   # label -> slot
    cpos: dict = field(default_factory=dict)  # coordinate name -> slot


@dataclass
class State:
    frame: Optional[Frame] = None
    pforms: dict[str, PForm] = field(default_factory=dict)
    tvectors: set[str] = field(default_factory=set)
    range_labels: Optional[list] = None


# -- index specs -------------------------------------------------------------------


def _spec(a: Expr) -> tuple[int, object, bool]:
    """Decode an index argument to (sign, label, is_name)."""
    sg = 1
    if isinstance(a, Neg):
        sg, a = -1, a.arg
    match a:
        case Num(v) if v.denominator == 1:
            n = int(v)
            if n < 0:
                return -sg, -n, False
            return sg, n, False
        case Sym(name):
            return sg, name, True
    raise EvalError("an index must be a name or an integer")


def _spec_expr(sg: int, lab) -> Expr:
    e = num(lab) if isinstance(lab, int) else sym(lab)
    return Neg(e) if sg < 0 else e


def _comp(name: str, key) -> Expr:
    return App("%comp", (sym(name),) + tuple(_spec_expr(sg, lab) for sg, lab in key))


def _sgn(sg: int, e: Expr) -> Expr:
    return e if sg > 0 else neg(e)


def _lkey(lab):
    return (0, lab) if isinstance(lab, int) else (1, str(lab))


def _enc(key) -> tuple:
    return tuple((0 if sg > 0 else 1, _lkey(lab)) for sg, lab in key)


def _labelset(st: State) -> set:
    out = set()
    if st.range_labels:
        out.update(st.range_labels)
    if st.frame is not None:
        out.update(st.frame.labels)
    return out


def _sum_range(st: State) -> Optional[list]:
    if st.range_labels:
        return list(st.range_labels)
    if st.frame is not None:
        return list(st.frame.labels)
    return None


def _eps_range(st: State) -> Optional[list]:
    if st.frame is not None:
        return st.frame.labels
    return st.range_labels


def _dim(st: State) -> Optional[int]:
    rng = _eps_range(st)
    return len(rng) if rng else None


def _heads(st: State) -> dict[str, int]:
    """Names that take index slots, with their rank."""
    out = {nm: pf.rank for nm, pf in st.pforms.items() if pf.rank}
    fr = st.frame
    if fr is not None:
        out[fr.name] = 1
        if fr.frame_name:
            out[fr.frame_name] = 1
        if fr.metric_name:
            out[fr.metric_name] = 2
    rng = _eps_range(st)
    if rng:
        out["eps"] = len(rng)
    return out


# -- symmetries --------------------------------------------------------------------


def _close_perms(rank: int, gens) -> tuple[list, bool]:
    """Close value(K) = s*value(K o p) relations under composition."""
    ident = tuple(range(rank))
    seen = {ident: 1}
    frontier = [ident]
    zero = False
    while frontier:
        nxt = []
        for p in frontier:
            sp = seen[p]
            for g, sg in gens:
                q = tuple(p[g[i]] for i in range(rank))
                sq = sp * sg
                if q in seen:
                    zero = zero or seen[q] != sq
                else:
                    seen[q] = sq
                    nxt.append(q)
        frontier = nxt
    return list(seen.items()), zero


def _canonical(pf: PForm, key) -> tuple[tuple, int, bool]:
    """Least orbit member; value(key) = sign*value(best); zero if forced."""
    if pf.zero_all:
        return key, 1, True
    orbit: dict[tuple, int] = {}
    for p, sg in pf.perms:
        q = tuple(key[p[i]] for i in range(pf.rank))
        if q in orbit and orbit[q] != sg:
            return key, 1, True
        orbit[q] = sg
    best = min(orbit, key=_enc)
    return best, orbit[best], False


# -- component store ---------------------------------------------------------------


def _exact(pf: PForm, name: str, key) -> Expr:
    best, bs, zero = _canonical(pf, key)
    if zero:
        return ZERO
    if best in pf.store:
        return _sgn(bs, pf.store[best])
    return _sgn(bs, _comp(name, best))


def _nearest_pattern(pf: PForm, want: tuple) -> Optional[tuple]:
    pats = {tuple(sg for sg, _ in k) for k in pf.store}
    if not pats:
        return None
    return min(pats, key=lambda p: (sum(1 for a, b in zip(p, want) if a != b), p))


def _convert(s, st: State, name: str, pf: PForm, key, pat) -> Expr:
    """Raise or lower through the frame metric onto a stored pattern."""
    fr = st.frame
    flips = [j for j in range(pf.rank) if key[j][0] != pat[j]]
    if any(key[j][1] not in fr.pos for j in flips):
        return _exact(pf, name, key)
    parts = []
    for combo in product(fr.labels, repeat=len(flips)):
        coef = []
        inner = list(key)
        for j, m in zip(flips, combo):
            a, b = fr.pos[key[j][1]], fr.pos[m]
            g = fr.metric_inv if key[j][0] > 0 else fr.metric
            coef.append(g[a][b])
            inner[j] = (pat[j], m)
        parts.append(mul(*coef, _exact(pf, name, tuple(inner))))
    return s._norm(add(*parts))


def _read_comp(s, st: State, name: str, pf: PForm, key) -> Expr:
    best, bs, zero = _canonical(pf, key)
    if zero:
        return ZERO
    if best in pf.store:
        return _sgn(bs, pf.store[best])
    if st.frame is not None and pf.store:
        want = tuple(sg for sg, _ in key)
        pat = _nearest_pattern(pf, want)
        if pat is not None and pat != want:
            return _convert(s, st, name, pf, key, pat)
    return _sgn(bs, _comp(name, best))


# -- frame reads -------------------------------------------------------------------


def _read_metric(s, st: State, args) -> Expr:
    fr = st.frame
    if len(args) != 2:
        raise EvalError(f"{fr.metric_name} takes two indices")
    s1, l1, y1 = _spec(args[0])
    s2, l2, y2 = _spec(args[1])
    lset = _labelset(st)
    if (y1 and l1 not in lset) or (y2 and l2 not in lset):
        return _comp(fr.metric_name, ((s1, l1), (s2, l2)))
    a, b = fr.pos.get(l1), fr.pos.get(l2)
    if a is None or b is None:
        raise EvalError("unknown frame index")
    if s1 < 0 and s2 < 0:
        return fr.metric[a][b]
    if s1 > 0 and s2 > 0:
        return fr.metric_inv[a][b]
    return ONE if a == b else ZERO


def _read_basis(s, st: State, args) -> Expr:
    fr = st.frame
    if len(args) != 1:
        raise EvalError(f"{fr.name} takes one index")
    sg, lab, ysym = _spec(args[0])
    if ysym and lab not in _labelset(st):
        return _comp(fr.name, ((sg, lab),))
    a = fr.pos.get(lab)
    if a is None:
        raise EvalError("unknown frame index")
    if sg > 0:
        return App(fr.name, (_spec_expr(1, lab),))
    parts = [mul(fr.metric[a][b], App(fr.name, (_spec_expr(1, m),)))
             for b, m in enumerate(fr.labels)]
    return s._norm(add(*parts))


def _read_frame_vec(s, st: State, args) -> Expr:
    fr = st.frame
    if len(args) != 1:
        raise EvalError(f"{fr.frame_name} takes one index")
    sg, lab, ysym = _spec(args[0])
    if ysym and lab not in _labelset(st):
        return _comp(fr.frame_name, ((sg, lab),))
    a = fr.pos.get(lab)
    if a is None:
        raise EvalError("unknown frame index")
    if sg < 0:
        return App(fr.frame_name, (_spec_expr(-1, lab),))
    parts = [mul(fr.metric_inv[a][b], App(fr.frame_name, (_spec_expr(-1, m),)))
             for b, m in enumerate(fr.labels)]
    return s._norm(add(*parts))


def _parity(perm: list[int]) -> int:
    if len(set(perm)) != len(perm):
        return 0
    sign = 1
    seen = [False] * len(perm)
    for k in range(len(perm)):
        if seen[k]:
            continue
        j, ln = k, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            ln += 1
        if ln % 2 == 0:
            sign = -sign
    return sign


def _read_eps(s, st: State, args) -> Expr:
    rng = _eps_range(st)
    if len(args) != len(rng):
        raise DimensionMismatch("eps takes one index per dimension")
    specs = [_spec(a) for a in args]
    lset = _labelset(st)
    if any(y and lab not in lset for _, lab, y in specs):
        return _comp("eps", tuple((sg, lab) for sg, lab, _ in specs))
    pos = {lab: k for k, lab in enumerate(rng)}
    try:
        perm = [pos[lab] for _, lab, _ in specs]
    except KeyError:
        raise EvalError("unknown eps index")
    return num(_parity(perm))


# -- kernel interception -----------------------------------------------------------


def intercept(s, head: str, args) -> object:
    """Resolve an application the exterior calculus owns; PASS otherwise."""
    st = s.excalc
    fr = st.frame
    if head == "d" and len(args) == 1:
        return _op_d(s, st, args[0])
    if head == "@":
        return _op_at(s, st, args)
    if head == "exdegree" and len(args) == 1:
        return _op_exdegree(s, st, args[0])
    if fr is not None:
        if head == fr.name:
            return _read_basis(s, st, args)
        if head == fr.frame_name:
            return _read_frame_vec(s, st, args)
        if head == fr.metric_name:
            return _read_metric(s, st, args)
    if head == "eps" and _eps_range(st):
        return _read_eps(s, st, args)
    pf = st.pforms.get(head)
    if pf is not None and pf.rank:
        if len(args) != pf.rank:
            raise EvalError(f"{head} expects {pf.rank} indices")
        specs = [_spec(a) for a in args]
        lset = _labelset(st)
        if any(y and lab not in lset for _, lab, y in specs):
            return _comp(head, tuple((sg, lab) for sg, lab, _ in specs))
        return _read_comp(s, st, head, pf,
                          tuple((sg, lab) for sg, lab, _ in specs))
    return PASS


# -- graded term lists -------------------------------------------------------------

# A form is a list of (coefficient, legs) pairs.  Legs are kernels over
# the coordinate differentials plus symbolic remainders: d of a scalar,
# named forms, unassigned components, d of those, and unresolved inner
# products.  Coframe kernels are expanded on entry and restored by
# projection on exit, so equal forms always merge in the normal form.


def _leg_degree(st: State, leg: Expr) -> int:
    match leg:
        case App("d", (x,)):
            return _leg_degree(st, x) + 1
        case App("%inner", (_, k)):
            return max(_leg_degree(st, k) - 1, 0)
        case App("%comp", cargs):
            pf = st.pforms.get(cargs[0].name)
            return pf.degree if pf else 0
        case Sym(nm):
            pf = st.pforms.get(nm)
            return pf.degree if pf else 0
        case App(_, _):
            return 1
    return 0


def _leg_key(st: State, leg: Expr) -> tuple:
    fr = st.frame
    match leg:
        case App(h, (a1,)) if fr is not None and h == fr.name:
            _, lab, _ = _spec(a1)
            return (0, 1, fr.pos.get(lab, len(fr.labels)))
        case App("d", (Sym(nm),)) if not (st.pforms.get(nm)
                                          and st.pforms[nm].degree):
            if fr is not None and nm in fr.cpos:
                return (0, 0, fr.cpos[nm])
            return (1, 0, nm)
        case App("d", _):
            return (3, order_key(leg))
        case Sym(_) | App("%comp", _):
            return (2, order_key(leg))
        case App("%inner", _):
            return (4, order_key(leg))
    return (5, order_key(leg))


def _sort_legs(st: State, legs: tuple) -> tuple[Optional[tuple], int]:
    """Canonical leg order with the graded commutation sign."""
    arr = list(legs)
    keys = [_leg_key(st, lg) for lg in arr]
    degs = [_leg_degree(st, lg) for lg in arr]
    sign = 1
    for i in range(1, len(arr)):
        j = i
        while j > 0 and keys[j - 1] > keys[j]:
            if degs[j - 1] % 2 and degs[j] % 2:
                sign = -sign
            arr[j - 1], arr[j] = arr[j], arr[j - 1]
            keys[j - 1], keys[j] = keys[j], keys[j - 1]
            degs[j - 1], degs[j] = degs[j], degs[j - 1]
            j -= 1
    for k in range(len(arr) - 1):
        if arr[k] == arr[k + 1] and degs[k] % 2:
            return None, 0
    return tuple(arr), sign


def _wedge_terms(s, st: State, left: list, right: list) -> list:
    return [(mul(ca, cb), la + lb) for ca, la in left for cb, lb in right]


def _to_terms(s, st: State, e: Expr) -> list:
    fr = st.frame
    match e:
        case Add(ts):
            out = []
            for t in ts:
                out.extend(_to_terms(s, st, t))
            return out
        case Neg(x):
            return [(neg(c), legs) for c, legs in _to_terms(s, st, x)]
        case Mul(fs):
            acc = [(ONE, ())]
            for f in fs:
                acc = _wedge_terms(s, st, acc, _to_terms(s, st, f))
            return acc
        case Quo(a, b):
            if any(legs for _, legs in _to_terms(s, st, b)):
                raise EvalError("cannot divide by a form")
            return [(s._norm(Quo(c, b)), legs) for c, legs in _to_terms(s, st, a)]
        case Pow(b, _):
            if any(legs for _, legs in _to_terms(s, st, b)):
                raise EvalError("forms cannot be exponentiated")
            return [(e, ())]
        case Lst(_) | Eqn(_, _) | MatV(_) | RuleE(_, _, _) | Str(_):
            raise EvalError("expected a form")
        case App("%wedge", ws):
            acc = [(ONE, ())]
            for w in ws:
                acc = _wedge_terms(s, st, acc, _to_terms(s, st, w))
            return acc
        case App("d", _) | App("%inner", _):
            if _leg_degree(st, e) == 0:
                return [(e, ())]
            return [(ONE, (e,))]
        case App("%comp", _) | Sym(_):
            if _leg_degree(st, e) == 0:
                return [(e, ())]
            return [(ONE, (e,))]
        case App(h, (a1,)) if fr is not None and h == fr.name:
            _, lab, _ = _spec(a1)
            a = fr.pos[lab]
            return [(fr.legs[a][i], (App("d", (sym(x),)),))
                    for i, x in enumerate(fr.coords) if fr.legs[a][i] != ZERO]
    return [(e, ())]


def _project(s, st: State, terms: list) -> list:
    """Rewrite coordinate differentials as coframe legs."""
    fr = st.frame
    out = []
    for coef, legs in terms:
        parts = [(coef, ())]
        for lg in legs:
            match lg:
                case App("d", (Sym(nm),)) if nm in fr.cpos:
                    i = fr.cpos[nm]
                    opts = [(fr.legs_inv[i][a],
                             App(fr.name, (_spec_expr(1, fr.labels[a]),)))
                            for a in range(len(fr.labels))
                            if fr.legs_inv[i][a] != ZERO]
                case _:
                    opts = [(None, lg)]
            parts = [(c if w is None else mul(c, w), ls + (l2,))
                     for c, ls in parts for w, l2 in opts]
        out.extend(parts)
    return out


def _from_terms(s, st: State, terms: list) -> Expr:
    if st.frame is not None:
        terms = _project(s, st, terms)
    dim = _dim(st)
    acc: dict[tuple, list] = {}
    for coef, legs in terms:
        if legs:
            if dim is not None and sum(_leg_degree(st, lg) for lg in legs) > dim:
                continue
            legs2, sign = _sort_legs(st, legs)
            if legs2 is None:
                continue
            coef = _sgn(sign, coef)
            legs = legs2
        acc.setdefault(legs, []).append(coef)
    parts = []
    for legs, coefs in acc.items():
        c = s._norm(add(*coefs))
        if c == ZERO:
            continue
        if not legs:
            parts.append(c)
            continue
        k = legs[0] if len(legs) == 1 else App("%wedge", legs)
        parts.append(k if c == ONE else mul(c, k))
    if not parts:
        return ZERO
    return s._norm(add(*parts))


# -- exterior operators ------------------------------------------------------------


def _d_vars(s, c: Expr) -> set[str]:
    """Names a scalar can vary with, following declared dependencies."""
    out: set[str] = set()
    stack = [c]
    while stack:
        e = stack.pop()
        match e:
            case App("%comp", _):
                continue
            case Sym(nm):
                if nm in RESERVED:
                    continue
                deps = s.depgraph.get(nm)
                out.update(deps if deps else (nm,))
            case App(_, args2):
                stack.extend(args2)
            case Add(ts) | Mul(ts) | Lst(ts):
                stack.extend(ts)
            case Neg(x):
                stack.append(x)
            case Pow(a, b) | Quo(a, b) | Eqn(a, b):
                stack.extend((a, b))
    return out


def _d_scalar(s, st: State, c: Expr) -> list[tuple[Expr, Expr]]:
    fr = st.frame
    if fr is not None and not fr.synthetic:
        names = list(fr.coords)
    else:
        names = sorted(_d_vars(s, c))
    out = []
    for n in names:
        dc = s._norm(C._d(s, c, sym(n)))
        if dc != ZERO:
            out.append((dc, App("d", (sym(n),))))
    return out


def _d_leg(st: State, leg: Expr) -> Optional[Expr]:
    match leg:
        case App("d", _):
            return None
        case Sym(_) | App("%comp", _) | App("%inner", _):
            return App("d", (leg,))
    return None


def _d_val(s, st: State, v: Expr) -> Expr:
    out = []
    for coef, legs in _to_terms(s, st, v):
        for dc, dl in _d_scalar(s, st, coef):
            out.append((dc, (dl,) + legs))
        run = 0
        for k, lg in enumerate(legs):
            dl2 = _d_leg(st, lg)
            if dl2 is not None:
                out.append((_sgn(-1 if run % 2 else 1, coef),
                            legs[:k] + (dl2,) + legs[k + 1:]))
            run += _leg_degree(st, lg)
    return _from_terms(s, st, out)


def _op_d(s, st: State, raw: Expr) -> Expr:
    return _d_val(s, st, s._full(raw))


def _vec_terms(s, st: State, v: Expr) -> list:
    """Split a vector into (coefficient, tangent kernel) parts."""
    fr = st.frame
    match v:
        case Add(ts):
            out = []
            for t in ts:
                out.extend(_vec_terms(s, st, t))
            return out
        case Neg(x):
            return [(neg(c), k) for c, k in _vec_terms(s, st, x)]
        case Mul(fs):
            coefs, vec = [], None
            for f in fs:
                if vec is None and _is_vector_atom(st, f):
                    vec = f
                else:
                    coefs.append(f)
            if vec is None:
                raise EvalError("expected a vector")
            out = []
            for c, k in _vec_terms(s, st, vec):
                out.append((mul(*coefs, c), k))
            return out
        case Quo(a, b):
            return [(s._norm(Quo(c, b)), k) for c, k in _vec_terms(s, st, a)]
        case App("@", (Sym(_),)):
            return [(ONE, v)]
        case Sym(nm) if nm in st.tvectors:
            return [(ONE, v)]
        case App(h, (a1,)) if fr is not None and h == fr.frame_name:
            sg, lab, _ = _spec(a1)
            if sg > 0 or lab not in fr.pos:
                raise EvalError("expected a vector")
            a = fr.pos[lab]
            return [(fr.legs_inv[i][a], App("@", (sym(x),)))
                    for i, x in enumerate(fr.coords)
                    if fr.legs_inv[i][a] != ZERO]
    raise EvalError("expected a vector")


def _is_vector_atom(st: State, e: Expr) -> bool:
    fr = st.frame
    match e:
        case App("@", (Sym(_),)):
            return True
        case Sym(nm):
            return nm in st.tvectors
        case App(h, (_,)) if fr is not None and h == fr.frame_name:
            return True
    return False


def _is_vector(s, st: State, v: Expr) -> bool:
    try:
        _vec_terms(s, st, v)
        return True
    except EvalError:
        return False


def _pair(s, st: State, vk: Expr, lg: Expr):
    """Contract one tangent kernel with one leg: ('s', scalar) or ('l', leg)."""
    deg = _leg_degree(st, lg)
    match (vk, lg):
        case (App("@", (Sym(_),)), App("d", (Sym(_),))) if deg == 1:
            return "s", s._norm(C._d(s, lg.args[0], vk.args[0]))
    inert = App("%inner", (vk, lg))
    return ("s", inert) if deg == 1 else ("l", inert)


def _inner_val(s, st: State, vv: Expr, fv: Expr) -> Expr:
    vec = _vec_terms(s, st, vv)
    terms = _to_terms(s, st, fv)
    out = []
    for cv, vk in vec:
        for cf, legs in terms:
            run = 0
            for k, lg in enumerate(legs):
                kind, r = _pair(s, st, vk, lg)
                sign = -1 if run % 2 else 1
                coef = _sgn(sign, mul(cv, cf))
                if kind == "s":
                    if r != ZERO:
                        out.append((mul(coef, r), legs[:k] + legs[k + 1:]))
                else:
                    out.append((coef, legs[:k] + (r,) + legs[k + 1:]))
                run += _leg_degree(st, lg)
    return _from_terms(s, st, out)


def _op_at(s, st: State, args) -> Expr:
    if len(args) == 1:
        v = s._full(args[0])
        if isinstance(v, Sym):
            return App("@", (v,))
        raise EvalError("@ takes a coordinate name")
    if len(args) == 2:
        f = s._full(args[0])
        x = s._full(args[1])
        if not isinstance(x, Sym):
            raise EvalError("@ differentiates along a coordinate name")
        out = [(s._norm(C._d(s, c, x)), legs) for c, legs in _to_terms(s, st, f)]
        return _from_terms(s, st, out)
    raise EvalError("@ takes one or two arguments")


def _op_exdegree(s, st: State, raw: Expr) -> Expr:
    deg = 0
    for _, legs in _to_terms(s, st, s._full(raw)):
        deg = max(deg, sum(_leg_degree(st, lg) for lg in legs))
    return num(deg)


def _f_wedge(s, args) -> Expr:
    st = s.excalc
    acc = [(ONE, ())]
    for a in args:
        acc = _wedge_terms(s, st, acc, _to_terms(s, st, s._full(a)))
    return _from_terms(s, st, acc)


def _f_inner(s, args) -> Expr:
    st = s.excalc
    vv, fv = s._full(args[0]), s._full(args[1])
    if _is_vector(s, st, fv):
        raise EvalError("inner product needs a form on the right")
    return _inner_val(s, st, vv, fv)


def _f_lie(s, args) -> Expr:
    st = s.excalc
    vv, wv = s._full(args[0]), s._full(args[1])
    if _is_vector(s, st, wv):
        return App("%lie", (vv, wv))
    return s._norm(add(_inner_val(s, st, vv, _d_val(s, st, wv)),
                       _d_val(s, st, _inner_val(s, st, vv, wv))))


def _f_hodge(s, args) -> Expr:
    st = s.excalc
    fr = st.frame
    if fr is None:
        raise NoFrame("the hodge dual needs a coframe with a metric")
    v = s._full(args[0])
    terms = _project(s, st, _to_terms(s, st, v))
    n = len(fr.labels)
    out = []
    for coef, legs in terms:
        pos = []
        for lg in legs:
            if not (isinstance(lg, App) and lg.head == fr.name):
                raise EvalError("the hodge dual needs frame components")
            _, lab, _ = _spec(lg.args[0])
            pos.append(fr.pos[lab])
        p = len(pos)
        for rest in combinations(range(n), n - p):
            eterms = []
            for m in product(range(n), repeat=p):
                par = _parity(list(m) + list(rest))
                if par == 0:
                    continue
                gs = [fr.metric_inv[pos[k]][m[k]] for k in range(p)]
                eterms.append(_sgn(par, mul(*gs) if gs else ONE))
            if not eterms:
                continue
            c2 = s._norm(mul(coef, fr.sqrtg, add(*eterms)))
            if c2 == ZERO:
                continue
            legs2 = tuple(App(fr.name, (_spec_expr(1, fr.labels[b]),))
                          for b in rest)
            out.append((c2, legs2))
    return _from_terms(s, st, out)


def _f_comp(s, args) -> Expr:
    head = args[0]
    if isinstance(head, Sym):
        hit = intercept(s, head.name, args[1:])
        if hit is not PASS:
            return hit
    return App("%comp", tuple(args))


# -- statement expansion -----------------------------------------------------------


_OPEN_FORMS = {"%wedge", "%inner", "%lie", "%hodge", "%comp"}


def _children(e: Expr) -> tuple:
    match e:
        case Add(ts) | Lst(ts):
            return ts
        case Mul(fs):
            return fs
        case App(_, args2):
            return args2
        case Neg(x):
            return (x,)
        case Pow(a, b) | Quo(a, b) | Eqn(a, b):
            return (a, b)
        case MatV(rows):
            return tuple(x for r in rows for x in r)
    return ()


def _any_symbolic(e: Expr, heads: dict, lset: set) -> bool:
    if isinstance(e, App) and e.head in heads and len(e.args) == heads[e.head]:
        try:
            specs = [_spec(a) for a in e.args]
        except EvalError:
            specs = None
        if specs is not None:
            return any(y and lab not in lset for _, lab, y in specs)
    return any(_any_symbolic(c, heads, lset) for c in _children(e))


def _collect(e: Expr, heads: dict, lset: set, out: list) -> list:
    if isinstance(e, App) and e.head in heads:
        if len(e.args) != heads[e.head]:
            raise EvalError(f"{e.head} expects {heads[e.head]} indices")
        for a in e.args:
            sg, lab, ysym = _spec(a)
            if ysym and lab not in lset:
                out.append((lab, sg))
        return out
    for c in _children(e):
        _collect(c, heads, lset, out)
    return out


def _subst(e: Expr, m: dict, heads: dict) -> Expr:
    if isinstance(e, App) and e.head in heads:
        na = []
        for a in e.args:
            sg, lab, ysym = _spec(a)
            na.append(_spec_expr(sg, m[lab]) if ysym and lab in m else a)
        return App(e.head, tuple(na))
    match e:
        case Add(ts):
            return Add(tuple(_subst(t, m, heads) for t in ts))
        case Mul(fs):
            return Mul(tuple(_subst(f, m, heads) for f in fs))
        case App(h, args2):
            return App(h, tuple(_subst(a, m, heads) for a in args2))
        case Neg(x):
            return Neg(_subst(x, m, heads))
        case Pow(a, b):
            return Pow(_subst(a, m, heads), _subst(b, m, heads))
        case Quo(a, b):
            return Quo(_subst(a, m, heads), _subst(b, m, heads))
        case Eqn(a, b):
            return Eqn(_subst(a, m, heads), _subst(b, m, heads))
        case Lst(ts):
            return Lst(tuple(_subst(t, m, heads) for t in ts))
    return e


def _distribute(e: Expr) -> list[Expr]:
    """Terms of the fully distributed expression, for index bookkeeping."""
    match e:
        case Add(ts):
            return [t2 for t in ts for t2 in _distribute(t)]
        case Neg(x):
            return [neg(t) for t in _distribute(x)]
        case Mul(fs):
            acc = [ONE]
            for f in fs:
                acc = [b if a == ONE else mul(a, b)
                       for a in acc for b in _distribute(f)]
            return acc
        case Quo(a, b):
            return [Quo(t, b) for t in _distribute(a)]
        case App(("%wedge" | "%inner" | "%lie") as h, args2):
            lists = [_distribute(a) for a in args2]
            return [App(h, combo) for combo in product(*lists)]
        case App(("d" | "%hodge") as h, (x,)):
            return [App(h, (t,)) for t in _distribute(x)]
        case App("@", (x, y)):
            return [App("@", (t, y)) for t in _distribute(x)]
    return [e]


def _term_indices(t: Expr, heads: dict, lset: set) -> tuple[dict, list]:
    """Free index map (name -> sign) and bound names of one term."""
    cnt: dict[str, list[int]] = {}
    for nm, sg in _collect(t, heads, lset, []):
        cnt.setdefault(nm, []).append(sg)
    frees, bounds = {}, []
    for nm, sgs in cnt.items():
        if len(sgs) == 1:
            frees[nm] = sgs[0]
        elif len(sgs) == 2 and sorted(sgs) == [-1, 1]:
            bounds.append(nm)
        else:
            raise IndexBalance(f"index {nm} appears {len(sgs)} times "
                               "with the same position")
    return frees, bounds


def _frees_of(terms: list[Expr], heads: dict, lset: set) -> list[tuple[str, int]]:
    frees0, _ = _term_indices(terms[0], heads, lset)
    for t in terms[1:]:
        fr2, _ = _term_indices(t, heads, lset)
        if fr2 != frees0:
            raise FreeIndexMismatch("free indices differ between terms")
    order = []
    for nm, sg in _collect(terms[0], heads, lset, []):
        if nm in frees0 and nm not in [n for n, _ in order]:
            order.append((nm, sg))
    return order


def _eval_terms(s, st: State, terms: list[Expr], rng, heads: dict,
                lset: set) -> Expr:
    parts = []
    for t in terms:
        _, bounds = _term_indices(t, heads, lset)
        if bounds:
            if not rng:
                raise EvalError("index summation needs an index range")
            for combo in product(rng, repeat=len(bounds)):
                parts.append(_subst(t, dict(zip(bounds, combo)), heads))
        else:
            parts.append(t)
    return s.value(add(*parts))


def statement(s, e: Expr) -> object:
    """Expand free and summed indices of a top level expression."""
    st = s.excalc
    match e:
        case App("%setq", _):
            return PASS
        case App(h, _) if h.startswith("%") and h not in _OPEN_FORMS:
            return PASS
        case Lst(_) | Eqn(_, _) | MatV(_) | RuleE(_, _, _) | Str(_):
            return PASS
    heads = _heads(st)
    if not heads:
        return PASS
    lset = _labelset(st)
    if not _any_symbolic(e, heads, lset):
        return PASS
    rng = _sum_range(st)
    if rng is None:
        return PASS
    terms = _distribute(e)
    frees = _frees_of(terms, heads, lset)
    if not frees:
        return _eval_terms(s, st, terms, rng, heads, lset)
    vals = []
    for combo in product(rng, repeat=len(frees)):
        m = {nm: lab for (nm, _), lab in zip(frees, combo)}
        sub = [_subst(t, m, heads) for t in terms]
        vals.append(_eval_terms(s, st, sub, rng, heads, lset))
    if all(v == vals[0] for v in vals):
        return vals[0]
    return Lst(tuple(vals))


def assign(s, lhs: Expr, rhs: Expr) -> object:
    """Handle assignments with indexed left sides or summed right sides."""
    st = s.excalc
    if isinstance(rhs, App) and rhs.head == "%quote":
        return PASS
    heads = _heads(st)
    lset = _labelset(st)
    rng = _sum_range(st)
    fr = st.frame
    if fr is not None and isinstance(lhs, App) \
            and lhs.head in (fr.name, fr.metric_name, fr.frame_name):
        raise EvalError(f"{lhs.head} is read-only")
    pf = st.pforms.get(lhs.head) if isinstance(lhs, App) else None
    if pf is not None and pf.rank:
        return _assign_comp(s, st, pf, lhs, rhs, heads, lset, rng)
    if _any_symbolic(rhs, heads, lset):
        if rng is None:
            return PASS
        if isinstance(lhs, App) and _any_symbolic(lhs, heads | {lhs.head: len(lhs.args)}, lset):
            return PASS
        terms = _distribute(rhs)
        frees = _frees_of(terms, heads, lset)
        if frees:
            raise FreeIndexMismatch("free indices on the right side of a "
                                    "plain assignment")
        v = _eval_terms(s, st, terms, rng, heads, lset)
        return s._resolve(App("%setq", (lhs, App("%quote", (v,)))))
    return PASS


def _assign_comp(s, st: State, pf: PForm, lhs: App, rhs: Expr,
                 heads: dict, lset: set, rng) -> object:
    if len(lhs.args) != pf.rank:
        raise EvalError(f"{lhs.head} expects {pf.rank} indices")
    specs = [_spec(a) for a in lhs.args]
    lfree = [(lab, sg) for sg, lab, ysym in specs if ysym and lab not in lset]
    if len({nm for nm, _ in lfree}) != len(lfree):
        raise IndexBalance("repeated index on an assignment target")
    if rng is None and (lfree or _any_symbolic(rhs, heads, lset)):
        return PASS
    terms = _distribute(rhs)
    rfree = _frees_of(terms, heads, lset)
    if dict(rfree) != dict(lfree):
        raise FreeIndexMismatch("left and right side free indices differ")
    if not lfree:
        key = tuple((sg, lab) for sg, lab, _ in specs)
        val = _eval_terms(s, st, terms, rng, heads, lset)
        best, bs, zero = _canonical(pf, key)
        if not zero:
            pf.store[best] = _sgn(bs, val)
        return val
    names = [nm for nm, _ in lfree]
    pend = []
    done = set()
    for combo in product(rng, repeat=len(names)):
        m = dict(zip(names, combo))
        key = tuple((sg, m[lab] if ysym and lab in m else lab)
                    for sg, lab, ysym in specs)
        best, bs, zero = _canonical(pf, key)
        if zero or best in done:
            continue
        done.add(best)
        sub = [_subst(t, m, heads) for t in terms]
        pend.append((best, _sgn(bs, _eval_terms(s, st, sub, rng, heads, lset))))
    for key, val in pend:
        pf.store[key] = val
    return None


# -- declarations ------------------------------------------------------------------


def _replace(e: Expr, table: dict) -> Expr:
    if e in table:
        return table[e]
    match e:
        case Add(ts):
            return Add(tuple(_replace(t, table) for t in ts))
        case Mul(fs):
            return Mul(tuple(_replace(f, table) for f in fs))
        case Pow(a, b):
            return Pow(_replace(a, table), _replace(b, table))
        case Quo(a, b):
            return Quo(_replace(a, table), _replace(b, table))
        case Neg(x):
            return Neg(_replace(x, table))
        case App(h, args2):
            return App(h, tuple(_replace(a, table) for a in args2))
        case Lst(ts):
            return Lst(tuple(_replace(t, table) for t in ts))
        case Eqn(a, b):
            return Eqn(_replace(a, table), _replace(b, table))
    return e


def _term_sign(e: Expr) -> int:
    match e:
        case Num(v):
            return -1 if v < 0 else 1
        case Neg(x):
            return -_term_sign(x)
        case Mul(fs):
            sg = 1
            for f in fs:
                sg *= _term_sign(f)
            return sg
        case Quo(a, b):
            return _term_sign(a) * _term_sign(b)
    return 1


def _f_pform(s, args) -> None:
    st = s.excalc
    for item in args:
        match item:
            case Eqn(lhs, rhs):
                deg = s._int(s._full(rhs))
            case _:
                raise EvalError("pform expects name=degree declarations")
        match lhs:
            case Sym(nm):
                rank = 0
            case App(nm, slots) if slots and all(isinstance(x, Sym) for x in slots):
                rank = len(slots)
            case _:
                raise EvalError("cannot declare this as a form")
        if deg < 0:
            raise EvalError("a form degree cannot be negative")
        st.pforms[nm] = PForm(degree=deg, rank=rank,
                              perms=[(tuple(range(rank)), 1)])
    return None


def _f_indexrange(s, args) -> None:
    st = s.excalc
    labs = []
    for a in args:
        sg, lab, _ = _spec(a)
        if sg < 0:
            raise EvalError("index range labels cannot be lowered")
        labs.append(lab)
    if len(set(map(_lkey, labs))) != len(labs):
        raise EvalError("repeated index label")
    st.range_labels = labs
    return None


def _f_tvector(s, args) -> None:
    st = s.excalc
    for a in args:
        match a:
            case Sym(nm):
                st.tvectors.add(nm)
            case _:
                raise EvalError("tvector expects names")
    return None


def _f_fdomain(s, args) -> None:
    for item in args:
        match item:
            case Eqn(Sym(nm), App(_, deps)) if deps and \
                    all(isinstance(x, Sym) for x in deps):
                s.depgraph.setdefault(nm, set()).update(x.name for x in deps)
            case _:
                raise EvalError("fdomain expects name=name(coordinates)")
    return None


def _f_frame(s, args) -> None:
    st = s.excalc
    if st.frame is None:
        raise NoFrame("no coframe declared")
    match args[0]:
        case Sym(nm):
            st.frame.frame_name = nm
        case _:
            raise EvalError("frame expects a name")
    return None


def _f_displayframe(s, args) -> Expr:
    st = s.excalc
    fr = st.frame
    if fr is None:
        raise NoFrame("no coframe declared")
    items = []
    for a, lab in enumerate(fr.labels):
        k = App(fr.name, (_spec_expr(1, lab),))
        if fr.synthetic:
            items.append(k)
            continue
        parts = [mul(fr.legs[a][i], App("d", (sym(x),)))
                 for i, x in enumerate(fr.coords) if fr.legs[a][i] != ZERO]
        items.append(Eqn(k, s._norm(add(*parts)) if parts else ZERO))
    return Lst(tuple(items))


def _slotnum(spos: dict, x: Expr) -> int:
    if isinstance(x, Sym) and x.name in spos:
        return spos[x.name]
    raise EvalError("unknown index name in a symmetry declaration")


def _f_indexsym(s, args) -> None:
    st = s.excalc
    head, clauses = args
    match head:
        case App(nm, slots) if slots and all(isinstance(x, Sym) for x in slots):
            pf = st.pforms.get(nm)
            if pf is None or pf.rank != len(slots):
                raise EvalError(f"{nm} is not a declared indexed quantity")
            spos = {x.name: k for k, x in enumerate(slots)}
        case _:
            raise EvalError("index_symmetries expects name(indices): ...")
    gens = []
    for cl in clauses.items:
        kind, rawgroups = cl.items
        sg = 1 if kind.text == "symmetric" else -1
        if rawgroups == NIL:
            groups = [[(k,) for k in range(pf.rank)]]
        else:
            groups = []
            for g in rawgroups.items:
                if all(isinstance(x, Sym) for x in g.items):
                    groups.append([(_slotnum(spos, x),) for x in g.items])
                else:
                    blocks = [tuple(_slotnum(spos, x) for x in b.items)
                              for b in g.items]
                    if len({len(b) for b in blocks}) != 1:
                        raise EvalError("index blocks must have equal length")
                    groups.append(blocks)
        for blocks in groups:
            for t in range(len(blocks) - 1):
                p = list(range(pf.rank))
                for u, w in zip(blocks[t], blocks[t + 1]):
                    p[u], p[w] = p[w], p[u]
                gens.append((tuple(p), sg))
    perms, zero = _close_perms(pf.rank, gens + pf.perms)
    pf.perms = perms
    pf.zero_all = pf.zero_all or zero
    old, pf.store = pf.store, {}
    for k, v in old.items():
        best, bs, z = _canonical(pf, k)
        if not z:
            pf.store[best] = _sgn(bs, v)
    return None


def _f_coframe(s, args) -> None:
    st = s.excalc
    legs_arg, metric_arg, sig_arg = args
    st.frame = None
    decls = legs_arg.items
    named = [isinstance(d, Eqn) for d in decls]
    if any(named) and not all(named):
        raise EvalError("cannot mix defined and undefined coframe legs")
    heads_, labels = [], []
    rhss = []
    for d in decls:
        lhs = d.lhs if isinstance(d, Eqn) else d
        match lhs:
            case App(h, (spec1,)):
                sg, lab, _ = _spec(spec1)
                if sg < 0:
                    raise EvalError("coframe legs carry upper indices")
            case _:
                raise EvalError("coframe legs look like name(index)")
        heads_.append(h)
        labels.append(lab)
        rhss.append(d.rhs if isinstance(d, Eqn) else None)
    if len(set(heads_)) != 1:
        raise EvalError("coframe legs must share one name")
    if len(set(map(_lkey, labels))) != len(labels):
        raise EvalError("repeated coframe index")
    name = heads_[0]
    n = len(labels)
    synthetic = not all(named)

    if synthetic:
        coords = [f"%x{k}" for k in range(n)]
        grid = [[ONE if i == j else ZERO for j in range(n)] for i in range(n)]
        legs, legs_inv = grid, [row[:] for row in grid]
    else:
        vals = [s._full(r) for r in rhss]
        coords = []
        for v in vals:
            for node in walk(v):
                if isinstance(node, App) and node.head == "d" \
                        and len(node.args) == 1 and isinstance(node.args[0], Sym):
                    if node.args[0].name not in coords:
                        coords.append(node.args[0].name)
        if len(coords) != n:
            raise DimensionMismatch(f"{n} coframe legs over {len(coords)} "
                                    "coordinate differentials")
        dsyms = {App("d", (sym(x),)): sym(f"%dx{i}")
                 for i, x in enumerate(coords)}
        legs = []
        for v in vals:
            w = _replace(v, dsyms)
            row = []
            for i in range(n):
                coef = s._norm(C._d(s, w, sym(f"%dx{i}")))
                if any(isinstance(t, Sym) and t.name.startswith("%dx")
                       for t in walk(coef)):
                    raise EvalError("coframe legs must be linear in the "
                                    "coordinate differentials")
                row.append(coef)
            rest = s._norm(_replace(w, {sym(f"%dx{i}"): ZERO for i in range(n)}))
            if rest != ZERO:
                raise EvalError("coframe legs must be linear in the "
                                "coordinate differentials")
            legs.append(row)
        if s._norm(LA._det(s, legs)) == ZERO:
            raise SingularCoframe("the coframe is not invertible")
        legs_inv = LA._inverse(s, LA._mk(legs))

    metric_name = None
    sig_signs: Optional[list[int]] = None
    if isinstance(metric_arg, Eqn):
        match metric_arg.lhs:
            case Sym(gn):
                metric_name = gn
            case _:
                raise EvalError("the metric declaration looks like name=expr")
        q = s._full(metric_arg.rhs)
        osyms = {App(name, (_spec_expr(1, lab),)): sym(f"%o{k}")
                 for k, lab in enumerate(labels)}
        w = _replace(q, osyms)
        metric = []
        for a in range(n):
            da = C._d(s, w, sym(f"%o{a}"))
            metric.append([s._norm(Quo(C._d(s, da, sym(f"%o{b}")), num(2)))
                           for b in range(n)])
        check = add(*(mul(metric[a][b], sym(f"%o{a}"), sym(f"%o{b}"))
                      for a in range(n) for b in range(n)))
        if s._norm(add(w, neg(check))) != ZERO:
            raise EvalError("the metric must be quadratic in the coframe")
    elif isinstance(sig_arg, Lst):
        sig_signs = [s._int(s._full(x)) for x in sig_arg.items]
        if len(sig_signs) != n:
            raise DimensionMismatch("signature length differs from the "
                                    "number of legs")
        if any(v not in (1, -1) for v in sig_signs):
            raise EvalError("a signature lists +1 and -1 entries")
        metric = [[num(sig_signs[i]) if i == j else ZERO for j in range(n)]
                  for i in range(n)]
    else:
        metric = [[ONE if i == j else ZERO for j in range(n)]
                  for i in range(n)]

    metric_inv = LA._inverse(s, LA._mk(metric))
    detg = s._norm(LA._det(s, metric))
    if sig_signs is not None:
        det_sign = 1
        for v in sig_signs:
            det_sign *= v
    elif isinstance(detg, Num):
        det_sign = -1 if detg.value < 0 else 1
    elif all(metric[i][j] == ZERO for i in range(n) for j in range(n) if i != j):
        det_sign = 1
        for i in range(n):
            det_sign *= _term_sign(metric[i][i])
    else:
        det_sign = 1
    absdet = s._norm(_sgn(det_sign, detg))
    sqrtg = ONE if absdet == ONE else s._norm(App("sqrt", (absdet,)))

    st.frame = Frame(name=name, labels=labels, coords=coords, legs=legs,
                     legs_inv=legs_inv, metric=metric, metric_inv=metric_inv,
                     detg=detg, det_sign=det_sign, sqrtg=sqrtg,
                     metric_name=metric_name, synthetic=synthetic,
                     pos={lab: k for k, lab in enumerate(labels)},
                     cpos={x: i for i, x in enumerate(coords)})
    return None


def _f_riemannconx(s, args) -> None:
    st = s.excalc
    fr = st.frame
    if fr is None:
        raise NoFrame("riemannconx needs a coframe")
    match args[0]:
        case Sym(nm):
            pass
        case _:
            raise EvalError("riemannconx expects a name")
    if fr.synthetic and any(isinstance(t, Sym)
                            for row in fr.metric for e in row for t in walk(e)):
        raise EvalError("riemannconx needs coordinate legs or a "
                        "constant metric")
    n = len(fr.labels)
    xs = [sym(x) for x in fr.coords]
    M, W, g, ginv = fr.legs, fr.legs_inv, fr.metric, fr.metric_inv
    gc = [[s._norm(add(*(mul(M[a][i], g[a][b], M[b][j])
                         for a in range(n) for b in range(n))))
           for j in range(n)] for i in range(n)]
    gcinv = [[s._norm(add(*(mul(W[i][a], ginv[a][b], W[j][b])
                            for a in range(n) for b in range(n))))
              for j in range(n)] for i in range(n)]
    dgc = [[[s._norm(C._d(s, gc[i][j], xs[k])) for j in range(n)]
            for i in range(n)] for k in range(n)]
    gam = [[[s._norm(Quo(add(*(mul(gcinv[k][m2],
                               add(dgc[i][m2][j], dgc[j][m2][i],
                                   neg(dgc[m2][i][j])))
                               for m2 in range(n))), num(2)))
             for j in range(n)] for i in range(n)] for k in range(n)]
    pf = PForm(degree=1, rank=2, perms=[((0, 1), 1)])
    for a in range(n):
        for b in range(n):
            terms = []
            for i in range(n):
                coef = add(*(mul(M[a][k],
                                 add(*(mul(gam[k][i][j], W[j][b])
                                       for j in range(n)),
                                     C._d(s, W[k][b], xs[i])))
                             for k in range(n)))
                coef = s._norm(coef)
                if coef != ZERO:
                    terms.append((coef, (App("d", (xs[i],)),)))
            val = _from_terms(s, st, terms)
            pf.store[((-1, fr.labels[b]), (1, fr.labels[a]))] = val
    st.pforms[nm] = pf
    return None


FORMS: dict[str, Callable] = {
    "%wedge": _f_wedge,
    "%inner": _f_inner,
    "%lie": _f_lie,
    "%hodge": _f_hodge,
    "%comp": _f_comp,
    "%pform": _f_pform,
    "%indexrange": _f_indexrange,
    "%coframe": _f_coframe,
    "%frame": _f_frame,
    "%displayframe": _f_displayframe,
    "%riemannconx": _f_riemannconx,
    "%fdomain": _f_fdomain,
    "%indexsym": _f_indexsym,
    "%tvector": _f_tvector,
}
