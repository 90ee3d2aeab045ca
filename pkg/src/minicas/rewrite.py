"""Pattern matching, rule sets, operator properties, assumptions.

Pattern variables are the leaves marked with a twiddle on input.  A rule
set is an immutable ordered list of rules; activation order decides which
rule fires first.  Matching is deterministic: candidate assignments are
enumerated in the stored (canonical) order of the subject and the first
success wins.  No backtracking happens across rule boundaries.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Optional

from .errors import ContradictoryAssumption, EvalError
from .expr import (
    Add, App, Eqn, Expr, Flt, Lst, MatV, Mul, Neg, Num, Pow, PVar, Quo, RuleE,
    Str, Sym, ZERO, ONE, add, app, mul, num, order_key, sym, walk,
)

Bindings = dict[str, Expr]

# Expanding a power into repeated factors is capped so huge exponents do
# not blow up the matcher.
_UNIT_CAP = 64


# -- rules ---------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Rule:
    lhs: Expr
    rhs: Expr
    guard: Optional[Expr]
    origin: str
    pvars: frozenset[str]

    def as_rule_expr(self) -> RuleE:
        return RuleE(self.lhs, self.rhs, self.guard)


def _pvars_of(e: Expr) -> frozenset[str]:
    names: set[str] = set()
    for node in walk(e):
        if isinstance(node, PVar):
            names.add(node.name)
    return frozenset(names)


def _promote_syms(e: Expr, names: frozenset[str]) -> Expr:
    """Bare names on a rule's right side refer to the pattern variables of
    the same name bound on the left."""
    match e:
        case Sym(name) if name in names:
            return PVar(name)
        case Add(terms):
            return Add(tuple(_promote_syms(t, names) for t in terms))
        case Mul(factors):
            return Mul(tuple(_promote_syms(f, names) for f in factors))
        case Pow(base, exp):
            return Pow(_promote_syms(base, names), _promote_syms(exp, names))
        case Neg(arg):
            return Neg(_promote_syms(arg, names))
        case Quo(a, b):
            return Quo(_promote_syms(a, names), _promote_syms(b, names))
        case App(head, args):
            return App(head, tuple(_promote_syms(a, names) for a in args))
        case Lst(items):
            return Lst(tuple(_promote_syms(x, names) for x in items))
        case Eqn(a, b):
            return Eqn(_promote_syms(a, names), _promote_syms(b, names))
        case _:
            return e


def split_lhs_coeff(lhs: Expr):
    """Peel an exact numeric coefficient off a rule lhs.

    A lhs like -a*b or 2*x cannot match a monomial whose stored coefficient
    differs, so the coefficient moves to the rhs: c*L => R becomes L => R/c."""
    c = Fraction(1)
    while True:
        match lhs:
            case Neg(arg):
                c, lhs = -c, arg
            case Mul(factors) if isinstance(factors[0], Num):
                c *= factors[0].value
                rest = factors[1:]
                lhs = rest[0] if len(rest) == 1 else Mul(rest)
            case Mul(factors) if (isinstance(factors[0], Quo)
                                  and isinstance(factors[0].num, Num)
                                  and isinstance(factors[0].den, Num)
                                  and factors[0].den.value != 0):
                c *= factors[0].num.value / factors[0].den.value
                rest = factors[1:]
                lhs = rest[0] if len(rest) == 1 else Mul(rest)
            case Quo(n, Num(d)) if d != 0:
                c, lhs = c / d, n
            case _:
                return c, lhs


def compile_rule(e: Expr, origin: str = "") -> Rule:
    if isinstance(e, RuleE):
        lhs, rhs, guard = e.lhs, e.rhs, e.guard
    elif isinstance(e, Eqn):
        lhs, rhs, guard = e.lhs, e.rhs, None
    else:
        raise EvalError("not a rule: expected lhs => rhs or lhs = rhs")
    c, stripped = split_lhs_coeff(lhs)
    if c != 1 and not isinstance(stripped, (Num, Flt)):
        lhs = stripped
        rhs = Neg(rhs) if c == -1 else Mul((Num(1 / c), rhs))
    if isinstance(lhs, PVar):
        raise EvalError("rule left-hand side cannot be a lone pattern variable")
    lv = _pvars_of(lhs)
    rhs = _promote_syms(rhs, lv)
    if guard is not None:
        guard = _promote_syms(guard, lv)
    bad = (_pvars_of(rhs) | (_pvars_of(guard) if guard is not None else frozenset())) - lv
    if bad:
        raise EvalError("unbound pattern variable in rule: ~" + sorted(bad)[0])
    return Rule(lhs, rhs, guard, origin, lv)


def compile_rules(exprs, origin: str = "") -> list[Rule]:
    return [compile_rule(e, origin) for e in exprs]


def subst_pvars(e: Expr, b: Bindings) -> Expr:
    """Replace pattern variables by their bound expressions."""
    match e:
        case PVar(name):
            return b[name]
        case Add(terms):
            return Add(tuple(subst_pvars(t, b) for t in terms))
        case Mul(factors):
            return Mul(tuple(subst_pvars(f, b) for f in factors))
        case Pow(base, exp):
            return Pow(subst_pvars(base, b), subst_pvars(exp, b))
        case Neg(arg):
            return Neg(subst_pvars(arg, b))
        case Quo(lhs, rhs):
            return Quo(subst_pvars(lhs, b), subst_pvars(rhs, b))
        case App(head, args):
            return App(head, tuple(subst_pvars(a, b) for a in args))
        case Lst(items):
            return Lst(tuple(subst_pvars(x, b) for x in items))
        case Eqn(lhs, rhs):
            return Eqn(subst_pvars(lhs, b), subst_pvars(rhs, b))
        case _:
            return e


# -- negativity helpers ----------------------------------------------------------


def neg_strip(e: Expr) -> Optional[Expr]:
    """Return u with e = -u when e carries an explicit leading minus."""
    match e:
        case Neg(arg):
            return arg
        case Num(v) if v < 0:
            return Num(-v)
        case Flt(v) if v < 0:
            return Flt(-v)
        case Quo(n, d):
            sn = neg_strip(n)
            return None if sn is None else Quo(sn, d)
        case Mul(factors) if isinstance(factors[0], (Num, Flt)) and factors[0].value < 0:
            head = factors[0]
            flipped = Num(-head.value) if isinstance(head, Num) else Flt(-head.value)
            rest = factors[1:]
            if isinstance(flipped, Num) and flipped.value == 1 and len(rest) == 1:
                return rest[0]
            if isinstance(flipped, Num) and flipped.value == 1:
                return Mul(rest)
            return Mul((flipped,) + rest)
        case _:
            return None


def _head_name(e: Expr) -> Optional[str]:
    return e.head if isinstance(e, App) else None


def _factor_parts(f: Expr) -> tuple[Expr, Expr]:
    if isinstance(f, Pow):
        return f.base, f.exp
    return f, ONE


# -- matching ------------------------------------------------------------------


class _NoMatch(Exception):
    pass


def _match(p: Expr, s: Expr, b: Bindings, nc: frozenset[str]) -> Iterator[Bindings]:
    """Yield extended binding maps for every way p matches s, in order."""
    match p:
        case PVar(name):
            if name in b:
                if b[name] == s:
                    yield b
            else:
                b2 = dict(b)
                b2[name] = s
                yield b2
        case Num(_) | Flt(_) | Str(_) | Sym(_):
            if p == s:
                yield b
        case Neg(inner):
            if isinstance(s, Neg):
                yield from _match(inner, s.arg, b, nc)
            else:
                stripped = neg_strip(s)
                if stripped is not None:
                    yield from _match(inner, stripped, b, nc)
        case Pow(pb, pe):
            if isinstance(s, Pow):
                for b1 in _match(pb, s.base, b, nc):
                    yield from _match(pe, s.exp, b1, nc)
        case Quo(pn, pd):
            if isinstance(s, Quo):
                for b1 in _match(pn, s.num, b, nc):
                    yield from _match(pd, s.den, b1, nc)
        case Eqn(pl, pr):
            if isinstance(s, Eqn):
                for b1 in _match(pl, s.lhs, b, nc):
                    yield from _match(pr, s.rhs, b1, nc)
        case Lst(items):
            if isinstance(s, Lst) and len(items) == len(s.items):
                yield from _match_seq(items, s.items, b, nc)
        case App(ph, pargs):
            if isinstance(s, App) and ph == s.head and len(pargs) == len(s.args):
                yield from _match_seq(pargs, s.args, b, nc)
        case Add(pterms):
            for b2, left in _match_sum(pterms, s, b, nc):
                if not left:
                    yield b2
        case Mul(pfactors):
            for b2, cleft, pre, post in _match_product(pfactors, s, b, nc):
                if not cleft and not pre and not post:
                    yield b2
        case _:
            if p == s:
                yield b


def _match_seq(ps, ss, b: Bindings, nc: frozenset[str]) -> Iterator[Bindings]:
    if not ps:
        yield b
        return
    for b1 in _match(ps[0], ss[0], b, nc):
        yield from _match_seq(ps[1:], ss[1:], b1, nc)


def _match_sum(pterms, s: Expr, b: Bindings, nc: frozenset[str]):
    """Yield (bindings, leftover subject terms) for a sum pattern."""
    sterms = list(s.terms) if isinstance(s, Add) else [s]
    fixed = [p for p in pterms if not isinstance(p, PVar)]
    lone = [p for p in pterms if isinstance(p, PVar)]
    if len(lone) > 1 or len(fixed) + len(lone) > len(sterms):
        return

    def assign(pi: int, used: frozenset[int], bb: Bindings):
        if pi == len(fixed):
            rest = [t for i, t in enumerate(sterms) if i not in used]
            if lone:
                name = lone[0].name
                if not rest:
                    return
                val = rest[0] if len(rest) == 1 else Add(tuple(rest))
                if name in bb:
                    if bb[name] == val:
                        yield bb, []
                    return
                b2 = dict(bb)
                b2[name] = val
                yield b2, []
            else:
                yield bb, rest
            return
        for i, t in enumerate(sterms):
            if i in used:
                continue
            for b1 in _match(fixed[pi], t, bb, nc):
                yield from assign(pi + 1, used | {i}, b1)

    yield from assign(0, frozenset(), b)


def _is_noncom_factor(f: Expr, nc: frozenset[str]) -> bool:
    base, _ = _factor_parts(f)
    name = _head_name(base)
    return name is not None and name in nc


def _units(factors, nc: frozenset[str], noncom_side: bool):
    """Expand a factor list into (base, count|exp, atomic) unit entries.

    Integer powers up to the cap expand into countable units; everything
    else stays atomic and must match as a whole.
    """
    out = []
    for f in factors:
        if _is_noncom_factor(f, nc) != noncom_side:
            continue
        base, exp = _factor_parts(f)
        if isinstance(exp, Num) and exp.is_integer and 0 < exp.value <= _UNIT_CAP:
            out.append([base, int(exp.value), False])
        else:
            out.append([f, 1, True])
    return out


def _rebuild_units(units) -> list[Expr]:
    out = []
    for base, cnt, atomic in units:
        if cnt <= 0:
            continue
        if atomic or cnt == 1:
            out.append(base)
        else:
            out.append(Pow(base, num(cnt)))
    return out


def _match_product(pfactors, s: Expr, b: Bindings, nc: frozenset[str]):
    """Yield (bindings, comm leftover, nc prefix, nc suffix) assignments."""
    sfactors = list(s.factors) if isinstance(s, Mul) else [s]
    p_nc = [p for p in pfactors if _is_noncom_factor(p, nc)]
    p_comm = [p for p in pfactors if not _is_noncom_factor(p, nc)]
    s_comm_units = _units(sfactors, nc, noncom_side=False)
    s_nc_seq: list[Expr] = []
    for base, cnt, atomic in _units(sfactors, nc, noncom_side=True):
        s_nc_seq.extend([base] * cnt if not atomic else [base])

    p_nc_seq: list[Expr] = []
    for p in p_nc:
        base, exp = _factor_parts(p)
        if isinstance(exp, Num) and exp.is_integer and 0 < exp.value <= _UNIT_CAP:
            p_nc_seq.extend([base] * int(exp.value))
        else:
            p_nc_seq.append(p)

    lone = [p for p in p_comm if isinstance(p, PVar)]
    fixed = [p for p in p_comm if not isinstance(p, PVar)]
    if len(lone) > 1:
        return

    def match_nc(bb: Bindings):
        if not p_nc_seq:
            yield bb, [], []
            return
        k = len(p_nc_seq)
        for start in range(len(s_nc_seq) - k + 1):
            window = s_nc_seq[start:start + k]
            for b1 in _match_seq(tuple(p_nc_seq), tuple(window), bb, nc):
                yield b1, s_nc_seq[:start], s_nc_seq[start + k:]
                return  # first window only: deterministic leftmost match

    def take_fixed(pi: int, units, bb: Bindings):
        if pi == len(fixed):
            rest = _rebuild_units(units)
            if lone:
                if not rest:
                    return
                name = lone[0].name
                val = rest[0] if len(rest) == 1 else Mul(tuple(rest))
                if name in bb:
                    if bb[name] == val:
                        yield bb, []
                    return
                b2 = dict(bb)
                b2[name] = val
                yield b2, []
            else:
                yield bb, rest
            return
        pat = fixed[pi]
        pbase, pexp = _factor_parts(pat)
        want = (
            int(pexp.value)
            if isinstance(pexp, Num) and pexp.is_integer and 0 < pexp.value <= _UNIT_CAP
            else None
        )
        for idx, (base, cnt, atomic) in enumerate(units):
            if atomic or want is None:
                for b1 in _match(pat, base if atomic else _rebuild_units([units[idx]])[0], bb, nc):
                    rest_units = [u[:] for u in units]
                    rest_units[idx][1] = 0
                    yield from take_fixed(pi + 1, rest_units, b1)
            elif cnt >= want:
                for b1 in _match(pbase, base, bb, nc):
                    rest_units = [u[:] for u in units]
                    rest_units[idx][1] = cnt - want
                    yield from take_fixed(pi + 1, rest_units, b1)

    for b_nc, pre, post in match_nc(b):
        for b2, comm_left in take_fixed(0, [u[:] for u in s_comm_units], b_nc):
            yield b2, comm_left, pre, post


def match(pattern: Expr, subject: Expr, noncom: frozenset[str] = frozenset()) -> Optional[Bindings]:
    """First full match of pattern against subject, or None."""
    for b in _match(pattern, subject, {}, noncom):
        return b
    return None


# -- rule application ------------------------------------------------------------


@dataclass
class RewriteCtx:
    """Callbacks the evaluator supplies to the rewriter.

    renorm re-canonicalizes an expression (including builtin function
    dispatch); eval_bool decides rule guards; tick counts fired rules
    against the step budget and raises when it is exhausted.
    """
    renorm: Callable[[Expr], Expr]
    eval_bool: Callable[[Expr], bool]
    tick: Callable[[str], None]
    noncom: frozenset[str] = frozenset()


class ActiveRules:
    """Activation-ordered rule list with lookup indexes."""

    def __init__(self, rules: list[Rule]):
        self.rules = list(rules)
        self.by_head: dict[str, list[tuple[int, Rule]]] = {}
        self.by_sym: dict[str, list[tuple[int, Rule]]] = {}
        self.sums: list[tuple[int, Rule]] = []
        self.products: list[tuple[int, Rule]] = []
        self.pows: list[tuple[int, Rule]] = []
        self.swap_pairs: dict[tuple[Expr, Expr], tuple[int, Rule]] = {}
        for i, r in enumerate(rules):
            lhs = r.lhs
            if isinstance(lhs, App):
                self.by_head.setdefault(lhs.head, []).append((i, r))
            elif isinstance(lhs, Sym):
                self.by_sym.setdefault(lhs.name, []).append((i, r))
            elif isinstance(lhs, Add):
                self.sums.append((i, r))
            elif isinstance(lhs, Mul):
                self.products.append((i, r))
                if (
                    len(lhs.factors) == 2
                    and not r.pvars
                    and all(isinstance(f, App) for f in lhs.factors)
                ):
                    self.swap_pairs.setdefault((lhs.factors[0], lhs.factors[1]), (i, r))
            elif isinstance(lhs, Pow):
                self.pows.append((i, r))
            else:
                self.products.append((i, r))
        # the pair-lookup shortcut is only sound when every product rule
        # participates in it, otherwise activation order could be violated
        self.swap_only = bool(self.swap_pairs) and len(self.swap_pairs) == len(self.products)

    def __len__(self) -> int:
        return len(self.rules)

    def candidates(self, e: Expr) -> list[tuple[int, Rule]]:
        match e:
            case App(name, _):
                found = list(self.by_head.get(name, []))
            case Sym(name):
                found = list(self.by_sym.get(name, []))
            case Add(_):
                found = list(self.sums)
            case Mul(_):
                found = self.products + self.pows
                found.sort(key=lambda ir: ir[0])
            case Pow(base, _):
                # cos(x)**2 is also a candidate for cos(~x)*cos(~y)
                found = self.pows + self.products
                found.sort(key=lambda ir: ir[0])
            case _:
                found = []
        return found


def _try_rules_at(e: Expr, active: ActiveRules, ctx: RewriteCtx) -> Optional[Expr]:
    """First applicable rule rewrites e; returns the raw replacement."""
    swap_done = False
    if isinstance(e, Mul) and active.swap_only:
        hit = _try_swap(e, active, ctx)
        if hit is not None:
            return hit
        swap_done = True
    for _, rule in active.candidates(e):
        if swap_done and isinstance(rule.lhs, Mul):
            continue
        res = _apply_rule(rule, e, ctx)
        if res is not None:
            return res
    return None


def _try_swap(e: Mul, active: ActiveRules, ctx: RewriteCtx) -> Optional[Expr]:
    comm: list[Expr] = []
    seq: list[Expr] = []
    for f in e.factors:
        if _is_noncom_factor(f, ctx.noncom):
            base, exp = _factor_parts(f)
            if isinstance(exp, Num) and exp.is_integer and 0 < exp.value <= _UNIT_CAP:
                seq.extend([base] * int(exp.value))
            else:
                seq.append(f)
        else:
            comm.append(f)
    for i in range(len(seq) - 1):
        hit = active.swap_pairs.get((seq[i], seq[i + 1]))
        if hit is None:
            continue
        idx, rule = hit
        ctx.tick(_rule_label(rule))
        parts = comm + seq[:i] + [rule.rhs] + seq[i + 2:]
        return Mul(tuple(parts)) if len(parts) > 1 else parts[0]
    return None


def _rule_label(rule: Rule) -> str:
    heads = sorted(_lhs_heads(rule.lhs))
    inner = heads[0] if heads else "?"
    return f"{rule.origin or 'rule'}({inner})"


def _apply_rule(rule: Rule, e: Expr, ctx: RewriteCtx) -> Optional[Expr]:
    lhs = rule.lhs
    if isinstance(lhs, Add) and isinstance(e, Add):
        for b, leftover in _match_sum(lhs.terms, e, {}, ctx.noncom):
            if rule.guard is not None and not ctx.eval_bool(subst_pvars(rule.guard, b)):
                continue
            ctx.tick(_rule_label(rule))
            rhs = subst_pvars(rule.rhs, b)
            return Add((rhs,) + tuple(leftover)) if leftover else rhs
        return None
    if isinstance(lhs, (Mul, Pow)) and isinstance(e, Mul) or isinstance(lhs, Mul) and isinstance(e, Pow):
        pfactors = lhs.factors if isinstance(lhs, Mul) else (lhs,)
        for b, comm_left, pre, post in _match_product(pfactors, e, {}, ctx.noncom):
            if rule.guard is not None and not ctx.eval_bool(subst_pvars(rule.guard, b)):
                continue
            ctx.tick(_rule_label(rule))
            rhs = subst_pvars(rule.rhs, b)
            parts = list(comm_left) + list(pre) + [rhs] + list(post)
            return Mul(tuple(parts)) if len(parts) > 1 else parts[0]
        return None
    for b in _match(lhs, e, {}, ctx.noncom):
        if rule.guard is not None and not ctx.eval_bool(subst_pvars(rule.guard, b)):
            continue
        ctx.tick(_rule_label(rule))
        return subst_pvars(rule.rhs, b)
    return None


def apply_rules(e: Expr, active: ActiveRules, ctx: RewriteCtx) -> Expr:
    """Innermost-first rewriting to fixpoint, budget bounded."""
    if not len(active):
        return e

    def sweep(node: Expr) -> tuple[Expr, bool]:
        changed = False
        match node:
            case Add(terms):
                parts = []
                for t in terms:
                    t2, c = sweep(t)
                    changed |= c
                    parts.append(t2)
                node2: Expr = Add(tuple(parts)) if len(parts) > 1 else parts[0]
            case Mul(factors):
                parts = []
                for f in factors:
                    f2, c = sweep(f)
                    changed |= c
                    parts.append(f2)
                node2 = Mul(tuple(parts)) if len(parts) > 1 else parts[0]
            case Pow(base, exp):
                b2, c1 = sweep(base)
                e2, c2 = sweep(exp)
                changed |= c1 or c2
                node2 = Pow(b2, e2)
            case Quo(n, d):
                n2, c1 = sweep(n)
                d2, c2 = sweep(d)
                changed |= c1 or c2
                node2 = Quo(n2, d2)
            case Neg(arg):
                a2, c = sweep(arg)
                changed |= c
                node2 = Neg(a2)
            case App(head, args):
                parts = []
                for a in args:
                    a2, c = sweep(a)
                    changed |= c
                    parts.append(a2)
                node2 = App(head, tuple(parts))
            case Lst(items):
                parts = []
                for x in items:
                    x2, c = sweep(x)
                    changed |= c
                    parts.append(x2)
                node2 = Lst(tuple(parts))
            case Eqn(l, r):
                l2, c1 = sweep(l)
                r2, c2 = sweep(r)
                changed |= c1 or c2
                node2 = Eqn(l2, r2)
            case _:
                node2 = node
        # try rules at this node, restarting here after each hit
        while True:
            hit = _try_rules_at(node2, active, ctx)
            if hit is None:
                break
            node2 = ctx.renorm(hit)
            changed = True
        return node2, changed

    while True:
        e2, changed = sweep(e)
        if not changed:
            return e2
        e = ctx.renorm(e2)


def apply_literal(e: Expr, mapping: dict[Expr, Expr]) -> Expr:
    """Simultaneous literal kernel replacement (sub / match)."""

    def go(node: Expr) -> Expr:
        if node in mapping:
            return mapping[node]
        match node:
            case Add(terms):
                return Add(tuple(go(t) for t in terms))
            case Mul(factors):
                return Mul(tuple(go(f) for f in factors))
            case Pow(base, exp):
                return Pow(go(base), go(exp))
            case Quo(n, d):
                return Quo(go(n), go(d))
            case Neg(arg):
                return Neg(go(arg))
            case App(head, args):
                return App(head, tuple(go(a) for a in args))
            case Lst(items):
                return Lst(tuple(go(x) for x in items))
            case Eqn(l, r):
                return Eqn(go(l), go(r))
            case MatV(rows):
                return MatV(tuple(tuple(go(x) for x in row) for row in rows))
            case _:
                return node
    return go(e)


# -- operator properties -----------------------------------------------------------


PROPERTY_NAMES = ("symmetric", "antisymmetric", "even", "odd", "linear", "noncom")

_EXCLUSIVE = (("symmetric", "antisymmetric"), ("even", "odd"))


def check_properties(props: set[str]) -> None:
    for a, b in _EXCLUSIVE:
        if a in props and b in props:
            raise EvalError(f"operator cannot be both {a} and {b}")


def _sort_parity(args: tuple[Expr, ...]) -> tuple[tuple[Expr, ...], int]:
    keyed = sorted(range(len(args)), key=lambda i: order_key(args[i]))
    sign = 1
    perm = list(keyed)
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, clen = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            clen += 1
        if clen % 2 == 0:
            sign = -sign
    return tuple(args[i] for i in keyed), sign


def canonicalize_properties(name: str, props: set[str], args: tuple[Expr, ...],
                            free_of: Callable[[Expr, Expr], bool]) -> Optional[Expr]:
    """Reduce an operator application by its declared properties.

    Returns None when no property changes the application.  free_of(e, w)
    reports that w does not occur in e (used for the linear property).
    """
    changed = False
    sign = 1
    args = tuple(args)

    if ("even" in props or "odd" in props) and args:
        stripped = neg_strip(args[0])
        if stripped is not None:
            args = (stripped,) + args[1:]
            changed = True
            if "odd" in props:
                sign = -sign

    if "antisymmetric" in props:
        for i in range(len(args)):
            for j in range(i + 1, len(args)):
                if args[i] == args[j]:
                    return ZERO
        sorted_args, parity = _sort_parity(args)
        if sorted_args != args:
            changed = True
            args = sorted_args
        sign *= parity
        if parity < 0:
            changed = True
    elif "symmetric" in props:
        sorted_args = tuple(sorted(args, key=order_key))
        if sorted_args != args:
            args = sorted_args
            changed = True

    if "linear" in props and len(args) == 2:
        expanded = _linear_expand(name, args[0], args[1], free_of)
        if expanded is not None:
            out = expanded if sign > 0 else Neg(expanded)
            return out

    if not changed:
        return None
    result: Expr = App(name, args)
    return result if sign > 0 else Neg(result)


def _linear_expand(name: str, u: Expr, w: Expr,
                   free_of: Callable[[Expr, Expr], bool]) -> Optional[Expr]:
    terms = u.terms if isinstance(u, Add) else (u,)
    out_terms: list[Expr] = []
    trivial = True
    for t in terms:
        factors = list(t.factors) if isinstance(t, Mul) else [t]
        coeff: list[Expr] = []
        core: list[Expr] = []
        for f in factors:
            if isinstance(f, (Num, Flt)) or free_of(f, w):
                coeff.append(f)
            else:
                core.append(f)
        if not coeff:
            out_terms.append(App(name, (t, w)))
            continue
        trivial = False
        core_expr: Expr = ONE if not core else (core[0] if len(core) == 1 else Mul(tuple(core)))
        call = App(name, (core_expr, w))
        out_terms.append(Mul(tuple(coeff) + (call,)))
    if trivial and len(out_terms) == 1:
        return None
    if trivial and isinstance(u, Add):
        return Add(tuple(out_terms))
    return out_terms[0] if len(out_terms) == 1 else Add(tuple(out_terms))


# -- builtin rule tables -----------------------------------------------------------


def _pv(n: str) -> PVar:
    return PVar(n)


def _fixp(e: Expr) -> App:
    return app("fixp", e)


def builtin_rules() -> list[Rule]:
    """Always-active lowest-priority simplification table."""
    x = _pv("x")
    pi = sym("pi")
    e_ = sym("e")
    x_over_pi = Quo(_pv("x"), pi)
    half = Num(Fraction(1, 2))
    rules: list[Expr] = [
        RuleE(app("log", Num(Fraction(1))), ZERO, None),
        RuleE(app("log", e_), ONE, None),
        RuleE(app("log", Pow(e_, x)), _pv("x"), None),
        RuleE(app("df", app("log", x), x), Quo(ONE, _pv("x")), None),
        RuleE(app("sin", x), ZERO, _fixp(x_over_pi)),
        RuleE(app("cos", x), Pow(Num(Fraction(-1)), x_over_pi), _fixp(x_over_pi)),
        RuleE(app("tan", x), ZERO, _fixp(x_over_pi)),
        RuleE(app("sin", x), Pow(Num(Fraction(-1)), Add((x_over_pi, Neg(half)))),
              _fixp(Add((x_over_pi, Neg(half))))),
        RuleE(app("cos", x), ZERO, _fixp(Add((x_over_pi, Neg(half))))),
        RuleE(app("exp", ZERO), ONE, None),
    ]
    return compile_rules(rules, origin="builtin")


def trig_expand_rules() -> list[Rule]:
    """Product-to-sum and Pythagorean rules used by simplify(trig)."""
    x, y = _pv("x"), _pv("y")
    half = Num(Fraction(1, 2))
    rules = [
        RuleE(Add((Pow(app("sin", x), num(2)), Pow(app("cos", x), num(2)))), ONE, None),
        RuleE(Mul((app("cos", x), app("cos", y))),
              Mul((half, Add((app("cos", Add((_pv("x"), _pv("y")))),
                              app("cos", Add((_pv("x"), Neg(_pv("y"))))))))), None),
        RuleE(Mul((app("sin", x), app("sin", y))),
              Mul((half, Add((app("cos", Add((_pv("x"), Neg(_pv("y"))))),
                              Neg(app("cos", Add((_pv("x"), _pv("y"))))))))), None),
        RuleE(Mul((app("sin", x), app("cos", y))),
              Mul((half, Add((app("sin", Add((_pv("x"), _pv("y")))),
                              app("sin", Add((_pv("x"), Neg(_pv("y"))))))))), None),
    ]
    return compile_rules(rules, origin="trig")


def ln_rules() -> list[Rule]:
    x = _pv("x")
    e_ = sym("e")
    rules = [
        RuleE(app("log", Num(Fraction(1))), ZERO, None),
        RuleE(app("log", e_), ONE, None),
        RuleE(app("log", Pow(e_, x)), _pv("x"), None),
        RuleE(app("ln", Num(Fraction(1))), ZERO, None),
        RuleE(app("ln", e_), ONE, None),
        RuleE(app("ln", Pow(e_, x)), _pv("x"), None),
    ]
    return compile_rules(rules, origin="ln")


SIMPLIFY_METHODS = ("trig", "ln", "exp", "sqrt", "power", "radical")


# -- assumptions ---------------------------------------------------------------


_PROP_SET = ("positive", "negative", "nonzero", "integer", "real")


@dataclass
class Assumptions:
    table: dict[str, set[str]] = field(default_factory=dict)

    def known(self, name: str) -> set[str]:
        return self.table.get(name, set())

    def is_positive(self, name: str) -> bool:
        return "positive" in self.known(name)

    def assume(self, name: str, props: set[str]) -> None:
        cur = self.table.setdefault(name, set())
        new = cur | props
        if "positive" in new and "negative" in new:
            raise ContradictoryAssumption(
                f"contradictory assumption on {name}: positive and negative")
        if "positive" in new or "negative" in new:
            new.add("nonzero")
            new.add("real")
        self.table[name] = new

    def clear(self, name: str) -> None:
        self.table.pop(name, None)

    def about_text(self, name: str) -> str:
        props = self.known(name)
        if not props:
            return f"{name}:\n  nothing known about this object"
        if "positive" in props:
            rng = "RealRange(Open(0),infinity)"
        elif "negative" in props:
            rng = "RealRange(-infinity,Open(0))"
        elif "integer" in props:
            rng = "integer"
        elif "nonzero" in props:
            rng = "nonzero"
        else:
            rng = "real"
        return f"Originally {name}, renamed {name}~:\n  is assumed to be: {rng}"


def relation_props(op: str, bound: Fraction) -> set[str]:
    """Property set implied by `symbol op bound` for rational bound."""
    if op == ">":
        return {"positive", "real"} if bound >= 0 else {"real"}
    if op == "<":
        return {"negative", "real"} if bound <= 0 else {"real"}
    if op in (">=", "<="):
        if op == ">=" and bound > 0:
            return {"positive", "real"}
        if op == "<=" and bound < 0:
            return {"negative", "real"}
        return {"real"}
    if op == "neq":
        return {"nonzero"} if bound == 0 else set()
    raise EvalError(f"unsupported assumption relation: {op}")


# -- showrules -----------------------------------------------------------------


def _lhs_heads(e: Expr) -> set[str]:
    names: set[str] = set()
    if isinstance(e, Sym):
        names.add(e.name)
    for node in walk(e):
        if isinstance(node, App):
            names.add(node.head)
    return names


def rules_for_name(name: str, builtin: list[Rule], user: list[Rule]) -> list[Rule]:
    out = []
    for r in builtin + user:
        if name in _lhs_heads(r.lhs):
            out.append(r)
    return out
