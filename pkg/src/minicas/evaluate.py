"""Statement execution: the session, assignment, loops, procedures, files.

A Session owns all mutable state.  Statements arrive as encoded forms from
the reader (heads starting with %); everything else is an expression that
gets resolved, normalized and run through the active rule sets.
"""
from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from . import excalc as XC
from . import normal as N
from . import rewrite as RW
from .errors import (
    BudgetExceeded, CasError, ContradictoryAssumption, DivisionByZero,
    EvalError, ParseError,
)
from .expr import (
    Add, App, Eqn, Expr, Flt, Lst, MatV, Mul, Neg, Num, Pow, PVar, Quo, RuleE,
    Str, Sym, NIL, ONE, ZERO, RESERVED, add, app, lst, mul, num, sym, walk,
)
from .printer import print_linear, print_nat, print_tex
from .reader import ParserContext, Parser, Statement

T = sym("t")

_DEF_BUDGET = 10**6


class _Return(Exception):
    def __init__(self, value: Optional[Expr]):
        self.value = value


class _EndOfFile(Exception):
    """Raised by `end` while replaying a file."""


class QuitRequested(Exception):
    pass


@dataclass
class Result:
    """What one eval_command call produced."""
    display: Optional[Expr] = None
    text: str = ""
    errors: list[str] = field(default_factory=list)
    texes: list[str] = field(default_factory=list)
    quit: bool = False


@dataclass
class _Proc:
    name: str
    params: tuple[str, ...]
    body: Expr


class Session:
    def __init__(self, budget: Optional[int] = None, cwd: Optional[str] = None):
        env = os.environ.get("MINICAS_STEP_BUDGET")
        self.budget_limit = budget or (int(env) if env else _DEF_BUDGET)
        self.cwd = cwd or os.getcwd()
        self.aliases: dict[str, str] = {}
        self.infix_bp: dict[str, int] = {}
        self.reader_ctx = ParserContext(self.aliases, self.infix_bp, False)
        self.history: list[dict] = []
        self.prompt = 0
        self._fresh_state()

    def _fresh_state(self) -> None:
        self.switches = N.SwitchSet()
        self.bindings: dict[str, Expr] = {}
        self.kernel_bindings: dict[Expr, Expr] = {}
        self.arrays: dict[str, tuple[tuple[int, ...], dict]] = {}
        self.matrix_names: set[str] = set()
        self.operators: set[str] = set()
        self.props: dict[str, set[str]] = {}
        self.noncom_names: set[str] = set()
        self.procs: dict[str, _Proc] = {}
        self.rules_user: list[RW.Rule] = []
        self._active_cache: Optional[RW.ActiveRules] = None
        self._builtin_rules = RW.builtin_rules()
        self.assumptions = RW.Assumptions()
        self.depgraph: dict[str, set[str]] = {}
        self.priority: list[str] = []
        self.factors: list[Expr] = []
        self.sinks: list[tuple[str, object]] = []
        self.excalc = None
        self.precision = 12
        self._time_mark = time.monotonic()
        self._resolving: set[str] = set()
        self.budget = N.StepCounter(self.budget_limit)
        self._out: list[str] = []

    # -- rule set management --------------------------------------------------

    def _active(self) -> RW.ActiveRules:
        if self._active_cache is None:
            self._active_cache = RW.ActiveRules(self.rules_user + self._builtin_rules)
        return self._active_cache

    def _rules_dirty(self) -> None:
        self._active_cache = None

    # -- normalization contexts -------------------------------------------------

    def nctx(self) -> N.NCtx:
        return N.NCtx(self.switches, tuple(self.priority), tuple(self.factors),
                      self.budget, [], frozenset(self.noncom_names))

    def _rwctx(self, renorm: Callable[[Expr], Expr]) -> RW.RewriteCtx:
        def tick(label: str) -> None:
            try:
                self.budget.tick()
            except BudgetExceeded:
                raise BudgetExceeded(f"step budget exceeded (last rule: {label})")
        return RW.RewriteCtx(renorm, self.eval_bool, tick, frozenset(self.noncom_names))

    # -- command execution ---------------------------------------------------

    def eval_command(self, text: str) -> Result:
        res = Result()
        out: list[str] = []
        self._out = out
        parser = Parser(text, self.reader_ctx)
        while True:
            try:
                stmt = parser.parse_statement()
            except ParseError as exc:
                res.errors.append(str(exc))
                out.append(f"***** {exc}")
                break
            if stmt is None:
                break
            self.prompt += 1
            rec = {"no": self.prompt, "text": stmt.text, "display": None}
            self.history.append(rec)
            try:
                self._run_statement(stmt, out, res, rec)
            except QuitRequested:
                res.quit = True
                break
            except _EndOfFile:
                break
            except CasError as exc:
                res.errors.append(str(exc))
                out.append(f"***** {exc}")
            except RecursionError:
                res.errors.append("nesting too deep")
                out.append("***** nesting too deep")
        res.text = "\n".join(out)
        return res

    def _run_statement(self, stmt: Statement, out: list[str], res: Result,
                       rec: dict) -> None:
        self.budget.reset()
        e = stmt.expr
        value = self.eval_expr(e)
        if value is None:
            return
        if stmt.silent:
            return
        if self.switches.get("nero") and self._is_zero(value):
            return
        label = self._assign_label(e)
        self._display(value, out, res, label)
        rec["display"] = value
        self.bindings["ws3"] = self.bindings.get("ws2", NIL)
        self.bindings["ws2"] = self.bindings.get("ws", NIL)
        self.bindings["ws"] = value
        res.display = value

    def _assign_label(self, e: Expr) -> Optional[str]:
        if isinstance(e, App) and e.head == "%setq":
            return print_linear(e.args[0])
        return None

    def _is_zero(self, v: Expr) -> bool:
        return v == ZERO or (isinstance(v, Flt) and v.value == 0.0)

    # -- display ---------------------------------------------------------------

    def _display(self, v: Expr, out: list[str], res: Result,
                 label: Optional[str] = None) -> None:
        res.texes.append(print_tex(self._display_tree(v)))
        lines = self._render(v, label)
        self._emit(lines, out)

    def _render(self, v: Expr, label: Optional[str] = None) -> list[str]:
        tree = self._display_tree(v)
        xc = self.reader_ctx.excalc
        if self.switches.get("tex"):
            body = [print_tex(tree)]
        elif self.switches.get("nat"):
            body = [ln.rstrip() for ln in print_nat(tree, xc)]
        else:
            body = [print_linear(tree, xc) + "$"]
        if label is not None:
            pre = f"{label} := "
            if len(body) == 1:
                return [pre + body[0]]
            pad = " " * len(pre)
            mid = (len(body) - 1) // 2
            return [(pre if i == mid else pad) + ln for i, ln in enumerate(body)]
        return body

    def _display_tree(self, v: Expr) -> Expr:
        """Build the switch-sensitive display form of a value."""
        match v:
            case Lst(items):
                return Lst(tuple(self._display_tree(x) for x in items))
            case MatV(rows):
                return MatV(tuple(tuple(self._display_tree(x) for x in row)
                                  for row in rows))
            case Eqn(a, b):
                return Eqn(self._display_tree(a), self._display_tree(b))
            case RuleE(_, _, _) | Str(_):
                return self._decorate(v)
            case _:
                try:
                    nf = N.to_nf(self.nctx(), v)
                except CasError:
                    return self._decorate(v)
                return self._decorate(N.from_nf_display(self.nctx(), nf))

    def _decorate(self, e: Expr) -> Expr:
        """Append the assumption twiddle to assumed names, display only."""
        if not self.assumptions.table:
            return e
        return RW.apply_literal(
            e, {sym(n): sym(n + "~") for n in self.assumptions.table})

    def _emit(self, lines: list[str], out: list[str]) -> None:
        for ln in lines:
            out.append(ln)
            for _, fh in self.sinks:
                fh.write(ln + "\n")

    def warn(self, msg: str) -> None:
        if self.switches.get("msg"):
            self._emit([f"*** {msg}"], self._out)

    # -- expression evaluation ---------------------------------------------------

    def eval_expr(self, e: Expr) -> Optional[Expr]:
        """Evaluate a statement or expression; None for pure effects."""
        if self.excalc is not None:
            hit = XC.statement(self, e)
            if hit is not XC.PASS:
                return hit
        v = self._resolve(e)
        if v is None:
            return None
        v = self._norm(v)
        if len(self._active()):
            v = RW.apply_rules(v, self._active(), self._rwctx(self._renorm))
        return v

    def value(self, e: Expr) -> Expr:
        v = self.eval_expr(e)
        if v is None:
            raise EvalError("expected a value")
        return v

    def _renorm(self, e: Expr) -> Expr:
        r = self._resolve(e)
        if r is None:
            raise EvalError("expected a value")
        return self._norm(r)

    def _norm(self, e: Expr) -> Expr:
        match e:
            case Lst(items):
                return Lst(tuple(self._norm(x) for x in items))
            case MatV(_):
                return e
            case Eqn(a, b):
                return Eqn(self._norm(a), self._norm(b))
            case Str(_) | RuleE(_, _, _):
                return e
            case _:
                if self._has_matrix(e):
                    from . import linalg
                    return linalg.mat_arith(self, e)
                return N.nf_to_expr(N.to_nf(self.nctx(), e))

    def _has_matrix(self, e: Expr) -> bool:
        return any(isinstance(n, MatV) for n in walk(e))

    def _resolve(self, e: Expr) -> Optional[Expr]:
        self.budget.tick()
        match e:
            case Num(_) | Flt(_) | Str(_):
                return e
            case Sym(name):
                return self._resolve_name(name)
            case PVar(name):
                raise EvalError(f"pattern variable ~{name} outside a rule")
            case RuleE(_, _, _):
                return e
            case Add(terms):
                return Add(tuple(self._req(t) for t in terms))
            case Mul(factors):
                return Mul(tuple(self._req(f) for f in factors))
            case Pow(b, x):
                return Pow(self._req(b), self._req(x))
            case Quo(a, b):
                return Quo(self._req(a), self._req(b))
            case Neg(a):
                return Neg(self._req(a))
            case Eqn(a, b):
                return Eqn(self._req(a), self._req(b))
            case Lst(items):
                return Lst(tuple(self._req(x) for x in items))
            case MatV(rows):
                return MatV(tuple(tuple(self._req(x) for x in row) for row in rows))
            case App(head, args):
                return self._eval_app(head, args)
            case _:
                return e

    def _req(self, e: Expr) -> Expr:
        v = self._resolve(e)
        if v is None:
            raise EvalError("statement used where a value is needed")
        return v

    def _resolve_name(self, name: str) -> Expr:
        # loop counters and procedure parameters may shadow reserved names,
        # so the binding lookup comes first
        if name in self.bindings:
            if name in self._resolving:
                raise EvalError(f"circular definition of {name}")
            self._resolving.add(name)
            try:
                return self._req(self.bindings[name])
            finally:
                self._resolving.discard(name)
        return sym(name)

    # -- boolean evaluation ----------------------------------------------------

    def eval_bool(self, e: Expr) -> bool:
        match e:
            case App("%and", (a, b)):
                return self.eval_bool(a) and self.eval_bool(b)
            case App("%or", (a, b)):
                return self.eval_bool(a) or self.eval_bool(b)
            case App("%not", (a,)):
                return not self.eval_bool(a)
            case App("%cmp", (Str(op), a, b)):
                return self._compare(op, a, b)
            case Eqn(a, b):
                return self._compare("=", a, b)
            case _:
                v = self._norm(self._req(e))
                if v == T:
                    return True
                if v == NIL or v == ZERO:
                    return False
                if isinstance(v, (Num, Flt)):
                    return v.value != 0
                raise EvalError(f"not a boolean value: {print_linear(v)}")

    def _compare(self, op: str, a: Expr, b: Expr) -> bool:
        av = self._norm(self._req(a))
        bv = self._norm(self._req(b))
        if op == "=":
            return N.nf_equal(self.nctx(), av, bv)
        if op == "neq":
            return not N.nf_equal(self.nctx(), av, bv)
        an = self._numeric_or_none(av)
        bn = self._numeric_or_none(bv)
        if an is None or bn is None:
            raise EvalError(f"cannot decide {op} for non-numeric operands")
        if op == "<":
            return an < bn
        if op == ">":
            return an > bn
        if op == "<=":
            return an <= bn
        if op == ">=":
            return an >= bn
        raise EvalError(f"unknown relation {op}")

    def _numeric_or_none(self, v: Expr):
        if isinstance(v, (Num, Flt)):
            return v.value
        if isinstance(v, Quo) and isinstance(v.num, (Num, Flt)) \
                and isinstance(v.den, (Num, Flt)):
            return Fraction(v.num.value) / Fraction(v.den.value)
        return None

    def _numeric(self, v: Expr):
        n = self._numeric_or_none(v)
        if n is None:
            raise EvalError(f"expected a number, got {print_linear(v)}")
        return n

    def _int(self, e: Expr) -> int:
        n = self._numeric(self._norm(self._req(e)))
        if isinstance(n, float):
            if n != int(n):
                raise EvalError(f"expected an integer, got {n}")
            return int(n)
        if n.denominator != 1:
            raise EvalError(f"expected an integer, got {n}")
        return int(n)

    # -- application dispatch -----------------------------------------------------

    def _eval_app(self, head: str, args: tuple[Expr, ...]) -> Optional[Expr]:
        if head.startswith("%"):
            form = _FORMS.get(head)
            if form is None:
                raise EvalError(f"unknown form {head}")
            return form(self, args)
        if self.excalc is not None:
            hit = XC.intercept(self, head, args)
            if hit is not XC.PASS:
                return hit
        if head in self.arrays:
            return self._array_read(head, args)
        if head in self.matrix_names and self._matrix_value(head) is not None:
            return self._matrix_read(head, args)
        if head in self.procs:
            return self._call_proc(head, args)
        fn = _BUILTINS.get(head)
        if fn is not None:
            return fn(self, args)
        vargs = tuple(self._norm(self._req(a)) for a in args)
        canon = RW.canonicalize_properties(
            head, self.props.get(head, set()), vargs, self._free_of)
        if canon is not None:
            return self._req(canon)
        kern = App(head, vargs)
        if kern in self.kernel_bindings:
            return self._req(self.kernel_bindings[kern])
        return kern

    def _free_of(self, e: Expr, w: Expr) -> bool:
        if any(n == w for n in walk(e)):
            return False
        if isinstance(w, Sym):
            for n in walk(e):
                if isinstance(n, Sym) and w.name in self.depgraph.get(n.name, ()):
                    return False
                if isinstance(n, App):
                    if w.name in self.depgraph.get(n.head, ()):
                        return False
        return True

    # -- arrays and matrices ----------------------------------------------------

    def _array_read(self, name: str, args: tuple[Expr, ...]) -> Expr:
        dims, store = self.arrays[name]
        idx = self._array_index(name, dims, args)
        return store.get(idx, ZERO)

    def _array_index(self, name: str, dims: tuple[int, ...],
                     args: tuple[Expr, ...]) -> tuple[int, ...]:
        if len(args) != len(dims):
            raise EvalError(f"array {name} expects {len(dims)} indices")
        idx = tuple(self._int(a) for a in args)
        for i, d in zip(idx, dims):
            if i < 0 or i > d:
                raise EvalError(f"array index out of range: {name}"
                                f"({','.join(map(str, idx))})")
        return idx

    def _matrix_value(self, name: str) -> Optional[MatV]:
        v = self.bindings.get(name)
        return v if isinstance(v, MatV) else None

    def _matrix_read(self, name: str, args: tuple[Expr, ...]) -> Expr:
        m = self._matrix_value(name)
        assert m is not None
        if len(args) != 2:
            raise EvalError(f"matrix {name} expects two indices")
        i, j = self._int(args[0]), self._int(args[1])
        if not (1 <= i <= len(m.rows) and 1 <= j <= len(m.rows[0])):
            raise EvalError(f"matrix index out of range: {name}({i},{j})")
        return m.rows[i - 1][j - 1]

    # -- helpers used by the form handlers ---------------------------------------

    def _full(self, e: Expr) -> Expr:
        """Resolve, normalize and run the active rules."""
        v = self._norm(self._req(e))
        act = self._active()
        if len(act):
            v = RW.apply_rules(v, act, self._rwctx(self._renorm))
        return v

    def _path_of(self, e: Expr) -> str:
        v = self._req(e)
        if isinstance(v, Str):
            name = v.text
        elif isinstance(v, Sym):
            name = v.name
        else:
            raise EvalError("expected a file name")
        return name if os.path.isabs(name) else os.path.join(self.cwd, name)

    def close(self) -> None:
        for _, fh in self.sinks:
            fh.close()
        self.sinks.clear()

    # -- procedures -------------------------------------------------------------

    def _call_proc(self, name: str, args: tuple[Expr, ...]) -> Optional[Expr]:
        proc = self.procs[name]
        if len(args) != len(proc.params):
            raise EvalError(f"{name} called with {len(args)} arguments,"
                            f" expected {len(proc.params)}")
        vals = [self._req(a) for a in args]
        saved = {p: self.bindings.get(p) for p in proc.params}
        for p, v in zip(proc.params, vals):
            self.bindings[p] = v
        try:
            return self._resolve(proc.body)
        except _Return as r:
            return r.value
        finally:
            for p, old in saved.items():
                if old is None:
                    self.bindings.pop(p, None)
                else:
                    self.bindings[p] = old


# -- statement forms -------------------------------------------------------------


def _f_setq(s: Session, args) -> Expr:
    lhs, rhs = args
    if s.excalc is not None:
        hit = XC.assign(s, lhs, rhs)
        if hit is not XC.PASS:
            return hit
    v = s._full(rhs)
    match lhs:
        case Sym(name) if name in RESERVED:
            raise EvalError(f"cannot assign to reserved name {name}")
        case Sym(name):
            if v == sym(name):
                s.bindings.pop(name, None)
                s.assumptions.clear(name)
            else:
                s.bindings[name] = v
                if isinstance(v, MatV):
                    s.matrix_names.add(name)
        case App(head, idx) if head in s.arrays:
            dims, store = s.arrays[head]
            store[s._array_index(head, dims, idx)] = v
        case App(head, idx) if head in s.matrix_names \
                and s._matrix_value(head) is not None:
            m = s._matrix_value(head)
            i, j = s._int(idx[0]), s._int(idx[1])
            if not (1 <= i <= len(m.rows) and 1 <= j <= len(m.rows[0])):
                raise EvalError(f"matrix index out of range: {head}({i},{j})")
            rows = [list(r) for r in m.rows]
            rows[i - 1][j - 1] = v
            s.bindings[head] = MatV(tuple(tuple(r) for r in rows))
        case App(head, kargs):
            kern = App(head, tuple(s._norm(s._req(a)) for a in kargs))
            s.kernel_bindings[kern] = v
        case _:
            raise EvalError("cannot assign to this expression")
    return v


def _f_quote(s: Session, args) -> Expr:
    return args[0]


def _f_group(s: Session, args) -> Optional[Expr]:
    flag, *body = args
    last = None
    for st in body:
        last = s._resolve(st)
    has_value = isinstance(flag, Num) and flag.value == 1
    return last if has_value else None


def _f_block(s: Session, args) -> Optional[Expr]:
    locals_ = args[0].items
    saved = {v.name: s.bindings.get(v.name) for v in locals_}
    for v in locals_:
        s.bindings[v.name] = ZERO
    try:
        for st in args[1:]:
            s._resolve(st)
        return None
    except _Return as r:
        return r.value
    finally:
        for name, old in saved.items():
            if old is None:
                s.bindings.pop(name, None)
            else:
                s.bindings[name] = old


def _f_return(s: Session, args) -> Expr:
    raise _Return(s._req(args[0]) if args else None)


def _f_if(s: Session, args) -> Optional[Expr]:
    if s.eval_bool(args[0]):
        return s._resolve(args[1])
    if len(args) == 3:
        return s._resolve(args[2])
    return None


def _f_while(s: Session, args) -> None:
    cond, body = args
    while s.eval_bool(cond):
        s.budget.tick()
        s._resolve(body)
    return None


def _f_repeat(s: Session, args) -> None:
    body, until = args
    while True:
        s.budget.tick()
        s._resolve(body)
        if s.eval_bool(until):
            return None


def _loop_accumulate(s: Session, action: str, values: list) -> Optional[Expr]:
    if action == "do":
        return None
    if action == "sum":
        return s._norm(add(*values)) if values else ZERO
    if action == "product":
        return s._norm(mul(*values)) if values else ONE
    if action == "collect":
        return Lst(tuple(values))
    items: list[Expr] = []
    for v in values:
        if not isinstance(v, Lst):
            raise EvalError("join expects every value to be a list")
        items.extend(v.items)
    return Lst(tuple(items))


def _to_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def _f_for(s: Session, args) -> Optional[Expr]:
    var, lo_e, step_e, hi_e, action_e, body = args
    name = var.name
    lo = _to_fraction(s._numeric(s._norm(s._req(lo_e))))
    step = s._int(step_e)
    hi = _to_fraction(s._numeric(s._norm(s._req(hi_e))))
    if step == 0:
        raise EvalError("for loop with zero step")
    # the loop runs on the integer lattice: fractional bounds shrink inward
    k = int(lo) if lo.denominator == 1 else \
        (math.ceil(lo) if step > 0 else math.floor(lo))
    action = action_e.text
    saved = s.bindings.get(name)
    values: list[Expr] = []
    try:
        while (k <= hi) if step > 0 else (k >= hi):
            s.budget.tick()
            s.bindings[name] = num(k)
            v = s._resolve(body)
            if action != "do":
                if v is None:
                    raise EvalError(f"loop body yields no value for {action}")
                values.append(v)
            k += step
    finally:
        if saved is None:
            s.bindings.pop(name, None)
        else:
            s.bindings[name] = saved
    return _loop_accumulate(s, action, values)


def _f_foreach(s: Session, args) -> Optional[Expr]:
    var, lst_e, action_e, body = args
    name = var.name
    seq = s._req(lst_e)
    if not isinstance(seq, Lst):
        raise EvalError("for each needs a list")
    action = action_e.text
    saved = s.bindings.get(name)
    values: list[Expr] = []
    try:
        for item in seq.items:
            s.budget.tick()
            s.bindings[name] = item
            v = s._resolve(body)
            if action != "do":
                if v is None:
                    raise EvalError(f"loop body yields no value for {action}")
                values.append(v)
    finally:
        if saved is None:
            s.bindings.pop(name, None)
        else:
            s.bindings[name] = saved
    return _loop_accumulate(s, action, values)


def _set_switches(s: Session, args, on: bool) -> None:
    for a in args:
        known = s.switches.set(a.name, on)
        if not known:
            s.warn(f"{a.name} not defined as switch")
    return None


def _f_on(s: Session, args) -> None:
    return _set_switches(s, args, True)


def _f_off(s: Session, args) -> None:
    return _set_switches(s, args, False)


def _f_clear(s: Session, args) -> None:
    for item in args:
        match item:
            case Sym(name):
                s.bindings.pop(name, None)
                s.arrays.pop(name, None)
                s.matrix_names.discard(name)
                s.procs.pop(name, None)
                s.assumptions.clear(name)
                s.depgraph.pop(name, None)
                s.kernel_bindings = {
                    k: v for k, v in s.kernel_bindings.items()
                    if not (isinstance(k, App) and k.head == name)}
                s.rules_user = [
                    r for r in s.rules_user
                    if r.lhs != sym(name) and name not in RW._lhs_heads(r.lhs)]
            case _:
                key = item if _has_pvars(item) else s._renorm(item)
                s.kernel_bindings.pop(key, None)
                s.rules_user = [r for r in s.rules_user if r.lhs != key]
    s._rules_dirty()
    return None


def _has_pvars(e: Expr) -> bool:
    return any(isinstance(n, PVar) for n in walk(e))


def _iter_rule_exprs(s: Session, item: Expr):
    match item:
        case RuleE(_, _, _) | Eqn(_, _):
            yield item
        case Lst(items):
            for x in items:
                yield from _iter_rule_exprs(s, x)
        case _:
            v = s._req(item)
            if isinstance(v, (RuleE, Eqn)):
                yield v
            elif isinstance(v, Lst):
                for x in v.items:
                    yield from _iter_rule_exprs(s, x)
            else:
                raise EvalError("expected a rule, an equation or a rule list")


def _prepare_rule(s: Session, re_: Expr, origin: str) -> RW.Rule:
    if isinstance(re_, Eqn):
        lhs, rhs, guard = re_.lhs, re_.rhs, None
    else:
        lhs, rhs, guard = re_.lhs, re_.rhs, re_.guard
    if not _has_pvars(lhs):
        lhs = s._renorm(lhs)
    rule = RW.compile_rule(RuleE(lhs, rhs, guard), origin=origin)
    # names bound by lhs patterns are promoted on the rhs by compile_rule,
    # so only a fully pattern-free rhs may be evaluated at definition time
    if not _has_pvars(rule.rhs) and (rule.guard is None or not _has_pvars(rule.guard)):
        rule = RW.compile_rule(RuleE(rule.lhs, s._full(rule.rhs), rule.guard),
                               origin=origin)
    return rule


def _f_let(s: Session, args, origin: str = "let") -> None:
    for item in args:
        for re_ in _iter_rule_exprs(s, item):
            rule = _prepare_rule(s, re_, origin)
            s.rules_user = [r for r in s.rules_user if r.lhs != rule.lhs]
            s.rules_user.append(rule)
    s._rules_dirty()
    return None


def _f_match(s: Session, args) -> None:
    return _f_let(s, args, origin="match")


def _f_clearrules(s: Session, args) -> None:
    gone: list[Expr] = []
    for item in args:
        for re_ in _iter_rule_exprs(s, item):
            # mirror rule storage: lhs coefficients are folded into the rhs
            lhs = RW.split_lhs_coeff(re_.lhs)[1]
            gone.append(lhs)
            if not _has_pvars(lhs):
                gone.append(RW.split_lhs_coeff(s._renorm(lhs))[1])
    s.rules_user = [r for r in s.rules_user if r.lhs not in gone]
    s._rules_dirty()
    return None


def _f_where(s: Session, args) -> Expr:
    left, rules_arg = args
    tmp = [_prepare_rule(s, re_, "where")
           for re_ in _iter_rule_exprs(s, rules_arg)]
    act = RW.ActiveRules(tmp + s.rules_user + s._builtin_rules)
    v = s._norm(s._req(left))
    return RW.apply_rules(v, act, s._rwctx(s._renorm))


def _f_operator(s: Session, args) -> None:
    for a in args:
        s.operators.add(a.name)
    return None


def _f_infix(s: Session, args) -> None:
    from .reader import _BP_USERINF
    for a in args:
        s.operators.add(a.name)
        s.infix_bp[a.name] = _BP_USERINF
    return None


def _f_precedence(s: Session, args) -> None:
    from .reader import _BUILTIN_BP
    name, neigh = args[0].name, args[1].text
    bp = _BUILTIN_BP.get(neigh) or s.infix_bp.get(neigh)
    if bp is None:
        raise EvalError(f"unknown operator {neigh}")
    s.infix_bp[name] = bp + 1
    return None


def _f_prop(s: Session, args) -> None:
    kind = args[0].text
    for a in args[1:]:
        name = a.name
        s.operators.add(name)
        if kind == "noncom":
            s.noncom_names.add(name)
            continue
        props = s.props.setdefault(name, set())
        props.add(kind)
        RW.check_properties(props)
    return None


def _f_array(s: Session, args) -> None:
    for spec in args:
        if not isinstance(spec, App):
            raise EvalError("array declarations need dimensions")
        dims = tuple(s._int(d) for d in spec.args)
        s.arrays[spec.head] = (dims, {})
        s.bindings.pop(spec.head, None)
    return None


def _f_matrix(s: Session, args) -> None:
    for spec in args:
        match spec:
            case App(name, (r_e, c_e)):
                r, c = s._int(r_e), s._int(c_e)
                if r < 1 or c < 1:
                    raise EvalError("matrix dimensions must be positive")
                s.bindings[name] = MatV(tuple(tuple(ZERO for _ in range(c))
                                              for _ in range(r)))
                s.matrix_names.add(name)
            case Sym(name):
                s.matrix_names.add(name)
            case _:
                raise EvalError("bad matrix declaration")
    return None


def _f_proc(s: Session, args) -> Expr:
    name, params, body = args[0].name, args[1], args[2]
    s.procs[name] = _Proc(name, tuple(p.name for p in params.items), body)
    return sym(name)


def _f_define(s: Session, args) -> None:
    for eq in args:
        s.aliases[eq.lhs.name] = eq.rhs.text.strip()
    return None


def _flatten_names(args) -> list[str]:
    out: list[str] = []
    for a in args:
        if isinstance(a, Lst):
            out.extend(x.name for x in a.items)
        elif isinstance(a, Sym):
            out.append(a.name)
        else:
            raise EvalError("expected a name")
    return out


def _f_order(s: Session, args) -> None:
    names = _flatten_names(args)
    s.priority = [] if names == ["nil"] else names
    return None


def _f_factor(s: Session, args) -> None:
    for a in args:
        s.factors.append(a)
    return None


def _f_remfac(s: Session, args) -> None:
    s.factors = [f for f in s.factors if f not in args]
    return None


def _f_depend(s: Session, args) -> None:
    seq = args[0].items if len(args) == 1 and isinstance(args[0], Lst) else args
    names = [a.name for a in seq if isinstance(a, Sym)]
    if len(names) < 2:
        raise EvalError("depend needs a name and at least one variable")
    s.depgraph.setdefault(names[0], set()).update(names[1:])
    return None


def _f_nodepend(s: Session, args) -> None:
    seq = args[0].items if len(args) == 1 and isinstance(args[0], Lst) else args
    names = [a.name for a in seq if isinstance(a, Sym)]
    if len(names) >= 2 and names[0] in s.depgraph:
        s.depgraph[names[0]].difference_update(names[1:])
    return None


def _f_showrules(s: Session, args) -> None:
    name = args[0].name
    rules = RW.rules_for_name(name, s._builtin_rules, s.rules_user)
    shown = Lst(tuple(r.as_rule_expr() for r in rules))
    s._emit(s._render(shown), s._out)
    return None


def _f_showtime(s: Session, args) -> None:
    now = time.monotonic()
    ms = int(round((now - s._time_mark) * 1000))
    s._time_mark = now
    s._emit([f"Time: {ms} ms"], s._out)
    return None


def _f_load(s: Session, args) -> None:
    for a in args:
        if a.name == "excalc":
            s.excalc = XC.State()
            s.reader_ctx.excalc = True
            s.warn("^ redefined")
        else:
            s.warn(f"unknown package {a.name}, ignored")
    return None


def _f_quit(s: Session, args) -> None:
    raise QuitRequested()


def _f_end(s: Session, args) -> None:
    raise _EndOfFile()


def _f_restart(s: Session, args) -> None:
    s.close()
    s.aliases.clear()
    s.infix_bp.clear()
    s.reader_ctx.excalc = False
    s._fresh_state()
    return None


def _f_write(s: Session, args) -> None:
    nat = s.switches.get("nat")
    blocks: list[list[str]] = []
    for a in args:
        v = s._full(a)
        if isinstance(v, Str):
            blocks.append([v.text])
        elif nat:
            blocks.append(s._render(v))
        else:
            blocks.append([print_linear(s._display_tree(v),
                                        s.reader_ctx.excalc)])
    if all(len(b) == 1 for b in blocks):
        line = "".join(b[0] for b in blocks)
        s._emit([line + ("" if nat else "$")], s._out)
    else:
        for b in blocks:
            s._emit(b, s._out)
    return None


def _f_in(s: Session, args) -> None:
    path = s._path_of(args[0])
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise EvalError(f"cannot read {path}: {exc.strerror}")
    parser = Parser(text, s.reader_ctx)
    saw_end = False
    while True:
        try:
            stmt = parser.parse_statement()
        except ParseError as exc:
            s._emit([f"***** {exc}"], s._out)
            break
        if stmt is None:
            break
        try:
            v = s.eval_expr(stmt.expr)
        except _EndOfFile:
            saw_end = True
            break
        except CasError as exc:
            s._emit([f"***** {exc}"], s._out)
            continue
        if v is not None and not stmt.silent:
            if not (s.switches.get("nero") and s._is_zero(v)):
                label = s._assign_label(stmt.expr)
                s._emit(s._render(v, label), s._out)
    if not saw_end:
        s.warn("input file did not finish with end")
    return None


def _f_out(s: Session, args) -> None:
    v = s._req(args[0])
    if v == T:
        return None
    path = s._path_of(args[0])
    if any(p == path for p, _ in s.sinks):
        return None
    try:
        fh = open(path, "w", encoding="utf-8")
    except OSError as exc:
        raise EvalError(f"cannot write {path}: {exc.strerror}")
    s.sinks.append((path, fh))
    return None


def _f_shut(s: Session, args) -> None:
    path = s._path_of(args[0])
    for i, (p, fh) in enumerate(s.sinks):
        if p == path:
            fh.close()
            del s.sinks[i]
            return None
    s.warn(f"{os.path.basename(path)} is not an open output file")
    return None


def _f_bool(s: Session, args, head: str) -> Expr:
    return T if s.eval_bool(App(head, tuple(args))) else NIL


def _excalc_form(name: str):
    def fn(s: Session, args):
        if s.excalc is None:
            raise EvalError("exterior calculus is not loaded")
        return XC.FORMS[name](s, args)
    return fn


_FORMS: dict[str, Callable] = {
    "%setq": _f_setq,
    "%quote": _f_quote,
    "%group": _f_group,
    "%block": _f_block,
    "%return": _f_return,
    "%if": _f_if,
    "%while": _f_while,
    "%repeat": _f_repeat,
    "%for": _f_for,
    "%foreach": _f_foreach,
    "%on": _f_on,
    "%off": _f_off,
    "%clear": _f_clear,
    "%let": _f_let,
    "%match": _f_match,
    "%clearrules": _f_clearrules,
    "%where": _f_where,
    "%operator": _f_operator,
    "%infix": _f_infix,
    "%precedence": _f_precedence,
    "%prop": _f_prop,
    "%array": _f_array,
    "%matrix": _f_matrix,
    "%proc": _f_proc,
    "%define": _f_define,
    "%order": _f_order,
    "%factor": _f_factor,
    "%remfac": _f_remfac,
    "%depend": _f_depend,
    "%nodepend": _f_nodepend,
    "%showrules": _f_showrules,
    "%showtime": _f_showtime,
    "%load": _f_load,
    "%quit": _f_quit,
    "%end": _f_end,
    "%restart": _f_restart,
    "%write": _f_write,
    "%in": _f_in,
    "%out": _f_out,
    "%shut": _f_shut,
    "%and": lambda s, a: _f_bool(s, a, "%and"),
    "%or": lambda s, a: _f_bool(s, a, "%or"),
    "%not": lambda s, a: _f_bool(s, a, "%not"),
    "%cmp": lambda s, a: _f_bool(s, a, "%cmp"),
    "%range": lambda s, a: App("%range", tuple(s._req(x) for x in a)),
    "%cons": lambda s, a: _b_cons(s, a),
}

for _name in ("%wedge", "%inner", "%lie", "%hodge", "%pform", "%indexrange",
              "%coframe", "%frame", "%displayframe", "%riemannconx",
              "%fdomain", "%indexsym", "%tvector", "%comp"):
    _FORMS[_name] = _excalc_form(_name)


# -- builtin functions -------------------------------------------------------------


def _b_cons(s: Session, args) -> Expr:
    head_v = s._req(args[0])
    tail = s._req(args[1])
    if not isinstance(tail, Lst):
        raise EvalError(". needs a list on the right")
    return Lst((head_v,) + tail.items)


def _one_value(s: Session, args) -> Expr:
    if len(args) != 1:
        raise EvalError("expected one argument")
    return s._norm(s._req(args[0]))


def _tf(flag: bool) -> Expr:
    return T if flag else NIL


def _math_fn(head: str, pyfn) -> Callable:
    def fn(s: Session, args):
        v = _one_value(s, args)
        n = s._numeric_or_none(v)
        if n is not None and (isinstance(v, Flt) or s.switches.get("rounded")):
            try:
                return Flt(pyfn(float(n)))
            except ValueError:
                raise EvalError(f"{head} not defined for this argument")
        return App(head, (v,))
    return fn


def _b_sqrt(s: Session, args) -> Expr:
    v = _one_value(s, args)
    n = s._numeric_or_none(v)
    if n is not None:
        if isinstance(v, Flt) or s.switches.get("rounded"):
            if float(n) < 0:
                raise EvalError("sqrt of a negative number")
            return Flt(math.sqrt(float(n)))
        f = _to_fraction(n)
        if f >= 0:
            rn = math.isqrt(f.numerator)
            rd = math.isqrt(f.denominator)
            if rn * rn == f.numerator and rd * rd == f.denominator:
                return num(Fraction(rn, rd))
            if rd * rd == f.denominator and rd == 1:
                # pull out the largest square factor
                sq, rest = _square_split(f.numerator)
                if sq != 1:
                    return s._norm(mul(num(sq), app("sqrt", num(rest))))
    match v:
        case Pow(Sym(name), Num(two)) if two == 2 and \
                s.assumptions.is_positive(name):
            return sym(name)
    return App("sqrt", (v,))


def _square_split(n: int) -> tuple[int, int]:
    sq = 1
    d = 2
    while d * d <= n:
        while n % (d * d) == 0:
            n //= d * d
            sq *= d
        d += 1
    return sq, n


def _b_numberp(s: Session, args) -> Expr:
    v = _one_value(s, args)
    return _tf(s._numeric_or_none(v) is not None)


def _b_fixp(s: Session, args) -> Expr:
    v = _one_value(s, args)
    return _tf(isinstance(v, Num) and v.value.denominator == 1)


def _b_evenp(s: Session, args) -> Expr:
    v = _one_value(s, args)
    return _tf(isinstance(v, Num) and v.value.denominator == 1
               and v.value.numerator % 2 == 0)


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n < 4:
        return True
    if n % 2 == 0:
        return False
    d = 3
    while d * d <= n:
        if n % d == 0:
            return False
        d += 2
    return True


def _b_primep(s: Session, args) -> Expr:
    v = _one_value(s, args)
    if not isinstance(v, Num) or v.value.denominator != 1:
        return NIL
    return _tf(_is_prime(abs(int(v.value))))


def _b_nextprime(s: Session, args) -> Expr:
    n = s._int(args[0])
    k = n + 1
    while not _is_prime(k):
        k += 1
        s.budget.tick()
    return num(k)


def _b_freeof(s: Session, args) -> Expr:
    u = s._norm(s._req(args[0]))
    v = s._req(args[1])
    return _tf(s._free_of(u, v))


def _need_list(v: Expr, what: str) -> Lst:
    if not isinstance(v, Lst):
        raise EvalError(f"{what} expects a list")
    return v


def _b_first(s: Session, args) -> Expr:
    v = _need_list(s._req(args[0]), "first")
    if not v.items:
        raise EvalError("first of an empty list")
    return v.items[0]


def _b_second(s: Session, args) -> Expr:
    v = _need_list(s._req(args[0]), "second")
    if len(v.items) < 2:
        raise EvalError("second: list is too short")
    return v.items[1]


def _b_third(s: Session, args) -> Expr:
    v = _need_list(s._req(args[0]), "third")
    if len(v.items) < 3:
        raise EvalError("third: list is too short")
    return v.items[2]


def _b_rest(s: Session, args) -> Expr:
    v = _need_list(s._req(args[0]), "rest")
    if not v.items:
        raise EvalError("rest of an empty list")
    return Lst(v.items[1:])


def _b_reverse(s: Session, args) -> Expr:
    v = _need_list(s._req(args[0]), "reverse")
    return Lst(tuple(reversed(v.items)))


def _b_append(s: Session, args) -> Expr:
    a = _need_list(s._req(args[0]), "append")
    b = _need_list(s._req(args[1]), "append")
    return Lst(a.items + b.items)


def _b_member(s: Session, args) -> Expr:
    x = s._norm(s._req(args[0]))
    v = _need_list(s._req(args[1]), "member")
    ctx = s.nctx()
    return _tf(any(N.nf_equal(ctx, x, y) for y in v.items))


def _b_length(s: Session, args) -> Expr:
    v = s._norm(s._req(args[0]))
    match v:
        case Lst(items):
            return num(len(items))
        case MatV(rows):
            return lst(num(len(rows)), num(len(rows[0])))
        case Add(terms):
            return num(len(terms))
        case Mul(factors):
            return num(len(factors))
        case App(_, a):
            return num(len(a))
        case _:
            return ONE


def _b_part(s: Session, args) -> Expr:
    v = s._norm(s._req(args[0]))
    for ix in args[1:]:
        n = s._int(ix)
        parts: tuple[Expr, ...]
        match v:
            case Lst(items):
                parts = items
            case Add(terms):
                parts = terms
            case Mul(factors):
                parts = factors
            case App(_, a):
                parts = a
            case _:
                raise EvalError("part: expression has no parts")
        if n < 1 or n > len(parts):
            raise EvalError("part: index out of range")
        v = parts[n - 1]
    return v


def _b_abs(s: Session, args) -> Expr:
    v = _one_value(s, args)
    if isinstance(v, Num):
        return Num(abs(v.value))
    if isinstance(v, Flt):
        return Flt(abs(v.value))
    u = RW.neg_strip(v)
    return App("abs", (u if u is not None else v,))


def _b_max(s: Session, args) -> Expr:
    vals = [s._numeric(s._norm(s._req(a))) for a in args]
    best = max(vals)
    return Flt(best) if isinstance(best, float) else num(best)


def _b_min(s: Session, args) -> Expr:
    vals = [s._numeric(s._norm(s._req(a))) for a in args]
    best = min(vals)
    return Flt(best) if isinstance(best, float) else num(best)


def _b_floor(s: Session, args) -> Expr:
    return num(math.floor(s._numeric(_one_value(s, args))))


def _b_ceiling(s: Session, args) -> Expr:
    return num(math.ceil(s._numeric(_one_value(s, args))))


def _b_round(s: Session, args) -> Expr:
    x = s._numeric(_one_value(s, args))
    return num(int(Fraction(x) + Fraction(1, 2)) if x >= 0
               else -int(-Fraction(x) + Fraction(1, 2)))


def _b_sign(s: Session, args) -> Expr:
    x = s._numeric(_one_value(s, args))
    return num((x > 0) - (x < 0))


def _b_factorial(s: Session, args) -> Expr:
    n = s._int(args[0])
    if n < 0:
        raise EvalError("factorial of a negative number")
    return num(math.factorial(n))


def _b_remainder(s: Session, args) -> Expr:
    a, b = s._int(args[0]), s._int(args[1])
    if b == 0:
        raise DivisionByZero("remainder by zero")
    r = abs(a) % abs(b)
    return num(r if a >= 0 else -r)


def _b_gcd(s: Session, args) -> Expr:
    return num(math.gcd(s._int(args[0]), s._int(args[1])))


def _b_lhs(s: Session, args) -> Expr:
    v = s._req(args[0])
    if not isinstance(v, Eqn):
        raise EvalError("lhs expects an equation")
    return v.lhs


def _b_rhs(s: Session, args) -> Expr:
    v = s._req(args[0])
    if not isinstance(v, Eqn):
        raise EvalError("rhs expects an equation")
    return v.rhs


def _b_num(s: Session, args) -> Expr:
    v = _one_value(s, args)
    return v.num if isinstance(v, Quo) else v


def _b_den(s: Session, args) -> Expr:
    v = _one_value(s, args)
    return v.den if isinstance(v, Quo) else ONE


def _split_i(v: Expr) -> tuple[Expr, Expr]:
    i_ = sym("i")

    def classify(term: Expr) -> tuple[bool, Expr]:
        if term == i_:
            return True, ONE
        if isinstance(term, Mul) and i_ in term.factors:
            rest = tuple(f for f in term.factors if f != i_)
            return True, (rest[0] if len(rest) == 1 else Mul(rest))
        if isinstance(term, Quo):
            im, r = classify(term.num)
            return im, Quo(r, term.den)
        return False, term

    terms = v.terms if isinstance(v, Add) else (v,)
    res: list[Expr] = []
    ims: list[Expr] = []
    for t in terms:
        im, r = classify(t)
        (ims if im else res).append(r)
    return (add(*res) if res else ZERO, add(*ims) if ims else ZERO)


def _b_repart(s: Session, args) -> Expr:
    return s._norm(_split_i(_one_value(s, args))[0])


def _b_impart(s: Session, args) -> Expr:
    return s._norm(_split_i(_one_value(s, args))[1])


def _b_sub(s: Session, args) -> Expr:
    if len(args) < 2:
        raise EvalError("sub needs substitutions and a target")
    *eq_args, target = args
    mapping: dict[Expr, Expr] = {}
    for a in eq_args:
        v = a if isinstance(a, Eqn) else s._req(a)
        eqs = v.items if isinstance(v, Lst) else (v,)
        for eq in eqs:
            if not isinstance(eq, Eqn):
                raise EvalError("sub expects equations")
            mapping[eq.lhs] = s._full(eq.rhs)
    tv = s._full(target)
    return s._norm(RW.apply_literal(tv, mapping))


def _b_ws(s: Session, args) -> Expr:
    n = s._int(args[0])
    if n < 1 or n > len(s.history) or s.history[n - 1]["display"] is None:
        raise EvalError(f"no result number {n}")
    return s.history[n - 1]["display"]


def _b_input(s: Session, args) -> Expr:
    n = s._int(args[0])
    if n < 1 or n > len(s.history):
        raise EvalError(f"no input number {n}")
    text = s.history[n - 1]["text"]
    parser = Parser(text, s.reader_ctx)
    v: Optional[Expr] = None
    while True:
        stmt = parser.parse_statement()
        if stmt is None:
            break
        v = s.eval_expr(stmt.expr)
    if v is None:
        raise EvalError(f"input {n} has no value")
    return v


def _b_precision(s: Session, args) -> Expr:
    old = s.precision
    s.precision = s._int(args[0])
    return num(old)


def _b_rederr(s: Session, args) -> Expr:
    v = s._req(args[0])
    raise EvalError(v.text if isinstance(v, Str) else print_linear(v))


def _b_mat(s: Session, args) -> Expr:
    rows: list[tuple[Expr, ...]] = []
    for a in args:
        v = s._req(a)
        rows.append(v.items if isinstance(v, Lst) else (v,))
    if len({len(r) for r in rows}) != 1:
        raise EvalError("mat rows differ in length")
    return MatV(tuple(rows))


def _calculus_fn(name: str) -> Callable:
    def fn(s: Session, args):
        from . import calculus
        return getattr(calculus, name)(s, args)
    return fn


def _linalg_fn(name: str) -> Callable:
    def fn(s: Session, args):
        from . import linalg
        return getattr(linalg, name)(s, args)
    return fn


def _b_simplify(s: Session, args) -> Expr:
    v = s._req(args[0])
    methods: list[str] = []
    for a in args[1:]:
        m = a.name if isinstance(a, Sym) else (a.text if isinstance(a, Str) else None)
        if m in RW.SIMPLIFY_METHODS:
            methods.append(m)
        else:
            s.warn(f"unknown simplification method {m}, ignored")
    if not methods:
        methods = list(RW.SIMPLIFY_METHODS)
    return _simplify_rec(s, v, methods)


def _simplify_rec(s: Session, v: Expr, methods: list[str]) -> Expr:
    match v:
        case Lst(items):
            return Lst(tuple(_simplify_rec(s, x, methods) for x in items))
        case MatV(rows):
            return MatV(tuple(tuple(_simplify_rec(s, x, methods) for x in row)
                              for row in rows))
        case Eqn(a, b):
            return Eqn(_simplify_rec(s, a, methods),
                       _simplify_rec(s, b, methods))
    saved = {n: s.switches.get(n) for n in ("exp", "mcd", "gcd")}
    for n in saved:
        s.switches.set(n, True)
    rules: list[RW.Rule] = []
    if "trig" in methods:
        rules.extend(r for r in RW.trig_expand_rules()
                     if isinstance(r.lhs, Add))
    if "ln" in methods:
        rules.extend(RW.ln_rules())
    try:
        act = RW.ActiveRules(rules + s._builtin_rules)
        out = s._norm(s._req(v))
        return RW.apply_rules(out, act, s._rwctx(s._renorm))
    finally:
        for n, val in saved.items():
            s.switches.set(n, val)


def _b_assume(s: Session, args) -> None:
    for a in args:
        match a:
            case App("%cmp", (Str("::"), Sym(name), Sym("integer"))):
                s.assumptions.assume(name, {"integer"})
            case App("%cmp", (Str(op), Sym(name), bound)):
                b = _to_fraction(s._numeric(s._norm(s._req(bound))))
                s.assumptions.assume(name, RW.relation_props(op, b))
            case _:
                raise EvalError("assume expects a relation like x>0")
    return None


def _b_about(s: Session, args) -> None:
    if not isinstance(args[0], Sym):
        raise EvalError("about expects a name")
    s._emit(s.assumptions.about_text(args[0].name).splitlines(), s._out)
    return None


_BUILTINS: dict[str, Callable] = {
    "sin": _math_fn("sin", math.sin),
    "cos": _math_fn("cos", math.cos),
    "tan": _math_fn("tan", math.tan),
    "cot": _math_fn("cot", lambda x: math.cos(x) / math.sin(x)),
    "asin": _math_fn("asin", math.asin),
    "acos": _math_fn("acos", math.acos),
    "atan": _math_fn("atan", math.atan),
    "exp": _math_fn("exp", math.exp),
    "log": _math_fn("log", math.log),
    "ln": _math_fn("ln", math.log),
    "sqrt": _b_sqrt,
    "numberp": _b_numberp,
    "fixp": _b_fixp,
    "evenp": _b_evenp,
    "primep": _b_primep,
    "nextprime": _b_nextprime,
    "freeof": _b_freeof,
    "first": _b_first,
    "second": _b_second,
    "third": _b_third,
    "rest": _b_rest,
    "reverse": _b_reverse,
    "append": _b_append,
    "member": _b_member,
    "length": _b_length,
    "part": _b_part,
    "abs": _b_abs,
    "max": _b_max,
    "min": _b_min,
    "floor": _b_floor,
    "ceiling": _b_ceiling,
    "round": _b_round,
    "sign": _b_sign,
    "factorial": _b_factorial,
    "remainder": _b_remainder,
    "gcd": _b_gcd,
    "lhs": _b_lhs,
    "rhs": _b_rhs,
    "num": _b_num,
    "den": _b_den,
    "repart": _b_repart,
    "impart": _b_impart,
    "sub": _b_sub,
    "subs": _b_sub,
    "ws": _b_ws,
    "input": _b_input,
    "precision": _b_precision,
    "rederr": _b_rederr,
    "mat": _b_mat,
    "simplify": _b_simplify,
    "assume": _b_assume,
    "additionally": _b_assume,
    "about": _b_about,
    "df": _calculus_fn("df"),
    "int": _calculus_fn("integrate"),
    "limit": _calculus_fn("limit"),
    "taylor": _calculus_fn("taylor"),
    "solve": _calculus_fn("solve_cmd"),
    "sum": _calculus_fn("sum_closed"),
    "coeff": _calculus_fn("coeff"),
    "det": _linalg_fn("det_cmd"),
    "tp": _linalg_fn("tp_cmd"),
    "trace": _linalg_fn("trace_cmd"),
    "rank": _linalg_fn("rank_cmd"),
    "mateigen": _linalg_fn("mateigen_cmd"),
}
