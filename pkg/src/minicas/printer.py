"""Rendering of expressions in three formats.

print_linear gives a one-line form that re-parses to the same value.
print_nat gives the 2D text block: raised exponents, centered fraction
bars two characters wider than their widest side, bracketed matrix
grids, and raised/lowered tensor index lines. print_tex emits TeX with
\\frac for quotients and greek letters mapped to macros.

All three walk the same display trees. Internal heads ('%wedge',
'%comp', ...) never collide with source names because '%' cannot occur
in a lexed name.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .expr import (
    Expr, Num, Flt, Sym, Str, App, Add, Mul, Pow, Quo, Neg, Lst, Eqn,
    MatV, PVar, RuleE,
)

_P_ADD = 10
_P_MUL = 20
_P_POW = 30
_P_ATOM = 40

_GREEK = {
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta",
    "iota", "kappa", "lambda", "mu", "nu", "xi", "pi", "rho", "sigma",
    "tau", "upsilon", "phi", "chi", "psi", "omega",
}

_TEX_FUNCS = {"sin", "cos", "tan", "log", "exp", "cot", "sec", "csc"}


def _flt_str(v: float) -> str:
    s = repr(v)
    return s[:-2] if s.endswith(".0") else s


def term_sign(e: Expr) -> tuple[bool, Expr]:
    """Split a leading minus off a term for +/- joining."""
    match e:
        case Neg(arg):
            return True, arg
        case Num(v) if v < 0:
            return True, Num(-v)
        case Flt(v) if v < 0:
            return True, Flt(-v)
        case Mul(fs):
            neg, head = term_sign(fs[0])
            if neg:
                rest = (head, *fs[1:]) if head != Num(Fraction(1)) \
                    else fs[1:]
                if len(rest) == 1:
                    return True, rest[0]
                if rest:
                    return True, Mul(rest)
                return True, Num(Fraction(1))
            return False, e
        case Quo(a, b):
            neg, core = term_sign(a)
            if neg:
                return True, Quo(core, b)
            return False, e
        case _:
            return False, e


# ---------------------------------------------------------------------
# linear form



def _bare(e: Expr) -> Expr:
    """Pattern variables on a rule's right side display without the twiddle."""
    match e:
        case PVar(name):
            return Sym(name)
        case Add(terms):
            return Add(tuple(_bare(t) for t in terms))
        case Mul(factors):
            return Mul(tuple(_bare(f) for f in factors))
        case Pow(base, x):
            return Pow(_bare(base), _bare(x))
        case Quo(a, b):
            return Quo(_bare(a), _bare(b))
        case Neg(arg):
            return Neg(_bare(arg))
        case App(head, args):
            return App(head, tuple(_bare(a) for a in args))
        case Lst(items):
            return Lst(tuple(_bare(x) for x in items))
        case Eqn(a, b):
            return Eqn(_bare(a), _bare(b))
        case _:
            return e

def print_linear(e: Expr, excalc: bool = False) -> str:
    return _lin(e, 0, excalc)


def _paren(s: str, need: bool) -> str:
    return f"({s})" if need else s


def _lin(e: Expr, ctx: int, xc: bool) -> str:
    match e:
        case Num(v):
            s = str(v.numerator) if v.denominator == 1 else \
                f"{v.numerator}/{v.denominator}"
            return _paren(s, v < 0 and ctx >= _P_MUL)
        case Flt(v):
            s = _flt_str(v)
            return _paren(s, v < 0 and ctx >= _P_MUL)
        case Sym(name):
            return name
        case Str(text):
            return '"' + text.replace('"', '""') + '"'
        case PVar(name):
            return "~" + name
        case Neg(arg):
            return _paren("-" + _lin(arg, _P_MUL, xc), ctx >= _P_MUL)
        case Add(terms):
            parts = []
            for i, t in enumerate(terms):
                neg, core = term_sign(t)
                s = _lin(core, _P_ADD, xc)
                if i == 0:
                    parts.append("-" + s if neg else s)
                else:
                    parts.append((" - " if neg else " + ") + s)
            return _paren("".join(parts), ctx > _P_ADD)
        case Mul(factors):
            neg, core = term_sign(e)
            if neg:
                inner = _lin(core, _P_MUL, xc)
                return _paren("-" + inner, ctx >= _P_MUL)
            s = "*".join(_lin(f, _P_MUL + 1, xc) for f in factors)
            return _paren(s, ctx > _P_MUL)
        case Quo(a, b):
            s = _lin(a, _P_MUL, xc) + "/" + _lin(b, _P_MUL + 1, xc)
            return _paren(s, ctx > _P_MUL)
        case Pow(b, x):
            if x == Num(Fraction(1, 2)):
                return f"sqrt({_lin(b, 0, xc)})"
            bs = _lin(b, _P_POW + 1, xc)
            xs = _lin(x, 0, xc)
            if not (isinstance(x, Sym)
                    or (isinstance(x, Num) and x.value.denominator == 1
                        and x.value >= 0)):
                xs = f"({xs})"
            return _paren(f"{bs}**{xs}", ctx > _P_POW)
        case Lst(items):
            return "{" + ",".join(_lin(i, 0, xc) for i in items) + "}"
        case Eqn(a, b):
            return _paren(f"{_lin(a, _P_ADD, xc)}="
                          f"{_lin(b, _P_ADD, xc)}", ctx > _P_ADD)
        case MatV(rows):
            body = ",".join(
                "(" + ",".join(_lin(v, 0, xc) for v in row) + ")"
                for row in rows)
            return f"mat({body})"
        case RuleE(lhs, rhs, guard):
            s = f"{_lin(lhs, 0, xc)} => {_lin(_bare(rhs), 0, xc)}"
            if guard is not None:
                s += f" when {_lin(_bare(guard), 0, xc)}"
            return s
        case App(head, args):
            return _lin_app(head, args, ctx, xc)
        case _:
            return repr(e)


def _lin_app(head: str, args: tuple[Expr, ...], ctx: int, xc: bool) -> str:
    if head == "%wedge":
        s = "^".join(_lin(a, _P_POW + 1, xc) for a in args)
        return _paren(s, ctx > _P_MUL)
    if head == "%comp":
        name = args[0].name  # type: ignore[union-attr]
        specs = ",".join(_lin(a, 0, xc) for a in args[1:])
        return f"{name}({specs})"
    if head == "%hodge":
        return "#(" + ",".join(_lin(a, 0, xc) for a in args) + ")"
    if head == "%inner":
        return _paren(f"{_lin(args[0], _P_POW, xc)} _| "
                      f"{_lin(args[1], _P_POW, xc)}", ctx > _P_MUL)
    if head == "%lie":
        return _paren(f"{_lin(args[0], _P_POW, xc)} |_ "
                      f"{_lin(args[1], _P_POW, xc)}", ctx > _P_MUL)
    if head == "%cons":
        return _paren(f"{_lin(args[0], _P_ADD + 1, xc)} . "
                      f"{_lin(args[1], _P_ADD, xc)}", ctx > _P_ADD)
    if head == "%range":
        return f"{_lin(args[0], _P_ADD + 1, xc)}..{_lin(args[1], _P_ADD + 1, xc)}"
    if head == "%cmp":
        op = args[0].text  # type: ignore[union-attr]
        op = {"neq": " neq ", "::": "::"}.get(op, op)
        return _paren(f"{_lin(args[1], _P_ADD, xc)}{op}"
                      f"{_lin(args[2], _P_ADD, xc)}", True)
    if head == "%and":
        return _paren(f"{_lin(args[0], 0, xc)} and {_lin(args[1], 0, xc)}",
                      ctx > 0)
    if head == "%or":
        return _paren(f"{_lin(args[0], 0, xc)} or {_lin(args[1], 0, xc)}",
                      ctx > 0)
    if head == "%not":
        return f"not {_lin(args[0], _P_ADD, xc)}"
    if head == "%quote":
        return f"'{_lin(args[0], 0, xc)}'"
    if head in ("d", "@") and xc and len(args) == 1 and \
            isinstance(args[0], (Sym, App)):
        op = "d" if head == "d" else "@"
        return f"{op} {_lin(args[0], _P_POW + 1, xc)}"
    body = ",".join(_lin(a, 0, xc) for a in args)
    return f"{head}({body})"


# ---------------------------------------------------------------------
# 2D natural display


@dataclass(slots=True)
class Box:
    lines: list[str]
    base: int

    @property
    def width(self) -> int:
        return len(self.lines[0]) if self.lines else 0

    @property
    def height(self) -> int:
        return len(self.lines)


def _atom(s: str) -> Box:
    return Box([s], 0)


def _hcat(boxes: list[Box], sep: str = "") -> Box:
    if not boxes:
        return _atom("")
    above = max(b.base for b in boxes)
    below = max(b.height - 1 - b.base for b in boxes)
    h = above + below + 1
    rows = ["" for _ in range(h)]
    for j, b in enumerate(boxes):
        top = above - b.base
        for r in range(h):
            i = r - top
            chunk = b.lines[i] if 0 <= i < b.height else " " * b.width
            rows[r] += chunk
        if sep and j < len(boxes) - 1:
            for r in range(h):
                rows[r] += sep if r == above else " " * len(sep)
    return Box(rows, above)


def _wrap(b: Box) -> Box:
    return _hcat([_atom("("), b, _atom(")")])


def _frac(num: Box, den: Box) -> Box:
    w = max(num.width, den.width) + 2
    pad = lambda b: [ln.center(w) for ln in b.lines]
    lines = pad(num) + ["-" * w] + pad(den)
    return Box(lines, num.height)


def _raise_exp(base: Box, ex: Box) -> Box:
    w = base.width + ex.width
    lines = [" " * base.width + ln.ljust(ex.width) for ln in ex.lines]
    lines += [ln.ljust(w) for ln in base.lines]
    return Box(lines, ex.height + base.base)


def print_nat(e: Expr, excalc: bool = False) -> list[str]:
    b = _box(e, 0, excalc)
    w = max((len(ln) for ln in b.lines), default=0)
    return [ln.ljust(w) for ln in b.lines]


def _box(e: Expr, ctx: int, xc: bool) -> Box:
    match e:
        case Num(v):
            if v.denominator == 1:
                s = str(v.numerator)
                b = _atom(s)
                return _wrap(b) if v < 0 and ctx >= _P_MUL else b
            neg = v < 0
            b = _frac(_atom(str(abs(v.numerator))),
                      _atom(str(v.denominator)))
            if neg:
                b = _hcat([_atom(" - " if ctx <= _P_ADD else "-"), b])
                if ctx >= _P_MUL:
                    b = _wrap(b)
            return b
        case Flt() | Sym() | Str() | PVar():
            return _atom(_lin(e, ctx, xc))
        case Neg(arg):
            b = _hcat([_atom(" - "), _box(arg, _P_MUL, xc)])
            return _wrap(b) if ctx >= _P_MUL else b
        case Add(terms):
            parts: list[Box] = []
            for i, t in enumerate(terms):
                neg, core = term_sign(t)
                cb = _box(core, _P_ADD, xc)
                if i == 0:
                    parts.append(_hcat([_atom(" - "), cb]) if neg else cb)
                else:
                    parts.append(_hcat([_atom(" - " if neg else " + "), cb]))
            b = _hcat(parts)
            return _wrap(b) if ctx > _P_ADD else b
        case Mul(factors):
            neg, core = term_sign(e)
            if neg:
                b = _hcat([_atom(" - "), _box(core, _P_MUL, xc)])
                return _wrap(b) if ctx >= _P_MUL else b
            bs = [_box(f, _P_MUL + 1, xc) for f in factors]
            b = _hcat(bs, "*")
            return _wrap(b) if ctx > _P_MUL else b
        case Quo(a, b_):
            bx = _frac(_box(a, 0, xc), _box(b_, 0, xc))
            return _wrap(bx) if ctx > _P_MUL else bx
        case Pow(base, x):
            if x == Num(Fraction(1, 2)):
                return _hcat([_atom("sqrt("), _box(base, 0, xc),
                              _atom(")")])
            bb = _box(base, _P_POW + 1, xc)
            xb = _box(x, 0, xc)
            b = _raise_exp(bb, xb)
            return _wrap(b) if ctx > _P_POW else b
        case Lst(items):
            parts = [_atom("{")]
            for i, it in enumerate(items):
                if i:
                    parts.append(_atom(","))
                parts.append(_box(it, 0, xc))
            parts.append(_atom("}"))
            return _hcat(parts)
        case Eqn(a, b_):
            return _hcat([_box(a, _P_ADD, xc), _atom("="),
                          _box(b_, _P_ADD, xc)])
        case MatV(rows):
            return _mat_box(rows, xc)
        case RuleE(lhs, rhs, guard):
            parts = [_box(lhs, 0, xc), _atom(" => "), _box(_bare(rhs), 0, xc)]
            if guard is not None:
                parts += [_atom(" when "), _box(_bare(guard), 0, xc)]
            return _hcat(parts)
        case App(head, args):
            return _box_app(head, args, ctx, xc)
        case _:
            return _atom(repr(e))


def _box_app(head: str, args: tuple[Expr, ...], ctx: int, xc: bool) -> Box:
    if head == "%comp":
        return _comp_box(args, xc)
    if head == "%wedge":
        b = _hcat([_box(a, _P_POW + 1, xc) for a in args], "^")
        return _wrap(b) if ctx > _P_MUL else b
    if head == "%inner" or head == "%lie":
        op = " _| " if head == "%inner" else " |_ "
        b = _hcat([_box(args[0], _P_POW, xc), _atom(op),
                   _box(args[1], _P_POW, xc)])
        return _wrap(b) if ctx > _P_MUL else b
    if head in ("d", "@") and xc and len(args) == 1 and \
            isinstance(args[0], (Sym, App)):
        op = "d " if head == "d" else "@ "
        return _hcat([_atom(op), _box(args[0], _P_POW + 1, xc)])
    if head == "%hodge":
        return _hcat([_atom("#("), _box(args[0], 0, xc), _atom(")")])
    if head.startswith("%"):
        return _atom(_lin(App(head, args), ctx, xc))
    parts = [_atom(head + "(")]
    for i, a in enumerate(args):
        if i:
            parts.append(_atom(","))
        parts.append(_box(a, 0, xc))
    parts.append(_atom(")"))
    return _hcat(parts)


def _comp_box(args: tuple[Expr, ...], xc: bool) -> Box:
    name = args[0].name  # type: ignore[union-attr]
    upper: list[tuple[int, str]] = []
    lower: list[tuple[int, str]] = []
    col = len(name)
    for spec in args[1:]:
        if isinstance(spec, Neg):
            s = _lin(spec.arg, 0, xc)
            lower.append((col, s))
        else:
            s = _lin(spec, 0, xc)
            upper.append((col, s))
        col += len(s) + 1
    width = col - 1

    def row(cells: list[tuple[int, str]]) -> str:
        out = [" "] * width
        for c, s in cells:
            out[c:c + len(s)] = list(s)
        return "".join(out)

    lines = []
    base = 0
    if upper:
        lines.append(row(upper))
        base = 1
    lines.append(name.ljust(width))
    if lower:
        lines.append(row(lower))
    return Box(lines, base)


def _mat_box(rows: tuple[tuple[Expr, ...], ...], xc: bool) -> Box:
    cells = [[_box(v, 0, xc) for v in row] for row in rows]
    ncol = len(cells[0])
    widths = [max(r[j].width for r in cells) for j in range(ncol)]
    lines: list[str] = []
    for i, row in enumerate(cells):
        padded = []
        for j, b in enumerate(row):
            extra = widths[j] - b.width
            padded.append(Box([" " * extra + ln for ln in b.lines], b.base))
        inner = _hcat(padded, "  ")
        if i:
            lines.append("[" + " " * inner.width + "]")
        for ln in inner.lines:
            lines.append("[" + ln + "]")
    return Box(lines, (len(lines) - 1) // 2)


# ---------------------------------------------------------------------
# TeX


def print_tex(e: Expr) -> str:
    return _tex(e, 0)


def _tex_sym(name: str) -> str:
    if name in _GREEK:
        return "\\" + name
    if name == "infinity":
        return "\\infty"
    if len(name) == 1:
        return name
    return "\\mathrm{" + name.replace("_", "\\_") + "}"


def _tex(e: Expr, ctx: int) -> str:
    match e:
        case Num(v):
            if v.denominator == 1:
                s = str(v.numerator)
                return _paren(s, v < 0 and ctx >= _P_MUL)
            s = f"\\frac{{{abs(v.numerator)}}}{{{v.denominator}}}"
            return ("-" + s) if v < 0 else s
        case Flt(v):
            return _flt_str(v)
        case Sym(name):
            return _tex_sym(name)
        case Str(text):
            return "\\text{" + text + "}"
        case PVar(name):
            return "\\tilde{" + _tex_sym(name) + "}"
        case Neg(arg):
            return _paren("-" + _tex(arg, _P_MUL), ctx >= _P_MUL)
        case Add(terms):
            parts = []
            for i, t in enumerate(terms):
                neg, core = term_sign(t)
                s = _tex(core, _P_ADD)
                if i == 0:
                    parts.append("-" + s if neg else s)
                else:
                    parts.append((" - " if neg else " + ") + s)
            s = "".join(parts)
            return f"\\left({s}\\right)" if ctx > _P_ADD else s
        case Mul(factors):
            neg, core = term_sign(e)
            if neg:
                return _paren("-" + _tex(core, _P_MUL), ctx >= _P_MUL)
            s = " \\cdot ".join(_tex(f, _P_MUL + 1) for f in factors)
            return f"\\left({s}\\right)" if ctx > _P_MUL else s
        case Quo(a, b):
            return f"\\frac{{{_tex(a, 0)}}}{{{_tex(b, 0)}}}"
        case Pow(b, x):
            if x == Num(Fraction(1, 2)):
                return f"\\sqrt{{{_tex(b, 0)}}}"
            bs = _tex(b, _P_POW + 1)
            return f"{bs}^{{{_tex(x, 0)}}}"
        case Lst(items):
            return "\\{" + ", ".join(_tex(i, 0) for i in items) + "\\}"
        case Eqn(a, b):
            return f"{_tex(a, _P_ADD)} = {_tex(b, _P_ADD)}"
        case MatV(rows):
            body = " \\\\ ".join(
                " & ".join(_tex(v, 0) for v in row) for row in rows)
            return "\\begin{pmatrix}" + body + "\\end{pmatrix}"
        case RuleE(lhs, rhs, guard):
            s = f"{_tex(lhs, 0)} \\Rightarrow {_tex(_bare(rhs), 0)}"
            if guard is not None:
                s += f" \\text{{ when }} {_tex(_bare(guard), 0)}"
            return s
        case App(head, args):
            return _tex_app(head, args, ctx)
        case _:
            return "\\text{?}"


def _tex_app(head: str, args: tuple[Expr, ...], ctx: int) -> str:
    if head == "df" or head == "@":
        return _tex_deriv(args)
    if head == "int" and len(args) == 2:
        return f"\\int {_tex(args[0], _P_MUL)}\\,d {_tex(args[1], 0)}"
    if head == "sqrt":
        return f"\\sqrt{{{_tex(args[0], 0)}}}"
    if head == "%wedge":
        return " \\wedge ".join(_tex(a, _P_POW + 1) for a in args)
    if head == "%hodge":
        return f"\\#\\left({_tex(args[0], 0)}\\right)"
    if head == "%inner":
        return f"{_tex(args[0], _P_MUL)} \\lrcorner {_tex(args[1], _P_MUL)}"
    if head == "%lie":
        return f"\\mathcal{{L}}_{{{_tex(args[0], 0)}}} {_tex(args[1], _P_MUL)}"
    if head == "%comp":
        name = args[0].name  # type: ignore[union-attr]
        s = _tex_sym(name)
        for spec in args[1:]:
            if isinstance(spec, Neg):
                s += "{}_{" + _tex(spec.arg, 0) + "}"
            else:
                s += "{}^{" + _tex(spec, 0) + "}"
        return s
    if head == "%cmp":
        op = args[0].text  # type: ignore[union-attr]
        texop = {"<=": "\\le", ">=": "\\ge", "neq": "\\ne",
                 "<": "<", ">": ">", "::": "::"}.get(op, op)
        return f"{_tex(args[1], _P_ADD)} {texop} {_tex(args[2], _P_ADD)}"
    if head in _TEX_FUNCS:
        return f"\\{head}({_tex(args[0], 0)})"
    body = ", ".join(_tex(a, 0) for a in args)
    return f"{_tex_sym(head)}({body})"


def _tex_deriv(args: tuple[Expr, ...]) -> str:
    f = _tex(args[0], _P_MUL)
    rest = args[1:]
    vars_: list[str] = []
    i = 0
    total = 0
    while i < len(rest):
        v = rest[i]
        n = 1
        if i + 1 < len(rest) and isinstance(rest[i + 1], Num):
            n = int(rest[i + 1].value)  # type: ignore[union-attr]
            i += 1
        total += n
        sup = f"^{{{n}}}" if n > 1 else ""
        vars_.append(f"\\partial {_tex(v, 0)}{sup}")
        i += 1
    top = f"\\partial^{{{total}}} " if total > 1 else "\\partial "
    bottom = "\\,".join(vars_)
    return f"\\frac{{{top}{f}}}{{{bottom}}}"
