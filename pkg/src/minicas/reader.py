"""Lexer and parser for the command language.

Source text is case folded to lower case before lexing ("ignores all
upper case letters"). A statement is an expression followed by ';'
(display) or '$' (silent). Compound forms - groups, blocks, loops,
conditionals, write and file directives - are ordinary expressions, so
they can appear inside procedure bodies and loop bodies. Declarations
parse to applications whose head starts with '%', a character that can
never occur in a source-level name, and the evaluator dispatches on
those heads.

The parser is session aware: the ParserContext carries the alias table
(token level substitution), the set of user infix operators, and the
exterior-calculus flag that turns '^' into the wedge product and 'd',
'@', '#' into prefix operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParseError
from .expr import (
    Expr, Num, Flt, Sym, Str, App, Add, Mul, Pow, Quo, Neg, Lst, Eqn,
    PVar, RuleE, NIL, app, neg, num,
)


class IncompleteInput(ParseError):
    """Input ended in the middle of a statement (REPL continuation)."""


@dataclass(frozen=True, slots=True)
class Token:
    kind: str          # name | integer | float | string | punct | term | eof
    text: str
    line: int
    col: int
    off: int = 0
    end: int = 0


@dataclass
class ParserContext:
    """What the reader needs to know about the session."""
    aliases: dict[str, str] = field(default_factory=dict)
    infix_bp: dict[str, int] = field(default_factory=dict)
    excalc: bool = False


@dataclass(frozen=True, slots=True)
class Statement:
    expr: Expr
    silent: bool
    text: str


# Multi-character punctuation, longest first so maximal munch works.
_PUNCTS = ("**", ":=", "=>", "<=", ">=", "<<", ">>", "<>", "_|", "|_",
           "..", "::",
           ";", "$", "(", ")", "{", "}", ",", "+", "-", "*", "/", "^",
           "=", "<", ">", ".", ":", "~", "@", "#", "'")

_NAME_START = set("abcdefghijklmnopqrstuvwxyz")
_NAME_CHARS = _NAME_START | set("0123456789_")


def lex(text: str) -> list[Token]:
    """Tokenize case-folded source. '%' starts a comment to end of line;
    strings use doubled quotes for a literal quote and keep their case."""
    src = text.lower()
    raw = text
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(src)

    def push(kind: str, s: str, ln: int, cl: int, off: int, end: int) -> None:
        toks.append(Token(kind, s, ln, cl, off, end))

    while i < n:
        c = src[i]
        if c in " \t\r\n":
            if c == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1
            continue
        if c == "%":
            while i < n and src[i] != "\n":
                i += 1
            continue
        ln, cl, off = line, col, i
        if c == '"':
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    raise ParseError(f"unterminated string at {ln}:{cl}")
                if src[j] == '"':
                    if j + 1 < n and src[j + 1] == '"':
                        buf.append('"')
                        j += 2
                        continue
                    j += 1
                    break
                buf.append(raw[j])
                j += 1
            push("string", "".join(buf), ln, cl, off, j)
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            isfloat = False
            if j < n and src[j] == "." and j + 1 < n and src[j + 1].isdigit():
                isfloat = True
                j += 1
                while j < n and src[j].isdigit():
                    j += 1
            if j < n and src[j] == "e":
                k = j + 1
                if k < n and src[k] in "+-":
                    k += 1
                if k < n and src[k].isdigit():
                    isfloat = True
                    j = k
                    while j < n and src[j].isdigit():
                        j += 1
            push("float" if isfloat else "integer", src[i:j], ln, cl, off, j)
            col += j - i
            i = j
            continue
        if c in _NAME_START:
            j = i
            while j < n and src[j] in _NAME_CHARS:
                j += 1
            # keep '_|' intact: a name never ends in '_' right before '|'
            while j > i + 1 and src[j - 1] == "_" and j < n and src[j] == "|":
                j -= 1
            push("name", src[i:j], ln, cl, off, j)
            col += j - i
            i = j
            continue
        for p in _PUNCTS:
            if src.startswith(p, i):
                kind = "term" if p in (";", "$") else "punct"
                push(kind, p, ln, cl, off, i + len(p))
                col += len(p)
                i += len(p)
                break
        else:
            raise ParseError(f"unexpected character {c!r} at {ln}:{cl}")
    toks.append(Token("eof", "", line, col, n, n))
    return toks


class _Cursor:
    """Token stream with alias expansion. Expanded tokens come from a
    pending queue; raw offsets keep tracking the original source so
    statement text can be sliced back out."""

    def __init__(self, src: str, toks: list[Token], ctx: ParserContext):
        self.src = src
        self.raw = toks
        self.ri = 0
        self.pending: list[Token] = []
        self.buf: list[Token] = []
        self.ctx = ctx
        self.expand = True
        self.expansions = 0
        self.hi = 0          # end offset of the last raw token consumed

    def _raw_next(self) -> Token:
        if self.pending:
            return self.pending.pop(0)
        t = self.raw[self.ri]
        if t.kind != "eof":
            self.ri += 1
            self.hi = t.end
        return t

    def _fill(self, k: int) -> None:
        while len(self.buf) <= k:
            t = self._raw_next()
            if (self.expand and t.kind == "name"
                    and t.text in self.ctx.aliases):
                self.expansions += 1
                if self.expansions > 1000:
                    raise ParseError("alias expansion loop")
                sub = lex(self.ctx.aliases[t.text])[:-1]
                self.pending[0:0] = [Token(s.kind, s.text, t.line, t.col,
                                           t.off, t.end) for s in sub]
                continue
            self.buf.append(t)

    def peek(self, k: int = 0) -> Token:
        self._fill(k)
        return self.buf[k]

    def next(self) -> Token:
        self._fill(0)
        return self.buf.pop(0)

    def next_off(self) -> int:
        """Source offset where the next statement's text starts."""
        self._fill(0)
        return self.buf[0].off


# binding powers, higher binds tighter
_BP_ASSIGN = 2
_BP_WHERE = 3
_BP_RULE = 6
_BP_OR = 8
_BP_AND = 10
_BP_NOT = 12
_BP_REL = 14
_BP_RANGE = 15
_BP_CONS = 16
_BP_USERINF = 18
_BP_ADD = 20
_BP_MUL = 22
_BP_UNARY = 24
_BP_POW = 26
_BP_WEDGE = 28
_BP_HOOK = 30
_BP_PREFIXAPP = 33
_BP_CALL = 34

_BUILTIN_BP = {
    "or": _BP_OR, "and": _BP_AND,
    "=": _BP_REL, "neq": _BP_REL, "<>": _BP_REL, "<": _BP_REL,
    "<=": _BP_REL, ">": _BP_REL, ">=": _BP_REL, "::": _BP_REL,
    "..": _BP_RANGE, ".": _BP_CONS,
    "+": _BP_ADD, "-": _BP_ADD, "*": _BP_MUL, "/": _BP_MUL,
    "**": _BP_POW, "^": _BP_POW,
    "_|": _BP_HOOK, "|_": _BP_HOOK,
}

_REL_HEADS = {"neq", "<>", "<", "<=", ">", ">=", "::"}

# names that never start an operand of a prefix operator
_NONPRIMARY_NAMES = {
    "then", "else", "do", "until", "step", "when", "where", "and", "or",
    "neq", "end", "with", "in", "sum", "product", "collect", "join",
    "metric", "signature", "scalar", "each",
}

_LOOP_ACTIONS = ("do", "sum", "product", "collect", "join")

# unary builtins that may be applied by juxtaposition: det m, numberp n
_PREFIX_NAMES = {
    "abs", "acos", "asin", "atan", "ceiling", "cos", "cot", "den", "det",
    "evenp", "exp", "factorial", "first", "fixp", "floor", "impart", "input",
    "length", "lhs", "ln", "log", "nextprime", "num", "numberp", "primep",
    "rank", "repart", "rest", "reverse", "rhs", "round", "second", "sign",
    "sin", "sqrt", "tan", "third", "tp", "trace",
}


class Parser:
    def __init__(self, text: str, ctx: ParserContext | None = None):
        self.ctx = ctx or ParserContext()
        self.cur = _Cursor(text.lower(), lex(text), self.ctx)

    # -- token helpers -------------------------------------------------

    def _err(self, msg: str, tok: Token) -> ParseError:
        if tok.kind == "eof":
            return IncompleteInput(f"{msg} at end of input")
        return ParseError(f"{msg} at {tok.line}:{tok.col} (near {tok.text!r})")

    def _expect(self, text: str) -> Token:
        t = self.cur.next()
        if t.text != text or t.kind == "eof":
            raise self._err(f"expected {text!r}", t)
        return t

    def _expect_name(self) -> str:
        t = self.cur.next()
        if t.kind != "name":
            raise self._err("expected a name", t)
        return t.text

    def _at(self, text: str) -> bool:
        return self.cur.peek().text == text and self.cur.peek().kind != "eof"

    def _at_term(self) -> bool:
        return self.cur.peek().kind == "term"

    # -- statements ----------------------------------------------------

    def parse_statement(self) -> Statement | None:
        while self._at_term():
            self.cur.next()
        if self.cur.peek().kind == "eof":
            return None
        start = self.cur.next_off()
        e = self.command()
        t = self.cur.next()
        if t.kind != "term":
            raise self._err("expected ';' or '$'", t)
        text = self.cur.src[start:self.cur.hi].strip()
        _check_pvars(e, False)
        return Statement(e, t.text == "$", text)

    def parse_all(self) -> list[Statement]:
        out = []
        while (s := self.parse_statement()) is not None:
            out.append(s)
        return out

    # -- commands (statement-level forms usable in bodies) --------------

    def command(self) -> Expr:
        t = self.cur.peek()
        if t.kind == "name":
            h = _DECLS.get(t.text)
            if h is not None:
                self.cur.next()
                return h(self)
        return self.parse_expr(0)

    # -- expressions ----------------------------------------------------

    def parse_expr(self, bp: int) -> Expr:
        t = self.cur.next()
        left = self._nud(t)
        while True:
            nt = self.cur.peek()
            lbp = self._led_bp(nt, left)
            if lbp <= bp:
                break
            self.cur.next()
            left = self._led(nt, left)
        return left

    def _led_bp(self, t: Token, left: Expr) -> int:
        if t.kind == "punct":
            if t.text == ":=":
                return _BP_ASSIGN
            if t.text == "=>":
                return _BP_RULE
            if t.text == "(":
                return _BP_CALL if isinstance(left, Sym) else 0
            return _BUILTIN_BP.get(t.text, 0)
        if t.kind == "name":
            if t.text == "where":
                return _BP_WHERE
            if t.text in ("or", "and", "neq"):
                return _BUILTIN_BP[t.text]
            return self.ctx.infix_bp.get(t.text, 0)
        return 0

    def _led(self, t: Token, left: Expr) -> Expr:
        x = t.text
        if x == ":=":
            return app("%setq", left, self.parse_expr(_BP_ASSIGN - 1))
        if x == "=>":
            rhs = self.parse_expr(_BP_RULE)
            guard = None
            if self._at("when"):
                self.cur.next()
                guard = self.parse_expr(_BP_RULE)
            return RuleE(left, rhs, guard)
        if x == "where":
            return app("%where", left, self.parse_expr(_BP_WHERE))
        if x == "or":
            return app("%or", left, self.parse_expr(_BP_OR))
        if x == "and":
            return app("%and", left, self.parse_expr(_BP_AND))
        if x == "=":
            return Eqn(left, self.parse_expr(_BP_REL))
        if x in _REL_HEADS:
            op = "neq" if x == "<>" else x
            return app("%cmp", Str(op), left, self.parse_expr(_BP_REL))
        if x == "..":
            return app("%range", left, self.parse_expr(_BP_RANGE))
        if x == ".":
            return app("%cons", left, self.parse_expr(_BP_CONS - 1))
        if x == "+":
            return Add((left, self.parse_expr(_BP_ADD)))
        if x == "-":
            return Add((left, Neg(self.parse_expr(_BP_ADD))))
        if x == "*":
            return Mul((left, self.parse_expr(_BP_MUL)))
        if x == "/":
            return Quo(left, self.parse_expr(_BP_MUL))
        if x == "**":
            return Pow(left, self.parse_expr(_BP_POW - 1))
        if x == "^":
            if self.ctx.excalc:
                return app("%wedge", left, self.parse_expr(_BP_WEDGE))
            return Pow(left, self.parse_expr(_BP_POW - 1))
        if x == "_|":
            return app("%inner", left, self.parse_expr(_BP_HOOK))
        if x == "|_":
            return app("%lie", left, self.parse_expr(_BP_HOOK))
        if x == "(":
            args = self._call_args()
            return App(left.name, tuple(args))  # type: ignore[union-attr]
        # user infix operator
        return App(x, (left, self.parse_expr(self.ctx.infix_bp[x])))

    def _call_args(self) -> list[Expr]:
        args: list[Expr] = []
        if not self._at(")"):
            args.append(self.parse_expr(0))
            while self._at(","):
                self.cur.next()
                args.append(self.parse_expr(0))
        self._expect(")")
        return args

    def _nud(self, t: Token) -> Expr:
        if t.kind == "integer":
            return num(int(t.text))
        if t.kind == "float":
            return Flt(float(t.text))
        if t.kind == "string":
            return Str(t.text)
        if t.kind == "name":
            return self._name_nud(t)
        if t.kind == "term" or t.kind == "eof":
            raise self._err("expected an expression", t)
        x = t.text
        if x == "(":
            items = self._call_args()
            if len(items) == 1:
                return items[0]
            return Lst(tuple(items))
        if x == "{":
            items: list[Expr] = []
            if not self._at("}"):
                items.append(self.parse_expr(0))
                while self._at(","):
                    self.cur.next()
                    items.append(self.parse_expr(0))
            self._expect("}")
            return Lst(tuple(items))
        if x == "-":
            return Neg(self.parse_expr(_BP_UNARY))
        if x == "+":
            return self.parse_expr(_BP_UNARY)
        if x == "~":
            return PVar(self._expect_name())
        if x == "'":
            e = self.parse_expr(_BP_ASSIGN)
            self._expect("'")
            return app("%quote", e)
        if x == "<<":
            return self._group()
        if x in ("@", "#"):
            head = "@" if x == "@" else "%hodge"
            if not self.ctx.excalc:
                raise self._err(f"{x!r} needs the exterior calculus package",
                                t)
            if self._at("("):
                self.cur.next()
                return App(head, tuple(self._call_args()))
            return App(head, (self.parse_expr(_BP_PREFIXAPP),))
        raise self._err("unexpected token", t)

    def _name_nud(self, t: Token) -> Expr:
        x = t.text
        if x == "if":
            return self._if_form()
        if x == "for":
            return self._for_form()
        if x == "while":
            c = self.parse_expr(0)
            self._expect("do")
            return app("%while", c, self.command())
        if x == "repeat":
            body = self.command()
            self._expect("until")
            return app("%repeat", body, self.parse_expr(0))
        if x == "begin":
            return self._block()
        if x == "return":
            nt = self.cur.peek()
            if nt.kind == "term" or nt.text in ("end", ">>") or \
                    nt.kind == "eof":
                return app("%return")
            return app("%return", self.parse_expr(0))
        if x == "not":
            return app("%not", self.parse_expr(_BP_NOT))
        if (self.ctx.excalc and x == "d"
                and self._starts_primary(self.cur.peek())):
            if self._at("("):
                self.cur.next()
                return App("d", tuple(self._call_args()))
            return App("d", (self.parse_expr(_BP_PREFIXAPP),))
        if x in _PREFIX_NAMES and not self._at("(") and \
                self._starts_primary(self.cur.peek()):
            return App(x, (self.parse_expr(_BP_PREFIXAPP),))
        return Sym(x)

    def _starts_primary(self, t: Token) -> bool:
        if t.kind in ("integer", "float", "string"):
            return True
        if t.kind == "name":
            return t.text not in _NONPRIMARY_NAMES and \
                t.text not in self.ctx.infix_bp
        return t.text in ("(", "{", "~")

    def _if_form(self) -> Expr:
        c = self.parse_expr(0)
        self._expect("then")
        yes = self.command()
        if self._at("else"):
            self.cur.next()
            return app("%if", c, yes, self.command())
        return app("%if", c, yes)

    def _for_form(self) -> Expr:
        if self._at("each"):
            self.cur.next()
            var = self._expect_name()
            self._expect("in")
            lst = self.parse_expr(0)
            action = self._action()
            return app("%foreach", Sym(var), lst, Str(action), self.command())
        var = self._expect_name()
        self._expect(":=")
        lo = self.parse_expr(0)
        if self._at(":"):
            self.cur.next()
            step: Expr = num(1)
            hi = self.parse_expr(0)
        elif self._at("step"):
            self.cur.next()
            step = self.parse_expr(0)
            self._expect("until")
            hi = self.parse_expr(0)
        else:
            raise self._err("expected ':' or 'step'", self.cur.peek())
        action = self._action()
        return app("%for", Sym(var), lo, step, hi, Str(action),
                   self.command())

    def _action(self) -> str:
        t = self.cur.next()
        if t.text not in _LOOP_ACTIONS:
            raise self._err("expected do, sum, product, collect or join", t)
        return t.text

    def _group(self) -> Expr:
        body: list[Expr] = []
        last_terminated = False
        while True:
            if self._at(">>"):
                self.cur.next()
                break
            body.append(self.command())
            last_terminated = False
            while self._at_term():
                self.cur.next()
                last_terminated = True
        # a group only has a value when its last statement lacks a terminator
        flag = num(1) if body and not last_terminated else num(0)
        return App("%group", (flag, *body))

    def _block(self) -> Expr:
        locals_: list[Expr] = []
        if self.cur.peek().text in ("scalar", "integer") and \
                self.cur.peek().kind == "name":
            self.cur.next()
            locals_.append(Sym(self._expect_name()))
            while self._at(","):
                self.cur.next()
                locals_.append(Sym(self._expect_name()))
            if self._at_term():
                self.cur.next()
        body: list[Expr] = []
        while True:
            if self._at("end"):
                self.cur.next()
                break
            if self.cur.peek().kind == "eof":
                raise self._err("expected 'end'", self.cur.peek())
            body.append(self.command())
            while self._at_term():
                self.cur.next()
        return App("%block", (Lst(tuple(locals_)), *body))

    # -- declarations ---------------------------------------------------

    def _names(self) -> list[Expr]:
        out = [Sym(self._expect_name())]
        while self._at(","):
            self.cur.next()
            out.append(Sym(self._expect_name()))
        return out

    def _exprlist(self) -> list[Expr]:
        out = [self.parse_expr(0)]
        while self._at(","):
            self.cur.next()
            out.append(self.parse_expr(0))
        return out

    def _decl_on(self) -> Expr:
        return App("%on", tuple(self._names()))

    def _decl_off(self) -> Expr:
        return App("%off", tuple(self._names()))

    def _decl_clear(self) -> Expr:
        return App("%clear", tuple(self._exprlist()))

    def _decl_let(self) -> Expr:
        return App("%let", tuple(self._exprlist()))

    def _decl_clearrules(self) -> Expr:
        return App("%clearrules", tuple(self._exprlist()))

    def _decl_match(self) -> Expr:
        return App("%match", tuple(self._exprlist()))

    def _decl_operator(self) -> Expr:
        return App("%operator", tuple(self._names()))

    def _decl_infix(self) -> Expr:
        return App("%infix", tuple(self._names()))

    def _decl_precedence(self) -> Expr:
        name = self._expect_name()
        self._expect(",")
        t = self.cur.next()
        if t.kind not in ("name", "punct"):
            raise self._err("expected an operator", t)
        return App("%precedence", (Sym(name), Str(t.text)))

    def _prop(self, kind: str) -> Expr:
        return App("%prop", (Str(kind), *self._names()))

    def _decl_array(self) -> Expr:
        return App("%array", tuple(self._exprlist()))

    def _decl_matrix(self) -> Expr:
        return App("%matrix", tuple(self._exprlist()))

    def _decl_procedure(self) -> Expr:
        name = self._expect_name()
        params: list[Expr] = []
        if self._at("("):
            self.cur.next()
            if not self._at(")"):
                params.append(Sym(self._expect_name()))
                while self._at(","):
                    self.cur.next()
                    params.append(Sym(self._expect_name()))
            self._expect(")")
        t = self.cur.next()
        if t.kind != "term":
            raise self._err("expected ';' or '$' after procedure head", t)
        body = self.command()
        return App("%proc", (Sym(name), Lst(tuple(params)), body))

    def _decl_define(self) -> Expr:
        entries: list[Expr] = []
        while True:
            t = self.cur.next()
            if t.kind != "name":
                raise self._err("expected an alias name", t)
            self._expect("=")
            start = self.cur.next_off()
            depth = 0
            end = start
            while True:
                nt = self.cur.peek()
                if nt.kind == "eof":
                    raise self._err("unterminated define", nt)
                if depth == 0 and (nt.kind == "term" or nt.text == ","):
                    break
                if nt.text in ("(", "{"):
                    depth += 1
                elif nt.text in (")", "}"):
                    depth -= 1
                self.cur.next()
                end = self.cur.hi
            entries.append(Eqn(Sym(t.text), Str(self.cur.src[start:end])))
            if self._at(","):
                self.cur.next()
                continue
            break
        return App("%define", tuple(entries))

    def _decl_order(self) -> Expr:
        return App("%order", tuple(self._exprlist()))

    def _decl_factor(self) -> Expr:
        return App("%factor", tuple(self._exprlist()))

    def _decl_remfac(self) -> Expr:
        return App("%remfac", tuple(self._exprlist()))

    def _decl_depend(self) -> Expr:
        return App("%depend", tuple(self._exprlist()))

    def _decl_nodepend(self) -> Expr:
        return App("%nodepend", tuple(self._exprlist()))

    def _decl_showrules(self) -> Expr:
        return App("%showrules", (Sym(self._expect_name()),))

    def _decl_showtime(self) -> Expr:
        return App("%showtime", ())

    def _decl_load(self) -> Expr:
        return App("%load", (Sym(self._expect_name()),))

    def _decl_quit(self) -> Expr:
        return App("%quit", ())

    def _decl_restart(self) -> Expr:
        return App("%restart", ())

    def _decl_end(self) -> Expr:
        return App("%end", ())

    def _decl_in(self) -> Expr:
        return App("%in", (self.parse_expr(0),))

    def _decl_out(self) -> Expr:
        return App("%out", (self.parse_expr(0),))

    def _decl_shut(self) -> Expr:
        return App("%shut", (self.parse_expr(0),))

    def _decl_write(self) -> Expr:
        return App("%write", tuple(self._exprlist()))

    def _decl_indexrange(self) -> Expr:
        return App("%indexrange", tuple(self._exprlist()))

    def _decl_coframe(self) -> Expr:
        legs = self._exprlist()
        metric: Expr = NIL
        signature: Expr = NIL
        if self._at("with"):
            self.cur.next()
            t = self.cur.next()
            if t.text == "metric":
                metric = self.parse_expr(0)
            elif t.text == "signature":
                signature = self.parse_expr(0)
                if not isinstance(signature, Lst):
                    signature = Lst((signature,))
            else:
                raise self._err("expected metric or signature", t)
        return App("%coframe", (Lst(tuple(legs)), metric, signature))

    def _decl_pform(self) -> Expr:
        return App("%pform", tuple(self._exprlist()))

    def _decl_tvector(self) -> Expr:
        return App("%tvector", tuple(self._names()))

    def _decl_fdomain(self) -> Expr:
        return App("%fdomain", tuple(self._exprlist()))

    def _decl_indexsym(self) -> Expr:
        tensor = self.parse_expr(0)
        self._expect(":")
        clauses: list[Expr] = []
        while self.cur.peek().text in ("symmetric", "antisymmetric"):
            kind = self.cur.next().text
            groups: Expr = NIL
            if self._at("in"):
                self.cur.next()
                groups = Lst(tuple(self._exprlist()))
            clauses.append(Lst((Str(kind), groups)))
        if not clauses:
            raise self._err("expected symmetric or antisymmetric",
                            self.cur.peek())
        return App("%indexsym", (tensor, Lst(tuple(clauses))))

    def _decl_frame(self) -> Expr:
        return App("%frame", (Sym(self._expect_name()),))

    def _decl_displayframe(self) -> Expr:
        return App("%displayframe", ())

    def _decl_riemannconx(self) -> Expr:
        return App("%riemannconx", (Sym(self._expect_name()),))


_DECLS = {
    "on": Parser._decl_on,
    "off": Parser._decl_off,
    "clear": Parser._decl_clear,
    "let": Parser._decl_let,
    "clearrules": Parser._decl_clearrules,
    "match": Parser._decl_match,
    "operator": Parser._decl_operator,
    "infix": Parser._decl_infix,
    "precedence": Parser._decl_precedence,
    "symmetric": lambda p: p._prop("symmetric"),
    "antisymmetric": lambda p: p._prop("antisymmetric"),
    "even": lambda p: p._prop("even"),
    "odd": lambda p: p._prop("odd"),
    "linear": lambda p: p._prop("linear"),
    "noncom": lambda p: p._prop("noncom"),
    "array": Parser._decl_array,
    "matrix": Parser._decl_matrix,
    "procedure": Parser._decl_procedure,
    "define": Parser._decl_define,
    "order": Parser._decl_order,
    "factor": Parser._decl_factor,
    "remfac": Parser._decl_remfac,
    "depend": Parser._decl_depend,
    "nodepend": Parser._decl_nodepend,
    "showrules": Parser._decl_showrules,
    "showtime": Parser._decl_showtime,
    "load_package": Parser._decl_load,
    "quit": Parser._decl_quit,
    "bye": Parser._decl_quit,
    "restart": Parser._decl_restart,
    "end": Parser._decl_end,
    "in": Parser._decl_in,
    "out": Parser._decl_out,
    "shut": Parser._decl_shut,
    "write": Parser._decl_write,
    "indexrange": Parser._decl_indexrange,
    "coframe": Parser._decl_coframe,
    "pform": Parser._decl_pform,
    "tvector": Parser._decl_tvector,
    "fdomain": Parser._decl_fdomain,
    "index_symmetries": Parser._decl_indexsym,
    "frame": Parser._decl_frame,
    "displayframe": Parser._decl_displayframe,
    "riemannconx": Parser._decl_riemannconx,
}


def _check_pvars(e: Expr, inside_rule: bool) -> None:
    """Pattern variables may only occur inside a rule."""
    match e:
        case PVar(name) if not inside_rule:
            raise ParseError(f"pattern variable ~{name} outside a rule")
        case RuleE(lhs, rhs, guard):
            _check_pvars(lhs, True)
            _check_pvars(rhs, True)
            if guard is not None:
                _check_pvars(guard, True)
        case App(_, args):
            for a in args:
                _check_pvars(a, inside_rule)
        case Add(terms) | Mul(terms) | Lst(terms):
            for a in terms:
                _check_pvars(a, inside_rule)
        case Pow(b, x):
            _check_pvars(b, inside_rule)
            _check_pvars(x, inside_rule)
        case Quo(a, b) | Eqn(a, b):
            _check_pvars(a, inside_rule)
            _check_pvars(b, inside_rule)
        case Neg(a):
            _check_pvars(a, inside_rule)
        case _:
            pass


def parse_program(text: str, ctx: ParserContext | None = None) \
        -> list[Statement]:
    """Parse a complete script (no session, no aliases by default)."""
    return Parser(text, ctx).parse_all()
