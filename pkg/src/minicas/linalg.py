"""Exact matrix algebra on immutable MatV grids.

Arithmetic runs over the expression field: elements are Exprs normalized
through the session, so rational and symbolic entries both work.  Rank and
pivoting treat a symbolic entry as generically nonzero.
"""
from __future__ import annotations

from typing import Optional

from . import calculus as C
from .errors import EvalError
from .expr import (
    Add, App, Expr, Lst, MatV, Mul, Neg, Num, Pow, Quo, Sym,
    ONE, ZERO, NIL, add, mul, num, sym,
)

Grid = list[list[Expr]]


def _rows(m: MatV) -> Grid:
    return [list(r) for r in m.rows]


def _mk(grid: Grid) -> MatV:
    return MatV(tuple(tuple(r) for r in grid))


def _dims(m: MatV) -> tuple[int, int]:
    return len(m.rows), len(m.rows[0]) if m.rows else 0


def _square(m: MatV) -> int:
    r, c = _dims(m)
    if r != c:
        raise EvalError("matrix must be square")
    return r


def _is_zero(s, e: Expr) -> bool:
    return s._norm(e) == ZERO


def _identity(n: int) -> Grid:
    return [[ONE if i == j else ZERO for j in range(n)] for i in range(n)]


# -- expression-tree arithmetic -------------------------------------------------


def mat_arith(s, e: Expr) -> Expr:
    v = _ev(s, e)
    if isinstance(v, MatV):
        return _mk([[s._norm(x) for x in row] for row in _rows(v)])
    return s._norm(v)


def _ev(s, e: Expr) -> Expr:
    match e:
        case MatV(_):
            return e
        case Add(terms):
            vals = [_ev(s, t) for t in terms]
            mats = [v for v in vals if isinstance(v, MatV)]
            if len(mats) != len(vals):
                raise EvalError("cannot add a matrix and a scalar")
            out = _rows(mats[0])
            for m in mats[1:]:
                if _dims(m) != _dims(mats[0]):
                    raise EvalError("matrix dimensions do not match")
                g = _rows(m)
                out = [[Add((a, b)) for a, b in zip(ra, rb)]
                       for ra, rb in zip(out, g)]
            return _mk(out)
        case Mul(factors):
            acc: Optional[Expr] = None
            for f in factors:
                acc = f if acc is None else _combine(s, acc, _ev(s, f))
                acc = _ev(s, acc)
            return acc if acc is not None else ONE
        case Quo(a, b):
            bv = _ev(s, b)
            av = _ev(s, a)
            if isinstance(bv, MatV):
                return _combine(s, av, _mk(_inverse(s, bv)))
            if isinstance(av, MatV):
                return _scale(av, Quo(ONE, bv))
            return Quo(av, bv)
        case Neg(a):
            av = _ev(s, a)
            return _scale(av, num(-1)) if isinstance(av, MatV) else Neg(av)
        case Pow(b, p):
            bv = _ev(s, b)
            if not isinstance(bv, MatV):
                return Pow(bv, p)
            pv = p if isinstance(p, Num) else s._norm(p)
            n = pv.value if isinstance(pv, Num) else None
            if n is None or n.denominator != 1:
                raise EvalError("matrix powers need integer exponents")
            n = int(n)
            size = _square(bv)
            if n < 0:
                bv = _mk(_inverse(s, bv))
                n = -n
            out = _mk(_identity(size))
            for _ in range(n):
                s.budget.tick()
                out = _matmul(s, out, bv)
            return out
        case _:
            return e


def _combine(s, a: Expr, b: Expr) -> Expr:
    am, bm = isinstance(a, MatV), isinstance(b, MatV)
    if am and bm:
        return _matmul(s, a, b)
    if am:
        return _scale(a, b)
    if bm:
        return _scale(b, a)
    return mul(a, b)


def _scale(m: MatV, c: Expr) -> MatV:
    return _mk([[Mul((c, x)) for x in row] for row in _rows(m)])


def _matmul(s, a: MatV, b: MatV) -> MatV:
    ra, ca = _dims(a)
    rb, cb = _dims(b)
    if ca != rb:
        raise EvalError("matrix dimensions do not match")
    out = [[s._norm(add(*[Mul((a.rows[i][k], b.rows[k][j]))
                          for k in range(ca)]))
            for j in range(cb)] for i in range(ra)]
    return _mk(out)


# -- elimination kernels ----------------------------------------------------------


def _det(s, grid: Grid) -> Expr:
    """Fraction-free (Bareiss) elimination; exact for symbolic entries."""
    a = [row[:] for row in grid]
    n = len(a)
    if n == 1:
        return s._norm(a[0][0])
    sign = 1
    prev: Expr = ONE
    for k in range(n - 1):
        if _is_zero(s, a[k][k]):
            for r in range(k + 1, n):
                if not _is_zero(s, a[r][k]):
                    a[k], a[r] = a[r], a[k]
                    sign = -sign
                    break
            else:
                return ZERO
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                s.budget.tick()
                cross = Add((Mul((a[i][j], a[k][k])),
                             Neg(Mul((a[i][k], a[k][j])))))
                a[i][j] = s._norm(cross if prev == ONE else Quo(cross, prev))
            a[i][k] = ZERO
        prev = a[k][k]
    d = a[n - 1][n - 1]
    return s._norm(Neg(d)) if sign < 0 else s._norm(d)


def _inverse(s, m: MatV) -> Grid:
    n = _square(m)
    aug = [list(m.rows[i]) + _identity(n)[i] for i in range(n)]
    for k in range(n):
        if _is_zero(s, aug[k][k]):
            for r in range(k + 1, n):
                if not _is_zero(s, aug[r][k]):
                    aug[k], aug[r] = aug[r], aug[k]
                    break
            else:
                raise EvalError("matrix is singular")
        p = aug[k][k]
        aug[k] = [s._norm(Quo(x, p)) for x in aug[k]]
        for i in range(n):
            if i == k or _is_zero(s, aug[i][k]):
                continue
            f = aug[i][k]
            aug[i] = [s._norm(Add((x, Neg(Mul((f, y))))))
                      for x, y in zip(aug[i], aug[k])]
    return [row[n:] for row in aug]


def _echelon(s, grid: Grid) -> tuple[Grid, list[int]]:
    """Row reduction to reduced echelon form; returns (rows, pivot columns)."""
    a = [[s._norm(x) for x in row] for row in grid]
    rows = len(a)
    cols = len(a[0]) if a else 0
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        pr = next((i for i in range(r, rows) if not _is_zero(s, a[i][c])), None)
        if pr is None:
            continue
        a[r], a[pr] = a[pr], a[r]
        p = a[r][c]
        a[r] = [s._norm(Quo(x, p)) for x in a[r]]
        for i in range(rows):
            if i == r or _is_zero(s, a[i][c]):
                continue
            f = a[i][c]
            a[i] = [s._norm(Add((x, Neg(Mul((f, y))))))
                    for x, y in zip(a[i], a[r])]
        pivots.append(c)
        r += 1
    return a, pivots


def _nullspace(s, grid: Grid) -> list[list[Expr]]:
    a, pivots = _echelon(s, grid)
    cols = len(grid[0])
    free = [c for c in range(cols) if c not in pivots]
    basis: list[list[Expr]] = []
    for fc in free:
        v: list[Expr] = [ZERO] * cols
        v[fc] = ONE
        for r, pc in enumerate(pivots):
            v[pc] = s._norm(Neg(a[r][fc]))
        basis.append(v)
    return basis


# -- session-facing commands -------------------------------------------------------


def _mat_of(s, e: Expr) -> MatV:
    v = s._renorm(e)
    if not isinstance(v, MatV):
        raise EvalError("expected a matrix")
    return v


def det_cmd(s, args) -> Expr:
    if len(args) != 1:
        raise EvalError("det expects one matrix")
    m = _mat_of(s, args[0])
    _square(m)
    return _det(s, _rows(m))


def tp_cmd(s, args) -> Expr:
    if len(args) != 1:
        raise EvalError("tp expects one matrix")
    m = _mat_of(s, args[0])
    r, c = _dims(m)
    return _mk([[m.rows[i][j] for i in range(r)] for j in range(c)])


def trace_cmd(s, args) -> Expr:
    if len(args) != 1:
        raise EvalError("trace expects one matrix")
    m = _mat_of(s, args[0])
    n = _square(m)
    return s._norm(add(*[m.rows[i][i] for i in range(n)]))


def rank_cmd(s, args) -> Expr:
    if len(args) != 1:
        raise EvalError("rank expects one matrix")
    m = _mat_of(s, args[0])
    _, pivots = _echelon(s, _rows(m))
    return num(len(pivots))


def mateigen_cmd(s, args) -> Expr:
    if len(args) != 2:
        raise EvalError("mateigen expects mateigen(matrix, name)")
    m = _mat_of(s, args[0])
    lam = s._req(args[1])
    if not isinstance(lam, Sym):
        raise EvalError("mateigen needs a free name for the eigenvalue")
    n = _square(m)
    cp_rows = [[s._norm(Add(((lam if i == j else ZERO),
                             Neg(m.rows[i][j]))))
                for j in range(n)] for i in range(n)]
    charpoly = _det(s, cp_rows)
    eigenvalues = C._solve_uni(s, charpoly, lam)
    entries = []
    complete = True
    seen: list[Expr] = []
    for ev in eigenvalues:
        if ev in seen:
            continue
        seen.append(ev)
        if isinstance(ev, App) and ev.head == "root_of":
            entries.append(Lst((ev, Lst(()))))
            complete = False
            continue
        shifted = [[s._norm(Add((m.rows[i][j],
                                 Neg(ev) if i == j else ZERO)))
                    for j in range(n)] for i in range(n)]
        basis = _nullspace(s, shifted)
        entries.append(Lst((ev, Lst(tuple(Lst(tuple(v)) for v in basis)))))
    return Lst((charpoly, Lst(tuple(entries)),
                sym("t") if complete else NIL))
