"""Tiny expression language for time-varying matrix entries.

Matrix coefficients like ``"1+0.1*cos(0.1*k)^2"`` are written as strings in
one free variable ``k`` (the time step) and compiled once into an immutable
per-horizon cache.  Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := atom ('^' uint)?          # uint is a nonnegative integer <= 8
    atom   := number | 'k' | 'pi' | fn '(' expr ')' | '(' expr ')' | '-' factor
    fn     := 'sin' | 'cos' | 'exp'

Whitespace is ignored; operators are left-associative with the usual
precedence.  Unary minus binds looser than ``^`` (so ``-2^2`` is ``-4``)
and tighter than ``*``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import (
    EvalError,
    ParseError,
    ScheduleBuildError,
    UnknownFunctionError,
)
from .matrix_core import Mat

MAX_EXPONENT = 8
_CONSTANTS = {"pi": math.pi}
_FUNCTIONS = {"sin": math.sin, "cos": math.cos, "exp": math.exp}


# --- AST -------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    """The time-step variable k."""


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    child: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


Node = Union[Num, Var, Const, Neg, BinOp, Pow, Call]


@dataclass(frozen=True)
class EntryExpr:
    ast: Node

    def __call__(self, k: int) -> float:
        return eval_expr(self, k)


# --- Tokenizer -------------------------------------------------------------

_NUMBER_RE = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")


@dataclass(frozen=True)
class _Token:
    kind: str  # number | ident | op | lparen | rparen | end
    text: str
    offset: int


def _tokenize(src: str) -> list[_Token]:
    tokens = []
    i = 0
    while i < len(src):
        ch = src[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or ch == ".":
            m = _NUMBER_RE.match(src, i)
            if m is None:
                raise ParseError("malformed number", i, expected=("number",))
            tokens.append(_Token("number", m.group(), i))
            i = m.end()
        elif ch.isalpha() or ch == "_":
            m = _IDENT_RE.match(src, i)
            tokens.append(_Token("ident", m.group(), i))
            i = m.end()
        elif ch in "+-*/^":
            tokens.append(_Token("op", ch, i))
            i += 1
        elif ch == "(":
            tokens.append(_Token("lparen", ch, i))
            i += 1
        elif ch == ")":
            tokens.append(_Token("rparen", ch, i))
            i += 1
        else:
            raise ParseError(f"unexpected character {ch!r}", i,
                             expected=("number", "identifier", "operator", "parenthesis"))
    tokens.append(_Token("end", "", len(src)))
    return tokens


# --- Parser ----------------------------------------------------------------

_ATOM_EXPECTED = ("number", "k", "pi", "function", "(", "-")


class _Parser:
    def __init__(self, src: str):
        self.tokens = _tokenize(src)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> _Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            wanted = text if text is not None else kind
            raise ParseError(f"expected {wanted}", tok.offset, expected=(wanted,))
        return self.advance()

    def parse(self) -> Node:
        node = self.expr()
        tail = self.peek()
        if tail.kind != "end":
            raise ParseError(f"unexpected trailing input {tail.text!r}", tail.offset,
                             expected=("end of input",))
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            caret = self.advance()
            tok = self.peek()
            if tok.kind != "number" or not tok.text.isdigit():
                raise ParseError("exponent must be a plain nonnegative integer",
                                 tok.offset, expected=("integer",))
            self.advance()
            exponent = int(tok.text)
            if exponent > MAX_EXPONENT:
                raise ParseError(f"exponent {exponent} exceeds {MAX_EXPONENT}",
                                 tok.offset, expected=(f"integer <= {MAX_EXPONENT}",))
            del caret
            return Pow(base, exponent)
        return base

    def atom(self) -> Node:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.advance()
            if tok.text == "k":
                return Var()
            if tok.text in _CONSTANTS:
                return Const(tok.text)
            if tok.text in _FUNCTIONS:
                self.expect("lparen")
                arg = self.expr()
                self.expect("rparen")
                return Call(tok.text, arg)
            raise UnknownFunctionError(f"unknown identifier {tok.text!r}", tok.offset,
                                       expected=("k", "pi") + tuple(sorted(_FUNCTIONS)))
        if tok.kind == "lparen":
            self.advance()
            inner = self.expr()
            self.expect("rparen")
            return inner
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return Neg(self.factor())
        raise ParseError(f"unexpected {tok.text or 'end of input'!r}", tok.offset,
                         expected=_ATOM_EXPECTED)


def parse_expr(src: str) -> EntryExpr:
    """Parse one entry expression; raises ParseError with offset on failure."""
    if not isinstance(src, str) or not src.strip():
        raise ParseError("empty expression", 0, expected=_ATOM_EXPECTED)
    return EntryExpr(_Parser(src).parse())


# --- Evaluation ------------------------------------------------------------

def _eval_node(node: Node, k: float) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return k
    if isinstance(node, Const):
        return _CONSTANTS[node.name]
    if isinstance(node, Neg):
        return -_eval_node(node.child, k)
    if isinstance(node, BinOp):
        a = _eval_node(node.left, k)
        b = _eval_node(node.right, k)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if b == 0.0:
            raise EvalError(f"division by zero ({a!r} / 0)")
        return a / b
    if isinstance(node, Pow):
        return _eval_node(node.base, k) ** node.exponent
    if isinstance(node, Call):
        try:
            return _FUNCTIONS[node.fn](_eval_node(node.arg, k))
        except (OverflowError, ValueError) as exc:
            raise EvalError(f"{node.fn} evaluation failed: {exc}") from exc
    raise EvalError(f"unknown node {node!r}")


def eval_expr(e: EntryExpr, k: int) -> float:
    """Evaluate at time step k (taken as a real); result must be finite."""
    if k < 0:
        raise EvalError(f"time step must be nonnegative, got {k}")
    try:
        value = _eval_node(e.ast, float(k))
    except OverflowError as exc:
        raise EvalError(f"overflow at k={k}") from exc
    if not math.isfinite(value):
        raise EvalError(f"non-finite value {value} at k={k}")
    return value


def to_source(e: EntryExpr) -> str:
    """Fully parenthesized source that reparses to an equivalent tree."""

    def emit(node: Node) -> str:
        if isinstance(node, Num):
            return repr(node.value)
        if isinstance(node, Var):
            return "k"
        if isinstance(node, Const):
            return node.name
        if isinstance(node, Neg):
            return f"(-{emit(node.child)})"
        if isinstance(node, BinOp):
            return f"({emit(node.left)}{node.op}{emit(node.right)})"
        if isinstance(node, Pow):
            return f"({emit(node.base)})^{node.exponent}"
        if isinstance(node, Call):
            return f"{node.fn}({emit(node.arg)})"
        raise ValueError(f"unknown node {node!r}")

    return emit(e.ast)


# --- Schedules -------------------------------------------------------------

class MatrixSchedule:
    """A rows x cols grid of entry expressions, pre-evaluated for k in 0..N.

    The cache is computed eagerly at construction and frozen; `at(k)` is a
    constant-time lookup returning a read-only array.
    """

    def __init__(self, exprs: Sequence[Sequence[EntryExpr]], N: int):
        if N < 1:
            raise ScheduleBuildError([(0, 0, f"horizon must be >= 1, got {N}")])
        rows = len(exprs)
        if rows == 0 or len(exprs[0]) == 0:
            raise ScheduleBuildError([(0, 0, "empty grid")])
        cols = len(exprs[0])
        if any(len(row) != cols for row in exprs):
            raise ScheduleBuildError([(0, 0, "ragged grid")])
        self.rows = rows
        self.cols = cols
        self.N = N
        self.exprs = tuple(tuple(row) for row in exprs)
        failures: list[tuple[int, int, str]] = []
        cache = []
        for k in range(N + 1):
            mat = np.empty((rows, cols))
            for i in range(rows):
                for j in range(cols):
                    try:
                        mat[i, j] = eval_expr(self.exprs[i][j], k)
                    except EvalError as exc:
                        failures.append((i, j, f"k={k}: {exc}"))
                        mat[i, j] = np.nan
            mat.flags.writeable = False
            cache.append(mat)
        if failures:
            raise ScheduleBuildError(failures)
        self.cache = tuple(cache)

    def at(self, k: int) -> Mat:
        if not 0 <= k <= self.N:
            raise IndexError(f"time step {k} outside 0..{self.N}")
        return self.cache[k]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @classmethod
    def from_values(cls, values, N: int) -> "MatrixSchedule":
        """Constant schedule from a nested grid of numbers."""
        grid = [[EntryExpr(Num(float(v))) for v in row] for row in np.atleast_2d(values)]
        return cls(grid, N)

    @classmethod
    def constant(cls, mat: Mat, N: int) -> "MatrixSchedule":
        """Constant schedule holding one matrix at every k."""
        return cls.from_values(np.asarray(mat, dtype=np.float64), N)


def build_schedule(grid: Sequence[Sequence[str]], N: int) -> MatrixSchedule:
    """Parse every cell of a text grid and cache values over the horizon.

    All parse failures are collected (with row/column locations) before
    raising, so a config with several bad cells reports them all at once.
    """
    failures: list[tuple[int, int, str]] = []
    exprs: list[list[EntryExpr]] = []
    for i, row in enumerate(grid):
        expr_row = []
        for j, cell in enumerate(row):
            try:
                expr_row.append(parse_expr(cell))
            except ParseError as exc:
                failures.append((i, j, f"parse: {exc}"))
                expr_row.append(EntryExpr(Num(0.0)))
        exprs.append(expr_row)
    if failures:
        raise ScheduleBuildError(failures)
    return MatrixSchedule(exprs, N)
