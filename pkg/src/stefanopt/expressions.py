"""Closed-form scalar expressions of (x, t) parsed from configuration text.

The grammar is tiny on purpose: numeric literals, the variables ``x`` and
``t``, the operators ``+ - * / ^`` (with ``^`` right-associative, binding
tighter than unary minus, which binds tighter than ``* /``), parentheses, and
a fixed set of functions.  Evaluation accepts scalars or numpy arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ExpressionSyntaxError

_UNARY_FUNCS = ("sin", "cos", "exp", "log", "sqrt", "abs")
_BINARY_FUNCS = ("min", "max")
FUNCTIONS = _UNARY_FUNCS + _BINARY_FUNCS
VARIABLES = ("x", "t")


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Node", ...]


Node = Num | Var | Neg | BinOp | Call


@dataclass(frozen=True)
class Expr:
    """Parsed expression; evaluate with :func:`evaluate` or ``expr(x, t)``."""

    root: Node
    source: str

    def __call__(self, x, t, strict: bool = True):
        return evaluate(self, x, t, strict=strict)


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "num" | "ident" | one of "+-*/^(),", or "end"
    text: str
    pos: int


def _tokenize(src: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None or m.end() == pos:
            stripped = src[pos:].lstrip()
            if not stripped:
                break
            bad_pos = len(src) - len(stripped)
            raise ExpressionSyntaxError(f"unexpected character {stripped[0]!r}", bad_pos)
        if m.group("num") is not None:
            tokens.append(_Token("num", m.group("num"), m.start("num")))
        elif m.group("ident") is not None:
            tokens.append(_Token("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(_Token(m.group("op"), m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(_Token("end", "", len(src)))
    return tokens


# ---------------------------------------------------------------------------
# Pratt parser
# ---------------------------------------------------------------------------

_LBP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 30}
_UNARY_BP = 25  # unary minus: tighter than * /, looser than ^


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str) -> _Token:
        if self.current.kind != kind:
            raise ExpressionSyntaxError(
                f"unexpected token {self.current.text or '<end>'!r}", self.current.pos, (kind,)
            )
        return self.advance()

    def parse(self) -> Node:
        node = self.expression(0)
        if self.current.kind != "end":
            raise ExpressionSyntaxError(
                f"unexpected trailing token {self.current.text!r}", self.current.pos, ("end",)
            )
        return node

    def expression(self, rbp: int) -> Node:
        node = self.prefix()
        while self.current.kind in _LBP and _LBP[self.current.kind] > rbp:
            tok = self.advance()
            # ^ is right-associative: recurse with its own lbp minus one
            next_rbp = _LBP[tok.kind] - 1 if tok.kind == "^" else _LBP[tok.kind]
            node = BinOp(tok.kind, node, self.expression(next_rbp))
        return node

    def prefix(self) -> Node:
        tok = self.current
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.advance()
            if tok.text in VARIABLES:
                return Var(tok.text)
            if tok.text in FUNCTIONS:
                return self.call(tok)
            raise ExpressionSyntaxError(f"unknown identifier {tok.text!r}", tok.pos,
                                        VARIABLES + FUNCTIONS)
        if tok.kind == "-":
            self.advance()
            return Neg(self.expression(_UNARY_BP))
        if tok.kind == "+":
            self.advance()
            return self.expression(_UNARY_BP)
        if tok.kind == "(":
            self.advance()
            node = self.expression(0)
            self.expect(")")
            return node
        raise ExpressionSyntaxError(
            f"unexpected token {tok.text or '<end>'!r}", tok.pos,
            ("number", "identifier", "(", "-"),
        )

    def call(self, name_tok: _Token) -> Node:
        self.expect("(")
        args = [self.expression(0)]
        while self.current.kind == ",":
            self.advance()
            args.append(self.expression(0))
        self.expect(")")
        nargs = 2 if name_tok.text in _BINARY_FUNCS else 1
        if len(args) != nargs:
            raise ExpressionSyntaxError(
                f"{name_tok.text} takes {nargs} argument(s), got {len(args)}", name_tok.pos
            )
        return Call(name_tok.text, tuple(args))


def parse(src: str) -> Expr:
    """Parse ``src`` into an :class:`Expr`, or raise :class:`ExpressionSyntaxError`."""
    return Expr(_Parser(src).parse(), src)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _check(strict: bool, name: str, condition, detail: str) -> None:
    if strict and bool(np.any(condition)):
        raise DomainError(name, detail)


def _eval(node: Node, x, t, strict: bool):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return x if node.name == "x" else t
    if isinstance(node, Neg):
        return np.negative(_eval(node.operand, x, t, strict))
    if isinstance(node, BinOp):
        a = _eval(node.left, x, t, strict)
        b = _eval(node.right, x, t, strict)
        if node.op == "+":
            return np.add(a, b)
        if node.op == "-":
            return np.subtract(a, b)
        if node.op == "*":
            return np.multiply(a, b)
        if node.op == "/":
            _check(strict, "/", np.equal(b, 0.0), "division by zero")
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.divide(a, b)
        # "^": route through numpy so a negative base with a fractional
        # exponent yields nan (caught below) instead of a complex number
        with np.errstate(invalid="ignore"):
            out = np.power(np.float64(a) if np.ndim(a) == 0 else a,
                           np.float64(b) if np.ndim(b) == 0 else b)
        _check(strict, "^", np.isnan(out), "negative base with non-integer exponent")
        return out
    # Call
    args = [_eval(arg, x, t, strict) for arg in node.args]
    name = node.name
    if name == "sin":
        return np.sin(args[0])
    if name == "cos":
        return np.cos(args[0])
    if name == "exp":
        return np.exp(args[0])
    if name == "log":
        _check(strict, "log", np.less_equal(args[0], 0.0), "argument must be positive")
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(args[0])
    if name == "sqrt":
        _check(strict, "sqrt", np.less(args[0], 0.0), "argument must be nonnegative")
        with np.errstate(invalid="ignore"):
            return np.sqrt(args[0])
    if name == "abs":
        return np.abs(args[0])
    if name == "min":
        return np.minimum(args[0], args[1])
    # "max"
    return np.maximum(args[0], args[1])


def evaluate(expr: Expr, x, t, strict: bool = True):
    """Evaluate ``expr`` at scalar or array-valued (x, t) in IEEE-754 doubles."""
    out = _eval(expr.root, np.asarray(x, dtype=float) if np.ndim(x) else float(x),
                np.asarray(t, dtype=float) if np.ndim(t) else float(t), strict)
    return out


# ---------------------------------------------------------------------------
# Pretty printing
# ---------------------------------------------------------------------------

def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _LBP[node.op]
    if isinstance(node, Neg):
        return _UNARY_BP
    return 100


def to_source(node_or_expr) -> str:
    """Render an AST back to parseable text (round-trips to an equal AST)."""
    node = node_or_expr.root if isinstance(node_or_expr, Expr) else node_or_expr
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = to_source(node.operand)
        if _prec(node.operand) <= _UNARY_BP:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, BinOp):
        left = to_source(node.left)
        right = to_source(node.right)
        p = _LBP[node.op]
        # left operand needs parens when strictly looser; right also when equal
        # (except ^ which is right-associative, mirrored)
        if _prec(node.left) < p or (node.op == "^" and _prec(node.left) <= p):
            left = f"({left})"
        if _prec(node.right) < p or (node.op != "^" and _prec(node.right) <= p):
            right = f"({right})"
        return f"{left} {node.op} {right}"
    return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
