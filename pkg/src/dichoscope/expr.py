"""Scalar expressions in one variable ``t``.

Grammar (EBNF)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = "-" unary | power ;
    power   = atom [ "^" unary ] ;            (* right associative *)
    atom    = number | "t" | "pi" | "e"
            | func "(" expr { "," expr } ")"
            | "(" expr ")" ;
    func    = "ln" | "exp" | "sqrt" | "abs" | "sin" | "cos" | "pow" ;

``^`` binds tighter than unary minus, so ``-t^2`` is ``-(t^2)`` and
``2^3^2`` is ``2^(3^2)``.  The parser is a Pratt loop over these binding
powers; evaluation accepts floats or numpy arrays.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import EvalError, ParseError

__all__ = [
    "Expr", "Const", "Var", "NamedConst", "Neg", "BinOp", "Call",
    "parse", "evaluate", "to_text", "FUNCTIONS",
]

Number = Union[float, np.ndarray]

FUNCTIONS = {"ln": 1, "exp": 1, "sqrt": 1, "abs": 1, "sin": 1, "cos": 1, "pow": 2}
NAMED_CONSTANTS = {"pi": math.pi, "e": math.e}


class Expr:
    """Base node. Nodes are frozen dataclasses and safe to share."""

    def __call__(self, t):
        return evaluate(self, t)

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    pass


@dataclass(frozen=True)
class NamedConst(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple


# --------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
      | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
      | (?P<op>[-+*/^(),])""",
    re.VERBOSE,
)

_OPERAND_START = frozenset({"number", "identifier", "(", "-"})
_AFTER_OPERAND = frozenset({"+", "-", "*", "/", "^", ")", ",", "end"})


@dataclass(frozen=True)
class _Token:
    kind: str  # "number", "ident", an operator character, or "end"
    text: str
    offset: int  # byte offset into the UTF-8 encoded source


def _tokenize(text: str) -> list:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}",
                             _byte_offset(text, pos), _OPERAND_START | _AFTER_OPERAND)
        kind = m.lastgroup
        if kind != "ws":
            value = m.group(kind)
            tokens.append(_Token(value if kind == "op" else kind, value,
                                 _byte_offset(text, pos)))
        pos = m.end()
    tokens.append(_Token("end", "", _byte_offset(text, len(text))))
    return tokens


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


# --------------------------------------------------------------------------
# Pratt parser

_BINARY_LBP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_UNARY_RBP = 30


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.pos = 0

    @property
    def token(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.token
        if tok.kind != kind:
            raise ParseError(f"unexpected {_describe(tok)}", tok.offset, {kind})
        return self.advance()

    def expression(self, rbp=0):
        left = self.prefix()
        while _BINARY_LBP.get(self.token.kind, 0) > rbp:
            op = self.advance().kind
            if op == "^":
                # right associative; the exponent may carry its own unary minus
                right = self.expression(_UNARY_RBP - 1)
            else:
                right = self.expression(_BINARY_LBP[op])
            left = BinOp(op, left, right)
        return left

    def prefix(self):
        tok = self.advance()
        if tok.kind == "number":
            return Const(float(tok.text))
        if tok.kind == "-":
            return Neg(self.expression(_UNARY_RBP))
        if tok.kind == "(":
            inner = self.expression()
            self.expect(")")
            return inner
        if tok.kind == "ident":
            return self.identifier(tok)
        raise ParseError(f"unexpected {_describe(tok)}", tok.offset, _OPERAND_START)

    def identifier(self, tok):
        name = tok.text
        if name == "t":
            return Var()
        if name in NAMED_CONSTANTS:
            return NamedConst(name)
        if name not in FUNCTIONS:
            raise ParseError(f"unknown identifier {name!r}", tok.offset,
                             {"t", "pi", "e", *FUNCTIONS})
        self.expect("(")
        args = [self.expression()]
        while self.token.kind == ",":
            self.advance()
            args.append(self.expression())
        close = self.expect(")")
        if len(args) != FUNCTIONS[name]:
            raise ParseError(f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}",
                             close.offset)
        return Call(name, tuple(args))


def _describe(tok):
    return "end of input" if tok.kind == "end" else repr(tok.text)


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises :class:`ParseError` carrying the byte offset of the failure.
    """
    if not text or not text.strip():
        raise ParseError("empty expression", 0, _OPERAND_START)
    parser = _Parser(text)
    tree = parser.expression()
    if parser.token.kind != "end":
        raise ParseError(f"unexpected {_describe(parser.token)}",
                         parser.token.offset, _AFTER_OPERAND)
    return tree


# --------------------------------------------------------------------------
# printing

def to_text(e: Expr) -> str:
    """Fully parenthesised text that parses back to an equivalent tree."""
    if isinstance(e, Const):
        text = repr(float(e.value))
        return f"(-{text[1:]})" if text.startswith("-") else text
    if isinstance(e, Var):
        return "t"
    if isinstance(e, NamedConst):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_text(e.operand)})"
    if isinstance(e, BinOp):
        return f"({to_text(e.left)} {e.op} {to_text(e.right)})"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(to_text(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")


# --------------------------------------------------------------------------
# evaluation

def _fail_if(mask, message):
    if np.any(mask):
        raise EvalError(message)


def _div(a, b):
    _fail_if(np.asarray(b) == 0, "division by zero")
    return a / b


def _ln(x):
    _fail_if(np.asarray(x) <= 0, "logarithm of a nonpositive number")
    return np.log(x)


def _sqrt(x):
    _fail_if(np.asarray(x) < 0, "square root of a negative number")
    return np.sqrt(x)


def _pow(a, b):
    a_arr, b_arr = np.asarray(a), np.asarray(b)
    _fail_if((a_arr == 0) & (b_arr < 0), "division by zero (zero to a negative power)")
    out = np.power(np.asarray(a, dtype=float), b)
    _fail_if(np.isnan(out) & ~np.isnan(a_arr) & ~np.isnan(b_arr),
             "negative base with non-integer exponent")
    return out


_CALLS = {
    "ln": _ln, "exp": np.exp, "sqrt": _sqrt, "abs": np.abs,
    "sin": np.sin, "cos": np.cos, "pow": _pow,
}
_BINARY = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _div,
    "^": _pow,
}


def compile_expr(e: Expr) -> Callable[[Number], Number]:
    """Turn a tree into nested closures; much faster than re-walking it."""
    if isinstance(e, Const):
        v = float(e.value)
        return lambda t: v + 0.0 * t
    if isinstance(e, Var):
        return lambda t: t
    if isinstance(e, NamedConst):
        v = NAMED_CONSTANTS[e.name]
        return lambda t: v + 0.0 * t
    if isinstance(e, Neg):
        f = compile_expr(e.operand)
        return lambda t: -f(t)
    if isinstance(e, BinOp):
        op, f, g = _BINARY[e.op], compile_expr(e.left), compile_expr(e.right)
        return lambda t: op(f(t), g(t))
    if isinstance(e, Call):
        fn = _CALLS[e.name]
        args = [compile_expr(a) for a in e.args]
        if len(args) == 1:
            (a,) = args
            return lambda t: fn(a(t))
        a, b = args
        return lambda t: fn(a(t), b(t))
    raise TypeError(f"not an expression node: {e!r}")


def _finite_or_raise(fn):
    def wrapped(t):
        with np.errstate(all="ignore"):
            value = fn(t)
        if not np.all(np.isfinite(value)):
            raise EvalError("expression evaluated to a non-finite value")
        return value if isinstance(value, np.ndarray) else float(value)
    return wrapped


def compile_checked(e: Expr) -> Callable[[Number], Number]:
    """Compiled evaluator that raises :class:`EvalError` on NaN or infinity."""
    return _finite_or_raise(compile_expr(e))


def evaluate(e: Expr, t: Number) -> Number:
    """Evaluate ``e`` at ``t`` (float or array)."""
    return compile_checked(e)(t)
