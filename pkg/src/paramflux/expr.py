"""Arithmetic expression language for right-hand sides of dynamical models.

Expressions are parsed from infix text into small immutable trees over
numeric literals, identifiers (state names, parameter names, the time
symbol ``t``), the binary operators ``+ - * / ^``, unary negation, and a
fixed set of function calls.  ``^`` is right-associative and binds tighter
than unary minus, which binds tighter than ``*``/``/``, which bind tighter
than ``+``/``-``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

TIME_SYMBOL = "t"

# name -> (callable, arity)
FUNCTIONS: dict[str, tuple[Callable[..., float], int]] = {
    "sin": (math.sin, 1),
    "cos": (math.cos, 1),
    "exp": (math.exp, 1),
    "log": (math.log, 1),
    "abs": (math.fabs, 1),
    "pow": (math.pow, 2),
}


class ExprError(ValueError):
    """Base class for expression-language failures."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} (at offset {offset})")
        self.name = name
        self.offset = offset


class ExprDomainError(ExprError):
    """Evaluation left the real domain (log of non-positive, 0^negative, ...)."""


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Ident:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]


Expr = Num | Ident | Neg | BinOp | Call

_PREC = {"+": 10, "-": 10, "*": 20, "/": 20, "neg": 30, "^": 40}


# --- tokenizer ---------------------------------------------------------------

_Token = tuple[str, str, int]  # (kind, text, offset)


def _tokenize(text: str) -> Iterator[_Token]:
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            seen_dot = False
            while j < n and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                seen_dot = seen_dot or text[j] == "."
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            tok = text[i:j]
            try:
                float(tok)
            except ValueError:
                raise ExprSyntaxError(f"malformed number {tok!r}", i) from None
            yield ("num", tok, i)
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            yield ("ident", text[i:j], i)
            i = j
        elif c in "+-*/^(),":
            yield (c, c, i)
            i += 1
        else:
            raise ExprSyntaxError(f"unexpected character {c!r}", i)
    yield ("end", "", n)


# --- parser ------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str, known: set[str]):
        self.tokens = list(_tokenize(text))
        self.pos = 0
        self.known = known

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.peek()
        if tok[0] != kind:
            raise ExprSyntaxError(f"expected {kind!r}, found {tok[1] or 'end of input'!r}", tok[2])
        return self.advance()

    def parse(self) -> Expr:
        node = self.sum_expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected {tok[1]!r}", tok[2])
        return node

    def sum_expr(self) -> Expr:
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()[0]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.advance()[0]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.peek()[0] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.peek()
        if tok[0] == "num":
            self.advance()
            return Num(float(tok[1]))
        if tok[0] == "ident":
            self.advance()
            name = tok[1]
            if self.peek()[0] == "(":
                if name not in FUNCTIONS:
                    raise UnknownIdentifierError(name, tok[2])
                self.advance()
                args = [self.sum_expr()]
                while self.peek()[0] == ",":
                    self.advance()
                    args.append(self.sum_expr())
                self.expect(")")
                arity = FUNCTIONS[name][1]
                if len(args) != arity:
                    raise ExprSyntaxError(
                        f"{name} takes {arity} argument(s), got {len(args)}", tok[2]
                    )
                return Call(name, tuple(args))
            if name not in self.known:
                raise UnknownIdentifierError(name, tok[2])
            return Ident(name)
        if tok[0] == "(":
            self.advance()
            node = self.sum_expr()
            self.expect(")")
            return node
        raise ExprSyntaxError(f"unexpected {tok[1] or 'end of input'!r}", tok[2])


def parse_expr(text: str, states: Sequence[str], params: Sequence[str]) -> Expr:
    """Parse infix text into an Expr over the given state and parameter names.

    Raises ExprSyntaxError (with byte offset) on malformed input and
    UnknownIdentifierError for identifiers that resolve to neither a state,
    a parameter, nor the time symbol.
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    known = set(states) | set(params) | {TIME_SYMBOL}
    return _Parser(text, known).parse()


# --- printing ----------------------------------------------------------------


def _fmt_num(v: float) -> str:
    return repr(v)


def pretty(expr: Expr) -> str:
    """Render an Expr back to infix text with minimal parentheses."""
    return _pretty(expr, 0, "")


def _pretty(e: Expr, parent_prec: int, side: str) -> str:
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Ident):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({', '.join(_pretty(a, 0, '') for a in e.args)})"
    if isinstance(e, Neg):
        mine = _PREC["neg"]
        s = "-" + _pretty(e.arg, mine, "unary")
        return f"({s})" if mine < parent_prec or (mine == parent_prec and side == "right") else s
    assert isinstance(e, BinOp)
    mine = _PREC[e.op]
    left = _pretty(e.left, mine, "left")
    right = _pretty(e.right, mine, "right")
    s = f"{left} {e.op} {right}"
    if mine < parent_prec:
        return f"({s})"
    if mine == parent_prec:
        # left-assoc ops need parens on an equal-precedence right child;
        # right-assoc ^ needs them on an equal-precedence left child
        if side == "right" and e.op != "^":
            return f"({s})"
        if side == "left" and e.op == "^":
            return f"({s})"
        if side == "unary":
            return f"({s})"
    return s


# --- evaluation --------------------------------------------------------------


def eval_expr(expr: Expr, env: dict[str, float]) -> float:
    """Evaluate an Expr under a name->value environment.

    Raises ExprDomainError when evaluation leaves the real domain.
    """
    try:
        return _eval(expr, env)
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise ExprDomainError(str(exc)) from exc


def _eval(e: Expr, env: dict[str, float]) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Ident):
        return env[e.name]
    if isinstance(e, Neg):
        return -_eval(e.arg, env)
    if isinstance(e, Call):
        fn = FUNCTIONS[e.func][0]
        return fn(*(_eval(a, env) for a in e.args))
    assert isinstance(e, BinOp)
    a = _eval(e.left, env)
    b = _eval(e.right, env)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        return a / b
    return math.pow(a, b)


# --- compilation -------------------------------------------------------------


def to_python(expr: Expr, name_map: dict[str, str]) -> str:
    """Emit a Python expression string; identifiers are renamed via name_map."""
    if isinstance(expr, Num):
        return _fmt_num(expr.value)
    if isinstance(expr, Ident):
        return name_map[expr.name]
    if isinstance(expr, Neg):
        return f"(-{to_python(expr.arg, name_map)})"
    if isinstance(expr, Call):
        args = ", ".join(to_python(a, name_map) for a in expr.args)
        fname = "_pow" if expr.func == "pow" else expr.func
        return f"{fname}({args})"
    assert isinstance(expr, BinOp)
    a = to_python(expr.left, name_map)
    b = to_python(expr.right, name_map)
    if expr.op == "^":
        return f"_pow({a}, {b})"
    return f"({a} {expr.op} {b})"


_COMPILE_GLOBALS = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": math.log,
    "abs": math.fabs,
    "_pow": math.pow,
    "__builtins__": {},
}


def compile_exprs(
    exprs: Sequence[Expr], states: Sequence[str], params: Sequence[str]
) -> Callable[[Sequence[float], Sequence[float], float], tuple[float, ...]]:
    """Compile expressions into one function ``f(x, p, t) -> tuple``.

    The compiled function raises the underlying ValueError /
    ZeroDivisionError / OverflowError on domain failures; callers decide how
    to report them.
    """
    name_map = {name: f"x[{i}]" for i, name in enumerate(states)}
    name_map.update({name: f"p[{i}]" for i, name in enumerate(params)})
    name_map[TIME_SYMBOL] = TIME_SYMBOL
    body = ", ".join(to_python(e, name_map) for e in exprs)
    src = f"def _rhs(x, p, {TIME_SYMBOL}):\n    return ({body},)"
    namespace: dict = {}
    exec(compile(src, "<paramflux-rhs>", "exec"), dict(_COMPILE_GLOBALS), namespace)
    return namespace["_rhs"]
