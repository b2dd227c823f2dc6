"""Expression language for metric functions G(z, v).

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := atom ('^' real)?
    atom   := real | ident | func '(' expr ')' | '(' expr ')'
    ident  := ('z'|'v') digit+ | 'conj' '(' ident ')'
    func   := abs2 | re | im | sqrt | exp | log | conj

Variables are 1-based (``z1``, ``v2``).  Nodes are frozen dataclasses, so
parsed trees compare structurally and can be shared between threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from . import jets

__all__ = [
    "Const",
    "Var",
    "Conj",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Func",
    "MetricExpr",
    "DSLSyntaxError",
    "parse_metric",
    "to_text",
    "evaluate",
    "variables",
]

FUNCS = ("abs2", "re", "im", "sqrt", "exp", "log")


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # 'z' or 'v'
    index: int  # 1-based


@dataclass(frozen=True)
class Conj:
    arg: "MetricExpr"


@dataclass(frozen=True)
class Add:
    left: "MetricExpr"
    right: "MetricExpr"


@dataclass(frozen=True)
class Sub:
    left: "MetricExpr"
    right: "MetricExpr"


@dataclass(frozen=True)
class Mul:
    left: "MetricExpr"
    right: "MetricExpr"


@dataclass(frozen=True)
class Div:
    left: "MetricExpr"
    right: "MetricExpr"


@dataclass(frozen=True)
class Pow:
    base: "MetricExpr"
    exponent: float


@dataclass(frozen=True)
class Func:
    name: str
    arg: "MetricExpr"


MetricExpr = Union[Const, Var, Conj, Add, Sub, Mul, Div, Pow, Func]


class DSLSyntaxError(ValueError):
    """Syntax or name error with a 1-based column and the expected tokens."""

    def __init__(self, message, column, expected=()):
        self.column = column
        self.expected = tuple(expected)
        detail = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"column {column}: {message}{detail}")


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            col = pos + 1 + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise DSLSyntaxError(f"unexpected character {text[col - 1]!r}", col)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append((kind, m.group(kind), start + 1))
        pos = m.end()
    toks.append(("end", "", len(text) + 1))
    return toks


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect_op(self, op, expected=None):
        kind, val, col = self.peek()
        if kind == "op" and val == op:
            return self.take()
        got = "end of input" if kind == "end" else repr(val)
        raise DSLSyntaxError(f"unexpected {got}", col, expected or (repr(op),))

    def parse(self):
        node = self.expr()
        kind, val, col = self.peek()
        if kind != "end":
            raise DSLSyntaxError(
                f"unexpected {val!r}", col, ("'+'", "'-'", "'*'", "'/'", "'^'", "end")
            )
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            rhs = self.factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def factor(self):
        node = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            node = Pow(node, self.real())
        return node

    def real(self):
        sign = 1.0
        kind, val, col = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            sign = -1.0 if val == "-" else 1.0
            kind, val, col = self.peek()
        if kind != "num":
            raise DSLSyntaxError("exponent must be a real literal", col, ("number",))
        self.take()
        return sign * float(val)

    def atom(self):
        kind, val, col = self.peek()
        if kind == "num":
            self.take()
            return Const(float(val))
        if kind == "op" and val == "(":
            self.take()
            node = self.expr()
            self.expect_op(")", ("')'", "'+'", "'-'", "'*'", "'/'", "'^'"))
            return node
        if kind == "name":
            self.take()
            if val == "conj":
                self.expect_op("(")
                node = Conj(self.expr())
                self.expect_op(")", ("')'", "'+'", "'-'", "'*'", "'/'", "'^'"))
                return node
            if val in FUNCS:
                self.expect_op("(")
                node = Func(val, self.expr())
                self.expect_op(")", ("')'", "'+'", "'-'", "'*'", "'/'", "'^'"))
                return node
            m = re.fullmatch(r"([zv])(\d+)", val)
            if m:
                return Var(m.group(1), int(m.group(2)))
            raise DSLSyntaxError(f"unknown identifier {val!r}", col)
        got = "end of input" if kind == "end" else repr(val)
        raise DSLSyntaxError(
            f"unexpected {got}", col, ("number", "identifier", "function", "'('")
        )


def parse_metric(text: str) -> MetricExpr:
    """Parse ``text`` into an expression tree.

    Raises :class:`DSLSyntaxError` on malformed input or unknown names.
    Variable indices are not range-checked here.
    """
    return _Parser(text).parse()


# precedence: additive 1, multiplicative 2, power 3, atoms 4
def _prec(node):
    if isinstance(node, (Add, Sub)):
        return 1
    if isinstance(node, (Mul, Div)):
        return 2
    if isinstance(node, Pow):
        return 3
    return 4


def _num(x):
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


def to_text(node: MetricExpr) -> str:
    """Print ``node`` so that ``parse_metric(to_text(e)) == e``."""
    if isinstance(node, Const):
        if node.value < 0:
            return f"(0 - {_num(-node.value)})"
        return _num(node.value)
    if isinstance(node, Var):
        return f"{node.kind}{node.index}"
    if isinstance(node, Conj):
        return f"conj({to_text(node.arg)})"
    if isinstance(node, Func):
        return f"{node.name}({to_text(node.arg)})"
    if isinstance(node, Pow):
        base = to_text(node.base)
        if _prec(node.base) < 4:
            base = f"({base})"
        return f"{base}^{_num(node.exponent)}"
    op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(node)]
    p = _prec(node)
    left = to_text(node.left)
    if _prec(node.left) < p:
        left = f"({left})"
    right = to_text(node.right)
    # left-associative: same-precedence right operands need parentheses
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {op} {right}"


def variables(node: MetricExpr):
    """Set of (kind, index) pairs referenced by ``node``."""
    if isinstance(node, Var):
        return {(node.kind, node.index)}
    if isinstance(node, Const):
        return set()
    if isinstance(node, (Conj, Func)):
        return variables(node.arg)
    if isinstance(node, Pow):
        return variables(node.base)
    return variables(node.left) | variables(node.right)


def evaluate(node: MetricExpr, z, v):
    """Evaluate over complex inputs; ``z[k]``/``v[k]`` are arrays or jets.

    The same walk serves plain numpy evaluation and jet propagation: jets
    overload the arithmetic, and the elementary functions dispatch in
    :mod:`flab.jets`.  Structurally equal subtrees are evaluated once.
    """
    cache = {}

    def ev(n):
        if n in cache:
            return cache[n]
        if isinstance(n, Const):
            out = n.value
        elif isinstance(n, Var):
            out = (z if n.kind == "z" else v)[n.index - 1]
        elif isinstance(n, Conj):
            out = jets.conj(ev(n.arg))
        elif isinstance(n, Add):
            out = ev(n.left) + ev(n.right)
        elif isinstance(n, Sub):
            out = ev(n.left) - ev(n.right)
        elif isinstance(n, Mul):
            out = ev(n.left) * ev(n.right)
        elif isinstance(n, Div):
            out = ev(n.left) / ev(n.right)
        elif isinstance(n, Pow):
            out = jets.power(ev(n.base), n.exponent)
        elif n.name == "abs2":
            a = ev(n.arg)
            out = jets.real(a * jets.conj(a))
        elif n.name == "re":
            out = jets.real(ev(n.arg))
        elif n.name == "im":
            out = jets.imag(ev(n.arg))
        elif n.name == "sqrt":
            out = jets.sqrt(ev(n.arg))
        elif n.name == "exp":
            out = jets.exp(ev(n.arg))
        elif n.name == "log":
            out = jets.log(ev(n.arg))
        else:  # pragma: no cover - parser rejects unknown names
            raise ValueError(n.name)
        cache[n] = out
        return out

    return ev(node)
