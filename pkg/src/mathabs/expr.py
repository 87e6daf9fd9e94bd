"""Expression trees, tree paths, the surface syntax, and exact semantics.

Expressions are immutable. Two expressions are equal iff their canonical
printed forms are equal, which makes the printed string a cheap structural
key for hashing, deduplication and trace files.

Surface syntax (one space around binary operators)::

    (3 + x) = (-4)        equation; each side of "=" is parenthesized
    21 - [21]/[7]         a bare (non-equation) root prints without parens
    8x                    integer coefficient times x
    [7/4]                 a non-integer rational constant
    [(3 * 7)]/[7]         fraction literal with numerator/denominator trees
"""

from __future__ import annotations

import re
from enum import Enum
from fractions import Fraction
from typing import Iterator

OPS = ("+", "-", "*", "/")


class ExprError(ValueError):
    """Base class for expression errors."""


class ParseError(ExprError):
    def __init__(self, message: str, text: str, pos: int):
        super().__init__(f"{message} at position {pos}: {text!r}")
        self.text = text
        self.pos = pos


class PathError(ExprError):
    pass


class NonlinearError(ExprError):
    pass


class Expr:
    """Base class of all expression nodes."""

    __slots__ = ("_str", "_nested", "_stats")
    kind = "expr"

    @property
    def children(self) -> tuple[Expr, ...]:
        return ()

    def with_children(self, left: Expr, right: Expr) -> Expr:
        raise PathError(f"{self.kind} node has no children")

    def __str__(self) -> str:
        s = self._str
        if s is None:
            s = self._str = self._render(root=True)
        return s

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self}>"

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expr):
            return NotImplemented
        return str(self) == str(other)

    def __hash__(self) -> int:
        return hash(str(self))

    def _render(self, root: bool = False) -> str:
        raise NotImplementedError

    def nested(self) -> str:
        """Printed form as a subterm (binary operations parenthesized)."""
        s = self._nested
        if s is None:
            s = self._nested = self._render()
        return s

    @property
    def stats(self) -> tuple[int, int, int, int]:
        """``(depth, node count, constant count, x count)``, cached."""
        st = self._stats
        if st is None:
            children = self.children
            if children:
                a, b = children[0].stats, children[1].stats
                st = (1 + max(a[0], b[0]), 1 + a[1] + b[1], a[2] + b[2], a[3] + b[3])
            else:
                st = (0, 1, int(self.kind == "const"), int(self.kind == "var"))
            self._stats = st
        return st


class Const(Expr):
    __slots__ = ("value",)
    kind = "const"

    def __init__(self, value: Fraction | int):
        self._str = self._nested = self._stats = None
        self.value = Fraction(value)

    @property
    def is_integer(self) -> bool:
        return self.value.denominator == 1

    def _render(self, root: bool = False) -> str:
        v = self.value
        if v.denominator != 1:
            return f"[{v.numerator}/{v.denominator}]"
        if v < 0:
            return f"({v.numerator})"
        return str(v.numerator)


class Var(Expr):
    __slots__ = ()
    kind = "var"

    def __init__(self):
        self._str = self._nested = "x"
        self._stats = None

    def _render(self, root: bool = False) -> str:
        return "x"


class BinOp(Expr):
    __slots__ = ("op", "left", "right")
    kind = "binop"

    def __init__(self, op: str, left: Expr, right: Expr):
        if op not in OPS:
            raise ExprError(f"unknown operator {op!r}")
        self._str = self._nested = self._stats = None
        self.op = op
        self.left = left
        self.right = right

    @property
    def children(self) -> tuple[Expr, Expr]:
        return (self.left, self.right)

    def with_children(self, left: Expr, right: Expr) -> BinOp:
        return BinOp(self.op, left, right)

    @property
    def is_coefvar(self) -> bool:
        left = self.left
        return (self.op == "*" and isinstance(self.right, Var)
                and isinstance(left, Const) and left.value.denominator == 1)

    def _render(self, root: bool = False) -> str:
        if self.is_coefvar:
            return f"{self.left.value.numerator}x"
        inner = f"{self.left.nested()} {self.op} {self.right.nested()}"
        return inner if root else f"({inner})"


class Frac(Expr):
    """Fraction literal ``[num]/[den]``; L is the numerator, R the denominator."""

    __slots__ = ("num", "den")
    kind = "frac"

    def __init__(self, num: Expr, den: Expr):
        self._str = self._nested = self._stats = None
        self.num = num
        self.den = den

    @property
    def children(self) -> tuple[Expr, Expr]:
        return (self.num, self.den)

    def with_children(self, left: Expr, right: Expr) -> Frac:
        return Frac(left, right)

    def _render(self, root: bool = False) -> str:
        return f"[{self.num.nested()}]/[{self.den.nested()}]"


class Eq(Expr):
    __slots__ = ("lhs", "rhs")
    kind = "eq"

    def __init__(self, lhs: Expr, rhs: Expr):
        self._str = self._nested = self._stats = None
        self.lhs = lhs
        self.rhs = rhs

    @property
    def children(self) -> tuple[Expr, Expr]:
        return (self.lhs, self.rhs)

    def with_children(self, left: Expr, right: Expr) -> Eq:
        return Eq(left, right)

    def _render(self, root: bool = False) -> str:
        return f"{self.lhs.nested()} = {self.rhs.nested()}"


X = Var()


def const(value: Fraction | int | str) -> Const:
    return Const(Fraction(value))


def to_string(e: Expr) -> str:
    """Canonical printed form (the module-level spelling of ``str(e)``)."""
    return str(e)


# ---------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<rat>\[-?\d+/\d+\])
  | (?P<num>-?\d+x?)
  | (?P<var>x)
  | (?P<fracmid>\]\s*/\s*\[)
  | (?P<punct>[()\[\]=])
  | (?P<op>[-+*/])
""", re.VERBOSE)

_OPERAND_END = {"num", "var", "rat", ")", "]"}


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens: list[tuple[str, str, int]] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError("unexpected character", text, pos)
        kind = m.lastgroup
        value = m.group()
        if kind == "num" and value.startswith("-"):
            # "a -3" is only a negative literal where an operand may start.
            prev = tokens[-1][0] if tokens else None
            if prev in _OPERAND_END:
                tokens.append(("op", "-", pos))
                pos += 1
                continue
        if kind == "punct":
            kind = value
        if kind != "ws":
            tokens.append((kind, value, pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self, kind: str) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        if tok[0] != kind:
            want = "end of input" if kind == "end" else repr(kind)
            raise ParseError(f"expected {want}, found {tok[1] or 'end of input'!r}",
                             self.text, tok[2])
        self.i += 1
        return tok

    def expression(self) -> Expr:
        lhs = self.side()
        if self.peek()[0] == "=":
            self.take("=")
            lhs = Eq(lhs, self.side())
        self.take("end")
        return lhs

    def side(self) -> Expr:
        left = self.term()
        if self.peek()[0] == "op":
            op = self.take("op")[1]
            left = BinOp(op, left, self.term())
            if self.peek()[0] == "op":
                raise ParseError("ambiguous operator chain; add parentheses",
                                 self.text, self.peek()[2])
        return left

    def term(self) -> Expr:
        kind, value, pos = self.peek()
        if kind == "(":
            self.take("(")
            inner = self.side()
            self.take(")")
            return inner
        if kind == "[":
            self.take("[")
            num = self.side()
            self.take("fracmid")
            den = self.side()
            self.take("]")
            if isinstance(den, Const) and den.value == 0:
                raise ParseError("fraction with zero denominator", self.text, pos)
            return Frac(num, den)
        if kind == "rat":
            self.i += 1
            p, q = value[1:-1].split("/")
            if int(q) == 0:
                raise ParseError("rational with zero denominator", self.text, pos)
            return Const(Fraction(int(p), int(q)))
        if kind == "num":
            self.i += 1
            if value.endswith("x"):
                return BinOp("*", Const(int(value[:-1])), X)
            return Const(int(value))
        if kind == "var":
            self.i += 1
            return X
        raise ParseError(f"unexpected {value or 'end of input'!r}", self.text, pos)


def parse(text: str) -> Expr:
    """Parse the surface syntax.

    Besides the canonical form, a side of an equation (or a bare root) may
    omit the parentheses around one binary operation, as in
    ``x + (1 + 2) = (3 + 4) + 5``.
    """
    return _Parser(text).expression()


def canonicalize(text: str) -> str:
    return str(parse(text))


# ---------------------------------------------------------------------------
# Paths


def node_at(e: Expr, path: str) -> Expr:
    for step in path:
        children = e.children
        if not children:
            raise PathError(f"path {path!r} leaves the tree at {e}")
        if step == "L":
            e = children[0]
        elif step == "R":
            e = children[1]
        else:
            raise PathError(f"bad path symbol {step!r}")
    return e


def replace_at(e: Expr, path: str, sub: Expr) -> Expr:
    if not path:
        return sub
    children = e.children
    if not children:
        raise PathError(f"path {path!r} leaves the tree at {e}")
    left, right = children
    if path[0] == "L":
        return e.with_children(replace_at(left, path[1:], sub), right)
    if path[0] == "R":
        return e.with_children(left, replace_at(right, path[1:], sub))
    raise PathError(f"bad path symbol {path[0]!r}")


def is_valid_path(e: Expr, path: str) -> bool:
    try:
        node_at(e, path)
    except PathError:
        return False
    return True


def walk(e: Expr, path: str = "") -> Iterator[tuple[str, Expr]]:
    """Pre-order traversal yielding ``(path, node)``; paths come out sorted."""
    yield path, e
    children = e.children
    if children:
        yield from walk(children[0], path + "L")
        yield from walk(children[1], path + "R")


def relative_position(prev: str, nxt: str) -> tuple[str, str]:
    """Strip the maximal common prefix of two absolute paths."""
    n = 0
    limit = min(len(prev), len(nxt))
    while n < limit and prev[n] == nxt[n]:
        n += 1
    return prev[n:], nxt[n:]


def depth(e: Expr) -> int:
    return e.stats[0]


def size(e: Expr) -> int:
    return e.stats[1]


# ---------------------------------------------------------------------------
# Semantics


class Degenerate(Enum):
    ALL = "all"
    NONE = "none"


def evaluate(e: Expr) -> Fraction:
    """Exact value of a variable-free expression."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Frac):
        den = evaluate(e.den)
        if den == 0:
            raise ZeroDivisionError(f"zero denominator in {e}")
        return evaluate(e.num) / den
    if isinstance(e, BinOp):
        a, b = evaluate(e.left), evaluate(e.right)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if b == 0:
            raise ZeroDivisionError(f"division by zero in {e}")
        return a / b
    if isinstance(e, Var):
        raise ExprError("cannot evaluate an expression containing x")
    raise ExprError(f"cannot evaluate {e}")


def linear_form(e: Expr) -> tuple[Fraction, Fraction]:
    """Return ``(a, b)`` with ``e == a*x + b``; raises if ``e`` is not linear."""
    if isinstance(e, Var):
        return Fraction(1), Fraction(0)
    if isinstance(e, (Const, Frac)):
        return Fraction(0), evaluate(e)
    if isinstance(e, BinOp):
        a1, b1 = linear_form(e.left)
        a2, b2 = linear_form(e.right)
        if e.op == "+":
            return a1 + a2, b1 + b2
        if e.op == "-":
            return a1 - a2, b1 - b2
        if e.op == "*":
            if a1 and a2:
                raise NonlinearError(f"product of x-terms in {e}")
            return a1 * b2 + a2 * b1, b1 * b2
        if a2:
            raise NonlinearError(f"division by an x-term in {e}")
        if b2 == 0:
            raise ZeroDivisionError(f"division by zero in {e}")
        return a1 / b2, b1 / b2
    raise ExprError(f"not an arithmetic expression: {e}")


def semantic_value(e: Expr) -> Fraction | Degenerate:
    """Value of an expression, or the solution of a linear equation in x."""
    if isinstance(e, Eq):
        a1, b1 = linear_form(e.lhs)
        a2, b2 = linear_form(e.rhs)
        a, b = a1 - a2, b2 - b1
        if a == 0:
            return Degenerate.ALL if b == 0 else Degenerate.NONE
        return b / a
    return evaluate(e)
