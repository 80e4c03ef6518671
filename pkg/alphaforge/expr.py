"""
Expression tree of the factor language

Nodes are frozen dataclasses, so two trees parsed from equivalent text
compare equal and can key the evaluator's cache.
"""
from dataclasses import dataclass, field
from typing import Tuple

COLUMNS = ("Open", "High", "Low", "Close", "Volume")

COMPARISONS = ("<", ">", "<=", ">=")

# binding strength used by the printer; higher binds tighter
PREC_AND = 1
PREC_COMPARE = 2
PREC_ADD = 3
PREC_MUL = 4
PREC_UNARY = 5
PREC_ATOM = 6

_BINARY_PREC = {"&": PREC_AND, "+": PREC_ADD, "-": PREC_ADD, "*": PREC_MUL, "/": PREC_MUL}
_BINARY_PREC.update({op: PREC_COMPARE for op in COMPARISONS})

# printed as x.shift(k) / x.diff()
METHOD_CALLS = ("shift", "diff")


class Expr:
    def to_source(self):
        return _render(self, 0)

    def __str__(self):
        return self.to_source()


@dataclass(frozen=True)
class Constant(Expr):
    value: float
    # literal spelling from the factor file, kept for printing
    text: str = field(default="", compare=False)

    @classmethod
    def of(cls, value):
        return cls(float(value), repr(value))


@dataclass(frozen=True)
class Column(Expr):
    name: str


@dataclass(frozen=True)
class Indicator(Expr):
    """Named indicator series such as ma20, rsi_14 or boll_upper"""

    name: str


@dataclass(frozen=True)
class FactorRef(Expr):
    name: str


@dataclass(frozen=True)
class Call(Expr):
    func: str
    args: Tuple[Expr, ...]


@dataclass(frozen=True)
class Negate(Expr):
    operand: Expr


@dataclass(frozen=True)
class BinaryOp(Expr):
    op: str
    left: Expr
    right: Expr

    @property
    def is_condition(self):
        return self.op in COMPARISONS or self.op == "&"


def is_condition(node):
    return isinstance(node, BinaryOp) and node.is_condition


def precedence(node):
    if isinstance(node, BinaryOp):
        return _BINARY_PREC[node.op]
    if isinstance(node, Negate):
        return PREC_UNARY
    if isinstance(node, Constant) and node.value < 0:
        return PREC_UNARY
    return PREC_ATOM


def children(node):
    if isinstance(node, Call):
        return node.args
    if isinstance(node, Negate):
        return (node.operand,)
    if isinstance(node, BinaryOp):
        return (node.left, node.right)
    return ()


def walk(node):
    """Pre-order traversal"""
    stack = [node]
    while stack:
        current = stack.pop()
        yield current
        stack.extend(reversed(children(current)))


def factor_refs(node):
    return sorted({n.name for n in walk(node) if isinstance(n, FactorRef)})


def _wrap(node, needed):
    text = _render(node, needed)
    return f"({text})" if precedence(node) < needed else text


def _render(node, needed):
    if isinstance(node, Constant):
        return node.text or repr(node.value)
    if isinstance(node, (Column, Indicator, FactorRef)):
        return node.name
    if isinstance(node, Negate):
        return "-" + _wrap(node.operand, PREC_UNARY)
    if isinstance(node, Call):
        if node.func in METHOD_CALLS:
            target = _wrap(node.args[0], PREC_ATOM)
            rest = ", ".join(_render(a, 0) for a in node.args[1:])
            return f"{target}.{node.func}({rest})"
        return f"{node.func}({', '.join(_render(a, 0) for a in node.args)})"
    if isinstance(node, BinaryOp):
        prec = _BINARY_PREC[node.op]
        # left-associative chains; comparisons do not chain at all
        left_needed = prec + 1 if node.op in COMPARISONS else prec
        return f"{_wrap(node.left, left_needed)} {node.op} {_wrap(node.right, prec + 1)}"
    raise TypeError(f"not an expression node: {node!r}")
