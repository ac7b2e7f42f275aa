"""Integer address-expression trees over GPU thread coordinates.

An address expression computes a byte address from the six thread/block
coordinates (tidx, tidy, tidz, bidx, bidy, bidz), the block dimensions
(BX, BY, BZ, bound from the launch configuration at evaluation time so a
single tree can be swept over many block shapes), integer constants, and
a single symbolic field base address.  All arithmetic is 64-bit signed;
expressions whose value bounds leave that range are rejected rather than
silently wrapped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

COORD_NAMES = ("tidx", "tidy", "tidz", "bidx", "bidy", "bidz")
BLOCKDIM_NAMES = {"BX": 0, "BY": 1, "BZ": 2}


class ExprError(ValueError):
    """Invalid expression construction or use."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class AddressOverflowError(ExprError):
    """Value bounds of a subexpression leave the signed 64-bit range."""


def _check_int64(value: int, what: str) -> int:
    if not INT64_MIN <= value <= INT64_MAX:
        raise AddressOverflowError(f"{what} {value} outside 64-bit signed range")
    return value


@dataclass(frozen=True)
class IntConstant:
    value: int

    def __post_init__(self):
        _check_int64(self.value, "constant")


@dataclass(frozen=True)
class CoordRef:
    name: str

    def __post_init__(self):
        if self.name not in COORD_NAMES:
            raise ExprError(f"unknown coordinate {self.name!r}")


@dataclass(frozen=True)
class BlockDimRef:
    """Block dimension placeholder (BX/BY/BZ), substituted at evaluation."""

    name: str

    def __post_init__(self):
        if self.name not in BLOCKDIM_NAMES:
            raise ExprError(f"unknown block dimension {self.name!r}")


@dataclass(frozen=True)
class BaseRef:
    """Placeholder for a field's base address, substituted at evaluation."""

    field: str


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * // %
    left: "AddressExpr"
    right: "AddressExpr"

    def __post_init__(self):
        if self.op not in ("+", "-", "*", "//", "%"):
            raise ExprError(f"unknown operator {self.op!r}")
        if self.op in ("//", "%"):
            if not isinstance(self.right, IntConstant):
                raise ExprError(f"divisor of {self.op} must be an integer constant")
            if self.right.value <= 0:
                raise ExprError(f"divisor of {self.op} must be positive, got {self.right.value}")


AddressExpr = IntConstant | CoordRef | BlockDimRef | BaseRef | BinOp

_OPS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "//": lambda a, b: a // b,
    "%": lambda a, b: a % b,
}


def fold(op: str, left: AddressExpr, right: AddressExpr) -> AddressExpr:
    """Build a BinOp, collapsing constant subtrees."""
    if isinstance(left, IntConstant) and isinstance(right, IntConstant):
        if op in ("//", "%") and right.value <= 0:
            raise ExprError(f"divisor of {op} must be positive, got {right.value}")
        return IntConstant(_check_int64(_OPS[op](left.value, right.value), "constant fold"))
    return BinOp(op, left, right)


def base_refs(expr: AddressExpr) -> list[str]:
    """Field names referenced by the expression, in tree order."""
    if isinstance(expr, BaseRef):
        return [expr.field]
    if isinstance(expr, BinOp):
        return base_refs(expr.left) + base_refs(expr.right)
    return []


def value_bounds(
    expr: AddressExpr,
    coord_bounds: Mapping[str, tuple[int, int]],
    block_dim: Sequence[int],
    bases: Mapping[str, int],
) -> tuple[int, int]:
    """Inclusive value interval of every node, in exact integer arithmetic.

    Raises AddressOverflowError if any subexpression can leave the int64
    range.  Intervals are exact for affine trees and conservative for
    products of two non-constant subtrees.
    """
    if isinstance(expr, IntConstant):
        return expr.value, expr.value
    if isinstance(expr, CoordRef):
        return coord_bounds[expr.name]
    if isinstance(expr, BlockDimRef):
        v = int(block_dim[BLOCKDIM_NAMES[expr.name]])
        return v, v
    if isinstance(expr, BaseRef):
        if expr.field not in bases:
            raise ExprError(f"no base substitution for field {expr.field!r}")
        v = int(bases[expr.field])
        return v, v
    llo, lhi = value_bounds(expr.left, coord_bounds, block_dim, bases)
    rlo, rhi = value_bounds(expr.right, coord_bounds, block_dim, bases)
    if expr.op == "+":
        lo, hi = llo + rlo, lhi + rhi
    elif expr.op == "-":
        lo, hi = llo - rhi, lhi - rlo
    elif expr.op == "*":
        corners = (llo * rlo, llo * rhi, lhi * rlo, lhi * rhi)
        lo, hi = min(corners), max(corners)
    elif expr.op == "//":
        d = expr.right.value
        lo, hi = llo // d, lhi // d
    else:  # %
        d = expr.right.value
        lo, hi = 0, d - 1
    _check_int64(lo, "subexpression bound")
    _check_int64(hi, "subexpression bound")
    return lo, hi


def affine_parts(
    expr: AddressExpr, block_dim: Sequence[int], bases: Mapping[str, int]
) -> tuple[int, dict[str, int]] | None:
    """Decompose into constant + per-coordinate coefficients, or None.

    Only defined for trees without // and % and without products of two
    coordinate-dependent subtrees.
    """
    if isinstance(expr, IntConstant):
        return expr.value, {}
    if isinstance(expr, CoordRef):
        return 0, {expr.name: 1}
    if isinstance(expr, BlockDimRef):
        return int(block_dim[BLOCKDIM_NAMES[expr.name]]), {}
    if isinstance(expr, BaseRef):
        if expr.field not in bases:
            raise ExprError(f"no base substitution for field {expr.field!r}")
        return int(bases[expr.field]), {}
    if expr.op in ("//", "%"):
        return None
    left = affine_parts(expr.left, block_dim, bases)
    right = affine_parts(expr.right, block_dim, bases)
    if left is None or right is None:
        return None
    lc, lcoef = left
    rc, rcoef = right
    if expr.op == "+":
        coef = dict(lcoef)
        for k, v in rcoef.items():
            coef[k] = coef.get(k, 0) + v
        return lc + rc, coef
    if expr.op == "-":
        coef = dict(lcoef)
        for k, v in rcoef.items():
            coef[k] = coef.get(k, 0) - v
        return lc - rc, coef
    # product: at least one side must be a pure constant
    if not lcoef:
        return lc * rc, {k: lc * v for k, v in rcoef.items()}
    if not rcoef:
        return lc * rc, {k: rc * v for k, v in lcoef.items()}
    return None


@dataclass(frozen=True)
class ThreadCoord:
    tidx: int = 0
    tidy: int = 0
    tidz: int = 0
    bidx: int = 0
    bidy: int = 0
    bidz: int = 0

    def get(self, name: str) -> int:
        return getattr(self, name)


def _coord_bounds_from(coords: Sequence[ThreadCoord]) -> dict[str, tuple[int, int]]:
    return {
        name: (min(c.get(name) for c in coords), max(c.get(name) for c in coords))
        for name in COORD_NAMES
    }


def _eval_scalar(expr: AddressExpr, coord: ThreadCoord, block_dim, bases) -> int:
    if isinstance(expr, IntConstant):
        return expr.value
    if isinstance(expr, CoordRef):
        return coord.get(expr.name)
    if isinstance(expr, BlockDimRef):
        return int(block_dim[BLOCKDIM_NAMES[expr.name]])
    if isinstance(expr, BaseRef):
        return int(bases[expr.field])
    l = _eval_scalar(expr.left, coord, block_dim, bases)
    r = _eval_scalar(expr.right, coord, block_dim, bases)
    return _OPS[expr.op](l, r)


def evaluate(
    expr: AddressExpr,
    coords: Sequence[ThreadCoord],
    block_dim: Sequence[int],
    bases: Mapping[str, int],
) -> list[int]:
    """Evaluate the expression for each coordinate, order-preserving.

    The int64 range of every subexpression is verified once against the
    coordinate bounds before evaluating.
    """
    coords = list(coords)
    if not coords:
        return []
    value_bounds(expr, _coord_bounds_from(coords), block_dim, bases)
    return [_eval_scalar(expr, c, block_dim, bases) for c in coords]


def _eval_bulk(expr: AddressExpr, env: Mapping[str, np.ndarray], block_dim, bases):
    if isinstance(expr, IntConstant):
        return expr.value
    if isinstance(expr, CoordRef):
        return env[expr.name]
    if isinstance(expr, BlockDimRef):
        return int(block_dim[BLOCKDIM_NAMES[expr.name]])
    if isinstance(expr, BaseRef):
        return int(bases[expr.field])
    l = _eval_bulk(expr.left, env, block_dim, bases)
    r = _eval_bulk(expr.right, env, block_dim, bases)
    return _OPS[expr.op](l, r)


def evaluate_bulk(
    expr: AddressExpr,
    env: Mapping[str, np.ndarray],
    block_dim: Sequence[int],
    bases: Mapping[str, int],
) -> np.ndarray:
    """Vectorized evaluation over int64 coordinate arrays (one per name).

    Equivalent to element-wise ``evaluate``; the same bounds check guards
    against wraparound.
    """
    bounds = {}
    for name in COORD_NAMES:
        arr = env[name]
        if arr.size == 0:
            return np.empty(0, dtype=np.int64)
        bounds[name] = (int(arr.min()), int(arr.max()))
    value_bounds(expr, bounds, block_dim, bases)
    out = _eval_bulk(expr, env, block_dim, bases)
    if np.isscalar(out):
        return np.full(env["tidx"].shape, out, dtype=np.int64)
    if any(out is arr for arr in env.values()):
        out = out.copy()  # callers may mutate the result
    return out.astype(np.int64, copy=False)


# ---------------------------------------------------------------------------
# Parsing and rendering


_TOKEN_RE = re.compile(r"(?P<ws>\s+)|(?P<int>\d+)|(?P<ident>[A-Za-z_]\w*)|(?P<op>//|[+\-*/%()])")

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "//": 2, "%": 2}


class _Parser:
    def __init__(self, text: str, fields: Iterable[str] | None):
        self.text = text
        self.fields = None if fields is None else set(fields)
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
            pos = m.end()
            if m.lastgroup != "ws":
                self.tokens.append((m.lastgroup, m.group(), m.start()))
        self.index = 0

    def peek(self):
        return self.tokens[self.index] if self.index < len(self.tokens) else (None, "", len(self.text))

    def next(self):
        tok = self.peek()
        self.index += 1
        return tok

    def expect_op(self, op: str):
        kind, value, pos = self.next()
        if kind != "op" or value != op:
            raise ExprSyntaxError(f"expected {op!r}, found {value!r}" if kind else f"expected {op!r}", pos)

    def parse_expr(self) -> AddressExpr:
        node = self.parse_term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in ("+", "-"):
                self.next()
                node = fold(value, node, self.parse_term())
            else:
                return node

    def parse_term(self) -> AddressExpr:
        node = self.parse_unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in ("*", "/", "//", "%"):
                self.next()
                op = "//" if value in ("/", "//") else value
                node = fold(op, node, self.parse_unary())
            else:
                return node

    def parse_unary(self) -> AddressExpr:
        kind, value, pos = self.peek()
        if kind == "op" and value == "-":
            self.next()
            operand = self.parse_unary()
            if isinstance(operand, IntConstant):
                return IntConstant(-operand.value)
            return fold("-", IntConstant(0), operand)
        return self.parse_atom()

    def parse_atom(self) -> AddressExpr:
        kind, value, pos = self.next()
        if kind == "int":
            return IntConstant(int(value))
        if kind == "ident":
            if value in COORD_NAMES:
                return CoordRef(value)
            if value in BLOCKDIM_NAMES:
                return BlockDimRef(value)
            if self.fields is not None and value not in self.fields:
                raise ExprSyntaxError(f"unknown identifier {value!r}", pos)
            return BaseRef(value)
        if kind == "op" and value == "(":
            node = self.parse_expr()
            self.expect_op(")")
            return node
        raise ExprSyntaxError("expected integer, identifier or '('" + (f", found {value!r}" if value else ""), pos)


def parse(text: str, fields: Iterable[str] | None = None) -> AddressExpr:
    """Parse an infix address expression.

    ``/`` and ``//`` both denote floor division.  Identifiers other than
    the coordinates and BX/BY/BZ become field base references; passing
    ``fields`` restricts them to known names.
    """
    parser = _Parser(text, fields)
    node = parser.parse_expr()
    kind, value, pos = parser.peek()
    if kind is not None:
        raise ExprSyntaxError(f"trailing input {value!r}", pos)
    return node


def render(expr: AddressExpr) -> str:
    """Infix text such that parse(render(e)) is structurally equal to e."""

    def go(node: AddressExpr, parent_prec: int, is_right: bool) -> str:
        if isinstance(node, IntConstant):
            return str(node.value)
        if isinstance(node, (CoordRef, BlockDimRef)):
            return node.name
        if isinstance(node, BaseRef):
            return node.field
        prec = _PRECEDENCE[node.op]
        text = f"{go(node.left, prec, False)} {node.op} {go(node.right, prec, True)}"
        if prec < parent_prec or (prec == parent_prec and is_right):
            return f"({text})"
        return text

    return go(expr, 0, False)
