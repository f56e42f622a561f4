"""Node types of the skill-code AST.

Nodes are frozen and built from tuples, so a parsed program is hashable
and can key the compiled-closure cache.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Name:
    id: str


@dataclass(frozen=True)
class Subscript:
    """``name[index]``; only ``value[0]`` survives validation."""

    name: str
    index: int


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / // % **
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class UnaryOp:
    op: str  # "-", "+", "not"
    operand: "Expr"


@dataclass(frozen=True)
class BoolOp:
    op: str  # "and" / "or"
    values: Tuple["Expr", ...]


@dataclass(frozen=True)
class Compare:
    left: "Expr"
    ops: Tuple[str, ...]
    comparators: Tuple["Expr", ...]


@dataclass(frozen=True)
class Call:
    func: str
    args: Tuple["Expr", ...]


Expr = Union[Num, Name, Subscript, BinOp, UnaryOp, BoolOp, Compare, Call]


@dataclass(frozen=True)
class AugAssign:
    target: Subscript
    op: str  # "+", "-", "*", "/"
    value: Expr
    line: int = 0


@dataclass(frozen=True)
class IfChain:
    """``if``/``elif``/``else``: ordered (test, body) branches plus else body."""

    branches: Tuple[Tuple[Expr, Tuple["Stmt", ...]], ...]
    orelse: Tuple["Stmt", ...] = ()
    line: int = 0


Stmt = Union[AugAssign, IfChain]


@dataclass(frozen=True)
class SkillAst:
    statements: Tuple[Stmt, ...]


__all__ = [
    "Num",
    "Name",
    "Subscript",
    "BinOp",
    "UnaryOp",
    "BoolOp",
    "Compare",
    "Call",
    "Expr",
    "AugAssign",
    "IfChain",
    "Stmt",
    "SkillAst",
]
