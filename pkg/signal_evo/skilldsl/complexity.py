"""Interpretability measures for skill programs.

Counting convention: each statement (an augmented assignment, or one
``if``/``elif`` test), the accumulator target of an assignment, every
variable reference, every builtin call and every comparison counts one
node. Literals and arithmetic or boolean operator nodes do not count.
Under this convention ``value[0] += num_waiting_vehicle`` has 3 nodes.
"""
from __future__ import annotations

from typing import NamedTuple

from .nodes import AugAssign, BinOp, BoolOp, Call, Compare, Expr, IfChain, Name, Num, SkillAst, Subscript, UnaryOp
from .parser import parse


class Complexity(NamedTuple):
    node_count: int
    branch_depth: int


def _expr_nodes(node: Expr) -> int:
    if isinstance(node, Num):
        return 0
    if isinstance(node, (Name, Subscript)):
        return 1
    if isinstance(node, BinOp):
        return _expr_nodes(node.left) + _expr_nodes(node.right)
    if isinstance(node, UnaryOp):
        return _expr_nodes(node.operand)
    if isinstance(node, BoolOp):
        return sum(_expr_nodes(v) for v in node.values)
    if isinstance(node, Compare):
        return 1 + _expr_nodes(node.left) + sum(_expr_nodes(c) for c in node.comparators)
    if isinstance(node, Call):
        return 1 + sum(_expr_nodes(a) for a in node.args)
    return 0


def _block(statements) -> Complexity:
    count = depth = 0
    for stmt in statements:
        if isinstance(stmt, AugAssign):
            count += 2 + _expr_nodes(stmt.value)
        elif isinstance(stmt, IfChain):
            inner = 0
            for test, body in stmt.branches:
                sub = _block(body)
                count += 1 + _expr_nodes(test) + sub.node_count
                inner = max(inner, sub.branch_depth)
            sub = _block(stmt.orelse)
            count += sub.node_count
            depth = max(depth, 1 + max(inner, sub.branch_depth))
    return Complexity(count, depth)


def complexity(ast: SkillAst) -> Complexity:
    """Return ``(node_count, branch_depth)`` of a parsed program."""
    return _block(ast.statements)


def skill_complexity(skill) -> Complexity:
    """Complexity of a skill's inlane body."""
    return complexity(parse(skill.inlane_code))


__all__ = ["Complexity", "complexity", "skill_complexity"]
