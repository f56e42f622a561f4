"""Evaluate skill programs.

A validated `SkillAst` is compiled once into nested closures (cached per
AST, since nodes are hashable) and then run against an `EvalContext`.
All values are Python floats; every arithmetic step is checked and any
zero divisor, complex result or non-finite value raises `EvalError`.
"""
from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, Mapping

from ..errors import EvalError
from .nodes import (
    AugAssign,
    BinOp,
    BoolOp,
    Call,
    Compare,
    Expr,
    IfChain,
    Name,
    Num,
    SkillAst,
    Stmt,
    Subscript,
    UnaryOp,
)
from .parser import parse
from .whitelist import canonical_name

RANGE_LIMIT = 10**6


@dataclass
class EvalContext:
    bindings: Mapping[str, float]
    value: List[float] = field(default_factory=lambda: [0.0])


ExprFn = Callable[[EvalContext], float]
StmtFn = Callable[[EvalContext], None]


def _finite(result, op: str) -> float:
    if isinstance(result, complex):
        raise EvalError(f"{op} produced a complex result")
    result = float(result)
    if not math.isfinite(result):
        raise EvalError(f"{op} produced a non-finite result")
    return result


def _checked(fn: Callable[[float, float], float], op: str, divides: bool = False):
    def apply(a: float, b: float) -> float:
        if divides and b == 0.0:
            raise EvalError(f"{op} by zero")
        try:
            result = fn(a, b)
        except ZeroDivisionError as exc:
            raise EvalError(f"{op} by zero") from exc
        except (OverflowError, ValueError) as exc:
            raise EvalError(f"{op} failed: {exc}") from exc
        return _finite(result, op)

    return apply


_ARITH = {
    "+": _checked(operator.add, "addition"),
    "-": _checked(operator.sub, "subtraction"),
    "*": _checked(operator.mul, "multiplication"),
    "/": _checked(operator.truediv, "division", divides=True),
    "//": _checked(operator.floordiv, "floor division", divides=True),
    "%": _checked(operator.mod, "modulo", divides=True),
    "**": _checked(operator.pow, "power"),
}

_COMPARE = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
    "!=": operator.ne,
}


def _range_count(n: float) -> int:
    return min(max(0, math.floor(n)), RANGE_LIMIT)


def _compile_call(node: Call) -> ExprFn:
    func = node.func
    if func in ("sum", "len"):
        inner = node.args[0]
        if not (isinstance(inner, Call) and inner.func == "range" and len(inner.args) == 1):
            raise EvalError(f"{func}() needs a range(n) argument")
        bound = _compile_expr(inner.args[0])
        if func == "len":
            return lambda ctx: float(_range_count(bound(ctx)))

        def range_sum(ctx: EvalContext) -> float:
            c = _range_count(bound(ctx))
            return float(c * (c - 1) // 2)

        return range_sum
    args = tuple(_compile_expr(a) for a in node.args)
    if func == "abs":
        (arg,) = args
        return lambda ctx: abs(arg(ctx))
    if func == "min":
        return lambda ctx: min(a(ctx) for a in args)
    if func == "max":
        return lambda ctx: max(a(ctx) for a in args)
    raise EvalError(f"call to {func!r} cannot be evaluated")


def _compile_expr(node: Expr) -> ExprFn:
    if isinstance(node, Num):
        constant = node.value
        return lambda ctx: constant
    if isinstance(node, Name):
        raw = node.id
        key = canonical_name(raw) or raw

        def lookup(ctx: EvalContext) -> float:
            bindings = ctx.bindings
            if key in bindings:
                return float(bindings[key])
            if raw in bindings:
                return float(bindings[raw])
            raise EvalError(f"name {raw!r} is not bound")

        return lookup
    if isinstance(node, Subscript):
        index = node.index
        return lambda ctx: ctx.value[index]
    if isinstance(node, BinOp):
        fn = _ARITH[node.op]
        left, right = _compile_expr(node.left), _compile_expr(node.right)
        return lambda ctx: fn(left(ctx), right(ctx))
    if isinstance(node, UnaryOp):
        operand = _compile_expr(node.operand)
        if node.op == "-":
            return lambda ctx: -operand(ctx)
        if node.op == "not":
            return lambda ctx: 0.0 if operand(ctx) else 1.0
        return operand
    if isinstance(node, BoolOp):
        values = tuple(_compile_expr(v) for v in node.values)
        if node.op == "and":

            def all_of(ctx: EvalContext) -> float:
                result = 0.0
                for v in values:
                    result = v(ctx)
                    if not result:
                        return result
                return result

            return all_of

        def any_of(ctx: EvalContext) -> float:
            result = 0.0
            for v in values:
                result = v(ctx)
                if result:
                    return result
            return result

        return any_of
    if isinstance(node, Compare):
        first = _compile_expr(node.left)
        steps = tuple(zip((_COMPARE[op] for op in node.ops), (_compile_expr(c) for c in node.comparators)))

        def compare(ctx: EvalContext) -> float:
            left = first(ctx)
            for fn, rhs in steps:
                right = rhs(ctx)
                if not fn(left, right):
                    return 0.0
                left = right
            return 1.0

        return compare
    if isinstance(node, Call):
        return _compile_call(node)
    raise EvalError(f"cannot evaluate node {type(node).__name__}")


def _compile_block(statements) -> StmtFn:
    compiled = tuple(_compile_stmt(s) for s in statements)

    def run(ctx: EvalContext) -> None:
        for stmt in compiled:
            stmt(ctx)

    return run


def _compile_stmt(stmt: Stmt) -> StmtFn:
    if isinstance(stmt, AugAssign):
        fn = _ARITH[stmt.op]
        rhs = _compile_expr(stmt.value)
        index = stmt.target.index

        def assign(ctx: EvalContext) -> None:
            ctx.value[index] = fn(ctx.value[index], rhs(ctx))

        return assign
    if isinstance(stmt, IfChain):
        branches = tuple((_compile_expr(test), _compile_block(body)) for test, body in stmt.branches)
        orelse = _compile_block(stmt.orelse)

        def choose(ctx: EvalContext) -> None:
            for test, body in branches:
                if test(ctx):
                    body(ctx)
                    return
            orelse(ctx)

        return choose
    raise EvalError(f"cannot execute statement {type(stmt).__name__}")


@lru_cache(maxsize=4096)
def compile_skill(ast: SkillAst) -> StmtFn:
    return _compile_block(ast.statements)


def evaluate(ast: SkillAst, ctx: EvalContext) -> float:
    """Run ``ast`` against ``ctx`` and return the accumulator."""
    compile_skill(ast)(ctx)
    return ctx.value[0]


def evaluate_code(code: str, bindings: Mapping[str, float]) -> float:
    return evaluate(parse(code), EvalContext(bindings))


__all__ = ["RANGE_LIMIT", "EvalContext", "evaluate", "evaluate_code", "compile_skill"]
