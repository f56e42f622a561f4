"""Parse skill code into a `SkillAst`.

Python's own tokenizer and `ast` module do the lexing; this module
accepts only the skill grammar (augmented assignments to a subscript
and if/elif/else chains over numeric expressions) and turns everything
else into `SkillSyntaxError`.
"""
from __future__ import annotations

import ast
import textwrap
from functools import lru_cache
from typing import List, Tuple

from ..errors import SkillSyntaxError
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

_BINOPS = {
    ast.Add: "+",
    ast.Sub: "-",
    ast.Mult: "*",
    ast.Div: "/",
    ast.FloorDiv: "//",
    ast.Mod: "%",
    ast.Pow: "**",
}
_AUG_OPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/"}
_UNARY = {ast.USub: "-", ast.UAdd: "+", ast.Not: "not"}
_BOOL = {ast.And: "and", ast.Or: "or"}
_COMPARE = {
    ast.Lt: "<",
    ast.LtE: "<=",
    ast.Gt: ">",
    ast.GtE: ">=",
    ast.Eq: "==",
    ast.NotEq: "!=",
}

_FORBIDDEN_STATEMENTS = {
    ast.Import: "import",
    ast.ImportFrom: "import",
    ast.FunctionDef: "function definition",
    ast.AsyncFunctionDef: "function definition",
    ast.ClassDef: "class definition",
}


def _error(node: ast.AST, message: str) -> SkillSyntaxError:
    return SkillSyntaxError(message, getattr(node, "lineno", None), getattr(node, "col_offset", None))


def _subscript(node: ast.Subscript) -> Subscript:
    if not isinstance(node.value, ast.Name):
        raise _error(node, "only simple name[index] subscripts are allowed")
    index = node.slice
    # Python 3.8 wraps the slice in ast.Index
    if hasattr(ast, "Index") and isinstance(index, getattr(ast, "Index")):
        index = index.value  # pragma: no cover
    if not (isinstance(index, ast.Constant) and type(index.value) is int):
        raise _error(node, "subscript index must be an integer literal")
    return Subscript(node.value.id, index.value)


def _expr(node: ast.AST) -> Expr:
    if isinstance(node, ast.Constant):
        if type(node.value) in (int, float):
            return Num(float(node.value))
        raise _error(node, f"unsupported literal {node.value!r}")
    if isinstance(node, ast.Name):
        return Name(node.id)
    if isinstance(node, ast.BinOp):
        op = _BINOPS.get(type(node.op))
        if op is None:
            raise _error(node, f"unsupported operator {type(node.op).__name__}")
        return BinOp(op, _expr(node.left), _expr(node.right))
    if isinstance(node, ast.UnaryOp):
        op = _UNARY.get(type(node.op))
        if op is None:
            raise _error(node, f"unsupported unary operator {type(node.op).__name__}")
        return UnaryOp(op, _expr(node.operand))
    if isinstance(node, ast.BoolOp):
        return BoolOp(_BOOL[type(node.op)], tuple(_expr(v) for v in node.values))
    if isinstance(node, ast.Compare):
        ops = []
        for op in node.ops:
            sym = _COMPARE.get(type(op))
            if sym is None:
                raise _error(node, f"unsupported comparison {type(op).__name__}")
            ops.append(sym)
        return Compare(_expr(node.left), tuple(ops), tuple(_expr(c) for c in node.comparators))
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name):
            raise _error(node, "calls must name a builtin directly")
        if node.keywords:
            raise _error(node, "keyword arguments are not allowed")
        if any(isinstance(a, ast.Starred) for a in node.args):
            raise _error(node, "starred arguments are not allowed")
        return Call(node.func.id, tuple(_expr(a) for a in node.args))
    if isinstance(node, ast.Subscript):
        return _subscript(node)
    if isinstance(node, ast.Attribute):
        raise _error(node, "attribute access is not allowed")
    if isinstance(node, ast.Lambda):
        raise _error(node, "lambda expressions are not allowed")
    raise _error(node, f"unsupported expression {type(node).__name__}")


def _if_chain(node: ast.If) -> IfChain:
    branches: List[Tuple[Expr, Tuple[Stmt, ...]]] = []
    current = node
    while True:
        branches.append((_expr(current.test), _block(current.body)))
        orelse = current.orelse
        if len(orelse) == 1 and isinstance(orelse[0], ast.If):
            current = orelse[0]
            continue
        return IfChain(tuple(branches), _block(orelse), node.lineno)


def _statement(node: ast.stmt) -> Stmt:
    if isinstance(node, ast.AugAssign):
        if not isinstance(node.target, ast.Subscript):
            raise _error(node, "augmented assignment must target value[0]")
        op = _AUG_OPS.get(type(node.op))
        if op is None:
            raise _error(node, f"unsupported augmented operator {type(node.op).__name__}")
        return AugAssign(_subscript(node.target), op, _expr(node.value), node.lineno)
    if isinstance(node, ast.If):
        return _if_chain(node)
    kind = _FORBIDDEN_STATEMENTS.get(type(node))
    if kind:
        raise _error(node, f"{kind} is not allowed")
    raise _error(node, f"unsupported statement {type(node).__name__}")


def _block(nodes: List[ast.stmt]) -> Tuple[Stmt, ...]:
    return tuple(_statement(n) for n in nodes)


@lru_cache(maxsize=4096)
def parse(code: str) -> SkillAst:
    """Parse skill source text.

    Raises `SkillSyntaxError` for empty text, Python syntax errors and
    any construct outside the skill grammar.
    """
    if not isinstance(code, str) or not code.strip():
        raise SkillSyntaxError("skill code is empty", 1, 0)
    source = textwrap.dedent(code).strip("\n")
    try:
        tree = ast.parse(source, mode="exec")
    except SyntaxError as exc:
        raise SkillSyntaxError(exc.msg or "invalid syntax", exc.lineno, exc.offset) from exc
    if not tree.body:
        raise SkillSyntaxError("skill code has no statements", 1, 0)
    return SkillAst(_block(tree.body))


__all__ = ["parse"]
