"""Whitelist validation and the three-stage skill check."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, List, Optional

from ..errors import EvalError, SkillSyntaxError
from .interpreter import EvalContext, evaluate
from .parser import parse
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
from .whitelist import ACCUMULATOR, INDEX_VARIABLE, LANE_VARIABLES, VariableWhitelist

STAGES = ("parse", "whitelist", "sandbox")

DUMMY_VALUE = 1.0


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    stage: Optional[str] = None
    message: str = ""

    @classmethod
    def passed(cls) -> "ValidationReport":
        return cls(True, None, "ok")

    @classmethod
    def failed(cls, stage: str, message: str) -> "ValidationReport":
        if stage not in STAGES:
            raise ValueError(f"unknown validation stage {stage!r}")
        return cls(False, stage, message)

    def __bool__(self) -> bool:
        return self.ok


def _check_subscript(node: Subscript, line: int) -> Iterator[str]:
    if node.name != ACCUMULATOR or node.index != 0:
        yield f"line {line}: only value[0] may be subscripted, found {node.name}[{node.index}]"


def _check_call(node: Call, whitelist: VariableWhitelist, line: int, in_reducer: bool) -> Iterator[str]:
    func, args = node.func, node.args
    if not whitelist.allows_call(func):
        yield f"line {line}: call to {func!r} is not allowed"
        return
    if func == "range":
        if not in_reducer:
            yield f"line {line}: range() may only appear as the argument of sum() or len()"
        if len(args) != 1:
            yield f"line {line}: range() takes exactly one argument"
        for arg in args:
            yield from _check_expr(arg, whitelist, line)
        return
    if func in ("sum", "len"):
        if len(args) != 1 or not (isinstance(args[0], Call) and args[0].func == "range"):
            yield f"line {line}: {func}() takes exactly one range(n) argument"
            for arg in args:
                yield from _check_expr(arg, whitelist, line)
            return
        yield from _check_call(args[0], whitelist, line, in_reducer=True)
        return
    if func == "abs" and len(args) != 1:
        yield f"line {line}: abs() takes exactly one argument"
    if func in ("min", "max") and not args:
        yield f"line {line}: {func}() needs at least one argument"
    for arg in args:
        yield from _check_expr(arg, whitelist, line)


def _check_expr(node: Expr, whitelist: VariableWhitelist, line: int) -> Iterator[str]:
    if isinstance(node, Num):
        return
    if isinstance(node, Name):
        if whitelist.resolve(node.id) is None:
            yield f"line {line}: name {node.id!r} is not whitelisted"
    elif isinstance(node, Subscript):
        yield from _check_subscript(node, line)
    elif isinstance(node, BinOp):
        yield from _check_expr(node.left, whitelist, line)
        yield from _check_expr(node.right, whitelist, line)
    elif isinstance(node, UnaryOp):
        yield from _check_expr(node.operand, whitelist, line)
    elif isinstance(node, BoolOp):
        for value in node.values:
            yield from _check_expr(value, whitelist, line)
    elif isinstance(node, Compare):
        yield from _check_expr(node.left, whitelist, line)
        for comparator in node.comparators:
            yield from _check_expr(comparator, whitelist, line)
    elif isinstance(node, Call):
        yield from _check_call(node, whitelist, line, in_reducer=False)
    else:
        yield f"line {line}: unsupported node {type(node).__name__}"


def _check_block(statements, whitelist: VariableWhitelist) -> Iterator[str]:
    for stmt in statements:
        yield from _check_stmt(stmt, whitelist)


def _check_stmt(stmt: Stmt, whitelist: VariableWhitelist) -> Iterator[str]:
    if isinstance(stmt, AugAssign):
        yield from _check_subscript(stmt.target, stmt.line)
        yield from _check_expr(stmt.value, whitelist, stmt.line)
    elif isinstance(stmt, IfChain):
        for test, body in stmt.branches:
            yield from _check_expr(test, whitelist, stmt.line)
            yield from _check_block(body, whitelist)
        yield from _check_block(stmt.orelse, whitelist)
    else:
        yield f"unsupported statement {type(stmt).__name__}"


def validate(ast: SkillAst, whitelist: VariableWhitelist) -> ValidationReport:
    """Check every name, call and subscript in ``ast`` against ``whitelist``."""
    problems: List[str] = list(_check_block(ast.statements, whitelist))
    if problems:
        return ValidationReport.failed("whitelist", "; ".join(problems))
    return ValidationReport.passed()


def dummy_bindings(whitelist: VariableWhitelist, value: float = DUMMY_VALUE) -> dict:
    names = list(LANE_VARIABLES) + [INDEX_VARIABLE] + sorted(whitelist.event_variables)
    return {name: value for name in names}


def check_code(code: str, whitelist: VariableWhitelist, label: str = "code") -> ValidationReport:
    """Run parse, whitelist and dummy-input stages over one code body."""
    try:
        tree = parse(code)
    except SkillSyntaxError as exc:
        return ValidationReport.failed("parse", f"{label}: {exc}")
    report = validate(tree, whitelist)
    if not report.ok:
        return ValidationReport.failed("whitelist", f"{label}: {report.message}")
    try:
        evaluate(tree, EvalContext(dummy_bindings(whitelist)))
    except EvalError as exc:
        return ValidationReport.failed("sandbox", f"{label}: {exc}")
    return ValidationReport.passed()


def sandbox_check(skill, whitelist: VariableWhitelist) -> ValidationReport:
    """Validate both code bodies of ``skill``; the first failure wins."""
    for label in ("inlane_code", "outlane_code"):
        code = getattr(skill, label, None)
        if not isinstance(code, str):
            return ValidationReport.failed("parse", f"{label}: missing code")
        report = check_code(code, whitelist, label)
        if not report.ok:
            return report
    return ValidationReport.passed()


__all__ = [
    "STAGES",
    "DUMMY_VALUE",
    "ValidationReport",
    "validate",
    "dummy_bindings",
    "check_code",
    "sandbox_check",
]
