"""Independent evaluator used as a test oracle.

Walks Python's own ``ast`` statement by statement and hands each
expression to ``simpleeval``. Shares no code with ``signal_evo.skilldsl``
apart from the Python standard library.
"""
import ast
import math
import re
import textwrap

from simpleeval import SimpleEval

_SHORT = {
    "waiting": "num_waiting_vehicle",
    "waiting_vehicle": "num_waiting_vehicle",
    "vehicles": "num_vehicle",
    "dist": "vehicle_dist",
}
_LANE = re.compile(r"^(?:inlane|outlane)_\d+_(num_vehicle|num_waiting_vehicle|vehicle_dist)$")


def _binding(name, bindings):
    if name in _SHORT:
        return bindings[_SHORT[name]]
    m = _LANE.match(name)
    if m:
        return bindings[m.group(1)]
    return bindings[name]


def _range(n):
    return range(min(max(0, math.floor(n)), 10**6))


_FUNCTIONS = {"min": min, "max": max, "abs": abs, "sum": sum, "len": len, "range": _range}


def _names(tree, bindings, acc):
    names = {"value": acc}
    for node in ast.walk(tree):
        if isinstance(node, ast.Name) and node.id not in _FUNCTIONS and node.id != "value":
            names[node.id] = _binding(node.id, bindings)
    return names


def _apply(op, a, b):
    if isinstance(op, ast.Add):
        return a + b
    if isinstance(op, ast.Sub):
        return a - b
    if isinstance(op, ast.Mult):
        return a * b
    return a / b


def _run(statements, evaluator, acc):
    for stmt in statements:
        if isinstance(stmt, ast.AugAssign):
            acc[0] = float(_apply(stmt.op, acc[0], evaluator.eval(ast.unparse(stmt.value))))
        elif isinstance(stmt, ast.If):
            if evaluator.eval(ast.unparse(stmt.test)):
                _run(stmt.body, evaluator, acc)
            else:
                _run(stmt.orelse, evaluator, acc)
        else:
            raise ValueError(f"unexpected statement {type(stmt).__name__}")


def reference_evaluate(code, bindings):
    tree = ast.parse(textwrap.dedent(code))
    acc = [0.0]
    evaluator = SimpleEval(names=_names(tree, bindings, acc), functions=dict(_FUNCTIONS))
    _run(tree.body, evaluator, acc)
    return acc[0]


def reference_node_count(code):
    """Count statements, targets, references, calls and comparisons."""
    tree = ast.parse(textwrap.dedent(code))
    count = 0
    for node in ast.walk(tree):
        if isinstance(node, (ast.AugAssign, ast.If, ast.Subscript, ast.Call, ast.Compare)):
            count += 1
        elif isinstance(node, ast.Name) and node.id not in _FUNCTIONS and node.id != "value":
            count += 1
    return count
