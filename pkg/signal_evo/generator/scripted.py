"""Deterministic offline generator.

`ScriptedBackend` answers draft requests by mutating the elite's code
with one of five grammar-level operations, driven by a seeded numpy
generator. Transforms work on the Python ``ast`` of a code body and
render with ``ast.unparse``, so every draft is plain skill source.
"""
from __future__ import annotations

import ast
import json
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..skilldsl import Skill, VariableWhitelist, complexity, parse, sandbox_check
from .drafting import DraftRequest
from .prompts import PromptBundle
from .templates import Template, template_pool

OPERATIONS = ("coefficient", "threshold", "wrap", "insert_term", "rewrite")
OPERATION_TEXT = {
    "coefficient": "Coefficient perturbation",
    "threshold": "Threshold shift",
    "wrap": "Conditional branch",
    "insert_term": "Term insertion",
    "rewrite": "Structure rewrite",
}
REWRITE_PROBABILITY = 0.15
INNOVATION_REWRITE_PROBABILITY = 0.8
INLANE_PROBABILITY = 0.7
MAX_NODES = 40
MAX_DEPTH = 2
MAX_ATTEMPTS = 5

_INLANE_TERMS = ("num_waiting_vehicle", "num_vehicle", "vehicle_dist")
_OUTLANE_TERMS = ("num_vehicle", "vehicle_dist")
_DELTAS = (1, -1, 2, -2)
_FACTORS = (2, 0.5)
_COEFS = (0.25, 0.5, 1, 2)


def _num(value: float):
    if isinstance(value, float) and value.is_integer() and abs(value) < 1e15:
        return int(value)
    return value


def _accumulate(expr: ast.expr, op: Optional[ast.operator] = None) -> ast.AugAssign:
    target = ast.Subscript(value=ast.Name(id="value", ctx=ast.Load()), slice=ast.Constant(0), ctx=ast.Store())
    return ast.AugAssign(target=target, op=op or ast.Add(), value=expr)


def _render(tree: ast.Module) -> str:
    return ast.unparse(ast.fix_missing_locations(tree))


def _literals(tree: ast.AST) -> List[ast.Constant]:
    """Numeric literals outside subscripts, exponents and comparisons."""
    skip = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Subscript):
            skip.update(id(n) for n in ast.walk(node.slice))
        elif isinstance(node, ast.BinOp) and isinstance(node.op, ast.Pow):
            skip.update(id(n) for n in ast.walk(node.right))
        elif isinstance(node, ast.Compare):
            skip.update(id(n) for n in node.comparators if isinstance(n, ast.Constant))
            if isinstance(node.left, ast.Constant):
                skip.add(id(node.left))
    return [
        n
        for n in ast.walk(tree)
        if isinstance(n, ast.Constant)
        and isinstance(n.value, (int, float))
        and not isinstance(n.value, bool)
        and id(n) not in skip
    ]


def _thresholds(tree: ast.AST) -> List[ast.Constant]:
    out = []
    for node in ast.walk(tree):
        if isinstance(node, ast.Compare):
            out.extend(n for n in [node.left, *node.comparators] if isinstance(n, ast.Constant) and not isinstance(n.value, bool))
    return out


def perturb_literal(value: float, delta: Optional[float] = None, factor: Optional[float] = None):
    """Shift or scale one literal; literals that were non-negative stay so."""
    new = value * factor if factor is not None else value + (delta or 0)
    if value >= 0:
        new = max(0, new)
    return _num(new)


def scale_rhs(code: str, factor: float) -> str:
    """Multiply the right-hand side of the first accumulator update by ``factor``."""
    tree = ast.parse(code)
    for node in ast.walk(tree):
        if isinstance(node, ast.AugAssign):
            node.value = ast.BinOp(left=node.value, op=ast.Mult(), right=ast.Constant(_num(factor)))
            break
    return _render(tree)


def add_branch(code: str, variable: str, threshold: float, coef: float) -> str:
    """Guard the body with ``if variable > threshold`` and score ``variable * coef`` otherwise."""
    tree = ast.parse(code)
    test = ast.Compare(left=ast.Name(id=variable, ctx=ast.Load()), ops=[ast.Gt()], comparators=[ast.Constant(_num(threshold))])
    fallback = _accumulate(ast.BinOp(left=ast.Name(id=variable, ctx=ast.Load()), op=ast.Mult(), right=ast.Constant(_num(coef))))
    tree.body = [ast.If(test=test, body=tree.body, orelse=[fallback])]
    return _render(tree)


def insert_term(code: str, variables: Tuple[str, ...], coef: float, subtract: bool = False) -> str:
    """Append ``value[0] += coef * a [* b]`` for the given variables."""
    tree = ast.parse(code)
    expr: ast.expr = ast.Constant(_num(coef))
    for name in variables:
        expr = ast.BinOp(left=expr, op=ast.Mult(), right=ast.Name(id=name, ctx=ast.Load()))
    tree.body.append(_accumulate(expr, ast.Sub() if subtract else ast.Add()))
    return _render(tree)


class _Mutator:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def pick(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def coefficient(self, code: str) -> Tuple[str, str]:
        tree = ast.parse(code)
        literals = _literals(tree)
        if not literals:
            factor = self.pick(_FACTORS)
            return scale_rhs(code, factor), f"score scaled by {factor}"
        node = self.pick(literals)
        old = node.value
        if self.rng.random() < 0.5:
            node.value = perturb_literal(old, delta=self.pick(_DELTAS))
        else:
            node.value = perturb_literal(old, factor=self.pick(_FACTORS))
        return _render(tree), f"literal {old} -> {node.value}"

    def threshold(self, code: str, lane_terms) -> Tuple[str, str]:
        tree = ast.parse(code)
        found = _thresholds(tree)
        if not found:
            return self.wrap(code, lane_terms)
        node = self.pick(found)
        old = node.value
        node.value = perturb_literal(old, delta=self.pick(_DELTAS))
        return _render(tree), f"threshold {old} -> {node.value}"

    def wrap(self, code: str, lane_terms) -> Tuple[str, str]:
        variable = lane_terms[0]
        theta = int(self.rng.integers(1, 6))
        coef = self.pick(_COEFS)
        return add_branch(code, variable, theta, coef), f"branch on {variable} > {theta}"

    def insert(self, code: str, lane_terms, outlane: bool) -> Tuple[str, str]:
        n = 1 + int(self.rng.random() < 0.5)
        variables = tuple(self.pick(lane_terms) for _ in range(n))
        coef = self.pick(_COEFS)
        subtract = outlane and self.rng.random() < 0.5
        sign = "-" if subtract else "+"
        return insert_term(code, variables, coef, subtract), f"{sign}{coef} * {' * '.join(variables)}"


def _grew(before: str, after: str) -> bool:
    old, new = complexity(parse(before)), complexity(parse(after))
    return new.node_count > MAX_NODES or (new.branch_depth >= MAX_DEPTH and new.branch_depth > old.branch_depth)


def _draft(elite: Skill, op: str, detail: str, inlane: str, outlane: str, guidance: Optional[str] = None) -> Skill:
    return Skill(
        id="draft",
        description=f"{OPERATION_TEXT[op]}: {detail}.",
        guidance=guidance or f"Derived from {elite.id}. {elite.guidance}".strip(),
        inlane_code=inlane,
        outlane_code=outlane,
        parent_id=elite.id,
        generation=elite.generation + 1,
    )


def _rewrite(elite: Skill, rng: np.random.Generator, event_kind: Optional[str]) -> Skill:
    pool = template_pool(event_kind)
    fresh = [t for t in pool if (t.inlane_code, t.outlane_code) != (elite.inlane_code, elite.outlane_code)] or list(pool)
    t: Template = fresh[int(rng.integers(len(fresh)))]
    return _draft(elite, "rewrite", f"{t.name}. {t.description}".rstrip("."), t.inlane_code, t.outlane_code, t.guidance)


def _apply(elite: Skill, op: str, rng: np.random.Generator, event_kind: Optional[str]) -> Skill:
    if op == "rewrite":
        return _rewrite(elite, rng, event_kind)
    m = _Mutator(rng)
    on_inlane = rng.random() < INLANE_PROBABILITY
    code = elite.inlane_code if on_inlane else elite.outlane_code
    terms = _INLANE_TERMS if on_inlane else _OUTLANE_TERMS
    if op == "coefficient":
        new, detail = m.coefficient(code)
    elif op == "threshold":
        new, detail = m.threshold(code, terms)
    elif op == "wrap":
        new, detail = m.wrap(code, terms)
    else:
        new, detail = m.insert(code, terms, outlane=not on_inlane)
    if _grew(code, new):
        return _rewrite(elite, rng, event_kind)
    lane = "inlane" if on_inlane else "outlane"
    if on_inlane:
        return _draft(elite, op, f"{lane} {detail}", new, elite.outlane_code)
    return _draft(elite, op, f"{lane} {detail}", elite.inlane_code, new)


def choose_operation(rng: np.random.Generator, force_innovation: bool) -> str:
    p = INNOVATION_REWRITE_PROBABILITY if force_innovation else REWRITE_PROBABILITY
    if rng.random() < p:
        return "rewrite"
    return OPERATIONS[int(rng.integers(len(OPERATIONS) - 1))]


def scripted_mutate(
    elite: Skill,
    force_innovation: bool,
    rng: np.random.Generator,
    whitelist: Optional[VariableWhitelist] = None,
    event_kind: Optional[str] = None,
) -> Skill:
    """One draft derived from ``elite``; always passes `sandbox_check`.

    A mutation whose result fails the check is redrawn a bounded number
    of times, then replaced by a term insertion on the inlane body.
    """
    whitelist = whitelist or (VariableWhitelist.event() if event_kind else VariableWhitelist.lane())
    for _ in range(MAX_ATTEMPTS):
        draft = _apply(elite, choose_operation(rng, force_innovation), rng, event_kind)
        if sandbox_check(draft, whitelist).ok:
            return draft
    return _draft(elite, "insert_term", "inlane +1 * num_waiting_vehicle", insert_term(elite.inlane_code, ("num_waiting_vehicle",), 1), elite.outlane_code)


def mutation_of(draft: Skill) -> Optional[str]:
    """The operation a scripted draft's description names."""
    for op, text in OPERATION_TEXT.items():
        if draft.description.startswith(text):
            return op
    return None


class ScriptedBackend:
    """Seeded, serial, fully deterministic backend."""

    kind = "scripted"
    deterministic = True

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    @property
    def state(self) -> Dict[str, Any]:
        return self.rng.bit_generator.state

    def restore(self, state: Dict[str, Any]) -> None:
        self.rng.bit_generator.state = state

    def complete(self, prompts: PromptBundle, request: DraftRequest) -> str:
        draft = scripted_mutate(request.elite, request.force_innovation, self.rng, request.whitelist, request.event_kind)
        body = {"inlane_code": draft.inlane_code, "outlane_code": draft.outlane_code}
        if request.representation == "skill":
            body.update(description=draft.description, guidance=draft.guidance)
        return "```json\n" + json.dumps(body, indent=2) + "\n```"


__all__ = [
    "OPERATIONS",
    "OPERATION_TEXT",
    "REWRITE_PROBABILITY",
    "INNOVATION_REWRITE_PROBABILITY",
    "perturb_literal",
    "scale_rhs",
    "add_branch",
    "insert_term",
    "choose_operation",
    "scripted_mutate",
    "mutation_of",
    "ScriptedBackend",
]
