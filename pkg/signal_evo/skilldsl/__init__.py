"""The restricted skill-code language.

Skills score signal phases with short programs of the form
``value[0] += expr`` plus ``if``/``elif``/``else`` chains. This package
parses them, checks them against a variable whitelist, evaluates them
and measures their size.
"""
from .complexity import Complexity, complexity, skill_complexity
from .interpreter import EvalContext, evaluate, evaluate_code
from .parser import parse
from .skill import Skill, load_skill, parse_skill_json, read_skill, seed_skill
from .validator import ValidationReport, check_code, dummy_bindings, sandbox_check, validate
from .whitelist import EVENT_VARIABLES, LANE_VARIABLES, VariableWhitelist, canonical_name

__all__ = [
    "Complexity",
    "complexity",
    "skill_complexity",
    "EvalContext",
    "evaluate",
    "evaluate_code",
    "parse",
    "Skill",
    "load_skill",
    "parse_skill_json",
    "read_skill",
    "seed_skill",
    "ValidationReport",
    "check_code",
    "dummy_bindings",
    "sandbox_check",
    "validate",
    "EVENT_VARIABLES",
    "LANE_VARIABLES",
    "VariableWhitelist",
    "canonical_name",
]
