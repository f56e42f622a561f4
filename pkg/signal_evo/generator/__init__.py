"""Skill generators.

Both backends return response text; `generate` extracts the JSON skill,
validates it and re-prompts on failure.
"""
from ..errors import ConfigError
from .drafting import MAX_RETRIES, DraftRequest, check_draft, extract_json, generate
from .prompts import NEUTRAL_DIRECTION, REPRESENTATIONS, PromptBundle, build_prompts
from .remote import RemoteBackend
from .scripted import ScriptedBackend, mutation_of, scripted_mutate
from .templates import EVENT_TEMPLATES, ROUTINE_TEMPLATES, Template, template_pool

GENERATOR_KINDS = ("scripted", "remote")


def make_backend(kind: str, seed: int = 0):
    """Build a backend by name; ``remote`` reads its settings from the environment."""
    if kind == "scripted":
        return ScriptedBackend(seed)
    if kind == "remote":
        return RemoteBackend.from_env()
    raise ConfigError(f"generator must be one of {', '.join(GENERATOR_KINDS)}, got {kind!r}")


__all__ = [
    "GENERATOR_KINDS",
    "MAX_RETRIES",
    "DraftRequest",
    "check_draft",
    "extract_json",
    "generate",
    "NEUTRAL_DIRECTION",
    "REPRESENTATIONS",
    "PromptBundle",
    "build_prompts",
    "RemoteBackend",
    "ScriptedBackend",
    "mutation_of",
    "scripted_mutate",
    "EVENT_TEMPLATES",
    "ROUTINE_TEMPLATES",
    "Template",
    "template_pool",
    "make_backend",
]
