"""Draft requests, response parsing and the validate-and-retry loop."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Callable, List, Mapping, Optional

from ..logs import get_logger
from ..skilldsl import Skill, ValidationReport, VariableWhitelist, parse_skill_json, sandbox_check
from .prompts import PromptBundle

logger = get_logger(__name__)

MAX_RETRIES = 3

_FENCE = re.compile(r"```(?:json)?\s*(\{.*?\})\s*```", re.DOTALL)

AuditFn = Callable[[str, Mapping[str, Any]], Any]


@dataclass(frozen=True)
class DraftRequest:
    """What a backend may look at besides the prompts."""

    elite: Skill
    whitelist: VariableWhitelist
    force_innovation: bool = False
    event_kind: Optional[str] = None
    representation: str = "skill"


def extract_json(text: Any) -> Optional[str]:
    """The first JSON object in a model response, fenced or bare."""
    if not isinstance(text, str):
        return None
    m = _FENCE.search(text)
    if m:
        try:
            if isinstance(json.loads(m.group(1)), dict):
                return m.group(1)
        except ValueError:
            pass
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch != "{":
            continue
        try:
            obj, end = decoder.raw_decode(text, i)
        except ValueError:
            continue
        if isinstance(obj, dict):
            return text[i:end]
    return None


def check_draft(text: Any, whitelist: VariableWhitelist, **defaults: Any):
    """Parse and sandbox-check one response; returns ``(skill or None, report)``."""
    body = extract_json(text)
    if body is None:
        return None, ValidationReport.failed("parse", "response holds no JSON object")
    skill, report = parse_skill_json(body, **defaults)
    if skill is None:
        return None, report
    report = sandbox_check(skill, whitelist)
    return (skill if report.ok else None), report


def generate(
    backend: Any,
    prompts: PromptBundle,
    count: int,
    request: DraftRequest,
    audit: Optional[AuditFn] = None,
    max_retries: int = MAX_RETRIES,
    draft_id: Optional[Callable[[int], str]] = None,
    generation: Optional[int] = None,
) -> List[Skill]:
    """Request ``count`` drafts from ``backend``.

    Every backend call is audited as ``generated``. A draft that fails
    to parse or validate is re-requested with the error appended to the
    user prompt, at most ``max_retries`` times, and then dropped.
    `GeneratorUnavailable` from the backend propagates.
    """
    audit = audit or (lambda kind, payload: None)
    draft_id = draft_id or (lambda i: f"draft-{i}")
    generation = request.elite.generation + 1 if generation is None else generation
    drafts: List[Skill] = []
    for i in range(count):
        sid = draft_id(i)
        bundle = prompts
        for attempt in range(max_retries + 1):
            text = backend.complete(bundle, request)
            audit("generated", {"draft": sid, "attempt": attempt, "backend": backend.kind})
            skill, report = check_draft(text, request.whitelist, id=sid, parent_id=request.elite.id, generation=generation)
            if skill is not None:
                # the draft's own id, parent and generation always come from the loop
                skill = Skill(sid, skill.description, skill.guidance, skill.inlane_code, skill.outlane_code, request.elite.id, generation)
                audit("validated", {"draft": sid, "attempt": attempt})
                drafts.append(skill)
                break
            dropped = attempt == max_retries
            audit(
                "rejected",
                {"draft": sid, "attempt": attempt, "stage": report.stage, "message": report.message, "dropped": dropped},
            )
            if dropped:
                logger.warning("draft %s dropped after %d retries: %s", sid, max_retries, report.message)
            else:
                logger.debug("draft %s rejected at %s stage, retrying: %s", sid, report.stage, report.message)
                bundle = prompts.with_feedback(report.stage, report.message)
    return drafts


__all__ = ["MAX_RETRIES", "DraftRequest", "extract_json", "check_draft", "generate"]
