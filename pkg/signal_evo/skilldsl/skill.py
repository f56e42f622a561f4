"""The skill record: strategy text plus two scoring code bodies."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Tuple, Union

from ..errors import ConfigError
from .validator import ValidationReport, sandbox_check
from .whitelist import VariableWhitelist

SEED_ID = "seed"

SEED_INLANE = "value[0] += num_waiting_vehicle"
SEED_OUTLANE = "value[0] += 0"

_REQUIRED = ("inlane_code", "outlane_code")


@dataclass(frozen=True)
class Skill:
    id: str
    description: str
    guidance: str
    inlane_code: str
    outlane_code: str
    parent_id: Optional[str] = None
    generation: int = 0
    fitness: Optional[float] = None
    metrics_snapshot: Optional[Mapping[str, Any]] = None

    def with_fitness(self, fitness: Optional[float], metrics: Optional[Mapping[str, Any]] = None) -> "Skill":
        return replace(self, fitness=fitness, metrics_snapshot=dict(metrics) if metrics else None)

    def to_dict(self) -> dict:
        data = asdict(self)
        # JSON has no -inf; an invalid candidate is stored without fitness
        if data["fitness"] is not None and not math.isfinite(data["fitness"]):
            data["fitness"] = None
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], **defaults: Any) -> "Skill":
        missing = [k for k in _REQUIRED if not isinstance(data.get(k), str)]
        if missing:
            raise ConfigError("Skill errors:\n" + "\n".join(f"{k} must be a string" for k in missing))
        fields = {
            "id": str(data.get("id") or defaults.get("id") or "skill"),
            "description": str(data.get("description") or ""),
            "guidance": str(data.get("guidance") or ""),
            "inlane_code": data["inlane_code"],
            "outlane_code": data["outlane_code"],
            "parent_id": data.get("parent_id", defaults.get("parent_id")),
            "generation": int(data.get("generation", defaults.get("generation", 0)) or 0),
            "fitness": data.get("fitness"),
            "metrics_snapshot": data.get("metrics_snapshot"),
        }
        if fields["fitness"] is not None:
            fields["fitness"] = float(fields["fitness"])
        return cls(**fields)


def seed_skill() -> Skill:
    """The generation-0 skill every run starts from: serve the longest queue."""
    return Skill(
        id=SEED_ID,
        description="Give green to the phase with the most waiting vehicles.",
        guidance="Baseline queue-length heuristic; use as a starting point.",
        inlane_code=SEED_INLANE,
        outlane_code=SEED_OUTLANE,
    )


def parse_skill_json(text: str, **defaults: Any) -> Tuple[Optional[Skill], ValidationReport]:
    """Decode a skill JSON object; failures come back as a parse-stage report."""
    try:
        data = json.loads(text)
    except (TypeError, ValueError) as exc:
        return None, ValidationReport.failed("parse", f"malformed skill JSON: {exc}")
    if not isinstance(data, dict):
        return None, ValidationReport.failed("parse", "skill JSON must be an object")
    try:
        return Skill.from_dict(data, **defaults), ValidationReport.passed()
    except (ConfigError, TypeError, ValueError) as exc:
        return None, ValidationReport.failed("parse", str(exc))


def read_skill(path: Union[str, Path], whitelist: Optional[VariableWhitelist] = None) -> Tuple[Optional[Skill], ValidationReport]:
    """Load a skill file and run the full check on it."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        return None, ValidationReport.failed("parse", f"cannot read {path}: {exc}")
    skill, report = parse_skill_json(text, id=path.stem)
    if skill is None:
        return None, report
    return skill, sandbox_check(skill, whitelist or VariableWhitelist.lane())


def load_skill(path: Union[str, Path], whitelist: Optional[VariableWhitelist] = None) -> Skill:
    """Like `read_skill` but raises `ConfigError` unless the skill passes."""
    skill, report = read_skill(path, whitelist)
    if not report.ok:
        raise ConfigError(f"Skill file {path} rejected at {report.stage} stage: {report.message}")
    return skill


__all__ = [
    "SEED_ID",
    "SEED_INLANE",
    "SEED_OUTLANE",
    "Skill",
    "seed_skill",
    "parse_skill_json",
    "read_skill",
    "load_skill",
]
