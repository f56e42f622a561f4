"""Two-part prompts for skill generation."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Dict, List, Mapping, Optional

from ..skilldsl import EVENT_VARIABLES, Skill, VariableWhitelist

NEUTRAL_DIRECTION = "Optimize performance."
REPRESENTATIONS = ("skill", "code_only")

INLANE_VARIABLES = ("num_vehicle", "num_waiting_vehicle", "vehicle_dist")
OUTLANE_VARIABLES = ("num_vehicle", "vehicle_dist")

STRATEGY_HINTS = (
    "Branch on traffic conditions, e.g. `if num_waiting_vehicle > 5:` with a different score per branch.",
    "Use nonlinear transforms such as `num_waiting_vehicle ** 1.5` or `min(3, num_waiting_vehicle)`.",
    "Detect saturation by comparing waiting and total vehicles, e.g. `num_vehicle - num_waiting_vehicle`.",
    "Combine several variables, e.g. waiting count times spacing, and use the outlane score to reward downstream room.",
)

EVENT_HINTS: Dict[str, str] = {
    "emergency": "For emergency preemption, immediately switch to the phase that clears the emergency vehicle's path "
    "(compare `emergency_phase` with `index`; nearer vehicles deserve larger scores).",
    "transit": "For transit priority, favour phases serving buses; `bus_count` and `bus_delay` describe the buses "
    "on the approach and occupancy makes each bus worth many cars.",
    "incident": "For incidents, `incident_blocked` counts blocked lanes; favour phases whose lanes can still "
    "discharge and avoid feeding the blocked link.",
    "congestion": "For congestion, `congestion_level` (0-3) grades the queue above its recent 90th percentile; "
    "flush the longest queues first.",
}


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str

    def messages(self) -> List[Dict[str, str]]:
        return [{"role": "system", "content": self.system}, {"role": "user", "content": self.user}]

    def with_feedback(self, stage: str, message: str) -> "PromptBundle":
        """The original prompts plus the validation error of the last draft."""
        note = (
            f"\n\nYour previous answer was rejected at the {stage} stage: {message}\n"
            "Return a corrected JSON object."
        )
        return replace(self, user=self.user + note)


def _system_prompt(whitelist: VariableWhitelist, event_kind: Optional[str], representation: str) -> str:
    if representation == "skill":
        fields = (
            '{"description": "<strategy rationale>", "guidance": "<when to select this skill>", '
            '"inlane_code": "<python>", "outlane_code": "<python>"}'
        )
    else:
        fields = '{"inlane_code": "<python>", "outlane_code": "<python>"}'
    lines = [
        "You are a traffic signal control strategy optimization expert.",
        "Signals choose, at every decision point, the phase with the highest score. A phase's score is the sum,"
        " over the lanes it serves, of the inlane code run on the approach lane plus the outlane code run on"
        " the downstream link. Both code bodies add to the accumulator value[0].",
        "",
        "Answer with one JSON object and nothing else:",
        fields,
        "",
        "Variables:",
        f"- inlane: {', '.join(INLANE_VARIABLES)}",
        f"- outlane: {', '.join(OUTLANE_VARIABLES)}",
        "- value[0]: the score accumulator",
        "- index: the phase being scored",
    ]
    event_vars = [v for v in EVENT_VARIABLES if v in whitelist.event_variables]
    if event_vars:
        lines.append(f"- event context: {', '.join(event_vars)} (0 when the event is absent)")
    lines += [
        "",
        f"Allowed builtins: {', '.join(sorted(whitelist.builtins))}. Statements are `value[0] op= expr` "
        "(op one of + - * /) and if/elif/else. Imports, function definitions, lambda expressions, loops "
        "and attribute access are not allowed.",
        "",
        "Strategy hints:",
    ]
    lines += [f"- {hint}" for hint in STRATEGY_HINTS]
    if event_kind in EVENT_HINTS:
        lines.append(f"- {EVENT_HINTS[event_kind]}")
    return "\n".join(lines)


def _format_metrics(metrics: Mapping[str, Any]) -> str:
    def fmt(key: str) -> str:
        v = metrics.get(key)
        return "n/a" if v is None else f"{float(v):.2f}"

    return f"average delay {fmt('avg_delay')} s, average queue {fmt('avg_queue')} vehicles, throughput {fmt('throughput')} vehicles"


def build_prompts(
    elite: Skill,
    metrics: Mapping[str, Any],
    direction: str,
    whitelist: Optional[VariableWhitelist] = None,
    event_kind: Optional[str] = None,
    representation: str = "skill",
) -> PromptBundle:
    """System and user prompts for one draft request.

    The user prompt embeds the elite (description, guidance and code
    unless ``representation`` is ``code_only``), its metrics and the
    evolution direction; an empty direction becomes the neutral line.
    """
    if representation not in REPRESENTATIONS:
        raise ValueError(f"representation must be one of {', '.join(REPRESENTATIONS)}")
    whitelist = whitelist or (VariableWhitelist.event() if event_kind else VariableWhitelist.lane())
    shown = ["Current best skill:"]
    if representation == "skill":
        shown += [f"description: {elite.description}", f"guidance: {elite.guidance}"]
    shown += ["inlane_code:", "```python", elite.inlane_code, "```", "outlane_code:", "```python", elite.outlane_code, "```"]
    user = "\n".join(
        shown
        + [
            "",
            f"Performance: {_format_metrics(metrics)}",
            "",
            f"Evolution direction: {direction.strip() or NEUTRAL_DIRECTION}",
        ]
    )
    return PromptBundle(_system_prompt(whitelist, event_kind, representation), user)


__all__ = [
    "NEUTRAL_DIRECTION",
    "REPRESENTATIONS",
    "INLANE_VARIABLES",
    "OUTLANE_VARIABLES",
    "STRATEGY_HINTS",
    "EVENT_HINTS",
    "PromptBundle",
    "build_prompts",
]
