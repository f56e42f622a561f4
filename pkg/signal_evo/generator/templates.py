"""Skill bodies the scripted generator rewrites from.

The routine pool holds the published routine skills and a few
pressure-style variants; the event pools hold one published skill per
event kind.
"""
from __future__ import annotations

from typing import Dict, NamedTuple, Optional, Tuple


class Template(NamedTuple):
    name: str
    description: str
    guidance: str
    inlane_code: str
    outlane_code: str


ROUTINE_TEMPLATES: Tuple[Template, ...] = (
    Template(
        "superlinear-queue",
        "Superlinear queue weight with a capped spacing bonus.",
        "Prefer phases whose queues are long and spread out.",
        "value[0] += waiting**1.5 + min(3, waiting)*dist",
        "value[0] += 0",
    ),
    Template(
        "capped-quadratic",
        "Queue weight that grows quadratically for short queues and linearly past three vehicles.",
        "Breaks ties between medium queues in favour of the longer one.",
        "value[0] += waiting * (1 + min(3, waiting))",
        "value[0] += 0",
    ),
    Template(
        "spacing-branch",
        "Long queues are scored by waiting count times an effective spacing term plus an occupancy bonus; "
        "short queues get a doubled waiting count. Downstream room adds capacity credit.",
        "Use on arterial grids with uneven queues.",
        "if inlane_2_num_waiting_vehicle > 5:\n"
        "    value[0] += inlane_2_num_waiting_vehicle * (max(1, inlane_2_vehicle_dist) - inlane_2_vehicle_dist % 3)"
        " + inlane_2_num_vehicle // 4\n"
        "elif inlane_2_num_waiting_vehicle > 0:\n"
        "    value[0] += inlane_2_num_waiting_vehicle * 2",
        "value[0] += min(10, outlane_2_num_vehicle) * max(0, outlane_2_vehicle_dist - 3)",
    ),
    Template(
        "spacing-product",
        "Waiting count times lane spacing plus a small occupancy term.",
        "Suited to directional demand where one axis dominates.",
        "value[0] += waiting * max(1, dist) + vehicles // 5",
        "value[0] += 0",
    ),
    Template(
        "excess-squared",
        "Squares the queue in excess of a third of the lane occupancy.",
        "Suited to peaked demand; ignores lanes that are mostly moving.",
        "if waiting > vehicles // 3:\n    value[0] += (waiting - vehicles // 3) ** 2",
        "value[0] += 0",
    ),
    Template(
        "pressure",
        "Upstream queue minus downstream occupancy.",
        "Keeps vehicles moving into links that have room.",
        "value[0] += waiting",
        "value[0] -= num_vehicle * 0.5",
    ),
    Template(
        "pressure-capped",
        "Pressure with a saturation cap on the upstream queue.",
        "Avoids starving phases behind one very long queue.",
        "value[0] += min(12, waiting) * 2 + vehicles * 0.25",
        "value[0] -= min(10, num_vehicle)",
    ),
)

EVENT_TEMPLATES: Dict[str, Tuple[Template, ...]] = {
    "emergency": (
        Template(
            "emergency-preemption",
            "Score the ambulance's phase by its proximity; otherwise serve waiting vehicles.",
            "Active while an emergency vehicle is within detection range.",
            "if emergency_distance > 0:\n"
            "    if emergency_phase == index:\n"
            "        value[0] += max(0, 200 - emergency_distance) * 10\n"
            "    else:\n"
            "        value[0] += waiting * 2\n"
            "else:\n"
            "    value[0] += waiting * 3",
            "value[0] -= num_vehicle * 0.3",
        ),
    ),
    "transit": (
        Template(
            "transit-density",
            "Heavy weight on waiting vehicles plus a density term where buses bunch up.",
            "Active while buses are on an approach.",
            "value[0] += waiting * 4 + vehicles / max(1, dist)",
            "value[0] -= (vehicles / max(1, dist)) * 2",
        ),
    ),
    "incident": (
        Template(
            "incident-flow",
            "While a lane is blocked, favour phases whose lanes still move.",
            "Active while a vehicle is stopped away from a red stop line.",
            "if incident_blocked > 0:\n    value[0] += max(0, vehicles - waiting) * 5\nelse:\n    value[0] += waiting * 3",
            "value[0] -= vehicles * 0.5",
        ),
    ),
    "congestion": (
        Template(
            "saturation-response",
            "Squared queues with an extra term that grows with congestion severity.",
            "Active when the queue exceeds its recent 90th percentile.",
            "value[0] += waiting ** 2\nif congestion_level > 1:\n    value[0] += waiting * congestion_level * 2",
            "value[0] += dist * 0.5",
        ),
    ),
}


def template_pool(event_kind: Optional[str] = None) -> Tuple[Template, ...]:
    if event_kind is None:
        return ROUTINE_TEMPLATES
    return EVENT_TEMPLATES.get(event_kind, ()) + ROUTINE_TEMPLATES


__all__ = ["Template", "ROUTINE_TEMPLATES", "EVENT_TEMPLATES", "template_pool"]
