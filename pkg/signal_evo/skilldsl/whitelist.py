"""Variable whitelist and alias resolution for skill code."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import FrozenSet, Optional

LANE_VARIABLES = ("num_vehicle", "num_waiting_vehicle", "vehicle_dist")

EVENT_VARIABLES = (
    "emergency_distance",
    "emergency_phase",
    "bus_count",
    "bus_delay",
    "incident_blocked",
    "congestion_level",
)

ACCUMULATOR = "value"
INDEX_VARIABLE = "index"
BUILTINS = frozenset({"min", "max", "abs", "sum", "len", "range"})

# Spellings used by published skill listings.
SHORTHAND = {
    "waiting": "num_waiting_vehicle",
    "waiting_vehicle": "num_waiting_vehicle",
    "vehicles": "num_vehicle",
    "dist": "vehicle_dist",
}

_INLANE_ALIAS = re.compile(r"^inlane_(\d+)_(num_vehicle|num_waiting_vehicle|vehicle_dist)$")
_OUTLANE_ALIAS = re.compile(r"^outlane_(\d+)_(num_vehicle|vehicle_dist)$")


def canonical_name(name: str) -> Optional[str]:
    """Map a lane-variable spelling to its abstract name, or None.

    Event variables, ``index`` and builtins are not lane variables and
    return None.
    """
    if name in LANE_VARIABLES:
        return name
    if name in SHORTHAND:
        return SHORTHAND[name]
    m = _INLANE_ALIAS.match(name) or _OUTLANE_ALIAS.match(name)
    if m:
        return m.group(2)
    return None


@dataclass(frozen=True)
class VariableWhitelist:
    event_variables: FrozenSet[str] = field(default_factory=frozenset)
    builtins: FrozenSet[str] = BUILTINS

    @classmethod
    def lane(cls) -> "VariableWhitelist":
        return cls()

    @classmethod
    def event(cls) -> "VariableWhitelist":
        return cls(event_variables=frozenset(EVENT_VARIABLES))

    @property
    def lane_variables(self) -> FrozenSet[str]:
        return frozenset(LANE_VARIABLES) | frozenset(SHORTHAND)

    def resolve(self, name: str) -> Optional[str]:
        """Return the binding name ``name`` reads, or None when not allowed."""
        lane = canonical_name(name)
        if lane is not None:
            return lane
        if name == INDEX_VARIABLE:
            return name
        if name in self.event_variables:
            return name
        return None

    def allows_call(self, func: str) -> bool:
        return func in self.builtins


__all__ = [
    "LANE_VARIABLES",
    "EVENT_VARIABLES",
    "ACCUMULATOR",
    "INDEX_VARIABLE",
    "BUILTINS",
    "SHORTHAND",
    "canonical_name",
    "VariableWhitelist",
]
