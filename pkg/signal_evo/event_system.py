"""Event detection, priority dispatch and event-context injection.

Events are ranked emergency > incident > transit > congestion; with no
event the normal skill is active. Detection reads an
`IntersectionSnapshot`, so detectors can be driven from the simulator or
from hand-built snapshots.
"""
from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass, replace
from typing import Any, Deque, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .errors import ConfigError
from .metrics import percentile
from .skilldsl import Skill, VariableWhitelist, load_skill
from .skilldsl.whitelist import EVENT_VARIABLES
from .traffic_sim.simulator import IntersectionSnapshot
from .traffic_sim.vehicles import BUS, EMERGENCY


EVENT_KINDS = ("emergency", "incident", "transit", "congestion")
PRIORITY = {"emergency": 0, "incident": 1, "transit": 2, "congestion": 3, "normal": 4}
BANK_KINDS = ("normal",) + EVENT_KINDS

_CONTEXT_KEYS = {
    "emergency": ("emergency_distance", "emergency_phase"),
    "transit": ("bus_count", "bus_delay"),
    "incident": ("incident_blocked",),
    "congestion": ("congestion_level",),
}


@dataclass(frozen=True)
class TrafficEvent:
    kind: str
    intersection: int
    context: Tuple[Tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.kind not in PRIORITY or self.kind == "normal":
            raise ValueError(f"unknown event kind {self.kind!r}")
        extra = {k for k, _ in self.context} - set(_CONTEXT_KEYS[self.kind])
        if extra:
            raise ValueError(f"{self.kind} event cannot carry {sorted(extra)}")

    @classmethod
    def make(cls, kind: str, intersection: int, **context: float) -> "TrafficEvent":
        return cls(kind, intersection, tuple(sorted((k, float(v)) for k, v in context.items())))

    @property
    def priority(self) -> int:
        return PRIORITY[self.kind]

    @property
    def label(self) -> str:
        return f"P{self.priority}"

    def context_map(self) -> Dict[str, float]:
        return dict(self.context)

    def to_record(self) -> Dict[str, Any]:
        return {"kind": self.kind, "priority": self.priority, "intersection": self.intersection, "context": self.context_map()}


@dataclass(frozen=True)
class DetectorConfig:
    emergency_radius: float = 200.0
    incident_stop_threshold: float = 120.0
    signal_stop_radius: float = 50.0
    congestion_percentile: float = 90.0
    congestion_window: int = 300

    def __post_init__(self):
        bad = [k for k, v in self.__dict__.items() if not v > 0]
        if bad:
            raise ConfigError("Detector errors:\n" + "\n".join(f"{k} must be positive" for k in bad))


def congestion_level(current: float, history: Sequence[float], q: float = 90.0) -> Optional[int]:
    """None when ``current`` does not exceed P``q`` of ``history``, else the level 0-3.

    The level counts how many of the quartile marks of the ``[P90, max]``
    band ``current`` exceeds.
    """
    threshold = percentile(history, q)
    if not current > threshold:
        return None
    top = max(history)
    level = sum(1 for k in (1, 2, 3) if current > threshold + (top - threshold) * k / 4.0)
    return min(level, 3)


def detect(
    snapshot: IntersectionSnapshot,
    queue_history: Sequence[float] = (),
    cfg: DetectorConfig = DetectorConfig(),
) -> List[TrafficEvent]:
    """Events at one intersection, sorted by priority.

    ``queue_history`` holds the intersection's queue samples before the
    current one; the congestion detector stays silent until it spans the
    configured window.
    """
    node = snapshot.intersection
    events: List[TrafficEvent] = []

    emergencies = [v for v in snapshot.vehicles if v.vclass == EMERGENCY and v.distance <= cfg.emergency_radius]
    if emergencies:
        nearest = min(emergencies, key=lambda v: (v.distance, v.phase))
        events.append(TrafficEvent.make("emergency", node, emergency_distance=nearest.distance, emergency_phase=nearest.phase))

    stuck = {
        v.lane_id
        for v in snapshot.vehicles
        if v.stop_time > cfg.incident_stop_threshold and not (v.distance <= cfg.signal_stop_radius and v.red)
    }
    if stuck:
        events.append(TrafficEvent.make("incident", node, incident_blocked=len(stuck)))

    buses = [v for v in snapshot.vehicles if v.vclass == BUS]
    if buses:
        events.append(TrafficEvent.make("transit", node, bus_count=len(buses), bus_delay=sum(v.wait for v in buses)))

    window = int(cfg.congestion_window)
    if len(queue_history) >= window:
        level = congestion_level(snapshot.queue, list(queue_history)[-window:], cfg.congestion_percentile)
        if level is not None:
            events.append(TrafficEvent.make("congestion", node, congestion_level=level))

    return sorted(events, key=lambda e: e.priority)


def top_event(events: Iterable[TrafficEvent]) -> Optional[TrafficEvent]:
    ranked = sorted(events, key=lambda e: e.priority)
    return ranked[0] if ranked else None


def active_kind(events: Iterable[TrafficEvent]) -> str:
    top = top_event(events)
    return top.kind if top else "normal"


def inject_context(event: Optional[TrafficEvent], base: Mapping[str, float]) -> Dict[str, float]:
    """Bindings for an event skill: neutral event variables, the event's
    context, then ``base`` (lane variables are never overwritten)."""
    out = {name: 0.0 for name in EVENT_VARIABLES}
    if event is not None:
        out.update(event.context_map())
    out.update(base)
    return out


@dataclass(frozen=True)
class SkillBank:
    skills: Mapping[str, Skill]

    def __post_init__(self):
        missing = [k for k in BANK_KINDS if k not in self.skills]
        if missing:
            raise ConfigError("Skill bank errors:\n" + "\n".join(f"missing {k} skill" for k in missing))

    def __getitem__(self, kind: str) -> Skill:
        return self.skills[kind]

    def with_skill(self, kind: str, skill: Skill) -> "SkillBank":
        if kind not in BANK_KINDS:
            raise ConfigError(f"unknown skill bank entry {kind!r}")
        skills = dict(self.skills)
        skills[kind] = skill
        return replace(self, skills=skills)

    @classmethod
    def load(cls, directory: str) -> "SkillBank":
        errors, skills = [], {}
        whitelist = VariableWhitelist.event()
        for kind in BANK_KINDS:
            path = os.path.join(directory, f"{kind}.json")
            try:
                skills[kind] = load_skill(path, whitelist)
            except ConfigError as exc:
                errors.append(str(exc))
        if errors:
            raise ConfigError("Skill bank errors:\n" + "\n".join(errors))
        return cls(skills)

    @classmethod
    def load_default(cls) -> "SkillBank":
        from .config import settings

        return cls.load(settings.SKILL_BANK_DIR)


def dispatch(events: Iterable[TrafficEvent], bank: SkillBank) -> Tuple[str, Skill]:
    """The highest-priority active kind and its skill; ``normal`` when quiet."""
    kind = active_kind(events)
    return kind, bank[kind]


class EventDetector:
    """Per-episode detector keeping each intersection's queue history."""

    def __init__(self, cfg: DetectorConfig = DetectorConfig()):
        self.cfg = cfg
        self.histories: Dict[int, Deque[float]] = {}

    def update(self, snapshot: IntersectionSnapshot) -> List[TrafficEvent]:
        history = self.histories.setdefault(snapshot.intersection, deque(maxlen=int(self.cfg.congestion_window)))
        events = detect(snapshot, history, self.cfg)
        history.append(snapshot.queue)
        return events


__all__ = [
    "EVENT_KINDS",
    "PRIORITY",
    "BANK_KINDS",
    "TrafficEvent",
    "DetectorConfig",
    "congestion_level",
    "detect",
    "top_event",
    "active_kind",
    "inject_context",
    "SkillBank",
    "dispatch",
    "EventDetector",
]
