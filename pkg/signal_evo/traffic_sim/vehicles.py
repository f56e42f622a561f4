"""Vehicles and their classes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

NORMAL = "normal"
EMERGENCY = "emergency"
BUS = "bus"
VEHICLE_CLASSES = (NORMAL, EMERGENCY, BUS)

# Persons per vehicle for person-delay accounting.
OCCUPANCY = {NORMAL: 1.5, EMERGENCY: 1.5, BUS: 30.0}


@dataclass
class Vehicle:
    id: int
    vclass: str
    route: List[Tuple[str, str]]  # (link id, lane id) in travel order
    entry_time: float
    speed: float
    leg: int = 0
    position: float = 0.0
    queued: bool = False
    parked_until: Optional[float] = None
    exit_time: Optional[float] = None
    cumulative_wait: float = 0.0
    stop_time: float = 0.0
    current_speed: Optional[float] = None

    def __post_init__(self):
        if self.current_speed is None:
            self.current_speed = self.speed

    @property
    def occupancy(self) -> float:
        return OCCUPANCY[self.vclass]

    @property
    def link_id(self) -> str:
        return self.route[self.leg][0]

    @property
    def lane_id(self) -> str:
        return self.route[self.leg][1]

    @property
    def next_leg(self) -> Optional[Tuple[str, str]]:
        if self.leg + 1 < len(self.route):
            return self.route[self.leg + 1]
        return None

    def is_waiting(self, waiting_speed: float) -> bool:
        """Stopped or crawling below ``waiting_speed`` (m/s)."""
        return self.queued or self.parked_until is not None or self.current_speed < waiting_speed

    def accrue_wait(self, dt: float) -> None:
        self.cumulative_wait += dt
        self.stop_time += dt

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "vclass": self.vclass,
            "occupancy": self.occupancy,
            "delay": self.cumulative_wait,
            "entry_time": self.entry_time,
            "exit_time": self.exit_time,
        }


__all__ = ["NORMAL", "EMERGENCY", "BUS", "VEHICLE_CLASSES", "OCCUPANCY", "Vehicle"]
