"""Point-queue simulation of a signalised grid.

Vehicles travel each link at their free-flow speed until they reach the
tail of the queue at the stop line, then wait in that queue until their
lane's phase is green, the lane has accumulated one unit of service
credit (``saturation_flow`` per second of green) and the next lane on
their route has storage. A vehicle counts as waiting, and accrues
delay, while its speed is below ``waiting_speed``. One call to `Simulator.step` advances the
clock by one step in this order: signal decisions, arrivals and
injections, motion, service, waiting-time accrual, metric samples.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Deque, Dict, List, Mapping, Optional, Tuple

import numpy as np

from ..logs import get_logger
from .network import NS_AXIS, NUM_PHASES, TURNS, Network, build_network
from .scenario import ScenarioConfig
from .vehicles import BUS, EMERGENCY, NORMAL, Vehicle

logger = get_logger(__name__)

# Bus line i enters with heading _BUS_HEADINGS[i % 4].
_BUS_HEADINGS = ("S", "E", "N", "W")


@dataclass(frozen=True)
class LaneObservation:
    num_vehicle: float
    num_waiting_vehicle: float
    vehicle_dist: float

    def bindings(self) -> Dict[str, float]:
        return {
            "num_vehicle": self.num_vehicle,
            "num_waiting_vehicle": self.num_waiting_vehicle,
            "vehicle_dist": self.vehicle_dist,
        }


@dataclass(frozen=True)
class LaneLinkObservation:
    """One approach lane with the outgoing link its movement feeds."""

    lane_id: str
    phase: int
    inlane: LaneObservation
    outlane: LaneObservation


@dataclass(frozen=True)
class ApproachVehicle:
    vclass: str
    distance: float  # metres to the stop line
    stop_time: float
    wait: float
    lane_id: str
    phase: int
    red: bool


@dataclass(frozen=True)
class IntersectionSnapshot:
    intersection: int
    time: float
    queue: float
    vehicles: Tuple[ApproachVehicle, ...] = ()


@dataclass
class SignalState:
    phase: int = 0
    green_elapsed: float = 0.0
    yellow_remaining: float = 0.0
    pending: Optional[int] = None
    serving: bool = True
    last_change: Optional[float] = None

    @property
    def in_yellow(self) -> bool:
        return self.pending is not None


class LaneState:
    __slots__ = ("lane", "length", "capacity", "sink", "moving", "queue", "parked", "credit", "blocked", "waiting_speed")

    def __init__(self, lane, length: float, jam_spacing: float, sink: bool, waiting_speed: float = 0.1):
        self.lane = lane
        self.waiting_speed = waiting_speed
        self.length = length
        self.capacity = int(math.floor(length / jam_spacing))
        self.sink = sink
        self.moving: List[Vehicle] = []
        self.queue: Deque[Vehicle] = deque()
        self.parked: List[Vehicle] = []
        self.credit = 0.0
        self.blocked = False

    def count(self) -> int:
        return len(self.moving) + len(self.queue) + len(self.parked)

    def waiting(self) -> int:
        """Vehicles on the lane whose current speed is below ``waiting_speed``."""
        slow = sum(1 for v in self.moving if v.is_waiting(self.waiting_speed))
        return len(self.queue) + len(self.parked) + slow

    def has_room(self) -> bool:
        return self.sink or self.count() < self.capacity

    def positions(self, jam_spacing: float) -> List[float]:
        half = jam_spacing / 2.0
        out = [half + jam_spacing * i for i in range(len(self.queue))]
        out.extend(self.length - v.position for v in self.moving)
        out.extend(self.length - v.position for v in self.parked)
        return out


def _dist(positions: List[float], length: float) -> float:
    n = len(positions)
    if n <= 1:
        return length / (n + 1)
    return (max(positions) - min(positions)) / (n - 1)


def demand_multiplier(pattern: str, heading: str, t: float, duration: float, segments=()) -> float:
    """Time- and axis-dependent demand factor of an entry link."""
    ns = heading in NS_AXIS
    if pattern == "ns_heavy":
        return 1.5 if ns else 0.6
    if pattern == "ew_peaked":
        if not ns and duration / 3.0 <= t < 2.0 * duration / 3.0:
            return 1.8
        return 0.8
    if pattern == "segments":
        factor = 1.0
        for seg in segments:
            if seg.start <= t < seg.end and (seg.axis == "all" or (seg.axis == "ns") == ns):
                factor *= seg.multiplier
        return factor
    return 1.0


def source_multipliers(scenario: ScenarioConfig, sources: List[str]) -> Dict[str, float]:
    """Per-source demand perturbation, fixed by the scenario seed."""
    p = scenario.perturbation
    if p <= 0:
        return {s: 1.0 for s in sources}
    rng = np.random.default_rng(scenario.seed)
    draws = rng.uniform(1.0 - p, 1.0 + p, size=len(sources))
    return {s: float(m) for s, m in zip(sources, draws)}


class Simulator:
    """One episode of one scenario. Not shared between threads."""

    def __init__(self, scenario: ScenarioConfig, seed: int = 0, network: Optional[Network] = None):
        self.scenario = scenario
        self.params = scenario.traffic
        self.dt = float(scenario.step)
        spec = scenario.network
        self.network = network or build_network(spec.rows, spec.cols, spec.link_length)
        self.rng = np.random.default_rng([scenario.seed, seed])
        self.k = 0
        self.signals = [SignalState() for _ in self.network.intersections]
        self.lanes: Dict[str, LaneState] = {}
        for link in self.network.links.values():
            for lane in link.lanes:
                self.lanes[lane.id] = LaneState(
                    lane, link.length, self.params.jam_spacing, link.is_sink, self.params.waiting_speed
                )
        self.approach: List[List[LaneState]] = [
            [self.lanes[lane.id] for lane in self.network.approach_lanes(i.id)] for i in self.network.intersections
        ]
        self.sources = self.network.sources
        self.backlog: Dict[str, Deque[Vehicle]] = {s: deque() for s in self.sources}
        self.multipliers = source_multipliers(scenario, self.sources)
        self.vehicles: List[Vehicle] = []
        self.completed = 0
        self.invalid_decisions = 0
        self.total_wait = 0.0
        self.per_step_queues: List[float] = []
        self.per_step_delays: List[float] = []
        self.incident_wait = 0.0
        self.incident_lane: Optional[str] = None
        self._schedule = self._build_schedule()
        self._obs_cache: Dict[str, LaneObservation] = {}
        self._link_cache: Dict[str, LaneObservation] = {}

    # -- clock -----------------------------------------------------------
    @property
    def t(self) -> float:
        return self.k * self.dt

    @property
    def done(self) -> bool:
        return self.k >= self.scenario.steps

    # -- signals ---------------------------------------------------------
    def phase(self, node: int) -> int:
        return self.signals[node].phase

    def in_yellow(self, node: int) -> bool:
        return self.signals[node].in_yellow

    def can_switch(self, node: int) -> bool:
        sig = self.signals[node]
        return not sig.in_yellow and sig.green_elapsed >= self.params.min_green - 1e-9

    def _apply_decision(self, node: int, decision: Any) -> None:
        sig = self.signals[node]
        phase = getattr(decision, "phase", decision)
        preempt = bool(getattr(decision, "preempt", False))
        if decision is None:
            phase = sig.phase
        if isinstance(phase, bool) or not isinstance(phase, (int, np.integer)) or not 0 <= phase < NUM_PHASES:
            logger.warning("intersection %s: invalid phase %r at t=%.0f, holding phase %s", node, phase, self.t, sig.phase)
            self.invalid_decisions += 1
            phase = sig.phase
        phase = int(phase)

        if sig.in_yellow:
            sig.serving = False
            sig.yellow_remaining -= self.dt
            if sig.yellow_remaining <= 1e-9:
                self._finish_yellow(sig)
            return
        if phase != sig.phase and (preempt or sig.green_elapsed >= self.params.min_green - 1e-9):
            sig.pending = phase
            sig.serving = False
            sig.last_change = self.t
            sig.yellow_remaining = self.params.yellow - self.dt
            if sig.yellow_remaining <= 1e-9:
                self._finish_yellow(sig)
            return
        sig.serving = True
        sig.green_elapsed += self.dt

    @staticmethod
    def _finish_yellow(sig: SignalState) -> None:
        sig.phase = sig.pending
        sig.pending = None
        sig.yellow_remaining = 0.0
        sig.green_elapsed = 0.0

    # -- routes and spawning --------------------------------------------
    def _route(self, link_id: str, first_turn: str) -> List[Tuple[str, str]]:
        links = self.network.links
        route = []
        link, turn = links[link_id], first_turn
        while True:
            if link.is_sink:
                route.append((link.id, link.lanes[0].id))
                return route
            lane = link.lanes[TURNS.index(turn)]
            route.append((link.id, lane.id))
            link, turn = links[lane.out_link], "through"

    def _spawn(self, source: str, vclass: str, first_turn: str) -> Vehicle:
        speed = self.params.emergency_speed if vclass == EMERGENCY else self.params.free_flow_speed
        v = Vehicle(len(self.vehicles), vclass, self._route(source, first_turn), self.t, speed)
        self.vehicles.append(v)
        self.backlog[source].append(v)
        return v

    def _draw_turn(self) -> str:
        ratios = self.scenario.demand.turn_ratios
        return TURNS[int(self.rng.choice(3, p=ratios))]

    def _bus_source(self, line: int) -> str:
        net = self.network
        heading = _BUS_HEADINGS[line % 4]
        if heading in NS_AXIS:
            col = (line // 2) % net.cols
            node = col if heading == "S" else (net.rows - 1) * net.cols + col
        else:
            row = (line // 2) % net.rows
            node = row * net.cols if heading == "E" else row * net.cols + net.cols - 1
        return net.intersections[node].incoming[heading]

    def incident_link(self) -> str:
        net = self.network
        row = net.rows // 2
        node = row * net.cols
        if net.cols > 1:
            return net.intersections[node].outgoing["E"]
        return net.intersections[node].incoming["E"]

    def _build_schedule(self) -> Dict[int, List[Tuple[str, Any]]]:
        schedule: Dict[int, List[Tuple[str, Any]]] = {}
        horizon = self.scenario.duration

        def at(time: float, action: Tuple[str, Any]) -> None:
            schedule.setdefault(int(round(time / self.dt)), []).append(action)

        for inj in self.scenario.events:
            for time in inj.times(horizon):
                if inj.kind == "emergency":
                    at(time, ("emergency", None))
                elif inj.kind == "bus":
                    for line in range(inj.lines):
                        at(time, ("bus", line))
                elif inj.kind == "incident":
                    at(time, ("incident_start", inj))
                    at(time + inj.duration, ("incident_end", inj))
        return schedule

    def _start_incident(self, inj) -> None:
        link = self.network.links[self.incident_link()]
        lane = link.lanes[TURNS.index("through")]
        ls = self.lanes[lane.id]
        v = Vehicle(len(self.vehicles), NORMAL, self._route(link.id, "through"), self.t, self.params.free_flow_speed)
        v.position = link.length / 2.0
        v.current_speed = 0.0
        v.parked_until = self.t + inj.duration
        self.vehicles.append(v)
        ls.parked.append(v)
        ls.blocked = True
        self.incident_lane = lane.id
        logger.debug("incident on lane %s from t=%.0f for %.0f s", lane.id, self.t, inj.duration)

    def _end_incident(self) -> None:
        if self.incident_lane is None:
            return
        ls = self.lanes[self.incident_lane]
        ls.blocked = False
        for v in ls.parked:
            v.parked_until = None
            v.stop_time = 0.0
            v.current_speed = v.speed
            ls.moving.append(v)
        ls.parked.clear()

    def _arrivals(self) -> None:
        demand = self.scenario.demand
        for source in self.sources:
            heading = self.network.links[source].heading
            rate = demand.base_rate * self.multipliers[source]
            rate *= demand_multiplier(demand.pattern, heading, self.t, self.scenario.duration, demand.segments)
            if rate > 0:
                for _ in range(int(self.rng.poisson(rate * self.dt))):
                    self._spawn(source, NORMAL, self._draw_turn())
        for kind, payload in self._schedule.get(self.k, ()):
            if kind == "emergency":
                source = self.sources[int(self.rng.integers(len(self.sources)))]
                self._spawn(source, EMERGENCY, self._draw_turn())
            elif kind == "bus":
                self._spawn(self._bus_source(payload), BUS, "through")
            elif kind == "incident_start":
                self._start_incident(payload)
            elif kind == "incident_end":
                self._end_incident()
        for source, pending in self.backlog.items():
            while pending:
                v = pending[0]
                ls = self.lanes[v.lane_id]
                if not ls.has_room():
                    break
                pending.popleft()
                v.position = 0.0
                v.stop_time = 0.0
                v.current_speed = v.speed
                ls.moving.append(v)

    # -- motion and service ----------------------------------------------
    def _motion(self) -> None:
        jam = self.params.jam_spacing
        for ls in self.lanes.values():
            if not ls.moving:
                continue
            staying = []
            for v in sorted(ls.moving, key=lambda x: -x.position):
                v.position += v.speed * self.dt
                v.current_speed = v.speed
                if ls.sink:
                    if v.position >= ls.length:
                        v.exit_time = self.t + self.dt
                        self.completed += 1
                    else:
                        staying.append(v)
                elif v.position >= ls.length - jam * len(ls.queue):
                    v.queued = True
                    v.stop_time = 0.0
                    v.current_speed = 0.0
                    if v.vclass == EMERGENCY:
                        ls.queue.appendleft(v)
                    else:
                        ls.queue.append(v)
                else:
                    staying.append(v)
            ls.moving = staying

    def _service(self) -> None:
        flow = self.params.saturation_flow * self.dt
        for node, sig in enumerate(self.signals):
            for ls in self.approach[node]:
                if not sig.serving or ls.lane.phase != sig.phase or ls.blocked:
                    ls.credit = 0.0
                    continue
                ls.credit += flow
                if ls.queue and ls.credit >= 1.0 - 1e-9:
                    head = ls.queue[0]
                    target = self.lanes[head.next_leg[1]]
                    if target.has_room():
                        ls.queue.popleft()
                        ls.credit -= 1.0
                        head.leg += 1
                        head.queued = False
                        head.position = 0.0
                        head.stop_time = 0.0
                        head.current_speed = head.speed
                        target.moving.append(head)
                        for v in ls.queue:
                            v.stop_time = 0.0
                        continue
                ls.credit = min(ls.credit, 1.0)

    def _accrue(self) -> int:
        dt = self.dt
        threshold = self.params.waiting_speed
        waiting = 0
        for ls in self.lanes.values():
            for v in ls.queue:
                v.accrue_wait(dt)
            for v in ls.parked:
                v.accrue_wait(dt)
            for v in ls.moving:
                if v.is_waiting(threshold):
                    v.accrue_wait(dt)
            waiting += ls.waiting()
        for pending in self.backlog.values():
            for v in pending:
                v.accrue_wait(dt)
            waiting += len(pending)
        return waiting

    def _incident_window(self) -> Optional[Tuple[float, float]]:
        incidents = self.scenario.injections("incident")
        if not incidents:
            return None
        inj = incidents[0]
        return inj.start, inj.start + inj.duration + 300.0

    def step(self, decisions: Optional[Mapping[int, Any]] = None) -> None:
        """Advance the simulation by one step."""
        decisions = decisions or {}
        for node in range(len(self.signals)):
            self._apply_decision(node, decisions.get(node, self.signals[node].phase))
        self._arrivals()
        self._motion()
        self._service()
        waiting = self._accrue()
        self.total_wait += waiting * self.dt
        window = self._incident_window()
        if window and window[0] <= self.t < window[1]:
            self.incident_wait += waiting * self.dt
        queues = self.queue_lengths()
        self.per_step_queues.append(sum(queues) / len(queues))
        self.per_step_delays.append(self.total_wait / len(self.vehicles) if self.vehicles else 0.0)
        self._obs_cache.clear()
        self._link_cache.clear()
        self.k += 1

    # -- observation -----------------------------------------------------
    def queue_lengths(self) -> List[float]:
        return [float(sum(ls.waiting() for ls in lanes)) for lanes in self.approach]

    def lane_observation(self, lane_id: str) -> LaneObservation:
        obs = self._obs_cache.get(lane_id)
        if obs is None:
            ls = self.lanes[lane_id]
            obs = LaneObservation(
                float(ls.count()), float(ls.waiting()), _dist(ls.positions(self.params.jam_spacing), ls.length)
            )
            self._obs_cache[lane_id] = obs
        return obs

    def link_observation(self, link_id: str) -> LaneObservation:
        obs = self._link_cache.get(link_id)
        if obs is None:
            link = self.network.links[link_id]
            count = waiting = 0
            positions: List[float] = []
            for lane in link.lanes:
                ls = self.lanes[lane.id]
                count += ls.count()
                waiting += ls.waiting()
                positions.extend(ls.positions(self.params.jam_spacing))
            obs = LaneObservation(float(count), float(waiting), _dist(positions, link.length))
            self._link_cache[link_id] = obs
        return obs

    def observe(self, node: int) -> Dict[int, List[LaneLinkObservation]]:
        """Lane-link observations of ``node`` grouped by serving phase."""
        inter = self.network.intersections[node]
        out: Dict[int, List[LaneLinkObservation]] = {}
        for phase, lane_ids in inter.phases.items():
            out[phase] = [
                LaneLinkObservation(
                    lid, phase, self.lane_observation(lid), self.link_observation(self.network.lanes[lid].out_link)
                )
                for lid in lane_ids
            ]
        return out

    def snapshot(self, node: int) -> IntersectionSnapshot:
        """Approach vehicles of ``node`` as seen by event detectors."""
        sig = self.signals[node]
        jam = self.params.jam_spacing
        vehicles = []
        for ls in self.approach[node]:
            phase = ls.lane.phase
            red = sig.in_yellow or phase != sig.phase
            for i, v in enumerate(ls.queue):
                vehicles.append(ApproachVehicle(v.vclass, jam / 2 + jam * i, v.stop_time, v.cumulative_wait, ls.lane.id, phase, red))
            for v in ls.moving + ls.parked:
                vehicles.append(
                    ApproachVehicle(v.vclass, ls.length - v.position, v.stop_time, v.cumulative_wait, ls.lane.id, phase, red)
                )
        queue = float(sum(ls.waiting() for ls in self.approach[node]))
        return IntersectionSnapshot(node, self.t, queue, tuple(vehicles))

    # -- accounting ------------------------------------------------------
    def in_network(self) -> int:
        on_links = sum(ls.count() for ls in self.lanes.values())
        return on_links + sum(len(p) for p in self.backlog.values())

    @property
    def injected(self) -> int:
        return len(self.vehicles)

    def incident_vehicle_count(self) -> int:
        window = self._incident_window()
        if window is None:
            return 0
        start, end = window
        return sum(1 for v in self.vehicles if v.entry_time < end and (v.exit_time is None or v.exit_time > start))


__all__ = [
    "LaneObservation",
    "LaneLinkObservation",
    "ApproachVehicle",
    "IntersectionSnapshot",
    "SignalState",
    "LaneState",
    "demand_multiplier",
    "source_multipliers",
    "Simulator",
]
