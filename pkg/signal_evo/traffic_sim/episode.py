"""Run a controller over a whole scenario and aggregate the outcome."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Tuple, Union

from ..errors import EpisodeFailure, EvalError, StorageError
from ..logs import get_logger
from .scenario import ScenarioConfig
from .simulator import Simulator
from .vehicles import BUS, EMERGENCY

logger = get_logger(__name__)


@dataclass
class SimulationMetrics:
    avg_delay: float = 0.0
    avg_queue: float = 0.0
    throughput: int = 0
    emergency_delay: Optional[float] = None
    bus_person_delay: Optional[float] = None
    incident_delay: Optional[float] = None
    class_delays: Dict[str, Tuple[float, int]] = field(default_factory=dict)
    injected: int = 0
    completed: int = 0
    faults: int = 0
    per_step_queues: List[float] = field(default_factory=list, repr=False)
    per_step_delays: List[float] = field(default_factory=list, repr=False)

    def mean_delay_excluding(self, vclass: str) -> float:
        """Mean delay of every vehicle not in ``vclass``."""
        total = count = 0.0
        for cls, (s, n) in self.class_delays.items():
            if cls != vclass:
                total += s
                count += n
        return total / count if count else 0.0

    def summary(self) -> Dict[str, Any]:
        """Scalar fields only, for audit records and tables."""
        return {
            "avg_delay": self.avg_delay,
            "avg_queue": self.avg_queue,
            "throughput": self.throughput,
            "emergency_delay": self.emergency_delay,
            "bus_person_delay": self.bus_person_delay,
            "incident_delay": self.incident_delay,
            "injected": self.injected,
            "completed": self.completed,
            "faults": self.faults,
        }


@dataclass
class EpisodeResult:
    metrics: SimulationMetrics
    log: List[Dict[str, Any]] = field(default_factory=list)
    vehicles: List[Dict[str, Any]] = field(default_factory=list)
    invalid_decisions: int = 0


def collect_metrics(sim: Simulator) -> SimulationMetrics:
    vehicles = sim.vehicles
    class_delays: Dict[str, Tuple[float, int]] = {}
    for v in vehicles:
        s, n = class_delays.get(v.vclass, (0.0, 0))
        class_delays[v.vclass] = (s + v.cumulative_wait, n + 1)
    n = len(vehicles)
    avg_delay = sum(v.cumulative_wait for v in vehicles) / n if n else 0.0
    steps = len(sim.per_step_queues)
    avg_queue = sum(sim.per_step_queues) / steps if steps else 0.0

    emergency_delay = None
    if EMERGENCY in class_delays:
        s, c = class_delays[EMERGENCY]
        emergency_delay = s / c
    bus_person_delay = None
    if BUS in class_delays:
        weight = sum(v.occupancy for v in vehicles)
        bus_person_delay = sum(v.occupancy * v.cumulative_wait for v in vehicles) / weight
    incident_delay = None
    if sim.scenario.injections("incident"):
        present = sim.incident_vehicle_count()
        incident_delay = sim.incident_wait / present if present else 0.0

    return SimulationMetrics(
        avg_delay=avg_delay,
        avg_queue=avg_queue,
        throughput=sim.completed,
        emergency_delay=emergency_delay,
        bus_person_delay=bus_person_delay,
        incident_delay=incident_delay,
        class_delays=class_delays,
        injected=sim.injected,
        completed=sim.completed,
        per_step_queues=list(sim.per_step_queues),
        per_step_delays=list(sim.per_step_delays),
    )


def _decide(controller: Any) -> Callable[[Simulator], Mapping[int, Any]]:
    if hasattr(controller, "decide"):
        return controller.decide
    if callable(controller):
        return controller
    raise TypeError(f"controller {controller!r} has no decide() and is not callable")


def run_episode(
    scenario: ScenarioConfig,
    controller: Any,
    seed: int = 0,
    record_log: bool = False,
) -> EpisodeResult:
    """Simulate ``scenario`` under ``controller`` for its full duration.

    ``controller`` is a callable (or an object with ``decide``) taking
    the simulator and returning ``{intersection: phase or decision}``.
    An `EvalError` raised by the controller aborts the episode with
    `EpisodeFailure`. Decisions that carry a ``fault`` (a skill that
    faulted while holding its phase) are counted in ``metrics.faults``
    and, with ``record_log``, appear in the log records.
    """
    sim = Simulator(scenario, seed)
    if hasattr(controller, "reset"):
        controller.reset(sim)
    decide = _decide(controller)
    log: List[Dict[str, Any]] = []
    faults = 0
    while not sim.done:
        t = sim.t
        try:
            decisions = decide(sim) or {}
        except EvalError as exc:
            raise EpisodeFailure(f"controller fault in scenario {scenario.name} at t={t:.0f}: {exc}") from exc
        sim.step(decisions)
        faults += sum(1 for d in decisions.values() if getattr(d, "fault", None))
        if record_log:
            queues = sim.queue_lengths()
            for node, sig in enumerate(sim.signals):
                d = decisions.get(node)
                log.append(
                    {
                        "t": t,
                        "intersection": node,
                        "phase": sig.phase,
                        "yellow": sig.in_yellow,
                        "queue": queues[node],
                        "events": [e.to_record() for e in getattr(d, "events", ())],
                        "active": getattr(d, "active", None),
                        "fault": getattr(d, "fault", None),
                    }
                )
    metrics = collect_metrics(sim)
    metrics.faults = faults
    if faults:
        logger.warning("scenario %s seed %s: %d skill faults, phases held", scenario.name, seed, faults)
    if sim.invalid_decisions:
        logger.warning("scenario %s seed %s: %d invalid decisions clamped", scenario.name, seed, sim.invalid_decisions)
    return EpisodeResult(
        metrics,
        log,
        [v.to_record() for v in sim.vehicles] if record_log else [],
        sim.invalid_decisions,
    )


def write_episode_log(path: Union[str, Path], records: Iterable[Mapping[str, Any]]) -> Path:
    """Write one JSON object per line."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")
    except OSError as exc:
        raise StorageError(f"cannot write episode log {path}: {exc}") from exc
    return path


__all__ = ["SimulationMetrics", "EpisodeResult", "collect_metrics", "run_episode", "write_episode_log"]
