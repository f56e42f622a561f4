"""Phase-selection controllers.

Every controller hands the simulator one `PhaseDecision` per
intersection per step. Closed-loop controllers only choose a new phase at
decision points (outside yellow and past min green) and hold the current
phase otherwise; event-aware controllers still feed their detector on
every step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

from .errors import ConfigError, EvalError
from .event_system import (
    DetectorConfig,
    EventDetector,
    SkillBank,
    TrafficEvent,
    dispatch,
    inject_context,
    top_event,
)
from .logs import get_logger
from .skilldsl import EvalContext, Skill, parse
from .skilldsl.interpreter import compile_skill
from .traffic_sim import SimulationMetrics, run_episode
from .traffic_sim.network import NUM_PHASES
from .traffic_sim.scenario import ScenarioConfig
from .traffic_sim.simulator import LaneLinkObservation, Simulator

logger = get_logger(__name__)

CONTROLLER_KINDS = ("skill", "fixed_time", "max_pressure", "handcrafted_preemption", "dispatcher")
ON_ERROR = ("raise", "hold")

Observations = Mapping[int, Sequence[LaneLinkObservation]]


@dataclass(frozen=True)
class PhaseScores:
    scores: Tuple[float, ...]
    chosen: int

    @classmethod
    def from_scores(cls, scores: Sequence[float]) -> "PhaseScores":
        scores = tuple(float(s) for s in scores)
        best = 0
        for k, s in enumerate(scores):
            if s > scores[best]:
                best = k
        return cls(scores, best)


@dataclass(frozen=True)
class PhaseDecision:
    phase: int
    preempt: bool = False
    active: Optional[str] = None
    events: Tuple[TrafficEvent, ...] = ()
    fault: Optional[str] = None


class CompiledSkill:
    """Both code bodies of a skill, compiled once."""

    def __init__(self, skill: Skill):
        self.skill = skill
        self.inlane = compile_skill(parse(skill.inlane_code))
        self.outlane = compile_skill(parse(skill.outlane_code))

    def lane_score(self, link: LaneLinkObservation, extra: Mapping[str, float], index: int) -> float:
        total = 0.0
        for body, obs in ((self.inlane, link.inlane), (self.outlane, link.outlane)):
            bindings = dict(extra)
            bindings.update(obs.bindings())
            bindings["index"] = float(index)
            ctx = EvalContext(bindings)
            body(ctx)
            total += ctx.value[0]
        return total

    def score(self, observations: Observations, extra: Optional[Mapping[str, float]] = None) -> PhaseScores:
        extra = extra or {}
        scores = []
        for k in range(NUM_PHASES):
            scores.append(sum(self.lane_score(link, extra, k) for link in observations.get(k, ())))
        return PhaseScores.from_scores(scores)


def score_phases(skill: Skill, observations: Observations, ctx_extra: Optional[Mapping[str, float]] = None) -> PhaseScores:
    """Score every phase by summing both code bodies over its lane-links.

    ``ctx_extra`` adds event-context bindings; lane variables and
    ``index`` always take precedence over it. Raises `EvalError` when
    any lane-link faults.
    """
    return CompiledSkill(skill).score(observations, ctx_extra)


def max_pressure(observations: Observations) -> PhaseScores:
    """Upstream minus downstream waiting vehicles, summed per phase."""
    return PhaseScores.from_scores(
        [
            sum(link.inlane.num_waiting_vehicle - link.outlane.num_waiting_vehicle for link in observations.get(k, ()))
            for k in range(NUM_PHASES)
        ]
    )


def handcrafted_preemption(observations: Observations, events: Sequence[TrafficEvent]) -> PhaseScores:
    """The emergency vehicle's phase when an ambulance is detected, else max pressure."""
    top = top_event(events)
    if top is not None and top.kind == "emergency":
        phase = int(top.context_map()["emergency_phase"])
        return PhaseScores(tuple(1.0 if k == phase else 0.0 for k in range(NUM_PHASES)), phase)
    return max_pressure(observations)


@dataclass(frozen=True)
class FixedTimePlan:
    major: float = 25.0
    minor: float = 5.0
    yellow: float = 3.0

    def __post_init__(self):
        bad = [k for k in ("major", "minor") if not getattr(self, k) > 0]
        if self.yellow < 0:
            bad.append("yellow")
        if bad:
            raise ConfigError("Fixed-time plan errors:\n" + "\n".join(f"{k} must be positive" for k in bad))

    @property
    def greens(self) -> Tuple[float, ...]:
        return (self.major, self.minor, self.major, self.minor)

    @property
    def cycle(self) -> float:
        return sum(self.greens) + NUM_PHASES * self.yellow

    def phase_at(self, t: float) -> int:
        """Phase requested at time ``t``; the next phase during yellow slots."""
        pos = t % self.cycle
        for k, green in enumerate(self.greens):
            if pos < green - 1e-9:
                return k
            pos -= green
            if pos < self.yellow - 1e-9:
                return (k + 1) % NUM_PHASES
            pos -= self.yellow
        return 0


class Controller:
    """Base class: ``decide(sim)`` returns ``{intersection: PhaseDecision}``."""

    def reset(self, sim: Simulator) -> None:
        pass

    def decide(self, sim: Simulator) -> Dict[int, PhaseDecision]:
        raise NotImplementedError

    def __call__(self, sim: Simulator) -> Dict[int, PhaseDecision]:
        return self.decide(sim)


class FixedTimeController(Controller):
    def __init__(self, plan: FixedTimePlan = FixedTimePlan()):
        self.plan = plan

    def decide(self, sim):
        phase = self.plan.phase_at(sim.t)
        return {node: PhaseDecision(phase) for node in range(len(sim.signals))}


def _min_phase_reached(sim: Simulator, node: int, min_phase: float) -> bool:
    return sim.can_switch(node) and sim.signals[node].green_elapsed >= min_phase - 1e-9


class MaxPressureController(Controller):
    """Max pressure, re-evaluated once the current phase has run ``min_phase`` seconds."""

    def __init__(self, min_phase: float = 10.0):
        if min_phase < 0:
            raise ConfigError(f"min_phase must not be negative, got {min_phase}")
        self.min_phase = float(min_phase)

    def decide(self, sim):
        out = {}
        for node in range(len(sim.signals)):
            if _min_phase_reached(sim, node, self.min_phase):
                out[node] = PhaseDecision(max_pressure(sim.observe(node)).chosen)
            else:
                out[node] = PhaseDecision(sim.phase(node))
        return out


class _EventAware(Controller):
    def __init__(self, detector: DetectorConfig = DetectorConfig()):
        self.detector_config = detector
        self.detector = EventDetector(detector)

    def reset(self, sim):
        self.detector = EventDetector(self.detector_config)

    def _events(self, sim) -> Dict[int, Tuple[TrafficEvent, ...]]:
        return {node: tuple(self.detector.update(sim.snapshot(node))) for node in range(len(sim.signals))}


class HandcraftedPreemptionController(_EventAware):
    """Max pressure plus an immediate switch to an approaching ambulance's phase.

    The preempted phase is held until ``dwell`` seconds after the
    ambulance was last detected at the intersection.
    """

    def __init__(self, detector: DetectorConfig = DetectorConfig(), dwell: float = 20.0, min_phase: float = 10.0):
        if dwell < 0 or min_phase < 0:
            raise ConfigError(f"dwell and min_phase must not be negative, got {dwell} and {min_phase}")
        super().__init__(detector)
        self.dwell = float(dwell)
        self.min_phase = float(min_phase)
        self.holds: Dict[int, Tuple[int, float]] = {}

    def reset(self, sim):
        super().reset(sim)
        self.holds = {}

    def decide(self, sim):
        out = {}
        for node, events in self._events(sim).items():
            top = top_event(events)
            if top is not None and top.kind == "emergency":
                self.holds[node] = (handcrafted_preemption((), events).chosen, sim.t + self.dwell)
            hold = self.holds.get(node)
            if hold is not None and sim.t < hold[1] - 1e-9:
                out[node] = PhaseDecision(hold[0], preempt=True, active="emergency", events=events)
                continue
            self.holds.pop(node, None)
            if _min_phase_reached(sim, node, self.min_phase):
                out[node] = PhaseDecision(max_pressure(sim.observe(node)).chosen, events=events)
            else:
                out[node] = PhaseDecision(sim.phase(node), events=events)
        return out


class SkillController(_EventAware):
    """Run one skill at every intersection.

    With ``on_error="raise"`` an `EvalError` propagates (the episode
    fails); with ``"hold"`` the intersection keeps its phase for the
    step and the decision carries the fault, which the episode counts
    and logs. ``with_events`` injects the top detected event's context
    so event skills can run standalone.
    """

    def __init__(
        self,
        skill: Skill,
        on_error: str = "raise",
        with_events: bool = False,
        detector: DetectorConfig = DetectorConfig(),
    ):
        if on_error not in ON_ERROR:
            raise ConfigError(f"on_error must be one of {', '.join(ON_ERROR)}, got {on_error!r}")
        super().__init__(detector)
        self.skill = skill
        self.compiled = CompiledSkill(skill)
        self.on_error = on_error
        self.with_events = with_events
        self.faults = 0

    def reset(self, sim):
        super().reset(sim)
        self.faults = 0

    def _score(
        self, sim, node: int, compiled: CompiledSkill, extra: Mapping[str, float]
    ) -> Tuple[Optional[int], Optional[str]]:
        try:
            return compiled.score(sim.observe(node), extra).chosen, None
        except EvalError as exc:
            if self.on_error == "raise":
                raise
            self.faults += 1
            logger.debug("skill %s faulted at intersection %s t=%.0f: %s; holding phase", compiled.skill.id, node, sim.t, exc)
            return None, f"{compiled.skill.id}: {exc}"

    def decide(self, sim):
        events = self._events(sim) if self.with_events else {}
        out = {}
        for node in range(len(sim.signals)):
            evs = events.get(node, ())
            phase = sim.phase(node)
            active = fault = None
            if sim.can_switch(node):
                extra = inject_context(top_event(evs), {}) if self.with_events else {}
                chosen, fault = self._score(sim, node, self.compiled, extra)
                if chosen is not None:
                    phase, active = chosen, self.skill.id
            out[node] = PhaseDecision(phase, active=active, events=evs, fault=fault)
        return out


class DispatcherController(SkillController):
    """Detector plus priority dispatch over a skill bank.

    The highest-priority event at an intersection selects the bank entry
    that scores its phases, with that event's context injected.
    """

    def __init__(
        self,
        bank: SkillBank,
        on_error: str = "raise",
        detector: DetectorConfig = DetectorConfig(),
    ):
        super().__init__(bank["normal"], on_error=on_error, with_events=True, detector=detector)
        self.bank = bank
        self.compiled_bank = {kind: CompiledSkill(skill) for kind, skill in bank.skills.items()}

    def decide(self, sim):
        out = {}
        for node, evs in self._events(sim).items():
            phase = sim.phase(node)
            active = fault = None
            if sim.can_switch(node):
                kind, _ = dispatch(evs, self.bank)
                chosen, fault = self._score(sim, node, self.compiled_bank[kind], inject_context(top_event(evs), {}))
                if chosen is not None:
                    phase, active = chosen, kind
            out[node] = PhaseDecision(phase, active=active, events=evs, fault=fault)
        return out


@dataclass(frozen=True)
class ControllerSpec:
    kind: str
    skill: Optional[Skill] = None
    bank: Optional[SkillBank] = None
    plan: FixedTimePlan = field(default_factory=FixedTimePlan)
    on_error: str = "raise"
    with_events: bool = False
    detector: DetectorConfig = field(default_factory=DetectorConfig)

    def __post_init__(self):
        errors = []
        if self.kind not in CONTROLLER_KINDS:
            errors.append(f"kind must be one of {', '.join(CONTROLLER_KINDS)}, got {self.kind!r}")
        if self.kind == "skill" and self.skill is None:
            errors.append("skill controller needs a skill")
        if self.kind == "dispatcher" and self.bank is None:
            errors.append("dispatcher controller needs a skill bank")
        if self.on_error not in ON_ERROR:
            errors.append(f"on_error must be one of {', '.join(ON_ERROR)}")
        if errors:
            raise ConfigError("Controller errors:\n" + "\n".join(errors))

    def build(self) -> Controller:
        if self.kind == "skill":
            return SkillController(self.skill, self.on_error, self.with_events, self.detector)
        if self.kind == "fixed_time":
            return FixedTimeController(self.plan)
        if self.kind == "max_pressure":
            return MaxPressureController()
        if self.kind == "handcrafted_preemption":
            return HandcraftedPreemptionController(self.detector)
        return DispatcherController(self.bank, self.on_error, self.detector)


def build_controller(spec: ControllerSpec) -> Controller:
    return spec.build()


def drive(spec: ControllerSpec, scenario: ScenarioConfig, seed: int = 0, **kwargs: Any) -> SimulationMetrics:
    """Run ``scenario`` once under a fresh controller built from ``spec``."""
    return run_episode(scenario, spec.build(), seed=seed, **kwargs).metrics


__all__ = [
    "CONTROLLER_KINDS",
    "PhaseScores",
    "PhaseDecision",
    "CompiledSkill",
    "score_phases",
    "max_pressure",
    "handcrafted_preemption",
    "FixedTimePlan",
    "Controller",
    "FixedTimeController",
    "MaxPressureController",
    "HandcraftedPreemptionController",
    "SkillController",
    "DispatcherController",
    "ControllerSpec",
    "build_controller",
    "drive",
]
