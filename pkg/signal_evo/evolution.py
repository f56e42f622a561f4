"""Generate, test, evolve, solidify.

One run starts from a seed skill, evaluates it on every scenario (which
also calibrates the per-scenario fitness constant when the scenario
leaves it unset) and archives it as the first capsule. Each generation
then turns the elite's recent history into evolution signals, phrases
them as a direction, asks the generator for ``population`` drafts,
evaluates every validated draft on every scenario and keeps the best
skill seen so far as the elite. A draft that strictly beats the elite is
solidified; otherwise the stagnation counter grows until it forces a
structural rewrite.

All records go to an `AssetStore`. After every generation a
``checkpointed`` audit event and ``checkpoint.yml`` capture what a
resumed run needs to continue exactly where the original stopped.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .controller import ControllerSpec, drive
from .errors import ConfigError, EpisodeFailure, GeneratorUnavailable, NotAnImprovement, StorageError
from .event_system import DetectorConfig, SkillBank
from .generator import NEUTRAL_DIRECTION, REPRESENTATIONS, DraftRequest, build_prompts, generate
from .logs import get_logger
from .metrics import EVENT_WEIGHTS, FitnessConfig, calibrate_constant, fitness, percentile
from .skilldsl import Skill, VariableWhitelist, seed_skill
from .store import AssetStore, json_safe
from .traffic_sim import EpisodeResult, ScenarioConfig, make_scenario, run_episode

logger = get_logger(__name__)

EVOLUTION_MODES = ("routine",) + tuple(EVENT_WEIGHTS)
DIRECTION_MODES = ("signals", "none", "random")

# signal -> direction line, in the order lines are joined
DIRECTIONS: Tuple[Tuple[str, str], ...] = (
    ("force_innovation", "Multiple stagnant generations. Try completely different structure."),
    ("high_queue", "Queue exceeds P75. Focus on queue management."),
    ("low_throughput", "Throughput below P25. Optimize flow efficiency."),
    ("high_delay", "Delay exceeds P75. Reduce vehicle waiting time."),
    ("performance_gain", "Performance improved. Continue optimizing current direction."),
    ("performance_decline", "Performance declined. Try different strategy approach."),
)
SIGNAL_NAMES = tuple(name for name, _ in DIRECTIONS)
_DIRECTION_TEXT = dict(DIRECTIONS)
RANDOM_DIRECTION_POOL = tuple(text for _, text in DIRECTIONS) + (NEUTRAL_DIRECTION,)

# metric keys the signals read
_QUEUE, _DELAY, _THROUGHPUT = "avg_queue", "avg_delay", "throughput"


# -- signals ---------------------------------------------------------------


@dataclass(frozen=True)
class EvolutionSignals:
    high_queue: bool = False
    low_throughput: bool = False
    high_delay: bool = False
    performance_gain: bool = False
    performance_decline: bool = False
    force_innovation: bool = False

    def __post_init__(self):
        if self.performance_gain and self.performance_decline:
            raise ValueError("performance_gain and performance_decline are exclusive")

    @property
    def active(self) -> Tuple[str, ...]:
        return tuple(name for name in SIGNAL_NAMES if getattr(self, name))

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "EvolutionSignals":
        return cls(**{name: True for name in names})


def _column(history: Sequence[Mapping[str, Any]], key: str) -> List[float]:
    return [float(h[key]) for h in history if h.get(key) is not None]


def extract_signals(
    history: Sequence[Mapping[str, Any]],
    current: Mapping[str, Any],
    stag: int,
    tau: int = 3,
) -> EvolutionSignals:
    """Signals for ``current`` against the older entries in ``history``.

    Entries are metric aggregates (``avg_queue``, ``avg_delay``,
    ``throughput``, ``fitness``). Percentile signals are false while
    ``history`` is empty; gain and decline compare ``current`` with the
    newest history entry.
    """
    def above(key: str, q: float) -> bool:
        col = _column(history, key)
        return bool(col) and current.get(key) is not None and float(current[key]) > percentile(col, q)

    def below(key: str, q: float) -> bool:
        col = _column(history, key)
        return bool(col) and current.get(key) is not None and float(current[key]) < percentile(col, q)

    prev = history[-1].get("fitness") if history else None
    cur = current.get("fitness")
    comparable = prev is not None and cur is not None
    return EvolutionSignals(
        high_queue=above(_QUEUE, 75),
        low_throughput=below(_THROUGHPUT, 25),
        high_delay=above(_DELAY, 75),
        performance_gain=comparable and cur > prev,
        performance_decline=comparable and cur < prev,
        force_innovation=stag >= tau,
    )


def direction_text(signals: EvolutionSignals) -> str:
    lines = [_DIRECTION_TEXT[name] for name in signals.active]
    return " ".join(lines) or NEUTRAL_DIRECTION


def choose_direction(mode: str, signals: EvolutionSignals, seed: int, generation: int) -> str:
    """The direction line for one generation under a direction mode."""
    if mode == "signals":
        return direction_text(signals)
    if mode == "none":
        return NEUTRAL_DIRECTION
    rng = np.random.default_rng([seed, generation])
    return RANDOM_DIRECTION_POOL[int(rng.integers(len(RANDOM_DIRECTION_POOL)))]


# -- records ---------------------------------------------------------------


def _finite_or_none(value: Optional[float]) -> Optional[float]:
    return value if value is not None and math.isfinite(value) else None


def _inf_if_none(value: Optional[float]) -> float:
    return -math.inf if value is None else float(value)


@dataclass(frozen=True)
class GenerationRecord:
    """Outcome of one generation; ``best_*`` describe the elite afterwards."""

    index: int
    candidate_ids: Tuple[str, ...]
    fitness: Tuple[float, ...]
    best_id: str
    best_fitness: float
    signals: Tuple[str, ...] = ()
    direction: str = ""
    improved: bool = False
    stagnation: int = 0

    @property
    def mean_fitness(self) -> Optional[float]:
        finite = [f for f in self.fitness if math.isfinite(f)]
        return sum(finite) / len(finite) if finite else None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["candidate_ids"] = list(self.candidate_ids)
        data["fitness"] = [_finite_or_none(f) for f in self.fitness]
        data["signals"] = list(self.signals)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GenerationRecord":
        return cls(
            index=int(data["index"]),
            candidate_ids=tuple(data.get("candidate_ids") or ()),
            fitness=tuple(_inf_if_none(f) for f in data.get("fitness") or ()),
            best_id=data["best_id"],
            best_fitness=float(data["best_fitness"]),
            signals=tuple(data.get("signals") or ()),
            direction=data.get("direction", ""),
            improved=bool(data.get("improved", False)),
            stagnation=int(data.get("stagnation", 0)),
        )


@dataclass(frozen=True)
class Capsule:
    skill: Skill
    fitness: float
    metrics: Mapping[str, Any]
    generation: int
    timestamp: float

    def to_payload(self) -> Dict[str, Any]:
        return {
            "skill": self.skill.to_dict(),
            "fitness": self.fitness,
            "metrics": dict(self.metrics),
            "generation": self.generation,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_payload(cls, data: Mapping[str, Any]) -> "Capsule":
        return cls(
            Skill.from_dict(data["skill"]),
            float(data["fitness"]),
            dict(data.get("metrics") or {}),
            int(data["generation"]),
            float(data["timestamp"]),
        )


def solidify(
    skill: Skill,
    fitness_value: float,
    metrics: Mapping[str, Any],
    store: AssetStore,
    generation: Optional[int] = None,
    clock: Callable[[], float] = time.time,
) -> Capsule:
    """Archive ``skill`` as a capsule; it must beat every earlier capsule of the run."""
    prior = [float(c["fitness"]) for c in store.capsules() if c.get("fitness") is not None]
    record = max(prior, default=-math.inf)
    if not (math.isfinite(fitness_value) and fitness_value > record):
        raise NotAnImprovement(f"fitness {fitness_value} does not exceed the run's best capsule ({record})")
    capsule = Capsule(
        replace(skill, fitness=fitness_value, metrics_snapshot=dict(metrics)),
        fitness_value,
        dict(metrics),
        skill.generation if generation is None else generation,
        float(clock()),
    )
    store.append("capsule", capsule.to_payload())
    store.append("solidified", {"skill": skill.id, "fitness": fitness_value, "generation": capsule.generation})
    logger.info("solidified %s (generation %d) with fitness %.4f", skill.id, capsule.generation, fitness_value)
    return capsule


# -- configuration ---------------------------------------------------------


@dataclass(frozen=True)
class EvolutionConfig:
    scenarios: Tuple[ScenarioConfig, ...]
    population: int = 8
    generations: int = 30
    tau: int = 3
    mode: str = "routine"
    seed: int = 0
    direction_mode: str = "signals"
    representation: str = "skill"
    jobs: int = 1
    max_retries: int = 3
    on_error: str = "raise"
    bank: Optional[SkillBank] = None
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    initial: Optional[Skill] = None
    run_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        errors = []
        if not self.scenarios:
            errors.append("at least one scenario is required")
        if self.population < 2:
            errors.append(f"population must be at least 2, got {self.population}")
        if self.generations < 1:
            errors.append(f"generations must be at least 1, got {self.generations}")
        if self.tau < 1:
            errors.append(f"tau must be at least 1, got {self.tau}")
        if self.mode not in EVOLUTION_MODES:
            errors.append(f"mode must be one of {', '.join(EVOLUTION_MODES)}, got {self.mode!r}")
        if self.direction_mode not in DIRECTION_MODES:
            errors.append(f"direction_mode must be one of {', '.join(DIRECTION_MODES)}, got {self.direction_mode!r}")
        if self.representation not in REPRESENTATIONS:
            errors.append(f"representation must be one of {', '.join(REPRESENTATIONS)}, got {self.representation!r}")
        if self.jobs < 1:
            errors.append(f"jobs must be at least 1, got {self.jobs}")
        if self.max_retries < 0:
            errors.append("max_retries must be non-negative")
        if self.mode in EVENT_WEIGHTS:
            for sc in self.scenarios:
                if self.mode not in sc.event_kinds:
                    errors.append(f"scenario {sc.name} injects no {self.mode} events")
        names = [sc.name for sc in self.scenarios]
        if len(set(names)) != len(names):
            errors.append("scenario names must be unique")
        if errors:
            raise ConfigError("Evolution errors:\n" + "\n".join(errors))

    @classmethod
    def from_families(cls, families: Iterable[str], overrides: Iterable[str] = (), **kwargs: Any) -> "EvolutionConfig":
        overrides = list(overrides)
        return cls(tuple(make_scenario(f, overrides) for f in families), **kwargs)

    @property
    def event_kind(self) -> Optional[str]:
        return None if self.mode == "routine" else self.mode

    @property
    def whitelist(self) -> VariableWhitelist:
        return VariableWhitelist.event() if self.event_kind else VariableWhitelist.lane()

    @property
    def resolved_run_id(self) -> str:
        return self.run_id or f"run-{self.seed}"

    def resolved_bank(self) -> Optional[SkillBank]:
        if self.event_kind is None:
            return None
        return self.bank or SkillBank.load_default()

    def digest(self, backend_kind: str) -> str:
        """Fingerprint of everything a resumed run must share with the original."""
        data = {
            "backend": backend_kind,
            "scenarios": [asdict(sc) for sc in self.scenarios],
            "population": self.population,
            "tau": self.tau,
            "mode": self.mode,
            "seed": self.seed,
            "direction_mode": self.direction_mode,
            "representation": self.representation,
            "max_retries": self.max_retries,
            "on_error": self.on_error,
            "initial": (self.initial or seed_skill()).to_dict(),
        }
        text = json.dumps(json_safe(data), sort_keys=True, default=str)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


# -- evaluation ------------------------------------------------------------


@dataclass(frozen=True)
class _Task:
    skill: Skill
    scenario: ScenarioConfig
    mode: str
    on_error: str
    bank: Optional[SkillBank]
    detector: DetectorConfig


def _spec(task: _Task) -> ControllerSpec:
    if task.mode == "routine":
        return ControllerSpec("skill", skill=task.skill, on_error=task.on_error)
    return ControllerSpec(
        "dispatcher", bank=task.bank.with_skill(task.mode, task.skill), on_error=task.on_error, detector=task.detector
    )


def _evaluate(task: _Task) -> Tuple[float, Optional[Dict[str, Any]]]:
    """Fitness at C = 0 and the metric summary of one episode; ``-inf`` on a skill fault."""
    try:
        m = drive(_spec(task), task.scenario, seed=task.scenario.seed)
    except EpisodeFailure as exc:
        logger.debug("%s failed on %s: %s", task.skill.id, task.scenario.name, exc)
        return -math.inf, None
    return fitness(m, FitnessConfig(task.mode, 0.0)), m.summary()


def _mean_metrics(summaries: Sequence[Mapping[str, Any]]) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for key in summaries[0]:
        values = [float(s[key]) for s in summaries if s.get(key) is not None]
        out[key] = sum(values) / len(values) if values else None
    return out


@dataclass(frozen=True)
class Evaluation:
    fitness: float
    per_scenario: Mapping[str, float]
    metrics: Mapping[str, Any]
    raw: Mapping[str, float]


def _combine(scenarios: Sequence[ScenarioConfig], results, constants: Mapping[str, float]) -> Evaluation:
    raw = {sc.name: r[0] for sc, r in zip(scenarios, results)}
    per = {name: value + constants.get(name, 0.0) for name, value in raw.items()}
    if any(not math.isfinite(v) for v in per.values()):
        return Evaluation(-math.inf, per, {}, raw)
    mean = sum(per.values()) / len(per)
    return Evaluation(mean, per, _mean_metrics([r[1] for r in results]), raw)


class _Evaluator:
    """Evaluates skills on every scenario, serially or in a process pool."""

    def __init__(self, cfg: EvolutionConfig, bank: Optional[SkillBank], pool: Optional[ProcessPoolExecutor] = None):
        self.cfg = cfg
        self.bank = bank
        self.pool = pool

    def _tasks(self, skill: Skill) -> List[_Task]:
        return [_Task(skill, sc, self.cfg.mode, self.cfg.on_error, self.bank, self.cfg.detector) for sc in self.cfg.scenarios]

    def many(self, skills: Sequence[Skill], constants: Mapping[str, float]) -> List[Evaluation]:
        tasks = [t for s in skills for t in self._tasks(s)]
        results = list(self.pool.map(_evaluate, tasks)) if self.pool else [_evaluate(t) for t in tasks]
        n = len(self.cfg.scenarios)
        return [_combine(self.cfg.scenarios, results[i * n : (i + 1) * n], constants) for i in range(len(skills))]


def dispatcher_context_episodes(
    candidate: Skill,
    kind: str,
    bank: SkillBank,
    scenarios: Sequence[ScenarioConfig],
    on_error: str = "raise",
    detector: DetectorConfig = DetectorConfig(),
    record_log: bool = False,
) -> List[EpisodeResult]:
    """One episode per scenario with ``candidate`` standing in for ``bank[kind]``."""
    spec = ControllerSpec("dispatcher", bank=bank.with_skill(kind, candidate), on_error=on_error, detector=detector)
    return [run_episode(sc, spec.build(), seed=sc.seed, record_log=record_log) for sc in scenarios]


def dispatcher_context_evaluate(
    candidate: Skill,
    kind: str,
    bank: SkillBank,
    scenarios: Sequence[ScenarioConfig],
    constants: Optional[Mapping[str, float]] = None,
    on_error: str = "raise",
    detector: DetectorConfig = DetectorConfig(),
) -> float:
    """Mean event fitness of ``candidate`` inside the full detector and dispatcher.

    ``constants`` maps scenario names to C; a scenario's own
    ``fitness_constant`` (else 0) applies when it is not listed.
    `MissingMetric` propagates when a scenario lacks ``kind`` events.
    """
    constants = constants or {}
    values = []
    for sc, result in zip(scenarios, dispatcher_context_episodes(candidate, kind, bank, scenarios, on_error, detector)):
        c = constants.get(sc.name, sc.fitness_constant or 0.0)
        values.append(fitness(result.metrics, FitnessConfig(kind, c)))
    return sum(values) / len(values)


# -- the loop --------------------------------------------------------------


@dataclass
class EvolutionResult:
    best: Skill
    seed_fitness: float
    records: List[GenerationRecord]
    capsules: List[Capsule]
    constants: Dict[str, float] = field(default_factory=dict)

    @property
    def best_fitness(self) -> float:
        return self.capsules[-1].fitness

    @property
    def best_generation(self) -> int:
        return self.capsules[-1].generation

    @property
    def improvement(self) -> float:
        """Improvement of the best fitness over the seed's, in percent."""
        if self.seed_fitness == 0:
            return 0.0
        return 100.0 * (self.best_fitness - self.seed_fitness) / abs(self.seed_fitness)


@dataclass
class _State:
    completed: int
    history: List[Dict[str, Any]]
    stagnation: int
    elite: Skill
    constants: Dict[str, float]

    def checkpoint(self, digest: str, watermark: int, generator_state: Any) -> Dict[str, Any]:
        return {
            "completed": self.completed,
            "history": self.history,
            "stagnation": self.stagnation,
            "best_id": self.elite.id,
            "best_fitness": self.elite.fitness,
            "constants": self.constants,
            "generator_state": generator_state,
            "watermark": watermark,
            "config_digest": digest,
        }


def _history_entry(metrics: Mapping[str, Any], fitness_value: float) -> Dict[str, Any]:
    entry = {k: metrics.get(k) for k in (_QUEUE, _DELAY, _THROUGHPUT)}
    entry["fitness"] = fitness_value
    return json_safe(entry)


def _generator_state(backend: Any) -> Any:
    return getattr(backend, "state", None)


def _start(cfg: EvolutionConfig, evaluator: _Evaluator, store: AssetStore, clock) -> _State:
    seed = cfg.initial or seed_skill()
    (raw_eval,) = evaluator.many([seed], {})
    if not math.isfinite(raw_eval.fitness):
        raise EpisodeFailure(f"initial skill {seed.id} faulted; evolution needs a working seed")
    constants = {
        sc.name: float(sc.fitness_constant) if sc.fitness_constant is not None else calibrate_constant(raw_eval.raw[sc.name])
        for sc in cfg.scenarios
    }
    per = {name: value + constants[name] for name, value in raw_eval.raw.items()}
    metrics = raw_eval.metrics
    ev = Evaluation(sum(per.values()) / len(per), per, metrics, raw_eval.raw)
    elite = seed.with_fitness(ev.fitness, metrics)
    store.append_skill(elite)
    store.append(
        "evaluated",
        {
            "skill": seed.id,
            "generation": seed.generation,
            "fitness": ev.fitness,
            "scenarios": dict(ev.per_scenario),
            "metrics": dict(metrics),
            "episodes": len(cfg.scenarios),
            "seed_skill": True,
        },
    )
    logger.info(
        "seed %s fitness %.4f (constants %s)",
        seed.id,
        ev.fitness,
        ", ".join(f"{k}={v:g}" for k, v in constants.items()),
    )
    solidify(elite, ev.fitness, metrics, store, generation=seed.generation, clock=clock)
    return _State(0, [_history_entry(metrics, ev.fitness)], 0, elite, constants)


def _resume(ckpt: Mapping[str, Any], digest: str, backend: Any, store: AssetStore) -> _State:
    if ckpt.get("config_digest") != digest:
        raise ConfigError(f"run {store.run_id} was started with a different configuration; cannot resume it")
    dropped = store.truncate_after(int(ckpt["watermark"]))
    state = ckpt.get("generator_state")
    if state is not None and hasattr(backend, "restore"):
        backend.restore(state)
    elite = store.skill(ckpt["best_id"])
    if elite.fitness is None or float(elite.fitness) != float(ckpt["best_fitness"]):
        raise StorageError(f"checkpoint of run {store.run_id} disagrees with the stored elite {elite.id}")
    logger.info("resuming run %s after generation %d (%d partial records discarded)", store.run_id, ckpt["completed"], dropped)
    return _State(
        int(ckpt["completed"]),
        [dict(h) for h in ckpt.get("history") or []],
        int(ckpt.get("stagnation", 0)),
        elite,
        {k: float(v) for k, v in (ckpt.get("constants") or {}).items()},
    )


def _generation(
    g: int,
    cfg: EvolutionConfig,
    state: _State,
    backend: Any,
    evaluator: _Evaluator,
    store: AssetStore,
    clock,
) -> GenerationRecord:
    current, older = state.history[-1], state.history[:-1]
    signals = extract_signals(older, current, state.stagnation, cfg.tau)
    direction = choose_direction(cfg.direction_mode, signals, cfg.seed, g)
    elite = state.elite
    prompts = build_prompts(
        elite, elite.metrics_snapshot or {}, direction, cfg.whitelist, cfg.event_kind, cfg.representation
    )
    request = DraftRequest(
        elite,
        cfg.whitelist,
        force_innovation=_DIRECTION_TEXT["force_innovation"] in direction,
        event_kind=cfg.event_kind,
        representation=cfg.representation,
    )
    drafts = generate(
        backend,
        prompts,
        cfg.population,
        request,
        audit=lambda kind, payload: store.append(kind, dict(payload, generation=g + 1)),
        max_retries=cfg.max_retries,
        draft_id=lambda i: f"g{g:03d}-c{i:02d}",
        generation=g + 1,
    )

    evals = evaluator.many(drafts, state.constants)
    best: Optional[Tuple[Skill, Evaluation]] = None
    for draft, ev in zip(drafts, evals):
        scored = draft.with_fitness(ev.fitness if math.isfinite(ev.fitness) else None, ev.metrics or None)
        store.append_skill(scored)
        store.append(
            "evaluated",
            {
                "skill": draft.id,
                "generation": g + 1,
                "fitness": ev.fitness,
                "scenarios": dict(ev.per_scenario),
                "metrics": dict(ev.metrics),
                "episodes": len(cfg.scenarios),
            },
        )
        logger.debug("generation %d: %s fitness %.4f", g + 1, draft.id, ev.fitness)
        if math.isfinite(ev.fitness) and (best is None or ev.fitness > best[1].fitness):
            best = (scored, ev)

    improved = False
    if best is not None:
        skill, ev = best
        state.history.append(_history_entry(ev.metrics, ev.fitness))
        if ev.fitness > elite.fitness:
            solidify(skill, ev.fitness, ev.metrics, store, generation=g + 1, clock=clock)
            state.elite = skill
            improved = True
    state.stagnation = 0 if improved else state.stagnation + 1
    state.completed = g + 1

    record = GenerationRecord(
        index=g,
        candidate_ids=tuple(d.id for d in drafts),
        fitness=tuple(ev.fitness for ev in evals),
        best_id=state.elite.id,
        best_fitness=state.elite.fitness,
        signals=signals.active,
        direction=direction,
        improved=improved,
        stagnation=state.stagnation,
    )
    logger.info(
        "generation %d/%d: %d drafts, best %.4f (%s)%s, stagnation %d",
        g + 1,
        cfg.generations,
        len(drafts),
        record.best_fitness,
        record.best_id,
        " new" if improved else "",
        state.stagnation,
    )
    return record


def _checkpoint(state: _State, record: Optional[GenerationRecord], digest: str, backend: Any, store: AssetStore) -> None:
    payload: Dict[str, Any] = {"completed": state.completed}
    if record is not None:
        payload["record"] = record.to_dict()
    watermark = store.append("checkpointed", payload)
    store.write_checkpoint(state.checkpoint(digest, watermark, _generator_state(backend)))
    logger.debug("checkpoint after %d generations (seq %d)", state.completed, watermark)


def run_evolution(
    cfg: EvolutionConfig,
    backend: Any,
    store: AssetStore,
    resume: bool = False,
    clock: Callable[[], float] = time.time,
) -> EvolutionResult:
    """Run (or continue) an evolution and return what the store holds afterwards.

    ``clock`` stamps capsules. `GeneratorUnavailable` propagates after
    the session is closed; the last checkpoint stays intact and a later
    ``resume=True`` call continues from it.
    """
    digest = cfg.digest(getattr(backend, "kind", type(backend).__name__))
    ckpt = store.read_checkpoint()
    if not resume and (ckpt is not None or store.seq):
        raise ConfigError(f"{store.root} already holds run {store.run_id}; resume it or choose another directory")
    started = time.monotonic()
    bank = cfg.resolved_bank()
    pool = ProcessPoolExecutor(max_workers=cfg.jobs) if cfg.jobs > 1 else None
    state: Optional[_State] = None
    status = "aborted"
    try:
        evaluator = _Evaluator(cfg, bank, pool)
        if resume and ckpt is not None:
            state = _resume(ckpt, digest, backend, store)
            store.log_session("resumed", {"completed": state.completed, "generations": cfg.generations})
        else:
            if store.seq:
                store.truncate_after(0)
            store.log_session("started", {"generations": cfg.generations, "backend": getattr(backend, "kind", None)})
            state = _start(cfg, evaluator, store, clock)
            _checkpoint(state, None, digest, backend, store)

        for g in range(state.completed, cfg.generations):
            record = _generation(g, cfg, state, backend, evaluator, store, clock)
            _checkpoint(state, record, digest, backend, store)
        status = "completed"
    except GeneratorUnavailable as exc:
        logger.error("generator unavailable; run %s stopped after %d generations: %s", store.run_id, state.completed if state else 0, exc)
        raise
    finally:
        if pool is not None:
            pool.shutdown(wait=True)
        store.log_session(
            "finished",
            {"completed": state.completed if state else 0, "status": status, "elapsed": time.monotonic() - started},
        )
    result = replay_run(store)
    logger.info(
        "run %s finished: best %s fitness %.4f (seed %.4f, %+.1f%%)",
        store.run_id,
        result.best.id,
        result.best_fitness,
        result.seed_fitness,
        result.improvement,
    )
    return result


def replay_run(store: AssetStore) -> EvolutionResult:
    """Rebuild generation records, capsules and the best skill from the store files."""
    capsules = [Capsule.from_payload(p) for p in store.capsules()]
    if not capsules:
        raise StorageError(f"run {store.run_id} holds no capsules")
    records = [
        GenerationRecord.from_dict(rec["payload"]["record"])
        for rec in store.records("checkpointed")
        if rec["payload"].get("record")
    ]
    seed_eval = next((r["payload"] for r in store.records("evaluated") if r["payload"].get("seed_skill")), None)
    seed_fitness = float(seed_eval["fitness"]) if seed_eval else capsules[0].fitness
    ckpt = store.read_checkpoint() or {}
    best = capsules[-1]
    return EvolutionResult(
        best.skill.with_fitness(best.fitness, best.metrics),
        seed_fitness,
        records,
        capsules,
        {k: float(v) for k, v in (ckpt.get("constants") or {}).items()},
    )


__all__ = [
    "EVOLUTION_MODES",
    "DIRECTION_MODES",
    "DIRECTIONS",
    "SIGNAL_NAMES",
    "RANDOM_DIRECTION_POOL",
    "EvolutionSignals",
    "extract_signals",
    "direction_text",
    "choose_direction",
    "GenerationRecord",
    "Capsule",
    "solidify",
    "EvolutionConfig",
    "Evaluation",
    "dispatcher_context_episodes",
    "dispatcher_context_evaluate",
    "EvolutionResult",
    "run_evolution",
    "replay_run",
]
