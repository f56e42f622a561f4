import json
import math
import random

import pytest

from signal_evo.controller import ControllerSpec, drive
from signal_evo.errors import ConfigError, GeneratorUnavailable, NotAnImprovement
from signal_evo.event_system import SkillBank
from signal_evo.evolution import (
    DIRECTIONS,
    RANDOM_DIRECTION_POOL,
    EvolutionConfig,
    EvolutionSignals,
    GenerationRecord,
    choose_direction,
    direction_text,
    dispatcher_context_episodes,
    dispatcher_context_evaluate,
    extract_signals,
    replay_run,
    run_evolution,
    solidify,
)
from signal_evo.generator import NEUTRAL_DIRECTION, ScriptedBackend
from signal_evo.metrics import FitnessConfig, cost_ledger, fitness, percentile
from signal_evo.skilldsl import Skill, seed_skill
from signal_evo.store import CAPSULES_FILE, EVENTS_FILE, SKILLS_FILE, AssetStore
from signal_evo.traffic_sim import make_scenario

FORCE = "Multiple stagnant generations. Try completely different structure."
QUEUE = "Queue exceeds P75. Focus on queue management."
GAIN = "Performance improved. Continue optimizing current direction."


def _short(name="short", seed=7, duration=300):
    return make_scenario({"base": "desk_T", "name": name, "duration": duration, "seed": seed})


def _cfg(**kw):
    kw.setdefault("population", 3)
    kw.setdefault("generations", 3)
    kw.setdefault("seed", 5)
    return EvolutionConfig((kw.pop("scenarios", None) or (_short(),)), **kw)


def _clock():
    return 1000.0


def _brute_percentile(values, q):
    xs = sorted(values)
    pos = (len(xs) - 1) * q / 100.0
    lo = math.floor(pos)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


# -- signals ----------------------------------------------------------------


def test_queue_above_p75_fires():
    history = [{"avg_queue": q} for q in (2, 4, 6, 8)]
    assert extract_signals(history, {"avg_queue": 7}, 0).high_queue
    assert not extract_signals(history, {"avg_queue": 6.5}, 0).high_queue


def test_cold_start_has_no_percentile_signals():
    s = extract_signals([], {"avg_queue": 100, "avg_delay": 100, "throughput": 0, "fitness": 1.0}, 0)
    assert s.active == ()


def test_force_innovation_iff_stagnation_reaches_tau():
    for tau in range(1, 6):
        for stag in range(0, 11):
            assert extract_signals([], {}, stag, tau).force_innovation == (stag >= tau)
    assert [extract_signals([], {}, s, 3).force_innovation for s in range(4)] == [False, False, False, True]


def test_thresholds_match_sorted_interpolation():
    rng = random.Random(0)
    for _ in range(1000):
        n = rng.randint(1, 12)
        queues = [rng.uniform(0, 20) for _ in range(n)]
        thr = [rng.uniform(0, 500) for _ in range(n)]
        assert percentile(queues, 75) == pytest.approx(_brute_percentile(queues, 75), rel=1e-12, abs=1e-12)
        p75, p25 = _brute_percentile(queues, 75), _brute_percentile(thr, 25)
        history = [{"avg_queue": q, "throughput": t} for q, t in zip(queues, thr)]
        assert extract_signals(history, {"avg_queue": p75 + 1e-6}, 0).high_queue
        assert not extract_signals(history, {"avg_queue": p75 - 1e-6}, 0).high_queue
        assert extract_signals(history, {"throughput": p25 - 1e-6}, 0).low_throughput
        assert not extract_signals(history, {"throughput": p25 + 1e-6}, 0).low_throughput


def test_gain_and_decline_compare_newest_two():
    history = [{"fitness": 5.0}, {"fitness": 3.0}]
    assert extract_signals(history, {"fitness": 4.0}, 0).performance_gain
    assert extract_signals(history, {"fitness": 2.0}, 0).performance_decline
    flat = extract_signals(history, {"fitness": 3.0}, 0)
    assert not flat.performance_gain and not flat.performance_decline
    with pytest.raises(ValueError):
        EvolutionSignals(performance_gain=True, performance_decline=True)


def test_direction_text_joins_lines_in_table_order():
    assert direction_text(EvolutionSignals(force_innovation=True)) == FORCE
    assert direction_text(EvolutionSignals(performance_gain=True, high_queue=True)) == f"{QUEUE} {GAIN}"
    assert direction_text(EvolutionSignals()) == NEUTRAL_DIRECTION
    every = EvolutionSignals(True, True, True, True, False, True)
    assert direction_text(every) == " ".join(t for n, t in DIRECTIONS if n != "performance_decline")


def test_direction_modes():
    sig = EvolutionSignals(high_queue=True)
    assert choose_direction("signals", sig, 0, 4) == QUEUE
    assert choose_direction("none", sig, 0, 4) == NEUTRAL_DIRECTION
    picks = [choose_direction("random", sig, 9, g) for g in range(20)]
    assert picks == [choose_direction("random", EvolutionSignals(), 9, g) for g in range(20)]
    assert set(picks) <= set(RANDOM_DIRECTION_POOL)


# -- records and capsules ---------------------------------------------------


def test_generation_record_round_trip_keeps_failed_candidates():
    rec = GenerationRecord(2, ("g002-c00", "g002-c01"), (4.5, -math.inf), "g002-c00", 4.5, ("high_queue",), QUEUE, True, 0)
    data = json.loads(json.dumps(rec.to_dict()))
    assert data["fitness"] == [4.5, None]
    assert GenerationRecord.from_dict(data) == rec
    assert rec.mean_fitness == 4.5


def test_solidify_requires_strict_improvement(tmp_path):
    store = AssetStore(tmp_path, run_id="r")
    first = solidify(seed_skill(), 10.0, {"avg_delay": 3.0}, store, clock=_clock)
    assert first.generation == 0 and first.timestamp == 1000.0
    with pytest.raises(NotAnImprovement):
        solidify(seed_skill(), 10.0, {}, store, clock=_clock)
    child = Skill("c", "", "", "value[0] += num_vehicle", "value[0] += 0", "seed", 1)
    solidify(child, 10.5, {}, store, clock=_clock)
    fits = [c["fitness"] for c in store.capsules()]
    assert fits == [10.0, 10.5]
    assert [r["payload"]["skill"] for r in store.records("solidified")] == ["seed", "c"]


# -- configuration ----------------------------------------------------------


def test_config_collects_errors():
    with pytest.raises(ConfigError) as err:
        EvolutionConfig((_short(),), population=1, tau=0, mode="weather", direction_mode="loud")
    msg = str(err.value)
    assert msg.startswith("Evolution errors:")
    for part in ("population", "tau", "mode", "direction_mode"):
        assert part in msg


def test_event_mode_needs_event_scenarios():
    with pytest.raises(ConfigError):
        EvolutionConfig((_short(),), mode="emergency")


def test_store_must_be_fresh_unless_resuming(tmp_path):
    store = AssetStore(tmp_path, run_id="x")
    store.append("generated", {"draft": "d"})
    with pytest.raises(ConfigError):
        run_evolution(_cfg(), ScriptedBackend(5), store)


# -- full runs --------------------------------------------------------------


def test_scripted_run_keeps_the_elite(tmp_path):
    store = AssetStore(tmp_path / "run", run_id="run-5")
    result = run_evolution(_cfg(generations=4), ScriptedBackend(5), store, clock=_clock)
    bests = [r.best_fitness for r in result.records]
    assert len(bests) == 4
    assert all(b >= a for a, b in zip(bests, bests[1:]))
    assert bests[0] >= result.seed_fitness
    assert result.best_fitness == max(bests) >= result.seed_fitness
    assert result.improvement >= 0.0
    fits = [c.fitness for c in result.capsules]
    assert fits == sorted(fits) and len(set(fits)) == len(fits)
    assert result.capsules[0].skill.id == "seed"


def test_scripted_run_improves_on_the_seed_skill(tmp_path):
    peak = make_scenario("desk_T", ["demand.base_rate=0.18"])
    store = AssetStore(tmp_path, run_id="r")
    result = run_evolution(_cfg(scenarios=(peak,), population=8, generations=20), ScriptedBackend(5), store, clock=_clock)
    bests = [r.best_fitness for r in result.records]
    assert len(bests) == 20
    assert all(b >= a for a, b in zip(bests, bests[1:]))
    assert result.improvement >= 5.0


def test_every_parent_resolves_within_the_run(tmp_path):
    store = AssetStore(tmp_path, run_id="r")
    result = run_evolution(_cfg(), ScriptedBackend(2), store, clock=_clock)
    ids = {s.id for s in store.skills()}
    for skill in store.skills():
        assert skill.parent_id is None or skill.parent_id in ids
    assert store.lineage(result.best.id)[-1].id == "seed"


def test_replay_matches_returned_result(tmp_path):
    store = AssetStore(tmp_path, run_id="r")
    result = run_evolution(_cfg(), ScriptedBackend(3), store, clock=_clock)
    again = replay_run(AssetStore.open_existing(tmp_path))
    assert again.records == result.records
    assert again.capsules == result.capsules
    assert again.best == result.best
    assert again.constants == result.constants


def test_cost_ledger_counts_calls_and_episodes(tmp_path):
    scenarios = (_short("a", 7), _short("b", 8))
    store = AssetStore(tmp_path, run_id="r")
    run_evolution(_cfg(scenarios=scenarios, population=2, generations=2), ScriptedBackend(1), store, clock=_clock)
    ledger = cost_ledger(store.events(), store.sessions())
    assert (ledger.llm_calls, ledger.sim_runs, ledger.seed_runs, ledger.retries) == (4, 8, 2, 0)
    assert ledger.wall_clock > 0


def test_cost_ledger_at_full_population_and_horizon(tmp_path):
    scenarios = tuple(
        make_scenario({"base": base, "name": f"ledger_{base}", "duration": 60}) for base in ("desk_T", "desk_E", "desk_B")
    )
    store = AssetStore(tmp_path, run_id="r")
    run_evolution(_cfg(scenarios=scenarios, population=8, generations=30), ScriptedBackend(1), store, clock=_clock)
    ledger = cost_ledger(store.events(), store.sessions())
    assert (ledger.llm_calls, ledger.sim_runs, ledger.retries) == (240, 720, 0)
    assert ledger.seed_runs == 3


def test_seed_calibrates_positive_fitness(tmp_path):
    store = AssetStore(tmp_path, run_id="r")
    result = run_evolution(_cfg(generations=1, population=2), ScriptedBackend(0), store, clock=_clock)
    assert result.seed_fitness > 0
    assert set(result.constants) == {"short"}
    pinned = make_scenario({"base": "desk_T", "name": "pinned", "duration": 300, "fitness_constant": 1000})
    store = AssetStore(tmp_path / "pinned", run_id="r")
    result = run_evolution(_cfg(scenarios=(pinned,), generations=1, population=2), ScriptedBackend(0), store, clock=_clock)
    assert result.constants == {"pinned": 1000.0}


class _EliteCopies:
    kind = "copies"

    def complete(self, prompts, request):
        e = request.elite
        return json.dumps({"description": e.description, "guidance": e.guidance, "inlane_code": e.inlane_code, "outlane_code": e.outlane_code})


@pytest.mark.parametrize("tau", [1, 2, 3])
def test_force_innovation_fires_at_tau_th_stagnant_generation(tmp_path, tau):
    store = AssetStore(tmp_path, run_id="r")
    result = run_evolution(_cfg(population=2, generations=tau + 1, tau=tau), _EliteCopies(), store, clock=_clock)
    fired = ["force_innovation" in r.signals for r in result.records]
    assert fired == [False] * tau + [True]
    assert result.records[tau].direction == FORCE
    assert [r.stagnation for r in result.records] == list(range(1, tau + 2))
    assert len(result.capsules) == 1


def test_resume_reproduces_an_uninterrupted_run(tmp_path):
    straight = AssetStore(tmp_path / "a", run_id="run-5")
    expected = run_evolution(_cfg(generations=3), ScriptedBackend(5), straight, clock=_clock)

    split = AssetStore(tmp_path / "b", run_id="run-5")
    run_evolution(_cfg(generations=1), ScriptedBackend(5), split, clock=_clock)
    resumed = run_evolution(_cfg(generations=3), ScriptedBackend(99), AssetStore.open_existing(tmp_path / "b"), resume=True, clock=_clock)

    for name in (EVENTS_FILE, CAPSULES_FILE, SKILLS_FILE):
        assert (tmp_path / "b" / name).read_bytes() == (tmp_path / "a" / name).read_bytes()
    assert resumed.best == expected.best
    assert [r["kind"] for r in AssetStore(tmp_path / "b").sessions()] == ["started", "finished", "resumed", "finished"]


class _FailsOnCall:
    kind = "scripted"

    def __init__(self, seed, fail_at):
        self.inner = ScriptedBackend(seed)
        self.calls = 0
        self.fail_at = fail_at

    @property
    def state(self):
        return self.inner.state

    def restore(self, state):
        self.inner.restore(state)

    def complete(self, prompts, request):
        self.calls += 1
        if self.calls == self.fail_at:
            raise GeneratorUnavailable("endpoint down")
        return self.inner.complete(prompts, request)


def test_generator_outage_keeps_checkpoint_and_resumes(tmp_path):
    straight = AssetStore(tmp_path / "a", run_id="run-5")
    run_evolution(_cfg(population=2), ScriptedBackend(5), straight, clock=_clock)

    store = AssetStore(tmp_path / "b", run_id="run-5")
    with pytest.raises(GeneratorUnavailable):
        run_evolution(_cfg(population=2), _FailsOnCall(5, fail_at=4), store, clock=_clock)
    assert store.read_checkpoint()["completed"] == 1
    assert store.sessions()[-1]["payload"]["status"] == "aborted"

    run_evolution(_cfg(population=2), ScriptedBackend(5), AssetStore.open_existing(tmp_path / "b"), resume=True, clock=_clock)
    assert (tmp_path / "b" / EVENTS_FILE).read_bytes() == (tmp_path / "a" / EVENTS_FILE).read_bytes()


def test_resume_rejects_a_different_configuration(tmp_path):
    store = AssetStore(tmp_path, run_id="r")
    run_evolution(_cfg(generations=1, population=2), ScriptedBackend(5), store, clock=_clock)
    with pytest.raises(ConfigError):
        run_evolution(_cfg(generations=2, population=3), ScriptedBackend(5), AssetStore(tmp_path), resume=True)


def test_parallel_evaluation_matches_serial(tmp_path):
    scenarios = (_short("a", 7), _short("b", 8))
    serial = run_evolution(
        _cfg(scenarios=scenarios, population=2, generations=2), ScriptedBackend(4), AssetStore(tmp_path / "s", run_id="r"), clock=_clock
    )
    pooled = run_evolution(
        _cfg(scenarios=scenarios, population=2, generations=2, jobs=2),
        ScriptedBackend(4),
        AssetStore(tmp_path / "p", run_id="r"),
        clock=_clock,
    )
    assert pooled.records == serial.records
    assert (tmp_path / "p" / EVENTS_FILE).read_bytes() == (tmp_path / "s" / EVENTS_FILE).read_bytes()


# -- dispatcher context -----------------------------------------------------


def test_bank_skill_in_its_own_slot_scores_like_the_bank():
    bank = SkillBank.load_default()
    scenario = make_scenario("desk_B")
    expected = fitness(drive(ControllerSpec("dispatcher", bank=bank), scenario, seed=scenario.seed), FitnessConfig("transit"))
    assert dispatcher_context_evaluate(bank["transit"], "transit", bank, [scenario]) == expected


def test_transit_candidate_only_runs_during_transit_events():
    bank = SkillBank.load_default()
    candidate = Skill("cand", "", "", "value[0] += bus_count * 10 + num_waiting_vehicle", "value[0] += 0")
    (result,) = dispatcher_context_episodes(candidate, "transit", bank, [make_scenario("desk_B")], record_log=True)
    active = [entry for entry in result.log if entry["active"] == "transit"]
    assert active
    for entry in active:
        assert any(e["kind"] == "transit" for e in entry["events"])


def test_event_mode_evolution_runs_in_dispatcher_context(tmp_path):
    scenario = make_scenario({"base": "desk_E", "name": "short_e", "duration": 300})
    cfg = EvolutionConfig((scenario,), population=2, generations=1, mode="emergency", seed=3)
    result = run_evolution(cfg, ScriptedBackend(3), AssetStore(tmp_path, run_id="r"), clock=_clock)
    assert result.best_fitness >= result.seed_fitness
    candidates = [r for r in AssetStore(tmp_path).records("evaluated") if not r["payload"].get("seed_skill")]
    assert len(candidates) == 2
