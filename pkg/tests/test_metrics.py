import math
import random
from types import SimpleNamespace

import pytest

from signal_evo.errors import MissingMetric
from signal_evo.metrics import (
    FitnessConfig,
    calibrate_constant,
    cost_ledger,
    event_fitness,
    percentile,
    person_delay,
    routine_fitness,
    summarize,
    welch_and_cohen,
)
from signal_evo.traffic_sim import SimulationMetrics


def _metrics(**kw):
    base = dict(avg_delay=0.0, avg_queue=0.0, throughput=0)
    base.update(kw)
    return SimulationMetrics(**base)


def test_routine_fitness_substitution():
    m = _metrics(avg_delay=10.0, avg_queue=5.0, throughput=20)
    assert routine_fitness(m, FitnessConfig(constant=0.0)) == pytest.approx(-2.0)
    assert routine_fitness(_metrics(), FitnessConfig(constant=7.5)) == 7.5


def test_constant_never_changes_ordering():
    a = _metrics(avg_delay=12.0, avg_queue=3.0, throughput=40)
    b = _metrics(avg_delay=9.0, avg_queue=4.0, throughput=35)
    for c in (0.0, 3.0, 250.0):
        cfg = FitnessConfig(constant=c)
        diff = routine_fitness(a, cfg) - routine_fitness(b, cfg)
        assert diff == pytest.approx(routine_fitness(a, FitnessConfig()) - routine_fitness(b, FitnessConfig()))


def test_emergency_fitness_example():
    m = _metrics(avg_queue=4.0, emergency_delay=5.0, class_delays={"emergency": (10.0, 2), "normal": (80.0, 10)})
    assert event_fitness(m, "emergency", FitnessConfig("emergency", 10.0)) == pytest.approx(4.4)


def test_transit_weights_and_missing_metric():
    m = _metrics(avg_queue=2.0, bus_person_delay=10.0, class_delays={"bus": (30.0, 2), "normal": (40.0, 10)})
    assert event_fitness(m, "transit", FitnessConfig("transit", 0.0)) == pytest.approx(-(5.0 + 0.35 * 4.0 + 0.3))
    with pytest.raises(MissingMetric):
        event_fitness(_metrics(), "emergency", FitnessConfig("emergency"))


def test_incident_fitness_uses_network_delay():
    m = _metrics(avg_delay=6.0, avg_queue=1.0, incident_delay=20.0)
    assert event_fitness(m, "incident", FitnessConfig("incident", 30.0)) == pytest.approx(30 - (12 + 1.5 + 0.15))


def test_calibrate_constant():
    assert calibrate_constant(3.2) == 0.0
    assert calibrate_constant(-4.2) == 10.0
    assert calibrate_constant(0.0) == 1.0


def test_person_delay():
    log = [
        {"occupancy": 30.0, "delay": 10.0},
        {"occupancy": 1.5, "delay": 4.0},
        {"occupancy": 1.5, "delay": 4.0},
    ]
    assert person_delay(log) == pytest.approx((300 + 12) / 33)
    assert person_delay([{"occupancy": 1.5, "delay": 3.0}, {"occupancy": 30.0, "delay": 3.0}]) == pytest.approx(3.0)
    cars = [{"occupancy": 1.5, "delay": d} for d in (1.0, 2.0, 6.0)]
    assert person_delay(cars) == pytest.approx(3.0)


def _brute_percentile(values, q):
    s = sorted(values)
    pos = (len(s) - 1) * q / 100.0
    lo = math.floor(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def test_percentile_matches_sorted_interpolation():
    assert percentile([2, 4, 6, 8], 75) == 6.5
    rng = random.Random(9)
    for _ in range(1000):
        values = [rng.uniform(0, 50) for _ in range(rng.randint(1, 40))]
        for q in (25, 75, 90):
            assert percentile(values, q) == pytest.approx(_brute_percentile(values, q), rel=1e-12, abs=1e-12)


def test_welch_hand_computed_sample():
    res = welch_and_cohen([10, 12, 11, 13, 9], [11, 13, 12, 10, 14])
    assert res.t == pytest.approx(-1.0, rel=1e-9)
    assert res.dof == pytest.approx(8.0, rel=1e-9)
    assert res.p == pytest.approx(758 / 2187, rel=1e-9)
    assert res.d == pytest.approx(-1 / math.sqrt(2.5), rel=1e-9)


def test_welch_well_separated_sample():
    res = welch_and_cohen([10, 12, 11, 13, 9], [20, 22, 21, 19, 23])
    assert res.t == pytest.approx(-10.0, rel=1e-9)
    assert res.dof == pytest.approx(8.0, rel=1e-9)
    theta = math.atan(10 / math.sqrt(8))
    c2 = math.cos(theta) ** 2
    expected = 1 - math.sin(theta) * (1 + c2 / 2 + 3 * c2**2 / 8 + 15 * c2**3 / 48)
    assert res.p == pytest.approx(expected, rel=1e-6)
    assert res.d == pytest.approx(-10 / math.sqrt(2.5), rel=1e-9)


def test_welch_identical_and_zero_variance_samples():
    res = welch_and_cohen([1, 2, 3], [1, 2, 3])
    assert (res.t, res.p, res.d) == (0.0, 1.0, 0.0)
    flat = welch_and_cohen([4, 4, 4], [4, 4, 4])
    assert flat.degenerate and (flat.t, flat.p, flat.d) == (0.0, 1.0, 0.0)
    sep = welch_and_cohen([0] * 5, [1] * 5)
    assert sep.separated and sep.p < 1e-12 and sep.d == -math.inf


def test_welch_antisymmetry():
    a, b = [3.1, 4.5, 2.2, 5.0], [6.3, 5.9, 7.7, 4.8, 6.0]
    ab, ba = welch_and_cohen(a, b), welch_and_cohen(b, a)
    assert ab.t == pytest.approx(-ba.t)
    assert ab.d == pytest.approx(-ba.d)
    assert ab.p == pytest.approx(ba.p)


def test_summarize():
    mean, std = summarize([1.0, 2.0, 3.0])
    assert mean == 2.0 and std == 1.0
    assert summarize([5.0]) == (5.0, 0.0)


def test_cost_ledger_counts():
    events = [{"kind": "evaluated", "payload": {"skill_id": "seed", "seed_skill": True, "episodes": 3}}]
    for g in range(30):
        for c in range(8):
            events.append({"kind": "generated", "payload": {"attempt": 0}})
            events.append({"kind": "evaluated", "payload": {"skill_id": f"g{g}-c{c}", "episodes": 3}})
    ledger = cost_ledger(events, [{"kind": "finished", "payload": {"elapsed": 12.5}}])
    assert (ledger.llm_calls, ledger.sim_runs, ledger.seed_runs) == (240, 720, 3)
    assert ledger.wall_clock == 12.5
    assert cost_ledger([]) == cost_ledger([], [])
    assert cost_ledger([]).llm_calls == 0


def test_cost_ledger_counts_retries():
    events = [{"kind": "generated", "payload": {"attempt": a}} for a in (0, 0, 1, 2)]
    ledger = cost_ledger(events)
    assert ledger.llm_calls == 4
    assert ledger.retries == 2
