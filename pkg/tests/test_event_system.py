import itertools
import json
import random

import pytest

from signal_evo.errors import ConfigError
from signal_evo.event_system import (
    BANK_KINDS,
    EVENT_KINDS,
    DetectorConfig,
    EventDetector,
    SkillBank,
    TrafficEvent,
    congestion_level,
    detect,
    dispatch,
    inject_context,
)
from signal_evo.skilldsl import EVENT_VARIABLES, VariableWhitelist, parse, sandbox_check, validate
from signal_evo.traffic_sim import ApproachVehicle, IntersectionSnapshot


def _vehicle(vclass="normal", distance=100.0, stop_time=0.0, wait=0.0, lane="in0N_1", phase=0, red=False):
    return ApproachVehicle(vclass, distance, stop_time, wait, lane, phase, red)


def _snap(*vehicles, queue=0.0):
    return IntersectionSnapshot(0, 0.0, queue, tuple(vehicles))


def _kinds(events):
    return [e.kind for e in events]


def test_emergency_within_radius():
    (event,) = detect(_snap(_vehicle("emergency", 150.0, phase=2)))
    assert event.kind == "emergency"
    assert event.context_map() == {"emergency_distance": 150.0, "emergency_phase": 2.0}
    assert detect(_snap(_vehicle("emergency", 250.0))) == []


def test_nearest_emergency_wins():
    (event,) = detect(_snap(_vehicle("emergency", 180.0, phase=1), _vehicle("emergency", 40.0, phase=3)))
    assert event.context_map()["emergency_phase"] == 3.0


def test_signal_wait_is_not_an_incident():
    assert detect(_snap(_vehicle(distance=20.0, stop_time=130.0, red=True))) == []
    (event,) = detect(_snap(_vehicle(distance=100.0, stop_time=130.0, red=True)))
    assert event.kind == "incident"
    (event,) = detect(_snap(_vehicle(distance=20.0, stop_time=130.0, red=False)))
    assert event.context_map() == {"incident_blocked": 1.0}
    assert detect(_snap(_vehicle(distance=100.0, stop_time=110.0))) == []


def test_incident_counts_blocked_lanes():
    stuck = [_vehicle(distance=80.0 + i, stop_time=200.0, lane=lane) for i, lane in enumerate(["a", "a", "b"])]
    (event,) = detect(_snap(*stuck))
    assert event.context_map()["incident_blocked"] == 2.0


def test_transit_context():
    (event,) = detect(_snap(_vehicle("bus", wait=30.0), _vehicle("bus", wait=7.0), _vehicle()))
    assert event.context_map() == {"bus_count": 2.0, "bus_delay": 37.0}


def test_events_sorted_by_priority():
    snap = _snap(_vehicle("bus"), _vehicle(distance=100.0, stop_time=150.0), _vehicle("emergency", 90.0))
    assert _kinds(detect(snap)) == ["emergency", "incident", "transit"]


def test_shrinking_radius_never_adds_emergencies():
    rng = random.Random(3)
    for _ in range(200):
        vehicles = [_vehicle("emergency", rng.uniform(0, 400)) for _ in range(rng.randint(0, 3))]
        snap = _snap(*vehicles)
        radii = sorted(rng.uniform(1, 400) for _ in range(2))
        small = "emergency" in _kinds(detect(snap, cfg=DetectorConfig(emergency_radius=radii[0])))
        large = "emergency" in _kinds(detect(snap, cfg=DetectorConfig(emergency_radius=radii[1])))
        assert large or not small


def test_detector_config_must_be_positive():
    with pytest.raises(ConfigError) as info:
        DetectorConfig(emergency_radius=0, congestion_window=-1)
    assert "emergency_radius" in str(info.value) and "congestion_window" in str(info.value)


def _brute_p90(values):
    s = sorted(values)
    pos = (len(s) - 1) * 0.9
    lo = int(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def test_congestion_threshold_matches_brute_percentile():
    rng = random.Random(11)
    for _ in range(300):
        history = [float(rng.randint(0, 40)) for _ in range(rng.randint(5, 60))]
        threshold = _brute_p90(history)
        assert congestion_level(threshold, history) is None
        level = congestion_level(threshold + 1e-6, history)
        assert level is not None and 0 <= level <= 3
        assert congestion_level(max(history) + 5, history) == 3


def test_congestion_needs_full_window():
    cfg = DetectorConfig(congestion_window=5)
    assert detect(_snap(queue=10.0), [1.0] * 4, cfg) == []
    (event,) = detect(_snap(queue=10.0), [1.0] * 5, cfg)
    assert event.context_map() == {"congestion_level": 3.0}


def test_event_detector_keeps_trailing_history():
    det = EventDetector(DetectorConfig(congestion_window=5))
    for _ in range(5):
        assert det.update(_snap(queue=1.0)) == []
    assert _kinds(det.update(_snap(queue=10.0))) == ["congestion"]
    assert list(det.histories[0]) == [1.0] * 4 + [10.0]


@pytest.fixture
def bank():
    return SkillBank.load_default()


def test_default_bank_is_complete(bank):
    assert sorted(bank.skills) == sorted(BANK_KINDS)
    assert bank["normal"].generation == 19


@pytest.mark.parametrize("kind", BANK_KINDS)
def test_every_bank_listing_parses_validates_and_runs(bank, kind):
    skill = bank[kind]
    whitelist = VariableWhitelist.event()
    for code in (skill.inlane_code, skill.outlane_code):
        assert validate(parse(code), whitelist).ok
    report = sandbox_check(skill, whitelist)
    assert report.ok, report


def test_dispatch_priority_is_total(bank):
    order = ["emergency", "incident", "transit", "congestion"]
    for r in range(len(EVENT_KINDS) + 1):
        for subset in itertools.combinations(EVENT_KINDS, r):
            events = [TrafficEvent(kind, 0) for kind in reversed(subset)]
            kind, skill = dispatch(events, bank)
            expected = min(subset, key=order.index) if subset else "normal"
            assert kind == expected
            assert skill is bank[expected]


def test_dispatch_examples(bank):
    assert dispatch([TrafficEvent("incident", 0), TrafficEvent("emergency", 0)], bank)[0] == "emergency"
    assert dispatch([], bank)[0] == "normal"
    assert dispatch([TrafficEvent("congestion", 0), TrafficEvent("transit", 0)], bank)[0] == "transit"


def test_inject_context():
    quiet = inject_context(None, {"num_vehicle": 3.0})
    assert quiet == dict({name: 0.0 for name in EVENT_VARIABLES}, num_vehicle=3.0)

    em = inject_context(TrafficEvent.make("emergency", 0, emergency_distance=150, emergency_phase=2), {})
    assert (em["emergency_distance"], em["emergency_phase"]) == (150.0, 2.0)

    bus = inject_context(TrafficEvent.make("transit", 0, bus_count=2, bus_delay=37), {})
    assert (bus["bus_count"], bus["bus_delay"]) == (2.0, 37.0)
    assert all(bus[name] == 0.0 for name in EVENT_VARIABLES if name not in ("bus_count", "bus_delay"))


def test_inject_context_keeps_lane_bindings():
    base = {"num_vehicle": 4.0, "num_waiting_vehicle": 2.0, "vehicle_dist": 12.0, "index": 1.0}
    out = inject_context(TrafficEvent.make("congestion", 0, congestion_level=2), base)
    assert {k: out[k] for k in base} == base


def test_event_rejects_foreign_context():
    with pytest.raises(ValueError):
        TrafficEvent.make("transit", 0, emergency_distance=3)
    with pytest.raises(ValueError):
        TrafficEvent("normal", 0)


def test_bank_load_collects_errors(tmp_path, bank):
    for kind in BANK_KINDS[:3]:
        (tmp_path / f"{kind}.json").write_text(json.dumps(bank[kind].to_dict()), encoding="utf-8")
    broken = dict(bank["transit"].to_dict(), inlane_code="value[0] += sneaky")
    (tmp_path / "transit.json").write_text(json.dumps(broken), encoding="utf-8")
    with pytest.raises(ConfigError) as info:
        SkillBank.load(str(tmp_path))
    message = str(info.value)
    assert "congestion" in message and "sneaky" in message


def test_with_skill_substitutes_one_entry(bank):
    swapped = bank.with_skill("emergency", bank["transit"])
    assert swapped["emergency"] is bank["transit"]
    assert swapped["normal"] is bank["normal"]
    with pytest.raises(ConfigError):
        bank.with_skill("weather", bank["normal"])
