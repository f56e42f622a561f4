import json

import pytest

from signal_evo.errors import ConfigError
from signal_evo.skilldsl import (
    Skill,
    VariableWhitelist,
    load_skill,
    parse,
    parse_skill_json,
    read_skill,
    sandbox_check,
    seed_skill,
    validate,
)

GEN19 = Skill(
    id="g19",
    description="queue-weighted spacing",
    guidance="",
    inlane_code=(
        "if inlane_2_num_waiting_vehicle > 5:\n"
        "    value[0] += inlane_2_num_waiting_vehicle * (max(1, inlane_2_vehicle_dist) - inlane_2_vehicle_dist % 3) + inlane_2_num_vehicle // 4\n"
        "elif inlane_2_num_waiting_vehicle > 0:\n"
        "    value[0] += inlane_2_num_waiting_vehicle * 2\n"
    ),
    outlane_code="value[0] += min(10, outlane_2_num_vehicle) * max(0, outlane_2_vehicle_dist - 3)",
)


def _with_inlane(code):
    return Skill(id="x", description="", guidance="", inlane_code=code, outlane_code="value[0] += 0")


def test_seed_is_valid_under_lane_whitelist():
    report = validate(parse(seed_skill().inlane_code), VariableWhitelist.lane())
    assert report.ok
    assert report.stage is None


def test_unlisted_name_fails_whitelist_stage():
    report = validate(parse("value[0] += secret_var"), VariableWhitelist.lane())
    assert not report.ok
    assert report.stage == "whitelist"
    assert "secret_var" in report.message


def test_event_variables_need_event_whitelist():
    tree = parse("value[0] += emergency_distance")
    assert not validate(tree, VariableWhitelist.lane()).ok
    assert validate(tree, VariableWhitelist.event()).ok


@pytest.mark.parametrize(
    "code",
    [
        "value[1] += 1",
        "value[0] += other[0]",
        "value[0] += range(3)",
        "value[0] += sum(3)",
        "value[0] += len(range(1, 3))",
        "value[0] += abs(1, 2)",
        "value[0] += max()",
        "value[0] += eval(1)",
        "value[0] += value",
    ],
)
def test_whitelist_rejections(code):
    report = validate(parse(code), VariableWhitelist.event())
    assert report.stage == "whitelist"


def test_sandbox_check_accepts_generation_19():
    assert sandbox_check(GEN19, VariableWhitelist.lane()).ok


def test_sandbox_check_reports_failing_stage():
    assert sandbox_check(_with_inlane("value[0] += foo"), VariableWhitelist.lane()).stage == "whitelist"
    assert sandbox_check(_with_inlane("value[0] += 1 // (num_vehicle - 1)"), VariableWhitelist.lane()).stage == "sandbox"
    assert sandbox_check(_with_inlane("value[0] +="), VariableWhitelist.lane()).stage == "parse"


def test_sandbox_check_covers_outlane_body():
    skill = Skill(id="x", description="", guidance="", inlane_code="value[0] += 1", outlane_code="import os")
    report = sandbox_check(skill, VariableWhitelist.lane())
    assert report.stage == "parse"
    assert "outlane_code" in report.message


def test_malformed_skill_json_is_a_parse_stage_report():
    skill, report = parse_skill_json("{ not json")
    assert skill is None
    assert report.stage == "parse"
    skill, report = parse_skill_json(json.dumps({"description": "no code"}))
    assert skill is None
    assert report.stage == "parse"


def test_skill_file_round_trip(tmp_path):
    path = tmp_path / "g19.json"
    path.write_text(json.dumps(GEN19.to_dict()))
    skill, report = read_skill(path)
    assert report.ok
    assert skill == GEN19
    assert load_skill(path) == GEN19


def test_load_skill_raises_config_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"inlane_code": "value[0] += foo", "outlane_code": "value[0] += 0"}))
    with pytest.raises(ConfigError):
        load_skill(path)


def test_non_finite_fitness_is_serialized_as_null():
    assert GEN19.with_fitness(float("-inf")).to_dict()["fitness"] is None
