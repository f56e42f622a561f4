import pytest

from signal_evo.skilldsl import complexity, parse, skill_complexity, seed_skill

from reference_evaluator import reference_node_count

GEN19_INLANE = (
    "if inlane_2_num_waiting_vehicle > 5:\n"
    "    value[0] += inlane_2_num_waiting_vehicle * (max(1, inlane_2_vehicle_dist) - inlane_2_vehicle_dist % 3) + inlane_2_num_vehicle // 4\n"
    "elif inlane_2_num_waiting_vehicle > 0:\n"
    "    value[0] += inlane_2_num_waiting_vehicle * 2\n"
)

EMERGENCY_INLANE = (
    "if emergency_distance > 0:\n"
    "    if emergency_phase == index:\n"
    "        value[0] += max(0, 200 - emergency_distance) * 10\n"
    "    else:\n"
    "        value[0] += waiting * 2\n"
    "else:\n"
    "    value[0] += waiting * 3\n"
)


def test_seed_counts_three_nodes_depth_zero():
    assert skill_complexity(seed_skill()) == (3, 0)


def test_generation_19_counts():
    node_count, depth = complexity(parse(GEN19_INLANE))
    assert 15 <= node_count <= 20
    assert node_count == 16
    assert depth == 1


def test_single_if_elif_chain_has_depth_one():
    assert complexity(parse("if waiting > 1:\n    value[0] += 1\nelif dist > 2:\n    value[0] += 2")).branch_depth == 1


def test_nested_conditional_depth():
    assert complexity(parse(EMERGENCY_INLANE)).branch_depth == 2


@pytest.mark.parametrize(
    "code",
    [
        "value[0] += num_waiting_vehicle",
        GEN19_INLANE,
        EMERGENCY_INLANE,
        "value[0] += waiting ** 1.5 + min(3, waiting) * dist",
        "if waiting > vehicles // 3:\n    value[0] += (waiting - vehicles // 3) ** 2",
    ],
)
def test_node_count_matches_reference_counter(code):
    assert complexity(parse(code)).node_count == reference_node_count(code)
